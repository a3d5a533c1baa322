mod support;

use std::sync::Arc;

use searchrag_core::harness::load_dataset;
use searchrag_core::llm::MockLlm;
use searchrag_core::pipeline::{run_dataset, run_question, Backends, RunOutcome};
use searchrag_core::prompts::PromptSet;
use searchrag_core::search::CachedSearch;
use searchrag_core::types::{Mode, OptionLabel, RunConfig};
use support::{fixture, planted_backends, planted_questions};

fn run(mode: Mode, m: u32, script: &str, seed: u64) -> RunOutcome {
    let cfg = RunConfig {
        mode,
        num_queries: m,
        seed,
        ..RunConfig::default()
    };
    run_dataset(
        &planted_questions(),
        &cfg,
        &planted_backends(script),
        &PromptSet::builtin(),
    )
    .unwrap()
}

#[test]
fn planted_filtered_beats_unfiltered() {
    let filtered = run(Mode::Searchrag, 4, "script.json", 7);
    let unfiltered = run(Mode::SearchragUnfiltered, 4, "script.json", 7);
    let cot = run(Mode::Cot, 4, "script.json", 7);
    assert_eq!(filtered.report.aggregate.n_correct, 10);
    assert_eq!(unfiltered.report.aggregate.n_correct, 3);
    assert_eq!(cot.report.aggregate.n_correct, 0);
    for t in &filtered.traces {
        assert_eq!(t.error, None);
        assert_eq!(t.queries.len(), 4);
        assert_eq!(t.queries.iter().filter(|q| q.query.is_some()).count(), 3);
        assert_eq!(t.retrieved.len(), 2, "fact and distractor snippets");
        assert_eq!(t.selected.kept_indices(), [0]);
        assert!(t.selected.rendered.contains("FACT"));
        assert!(!t.selected.rendered.contains("DISTRACT"));
    }
}

#[test]
fn kept_bodies_come_from_scored_bodies() {
    let out = run(Mode::Searchrag, 4, "script.json", 1);
    for t in &out.traces {
        for k in &t.selected.kept {
            assert!(t.scored.iter().any(|s| s.snippet.body == k.snippet.body));
        }
        let base = t.base_entropy.as_ref().unwrap().bits;
        for s in &t.scored {
            assert!((s.delta_h_bits - (base - s.post_entropy_bits)).abs() <= 1e-12);
        }
    }
}

#[test]
fn question_only_uses_the_stem() {
    let out = run(Mode::QuestionOnlyRetrieval, 32, "script.json", 7);
    for t in &out.traces {
        assert_eq!(t.calls.search, 1);
        assert_eq!(
            t.calls.query_gen + t.calls.base_probe + t.calls.snippet_probe,
            0
        );
        assert_eq!(t.num_queries, 0);
        assert!(t.retrieved[0].body.contains("DISTRACT"));
        assert!(!t.correct);
    }
}

#[test]
fn reports_are_identical_across_parallelism() {
    let qs = planted_questions();
    let prompts = PromptSet::builtin();
    let mut bytes = Vec::new();
    for parallelism in [1, 4, 8] {
        let cfg = RunConfig {
            num_queries: 16,
            seed: 99,
            parallelism,
            ..RunConfig::default()
        };
        let out = run_dataset(&qs, &cfg, &planted_backends("sweep_script.json"), &prompts).unwrap();
        bytes.push(serde_json::to_string_pretty(&out.report).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
    assert_eq!(bytes[0], bytes[2]);
}

#[test]
fn sample_prefixes_are_stable_across_m() {
    let small = run(Mode::Searchrag, 4, "sweep_script.json", 3);
    let large = run(Mode::Searchrag, 16, "sweep_script.json", 3);
    for (a, b) in small.traces.iter().zip(&large.traces) {
        assert_eq!(a.queries[..], b.queries[..4]);
    }
}

#[test]
fn case_study_one_replays_from_cache() {
    let q = load_dataset(&fixture("case1/dataset.jsonl"))
        .unwrap()
        .remove(0);
    let llm = MockLlm::load(&fixture("case1/script.json")).unwrap();
    let cache = CachedSearch::new(fixture("case1/cache"), None).unwrap();
    let backends = Backends::new(Arc::new(llm), Some(Arc::new(cache)));
    let cfg = RunConfig {
        num_queries: 8,
        seed: 0,
        ..RunConfig::default()
    };
    let t = run_question(&q, &cfg, &backends, &PromptSet::builtin()).unwrap();
    assert_eq!(t.error, None);
    assert_eq!(t.calls.search_cache, 8);
    assert_eq!(t.calls.search_live, 0);
    assert_eq!(t.selected.kept_indices(), [0, 6, 1]);
    assert!(t
        .selected
        .rendered
        .contains("30% to 50% lower risk of ovarian cancer"));
    assert_eq!(t.parsed, Some(OptionLabel::B));
    assert!(t.correct);

    let cot = RunConfig {
        mode: Mode::Cot,
        ..cfg
    };
    let before = run_question(&q, &cot, &backends, &PromptSet::builtin()).unwrap();
    assert_eq!(before.parsed, Some(OptionLabel::C));
}
