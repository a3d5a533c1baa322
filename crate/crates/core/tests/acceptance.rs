//! Acceptance checks, one status line per criterion.
//!
//! Runs without the libtest harness so every line is printed even when
//! everything passes. Exits non-zero if any criterion fails.

mod support;

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use searchrag_core::harness::{emit_summary, format_improve, improvement, parse_dataset};
use searchrag_core::pipeline::{run_dataset, run_question, Aggregate, RunReport};
use searchrag_core::prompts::{PromptSet, RenderedPrompt};
use searchrag_core::search::{assemble_snippet, parse_serper};
use searchrag_core::types::{
    Mode, RunConfig, ScoredSnippet, SelectedKnowledge, Snippet, SyntheticQuery, TokenDistribution,
};
use searchrag_core::uncertainty::{entropy_bits, select};
use support::{fixture, planted_backends, planted_questions, read_fixture};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(limit: Duration, started: Instant) -> Result<(), String> {
    let took = started.elapsed();
    ensure(took < limit, format!("took {took:?}, limit {limit:?}"))
}

/// Direct summation in natural log, converted to bits at the end.
fn oracle_entropy(probs: &[f64]) -> f64 {
    let nats: f64 = probs
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| -p * p.ln())
        .sum();
    nats / std::f64::consts::LN_2
}

fn dist(probs: &[f64], residual: f64) -> TokenDistribution {
    let entries = probs
        .iter()
        .enumerate()
        .map(|(i, p)| (format!("t{i}"), *p))
        .collect();
    TokenDistribution::new(entries, residual).unwrap()
}

fn c1_entropy_oracle() -> Check {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20240611);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let buckets = rng.random_range(2..=8usize);
        let weights: Vec<f64> = (0..buckets).map(|_| rng.random::<f64>()).collect();
        let total: f64 = weights.iter().sum();
        let mut probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        // Half the cases put the last bucket in the residual.
        let residual = if rng.random::<bool>() {
            probs.pop().unwrap()
        } else {
            0.0
        };
        let d = dist(&probs, residual);
        let mut all = probs.clone();
        all.push(residual);
        worst = worst.max((entropy_bits(&d) - oracle_entropy(&all)).abs());
    }
    ensure(worst <= 1e-9, format!("max deviation {worst:e}"))?;
    within(Duration::from_secs(1), started)?;
    Ok(format!(
        "1000 distributions, max |H - oracle| = {worst:.1e} bits in {:?}",
        started.elapsed()
    ))
}

fn c2_anchors() -> Check {
    let uniform = entropy_bits(&dist(&[0.25; 4], 0.0));
    let point = entropy_bits(&dist(&[1.0], 0.0));
    let dyadic = entropy_bits(&dist(&[0.5, 0.25, 0.125, 0.125], 0.0));
    ensure(uniform == 2.0, format!("uniform-4 gave {uniform}"))?;
    ensure(point == 0.0, format!("point mass gave {point}"))?;
    ensure(
        (dyadic - 1.75).abs() <= 1e-12,
        format!("dyadic gave {dyadic}"),
    )?;
    Ok(format!(
        "uniform-4 = {uniform}, point = {point}, dyadic = {dyadic}"
    ))
}

fn scored(index: u32, body: &str, delta: f64) -> ScoredSnippet {
    ScoredSnippet {
        snippet: Snippet {
            query: SyntheticQuery::new(index, "q", "").unwrap(),
            body: body.into(),
            source_parts: vec![],
        },
        post_entropy_bits: 1.0 - delta,
        delta_h_bits: delta,
    }
}

fn c3_strict_gate() -> Check {
    let one = select(&[
        scored(0, "a", 0.8),
        scored(1, "b", 0.0),
        scored(2, "c", -0.3),
    ]);
    ensure(
        one.kept_indices() == [0],
        format!("kept {:?}", one.kept_indices()),
    )?;
    let none = select(&[scored(0, "b", 0.0), scored(1, "c", -0.3)]);
    ensure(none.is_empty(), "non-positive set kept something")?;

    let q = planted_questions().remove(0);
    let prompts = PromptSet::builtin();
    let cot = prompts
        .render_final(&q, &SelectedKnowledge::default())
        .unwrap();
    let empty = prompts.render_final(&q, &none).unwrap();
    ensure(cot == empty, "rendered prompts differ")?;

    // End to end: every probe returns the base distribution, so nothing is kept.
    let flat = r#"[
        {"system": "Generate focused search queries", "rotation": [{"text": "Search_query: harlanosis remark"}]},
        {"system": "pick the most likely option", "text": "A", "dist": [["A", 0.4], ["B", 0.6]]},
        {"text": "answer_choice: A"}
    ]"#;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flat.json");
    std::fs::write(&path, flat).unwrap();
    let mut b = planted_backends("script.json");
    b.llm = std::sync::Arc::new(searchrag_core::llm::MockLlm::load(&path).unwrap());
    let cfg = RunConfig {
        num_queries: 4,
        ..RunConfig::default()
    };
    let t = run_question(&q, &cfg, &b, &prompts).unwrap();
    let cot_t = run_question(
        &q,
        &RunConfig {
            mode: Mode::Cot,
            ..cfg
        },
        &b,
        &prompts,
    )
    .unwrap();
    ensure(
        !t.scored.is_empty() && t.selected.is_empty(),
        "pipeline kept a zero-ΔH snippet",
    )?;
    let bytes = |p: &Option<RenderedPrompt>| {
        let p = p.as_ref().unwrap();
        format!("{}\u{0}{}", p.system, p.user)
    };
    ensure(
        bytes(&t.final_prompt) == bytes(&cot_t.final_prompt),
        "final prompt differs from cot prompt",
    )?;
    Ok(
        "ΔH {+0.8, 0, -0.3} keeps 1; all ≤ 0 keeps none and the final prompt equals the cot prompt"
            .into(),
    )
}

fn c4_accounting() -> Check {
    let qs = planted_questions();
    let prompts = PromptSet::builtin();
    let b = planted_backends("script.json");
    let cfg = RunConfig {
        num_queries: 4,
        seed: 7,
        ..RunConfig::default()
    };
    let out = run_dataset(&qs, &cfg, &b, &prompts).map_err(|e| e.to_string())?;
    ensure(out.traces.len() == 10, "trace count")?;
    for t in &out.traces {
        let c = t.calls;
        ensure(
            c.query_gen == 4,
            format!("{}: {} query-gen calls", t.question_id, c.query_gen),
        )?;
        ensure(
            c.base_probe == 1,
            format!("{}: {} base probes", t.question_id, c.base_probe),
        )?;
        // One decisive and one distractor sample per question; the other two
        // either retrieve nothing or fail to parse.
        ensure(
            c.snippet_probe == 2,
            format!("{}: {} snippet probes", t.question_id, c.snippet_probe),
        )?;
        ensure(
            c.snippet_probe as usize == t.scored.len() + t.failures.len(),
            "probe count vs scored",
        )?;
        ensure(
            c.final_answer == 1,
            format!("{}: {} final calls", t.question_id, c.final_answer),
        )?;
    }
    let cot = run_dataset(
        &qs,
        &RunConfig {
            mode: Mode::Cot,
            ..cfg
        },
        &b,
        &prompts,
    )
    .map_err(|e| e.to_string())?;
    for t in &cot.traces {
        ensure(
            t.calls.llm_total() == 1 && t.calls.search == 0,
            format!("{}: cot calls {:?}", t.question_id, t.calls),
        )?;
    }
    Ok("searchrag m=4: 4 query-gen, 1 base probe, 2 snippet probes, 1 final per question; cot: 1 call, 0 searches".into())
}

fn c5_planted() -> Check {
    let started = Instant::now();
    let qs = planted_questions();
    let prompts = PromptSet::builtin();
    let b = planted_backends("script.json");
    let run = |mode| {
        let cfg = RunConfig {
            mode,
            num_queries: 4,
            seed: 7,
            ..RunConfig::default()
        };
        run_dataset(&qs, &cfg, &b, &prompts)
            .map(|o| o.report.aggregate.n_correct)
            .map_err(|e| e.to_string())
    };
    let filtered = run(Mode::Searchrag)?;
    let unfiltered = run(Mode::SearchragUnfiltered)?;
    ensure(filtered == 10, format!("filtered {filtered}/10"))?;
    ensure(unfiltered <= 7, format!("unfiltered {unfiltered}/10"))?;
    within(Duration::from_secs(5), started)?;
    Ok(format!(
        "filtered {filtered}/10, unfiltered {unfiltered}/10 in {:?}",
        started.elapsed()
    ))
}

fn c6_monotone() -> Check {
    let started = Instant::now();
    let qs = planted_questions();
    let prompts = PromptSet::builtin();
    let b = planted_backends("sweep_script.json");
    let p = 0.15f64;
    let threads = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    let mut rates = Vec::new();
    for m in [0u32, 4, 16, 32] {
        let mode = if m == 0 {
            Mode::QuestionOnlyRetrieval
        } else {
            Mode::Searchrag
        };
        let mut hits = 0usize;
        let mut trials = 0usize;
        for seed in 0..200u64 {
            let cfg = RunConfig {
                mode,
                num_queries: m,
                seed,
                parallelism: threads,
                ..RunConfig::default()
            };
            let out = run_dataset(&qs, &cfg, &b, &prompts).map_err(|e| e.to_string())?;
            for t in &out.traces {
                let hit = t.selected.rendered.contains("FACT");
                ensure(
                    hit == t.correct,
                    format!(
                        "m={m} seed={seed} {}: hit and correctness disagree",
                        t.question_id
                    ),
                )?;
                hits += hit as usize;
                trials += 1;
            }
        }
        let rate = hits as f64 / trials as f64;
        let expected = 1.0 - (1.0 - p).powi(m as i32);
        ensure(
            (rate - expected).abs() <= 0.06,
            format!("m={m}: rate {rate:.4}, expected {expected:.4}"),
        )?;
        rates.push((m, rate, expected));
    }
    let r = |i: usize| rates[i].1;
    ensure(
        r(3) > r(1) && r(1) > r(0) && r(3) > r(0),
        format!("not monotone: {rates:?}"),
    )?;
    within(Duration::from_secs(30), started)?;
    let shown: Vec<String> = rates
        .iter()
        .map(|(m, r, e)| format!("m={m}: {r:.3} (expect {e:.3})"))
        .collect();
    Ok(format!("{} in {:?}", shown.join(", "), started.elapsed()))
}

fn c7_replay() -> Check {
    let work = tempfile::tempdir().unwrap();
    let p = |rel: &str| fixture(rel).to_str().unwrap().to_string();
    let cache = work.path().join("cache").to_str().unwrap().to_string();
    let llm = format!("mock:{}", p("planted/script.json"));
    let dataset = p("planted/dataset.jsonl");
    let run = |extra: &[&str], out: &Path| -> Result<(), String> {
        let mut args = vec![
            "run",
            "--dataset",
            &dataset,
            "--llm",
            &llm,
            "--num-queries",
            "4",
            "--seed",
            "7",
        ];
        args.extend_from_slice(extra);
        let status = Command::new(env!("CARGO_BIN_EXE_searchrag"))
            .args(&args)
            .arg("-o")
            .arg(out)
            .env_remove("SEARCHRAG_SERPER_KEY")
            .output()
            .map_err(|e| e.to_string())?;
        ensure(
            status.status.success(),
            String::from_utf8_lossy(&status.stderr).into_owned(),
        )
    };
    let corpus = p("planted/corpus.jsonl");
    run(
        &[
            "--search",
            "corpus",
            "--corpus",
            &corpus,
            "--cache-dir",
            &cache,
        ],
        &work.path().join("warm"),
    )?;
    let mut reports = Vec::new();
    for (i, par) in ["1", "8", "1", "8"].iter().enumerate() {
        let out = work.path().join(format!("r{i}"));
        run(
            &[
                "--search",
                "cache",
                "--cache-dir",
                &cache,
                "--parallelism",
                par,
            ],
            &out,
        )?;
        reports.push(std::fs::read(out.join("report.json")).map_err(|e| e.to_string())?);
    }
    ensure(
        reports.iter().all(|r| *r == reports[0]),
        "report.json bytes differ",
    )?;
    let parsed: RunReport = serde_json::from_slice(&reports[0]).map_err(|e| e.to_string())?;
    ensure(
        parsed.aggregate.calls.search_live == 0,
        "live calls during replay",
    )?;
    Ok(format!(
        "4 replays (parallelism 1 and 8) byte-identical, {} bytes, 0 live searches",
        reports[0].len()
    ))
}

fn c8_fixtures() -> Check {
    for name in ["apple", "many_organic", "answer_box", "cisplatin"] {
        let resp = parse_serper(&read_fixture(&format!("serper/{name}.json")))
            .map_err(|e| e.to_string())?;
        let body = assemble_snippet(&resp, 1500);
        ensure(
            body == read_fixture(&format!("serper/{name}.snippet.txt")),
            format!("{name}: golden mismatch"),
        )?;
        ensure(
            resp.organic.len() <= 3,
            format!("{name}: {} organic results kept", resp.organic.len()),
        )?;
    }
    let many = assemble_snippet(
        &parse_serper(&read_fixture("serper/many_organic.json")).unwrap(),
        1500,
    );
    ensure(
        (5..=10).all(|i| !many.contains(&format!("Result {i} "))),
        "rank > 3 rendered",
    )?;
    Ok(
        "4 Serper fixtures (incl. Apple knowledge graph) match golden snippets; ranks > 3 dropped"
            .into(),
    )
}

fn c9_prompts() -> Check {
    let q = parse_dataset(&read_fixture("prompts/question.json"))
        .map_err(|e| e.to_string())?
        .remove(0);
    let p = PromptSet::builtin();
    let show = |r: RenderedPrompt| format!("[system]\n{}\n[user]\n{}\n", r.system, r.user);
    let snippet = Snippet {
        query: SyntheticQuery::new(1, "mechanisms cisplatin hearing loss", "").unwrap(),
        body: "Cisplatin-induced ototoxicity — ...cisplatin is retained for months to years."
            .into(),
        source_parts: vec![],
    };
    let kept = SelectedKnowledge {
        kept: vec![],
        rendered: searchrag_core::prompts::render_knowledge([&snippet]),
    };
    let pairs = [
        ("query_gen", show(p.render_query_gen(&q).unwrap())),
        (
            "uncertainty_probe",
            show(p.render_uncertainty_probe(&q, Some(&snippet)).unwrap()),
        ),
        ("final_answer", show(p.render_final(&q, &kept).unwrap())),
    ];
    for (name, got) in &pairs {
        ensure(
            *got == read_fixture(&format!("prompts/{name}.golden")),
            format!("{name}: golden mismatch"),
        )?;
    }
    ensure(
        pairs[0].1.contains("'Search_query:'"),
        "Search_query: marker missing",
    )?;
    ensure(
        pairs[2].1.contains("'answer_choice'"),
        "answer_choice marker missing",
    )?;
    Ok(
        "3 templates match golden files; markers 'Search_query:' and 'answer_choice' present"
            .into(),
    )
}

fn report_with(label: &str, accuracy: f64) -> RunReport {
    RunReport {
        schema_version: 1,
        label: label.into(),
        config: RunConfig::default(),
        prompt_version: "v1".into(),
        llm: "mock".into(),
        search: None,
        questions: vec![],
        aggregate: Aggregate {
            n: 10000,
            n_correct: (accuracy * 10000.0).round() as usize,
            accuracy,
            ..Aggregate::from_records(&[])
        },
    }
}

/// Returns `Ok` only for the formula check; the literal target in the
/// criterion is not reachable and is reported as such by the caller.
fn c10_improvement() -> Result<String, String> {
    let s = emit_summary(
        &[report_with("cot", 0.5596), report_with("searchrag", 0.6514)],
        "cot",
    )
    .map_err(|e| e.to_string())?;
    let shown = &s.rows[1].improve_display;
    let exact = (65.14 - 55.96) / 55.96;
    ensure(
        (s.rows[1].improve - exact).abs() < 1e-12,
        format!("ratio {}", s.rows[1].improve),
    )?;
    ensure(shown == "+16.40%", format!("displayed {shown}"))?;
    ensure(shown != "+16.16%", "equals +16.16%")?;
    ensure(
        format_improve(improvement(0.5, 0.5).unwrap()) == "+0.00%",
        "identity",
    )?;
    ensure(
        emit_summary(&[report_with("z", 0.0)], "z").is_err(),
        "zero baseline accepted",
    )?;
    Ok(shown.clone())
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("entropy oracle equivalence", c1_entropy_oracle),
        ("analytic entropy anchors", c2_anchors),
        ("strict ΔH > 0 gate", c3_strict_gate),
        ("per-question call accounting", c4_accounting),
        ("planted-fact fixture", c5_planted),
        ("query-count monotonicity", c6_monotone),
        ("replay determinism", c7_replay),
        ("search fixture parsing", c8_fixtures),
        ("prompt fidelity", c9_prompts),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or(e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        match result {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }

    // The criterion asks for +16.41%, but (65.14 - 55.96) / 55.96 = 0.164046,
    // which is +16.40% at two decimals. The formula and the divergence from
    // +16.16% are checked; the literal is reported, not forced.
    match panic::catch_unwind(c10_improvement).unwrap_or_else(|_| Err("panicked".into())) {
        Ok(shown) => println!(
            "criterion 10 PARTIAL  improvement arithmetic: (65.14 - 55.96) / 55.96 = {shown}, differs from +16.16% \
             (a literal +16.41% is not reproducible from these inputs)"
        ),
        Err(detail) => {
            failed += 1;
            println!("criterion 10 FAIL  improvement arithmetic: {detail}");
        }
    }

    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("no acceptance criteria failed");
}
