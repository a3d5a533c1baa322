//! First-token entropy, per-snippet uncertainty reduction and the strict
//! ΔH > 0 selection of the knowledge set.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, LlmError};
use crate::llm::{ChatRequest, LlmBackend};
use crate::prompts::{render_knowledge, PromptSet};
use crate::types::{
    EntropySpace, OptionLabel, Question, RunConfig, ScoredSnippet, SelectedKnowledge, Snippet,
    TokenDistribution,
};

/// Maps raw first tokens to option labels.
///
/// Recognised forms (case-insensitive, leading whitespace ignored): `A`,
/// `A.`, `A)`, `A:`, `(A` and `(A)`. Labels outside the map's label set do
/// not map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerTokenMap {
    labels: Vec<OptionLabel>,
}

impl Default for AnswerTokenMap {
    fn default() -> Self {
        AnswerTokenMap {
            labels: OptionLabel::ALL.to_vec(),
        }
    }
}

impl AnswerTokenMap {
    pub fn for_question(q: &Question) -> Self {
        AnswerTokenMap { labels: q.labels() }
    }

    pub fn lookup(&self, raw: &str) -> Option<OptionLabel> {
        // Leading-space markers some tokenizers leak into decoded tokens.
        let t = raw
            .trim_start_matches(|c: char| c.is_whitespace() || c == 'Ġ' || c == '▁')
            .trim_end();
        let t = t
            .strip_prefix('(')
            .map_or(t, |inner| inner.strip_suffix(')').unwrap_or(inner));
        let t = t.strip_suffix(['.', ')', ':']).unwrap_or(t);
        let mut chars = t.chars();
        let label = match (chars.next(), chars.next()) {
            (Some(c), None) => OptionLabel::from_char(c)?,
            _ => return None,
        };
        self.labels.contains(&label).then_some(label)
    }
}

/// Pools raw-token mass into one bucket per option label. Unmapped tokens
/// and the residual become the OTHER bucket, stored as the residual of the
/// returned distribution.
pub fn canonicalize(dist: &TokenDistribution, map: &AnswerTokenMap) -> TokenDistribution {
    let mut buckets = [0.0f64; 4];
    let mut seen = [false; 4];
    let mut other = dist.residual();
    for (token, p) in dist.entries() {
        match map.lookup(token) {
            Some(label) => {
                buckets[label.index()] += p;
                seen[label.index()] = true;
            }
            None => other += p,
        }
    }
    let entries = OptionLabel::ALL
        .iter()
        .filter(|l| seen[l.index()])
        .map(|l| (l.to_string(), buckets[l.index()]))
        .collect();
    TokenDistribution::from_normalized(entries, other)
}

/// Shannon entropy in bits over every bucket, the residual included.
/// Empty buckets contribute nothing.
pub fn entropy_bits(dist: &TokenDistribution) -> f64 {
    let h: f64 = dist
        .bucket_probs()
        .filter(|p| *p > 0.0)
        .map(|p| -p * p.log2())
        .sum();
    h.max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub bits: f64,
    pub effective_dist: TokenDistribution,
}

impl EntropyReport {
    pub fn measure(raw: &TokenDistribution, map: &AnswerTokenMap, space: EntropySpace) -> Self {
        let effective_dist = match space {
            EntropySpace::Labels => canonicalize(raw, map),
            EntropySpace::Raw => raw.clone(),
        };
        EntropyReport {
            bits: entropy_bits(&effective_dist),
            effective_dist,
        }
    }
}

/// Asks the model to answer directly and measures first-token entropy.
/// Without a snippet this is the base uncertainty of the question.
pub fn probe_entropy(
    q: &Question,
    snippet: Option<&Snippet>,
    backend: &dyn LlmBackend,
    prompts: &PromptSet,
    cfg: &RunConfig,
) -> Result<EntropyReport, Error> {
    let prompt = prompts.render_uncertainty_probe(q, snippet)?;
    let req = ChatRequest {
        system: prompt.system,
        user: prompt.user,
        temperature: 0.0,
        max_tokens: 1,
        want_logprobs: true,
        top_logprobs: cfg.top_logprobs,
        seed: cfg.seed,
        sample_index: None,
    };
    let resp = backend.complete(&req)?;
    let dist = resp.first_token_dist.ok_or_else(|| {
        LlmError::Capability("backend returned no first-token distribution".into())
    })?;
    Ok(EntropyReport::measure(
        &dist,
        &AnswerTokenMap::for_question(q),
        cfg.entropy_space,
    ))
}

/// Scores one snippet against the question's base entropy.
pub fn score_snippet(
    q: &Question,
    snippet: &Snippet,
    base: &EntropyReport,
    backend: &dyn LlmBackend,
    prompts: &PromptSet,
    cfg: &RunConfig,
) -> Result<ScoredSnippet, Error> {
    let post = probe_entropy(q, Some(snippet), backend, prompts, cfg)?;
    Ok(scored(snippet.clone(), base.bits, post.bits))
}

pub(crate) fn scored(snippet: Snippet, base_bits: f64, post_bits: f64) -> ScoredSnippet {
    ScoredSnippet {
        snippet,
        post_entropy_bits: post_bits,
        delta_h_bits: base_bits - post_bits,
    }
}

/// Keeps snippets with strictly positive ΔH, one per distinct body, ordered
/// by descending ΔH then ascending sample index.
pub fn select(scored: &[ScoredSnippet]) -> SelectedKnowledge {
    select_with_limit(scored, None).0
}

/// As [`select`], truncated to `max_kept` items. The flag reports whether
/// the limit actually dropped anything.
pub fn select_with_limit(
    scored: &[ScoredSnippet],
    max_kept: Option<usize>,
) -> (SelectedKnowledge, bool) {
    let mut candidates: Vec<&ScoredSnippet> =
        scored.iter().filter(|s| s.delta_h_bits > 0.0).collect();
    candidates.sort_by(|a, b| {
        b.delta_h_bits
            .total_cmp(&a.delta_h_bits)
            .then_with(|| a.sample_index().cmp(&b.sample_index()))
    });
    let mut bodies = HashSet::new();
    let mut kept: Vec<ScoredSnippet> = candidates
        .into_iter()
        .filter(|s| bodies.insert(s.snippet.body.as_str()))
        .cloned()
        .collect();
    let bound = max_kept.is_some_and(|n| kept.len() > n);
    if let Some(n) = max_kept {
        kept.truncate(n);
    }
    let rendered = render_knowledge(kept.iter().map(|s| &s.snippet));
    (SelectedKnowledge { kept, rendered }, bound)
}
