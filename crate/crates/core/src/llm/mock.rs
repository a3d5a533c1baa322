//! Scripted completion backend.
//!
//! A script is an ordered list of rules. The first rule whose matchers all
//! occur in the request wins. The last rule must match everything.
//!
//! ```json
//! [
//!   {"system": "pick the most likely option", "match": "Question: 2+2",
//!    "text": "B", "dist": [["B", 0.9], ["A", 0.1]]},
//!   {"match": ["Question: 2+2", "Search_query"], "rotation_mode": "seeded",
//!    "rotation": [{"text": "Search_query: arithmetic", "weight": 0.2},
//!                 {"text": "no idea", "weight": 0.8}]},
//!   {"text": "I cannot decide"}
//! ]
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ChatRequest, ChatResponse, LlmBackend};
use crate::error::LlmError;
use crate::types::{TokenDistribution, MASS_TOLERANCE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Matcher {
    One(String),
    All(Vec<String>),
}

impl Default for Matcher {
    fn default() -> Self {
        Matcher::All(Vec::new())
    }
}

impl Matcher {
    fn patterns(&self) -> &[String] {
        match self {
            Matcher::One(s) => std::slice::from_ref(s),
            Matcher::All(v) => v,
        }
    }

    fn matches(&self, haystack: &str) -> bool {
        self.patterns()
            .iter()
            .all(|p| haystack.contains(p.as_str()))
    }

    fn is_catch_all(&self) -> bool {
        self.patterns().iter().all(String::is_empty)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationMode {
    /// Entry `sample_index % len`.
    #[default]
    Cycle,
    /// Weighted draw from a generator seeded with the request seed.
    Seeded,
}

/// A probability table in script form: `[[token, prob], ...]`.
pub type ScriptDist = Vec<(String, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationEntry {
    pub text: String,
    #[serde(default = "one")]
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dist: Option<ScriptDist>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MockRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Substrings that must all occur in the user prompt.
    #[serde(default, rename = "match")]
    pub user: Matcher,
    /// Substrings that must all occur in the system prompt.
    #[serde(default)]
    pub system: Matcher,
    #[serde(default)]
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dist: Option<ScriptDist>,
    /// Overrides `dist` for specific request seeds.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub dist_by_seed: BTreeMap<u64, ScriptDist>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rotation: Vec<RotationEntry>,
    #[serde(default)]
    pub rotation_mode: RotationMode,
}

impl MockRule {
    fn matches(&self, req: &ChatRequest) -> bool {
        self.user.matches(&req.user) && self.system.matches(&req.system)
    }

    fn label(&self, index: usize) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| format!("rule #{index}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MockScript {
    pub rules: Vec<MockRule>,
}

impl MockScript {
    pub fn from_json(json: &str) -> Result<Self, LlmError> {
        let script: MockScript = serde_json::from_str(json)
            .map_err(|e| LlmError::Script(format!("invalid mock script: {e}")))?;
        script.validate()?;
        Ok(script)
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let json = fs::read_to_string(path)
            .map_err(|e| LlmError::Script(format!("{}: {e}", path.display())))?;
        Self::from_json(&json)
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        let last = self
            .rules
            .last()
            .ok_or_else(|| LlmError::Script("script has no rules".into()))?;
        if !(last.user.is_catch_all() && last.system.is_catch_all() && last.rotation.is_empty()) {
            return Err(LlmError::Script(
                "the last rule must be an unconditional fallthrough".into(),
            ));
        }
        for (i, rule) in self.rules.iter().enumerate() {
            let dists = rule
                .dist
                .iter()
                .chain(rule.dist_by_seed.values())
                .chain(rule.rotation.iter().filter_map(|r| r.dist.as_ref()));
            for d in dists {
                to_distribution(d, usize::MAX)
                    .map_err(|e| LlmError::Script(format!("{}: {e}", rule.label(i))))?;
            }
            if rule
                .rotation
                .iter()
                .any(|r| !(r.weight.is_finite() && r.weight >= 0.0))
            {
                return Err(LlmError::Script(format!(
                    "{}: rotation weights must be >= 0",
                    rule.label(i)
                )));
            }
            if rule.rotation_mode == RotationMode::Seeded
                && !rule.rotation.is_empty()
                && rule.rotation.iter().map(|r| r.weight).sum::<f64>() <= 0.0
            {
                return Err(LlmError::Script(format!(
                    "{}: rotation weights sum to zero",
                    rule.label(i)
                )));
            }
        }
        Ok(())
    }
}

/// Converts a script table to a distribution, keeping the `k` most likely
/// tokens and folding the rest into the residual.
fn to_distribution(table: &ScriptDist, k: usize) -> Result<TokenDistribution, String> {
    let mut order: Vec<usize> = (0..table.len()).filter(|&i| table[i].1 > 0.0).collect();
    // Stable: ties keep script order.
    order.sort_by(|&a, &b| table[b].1.total_cmp(&table[a].1));
    order.truncate(k);
    order.sort_unstable();
    let entries: Vec<(String, f64)> = order.iter().map(|&i| table[i].clone()).collect();
    let full: f64 = table.iter().map(|(_, p)| p).sum();
    if full > 1.0 + MASS_TOLERANCE {
        return Err(format!("distribution mass {full} exceeds 1"));
    }
    let kept: f64 = entries.iter().map(|(_, p)| p).sum();
    TokenDistribution::new(entries, (1.0 - kept).max(0.0)).map_err(|e| e.to_string())
}

/// Deterministic scripted backend: a pure function of script and request.
#[derive(Debug, Clone)]
pub struct MockLlm {
    script: MockScript,
}

impl MockLlm {
    pub fn new(script: MockScript) -> Result<Self, LlmError> {
        script.validate()?;
        Ok(MockLlm { script })
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        Self::new(MockScript::load(path)?)
    }

    pub fn script(&self) -> &MockScript {
        &self.script
    }
}

impl LlmBackend for MockLlm {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        req.validate()?;
        let (index, rule) = self
            .script
            .rules
            .iter()
            .enumerate()
            .find(|(_, r)| r.matches(req))
            .ok_or_else(|| LlmError::Script("no rule matched".into()))?;

        let entry = if rule.rotation.is_empty() {
            None
        } else {
            let pick = match rule.rotation_mode {
                RotationMode::Cycle => req.sample_index.unwrap_or(0) as usize % rule.rotation.len(),
                RotationMode::Seeded => weighted_pick(&rule.rotation, req.seed),
            };
            Some(&rule.rotation[pick])
        };

        let text = entry.map_or(&rule.text, |e| &e.text).clone();
        if !req.want_logprobs {
            return Ok(ChatResponse {
                text,
                first_token_dist: None,
            });
        }
        let table = entry
            .and_then(|e| e.dist.as_ref())
            .or_else(|| rule.dist_by_seed.get(&req.seed))
            .or(rule.dist.as_ref())
            .ok_or_else(|| {
                LlmError::Capability(format!("{} has no distribution", rule.label(index)))
            })?;
        let dist = to_distribution(table, req.top_logprobs as usize).map_err(LlmError::Script)?;
        Ok(ChatResponse {
            text,
            first_token_dist: Some(dist),
        })
    }

    fn name(&self) -> &str {
        "mock"
    }
}

fn weighted_pick(entries: &[RotationEntry], seed: u64) -> usize {
    let total: f64 = entries.iter().map(|e| e.weight).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, e) in entries.iter().enumerate() {
        acc += e.weight;
        if x < acc {
            return i;
        }
    }
    // x == total only through rounding; fall back to the last positive weight.
    entries.iter().rposition(|e| e.weight > 0.0).unwrap_or(0)
}
