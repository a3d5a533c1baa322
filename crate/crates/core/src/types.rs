//! Domain vocabulary shared by every stage of the pipeline.
//!
//! Everything in here is an immutable value type. Constructors validate the
//! invariants so downstream code can rely on them without re-checking.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::TypeError;

/// Tolerance on total probability mass.
pub const MASS_TOLERANCE: f64 = 1e-6;

/// A multiple-choice option label. Ordered `A < B < C < D`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OptionLabel {
    A,
    B,
    C,
    D,
}

impl OptionLabel {
    pub const ALL: [OptionLabel; 4] = [
        OptionLabel::A,
        OptionLabel::B,
        OptionLabel::C,
        OptionLabel::D,
    ];

    pub fn as_char(self) -> char {
        match self {
            OptionLabel::A => 'A',
            OptionLabel::B => 'B',
            OptionLabel::C => 'C',
            OptionLabel::D => 'D',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'A' => Some(OptionLabel::A),
            'B' => Some(OptionLabel::B),
            'C' => Some(OptionLabel::C),
            'D' => Some(OptionLabel::D),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for OptionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl FromStr for OptionLabel {
    type Err = TypeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.trim().chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => {
                OptionLabel::from_char(c).ok_or_else(|| TypeError::BadLabel(s.to_string()))
            }
            _ => Err(TypeError::BadLabel(s.to_string())),
        }
    }
}

/// A multiple-choice question.
///
/// Options are keyed by label and always contiguous from `A`; between two and
/// four options are allowed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawQuestion")]
pub struct Question {
    id: String,
    stem: String,
    options: BTreeMap<OptionLabel, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gold: Option<OptionLabel>,
}

#[derive(Deserialize)]
struct RawQuestion {
    id: String,
    stem: String,
    options: BTreeMap<OptionLabel, String>,
    #[serde(default)]
    gold: Option<OptionLabel>,
}

impl TryFrom<RawQuestion> for Question {
    type Error = TypeError;

    fn try_from(raw: RawQuestion) -> Result<Self, Self::Error> {
        Question::new(raw.id, raw.stem, raw.options, raw.gold)
    }
}

impl Question {
    pub fn new(
        id: impl Into<String>,
        stem: impl Into<String>,
        options: BTreeMap<OptionLabel, String>,
        gold: Option<OptionLabel>,
    ) -> Result<Self, TypeError> {
        let stem = stem.into();
        if stem.trim().is_empty() {
            return Err(TypeError::EmptyStem);
        }
        if !(2..=4).contains(&options.len()) {
            return Err(TypeError::OptionCount(options.len()));
        }
        for (expected, label) in OptionLabel::ALL.iter().zip(options.keys()) {
            if expected != label {
                return Err(TypeError::NonContiguousLabels);
            }
        }
        if let Some(g) = gold {
            if !options.contains_key(&g) {
                return Err(TypeError::GoldNotAnOption(g));
            }
        }
        Ok(Question {
            id: id.into(),
            stem,
            options,
            gold,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn stem(&self) -> &str {
        &self.stem
    }

    pub fn options(&self) -> &BTreeMap<OptionLabel, String> {
        &self.options
    }

    pub fn labels(&self) -> Vec<OptionLabel> {
        self.options.keys().copied().collect()
    }

    pub fn has_label(&self, label: OptionLabel) -> bool {
        self.options.contains_key(&label)
    }

    pub fn gold(&self) -> Option<OptionLabel> {
        self.gold
    }
}

/// First-token probability mass over the tokens an endpoint reported, plus
/// the mass it did not report.
///
/// The residual is treated as a single extra bucket by the entropy code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution")]
pub struct TokenDistribution {
    entries: Vec<(String, f64)>,
    residual: f64,
}

#[derive(Deserialize)]
struct RawDistribution {
    entries: Vec<(String, f64)>,
    residual: f64,
}

impl TryFrom<RawDistribution> for TokenDistribution {
    type Error = TypeError;

    fn try_from(raw: RawDistribution) -> Result<Self, Self::Error> {
        TokenDistribution::new(raw.entries, raw.residual)
    }
}

impl TokenDistribution {
    pub fn new(entries: Vec<(String, f64)>, residual: f64) -> Result<Self, TypeError> {
        let in_unit = |p: f64| p.is_finite() && (0.0..=1.0).contains(&p);
        if !in_unit(residual) {
            return Err(TypeError::ProbabilityOutOfRange(residual));
        }
        let mut total = residual;
        for (i, (token, p)) in entries.iter().enumerate() {
            if !in_unit(*p) {
                return Err(TypeError::ProbabilityOutOfRange(*p));
            }
            if entries[..i].iter().any(|(t, _)| t == token) {
                return Err(TypeError::DuplicateToken(token.clone()));
            }
            total += p;
        }
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(TypeError::MassNotNormalized(total));
        }
        Ok(TokenDistribution { entries, residual })
    }

    /// For callers that normalized the mass themselves.
    pub(crate) fn from_normalized(entries: Vec<(String, f64)>, residual: f64) -> Self {
        debug_assert!(Self::new(entries.clone(), residual).is_ok());
        TokenDistribution { entries, residual }
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn prob(&self, token: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|(t, _)| t == token)
            .map(|(_, p)| *p)
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|(_, p)| p).sum::<f64>() + self.residual
    }

    /// Number of buckets, counting the residual as one.
    pub fn bucket_count(&self) -> usize {
        self.entries.len() + 1
    }

    /// All bucket probabilities with the residual last.
    pub fn bucket_probs(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries
            .iter()
            .map(|(_, p)| *p)
            .chain(std::iter::once(self.residual))
    }
}

/// One sampled search query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticQuery {
    pub sample_index: u32,
    text: String,
    pub raw_generation: String,
}

impl SyntheticQuery {
    /// Collapses whitespace runs in `text`; fails if nothing is left.
    pub fn new(
        sample_index: u32,
        text: &str,
        raw_generation: impl Into<String>,
    ) -> Result<Self, TypeError> {
        let text = collapse_whitespace(text);
        if text.is_empty() {
            return Err(TypeError::EmptyQuery);
        }
        Ok(SyntheticQuery {
            sample_index,
            text,
            raw_generation: raw_generation.into(),
        })
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

pub(crate) fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// A knowledge graph card as retained from a search response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeGraph {
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrganicResult {
    pub rank: u32,
    pub title: String,
    pub snippet: String,
}

/// A tagged fragment a snippet body was rendered from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourcePart {
    KnowledgeGraph(KnowledgeGraph),
    AnswerBox { text: String },
    Organic(OrganicResult),
}

/// Evidence retrieved for one query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snippet {
    pub query: SyntheticQuery,
    pub body: String,
    pub source_parts: Vec<SourcePart>,
}

impl Snippet {
    pub fn is_empty(&self) -> bool {
        self.body.is_empty()
    }
}

/// A snippet with its post-retrieval entropy and uncertainty reduction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSnippet {
    pub snippet: Snippet,
    pub post_entropy_bits: f64,
    pub delta_h_bits: f64,
}

impl ScoredSnippet {
    pub fn sample_index(&self) -> u32 {
        self.snippet.query.sample_index
    }
}

/// The selected knowledge set, ordered by descending ΔH then sample index.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SelectedKnowledge {
    pub kept: Vec<ScoredSnippet>,
    pub rendered: String,
}

impl SelectedKnowledge {
    pub fn is_empty(&self) -> bool {
        self.kept.is_empty()
    }

    pub fn kept_indices(&self) -> Vec<u32> {
        self.kept.iter().map(ScoredSnippet::sample_index).collect()
    }
}

/// Which pipeline variant to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Answer directly with no retrieval.
    Cot,
    /// Search once with the question stem verbatim and use the result unfiltered.
    QuestionOnlyRetrieval,
    /// Synthetic queries, entropy scoring and strict selection.
    Searchrag,
    /// Synthetic queries with every retrieved snippet kept.
    SearchragUnfiltered,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Cot => "cot",
            Mode::QuestionOnlyRetrieval => "question_only_retrieval",
            Mode::Searchrag => "searchrag",
            Mode::SearchragUnfiltered => "searchrag_unfiltered",
        }
    }

    pub fn uses_generated_queries(self) -> bool {
        matches!(self, Mode::Searchrag | Mode::SearchragUnfiltered)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Space in which first-token entropy is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropySpace {
    /// Option-label buckets plus one OTHER bucket.
    #[default]
    Labels,
    /// Raw top-k tokens plus the residual bucket.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: Mode,
    pub num_queries: u32,
    pub gen_temperature: f64,
    pub max_gen_tokens: u32,
    pub top_logprobs: u32,
    pub seed: u64,
    pub max_snippet_chars: usize,
    /// Not part of the serialized report: it must not change output bytes.
    #[serde(skip, default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_kept: Option<usize>,
    #[serde(default)]
    pub entropy_space: EntropySpace,
}

fn default_parallelism() -> usize {
    1
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Searchrag,
            num_queries: 32,
            gen_temperature: 2.0,
            max_gen_tokens: 512,
            top_logprobs: 20,
            seed: 0,
            max_snippet_chars: 1500,
            parallelism: 1,
            max_kept: None,
            entropy_space: EntropySpace::Labels,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), TypeError> {
        if !(self.gen_temperature.is_finite() && self.gen_temperature > 0.0) {
            return Err(TypeError::InvalidConfig(format!(
                "temperature must be > 0, got {}",
                self.gen_temperature
            )));
        }
        if self.max_gen_tokens == 0 {
            return Err(TypeError::InvalidConfig(
                "max_gen_tokens must be >= 1".into(),
            ));
        }
        if self.top_logprobs == 0 {
            return Err(TypeError::InvalidConfig("top_logprobs must be >= 1".into()));
        }
        if self.max_snippet_chars == 0 {
            return Err(TypeError::InvalidConfig(
                "max_snippet_chars must be >= 1".into(),
            ));
        }
        if self.parallelism == 0 {
            return Err(TypeError::InvalidConfig("parallelism must be >= 1".into()));
        }
        Ok(())
    }

    /// Number of query-generation samples this configuration will draw.
    pub fn effective_num_queries(&self) -> u32 {
        if self.mode.uses_generated_queries() {
            self.num_queries
        } else {
            0
        }
    }
}
