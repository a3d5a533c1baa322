//! Per-question orchestration: generate queries, retrieve, score, select,
//! answer. Also the ablation modes and the dataset-level driver.

use std::collections::HashSet;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, SearchError};
use crate::llm::{ChatRequest, LlmBackend};
use crate::prompts::{parse_answer, parse_query, render_knowledge, PromptSet, RenderedPrompt};
use crate::search::{self, SearchBackend, SearchOrigin};
use crate::types::{
    Mode, OptionLabel, Question, RunConfig, ScoredSnippet, SelectedKnowledge, Snippet,
    SyntheticQuery,
};
use crate::uncertainty::{self, EntropyReport};

/// Version of the report JSON layout.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// The model and search engine a run talks to.
#[derive(Clone)]
pub struct Backends {
    pub llm: Arc<dyn LlmBackend>,
    /// Not needed in `cot` mode.
    pub search: Option<Arc<dyn SearchBackend>>,
}

impl Backends {
    pub fn new(llm: Arc<dyn LlmBackend>, search: Option<Arc<dyn SearchBackend>>) -> Self {
        Backends { llm, search }
    }

    fn search_for(&self, mode: Mode) -> Result<Option<&dyn SearchBackend>, Error> {
        match (mode, &self.search) {
            (Mode::Cot, _) => Ok(None),
            (_, Some(s)) => Ok(Some(s.as_ref())),
            (m, None) => Err(Error::Config(format!("mode {m} needs a search backend"))),
        }
    }
}

/// Seed for query-generation sample `index` of question `qid`.
///
/// Derived from the run seed, the question id and the sample index only, so
/// sample `i` is the same whatever the total number of samples is.
pub fn derive_seed(seed: u64, qid: &str, index: u32) -> u64 {
    let digest = Sha256::digest(format!("{seed}:{qid}:{index}").as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_be_bytes(bytes)
}

/// One query-generation sample, whether or not a query could be parsed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryAttempt {
    pub sample_index: u32,
    pub seed: u64,
    pub raw_generation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_error: Option<String>,
}

impl QueryAttempt {
    pub fn synthetic_query(&self) -> Option<SyntheticQuery> {
        let text = self.query.as_deref()?;
        SyntheticQuery::new(self.sample_index, text, self.raw_generation.clone()).ok()
    }
}

/// Draws `num_queries` generations and parses each; failures to parse are
/// kept and flagged.
pub fn sample_queries(
    q: &Question,
    cfg: &RunConfig,
    llm: &dyn LlmBackend,
    prompts: &PromptSet,
) -> Result<Vec<QueryAttempt>, Error> {
    let prompt = prompts.render_query_gen(q)?;
    (0..cfg.num_queries)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(cfg.seed, q.id(), i);
            let req = ChatRequest {
                system: prompt.system.clone(),
                user: prompt.user.clone(),
                temperature: cfg.gen_temperature,
                max_tokens: cfg.max_gen_tokens,
                want_logprobs: false,
                top_logprobs: 0,
                seed,
                sample_index: Some(i),
            };
            let raw = llm.complete(&req)?.text;
            let parsed = parse_query(&raw).and_then(|text| {
                SyntheticQuery::new(i, &text, raw.clone())
                    .map(|sq| sq.text().to_string())
                    .map_err(|e| crate::error::ParseFailure::new(e.to_string()))
            });
            let (query, parse_error) = match parsed {
                Ok(text) => (Some(text), None),
                Err(e) => (None, Some(e.reason)),
            };
            Ok(QueryAttempt {
                sample_index: i,
                seed,
                raw_generation: raw,
                query,
                parse_error,
            })
        })
        .collect()
}

/// The successfully parsed queries among `cfg.num_queries` samples.
pub fn generate_queries(
    q: &Question,
    cfg: &RunConfig,
    llm: &dyn LlmBackend,
    prompts: &PromptSet,
) -> Result<Vec<SyntheticQuery>, Error> {
    Ok(sample_queries(q, cfg, llm, prompts)?
        .iter()
        .filter_map(QueryAttempt::synthetic_query)
        .collect())
}

/// Number of backend interactions of each kind made for one question.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallCounts {
    pub query_gen: u32,
    pub base_probe: u32,
    pub snippet_probe: u32,
    pub final_answer: u32,
    pub search: u32,
    pub search_live: u32,
    pub search_cache: u32,
    pub search_corpus: u32,
}

impl CallCounts {
    pub fn llm_total(&self) -> u32 {
        self.query_gen + self.base_probe + self.snippet_probe + self.final_answer
    }

    fn record_search(&mut self, origin: SearchOrigin) {
        self.search += 1;
        match origin {
            SearchOrigin::Live => self.search_live += 1,
            SearchOrigin::Cache => self.search_cache += 1,
            SearchOrigin::Corpus => self.search_corpus += 1,
        }
    }

    pub fn add(&mut self, other: &CallCounts) {
        self.query_gen += other.query_gen;
        self.base_probe += other.base_probe;
        self.snippet_probe += other.snippet_probe;
        self.final_answer += other.final_answer;
        self.search += other.search;
        self.search_live += other.search_live;
        self.search_cache += other.search_cache;
        self.search_corpus += other.search_corpus;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureStage {
    Search,
    Probe,
}

/// A per-snippet failure that was skipped rather than failing the question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleFailure {
    pub sample_index: u32,
    pub stage: FailureStage,
    pub message: String,
}

/// Everything that happened while answering one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionTrace {
    pub question_id: String,
    pub mode: Mode,
    pub num_queries: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_entropy: Option<EntropyReport>,
    pub queries: Vec<QueryAttempt>,
    /// Non-empty snippets retrieved, in sample-index order.
    pub retrieved: Vec<Snippet>,
    pub scored: Vec<ScoredSnippet>,
    pub failures: Vec<SampleFailure>,
    pub selected: SelectedKnowledge,
    pub max_kept_bound: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_prompt: Option<RenderedPrompt>,
    pub final_raw: String,
    pub parsed: Option<OptionLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_error: Option<String>,
    pub gold: Option<OptionLabel>,
    pub correct: bool,
    pub calls: CallCounts,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl QuestionTrace {
    fn new(q: &Question, cfg: &RunConfig) -> Self {
        QuestionTrace {
            question_id: q.id().to_string(),
            mode: cfg.mode,
            num_queries: cfg.effective_num_queries(),
            base_entropy: None,
            queries: Vec::new(),
            retrieved: Vec::new(),
            scored: Vec::new(),
            failures: Vec::new(),
            selected: SelectedKnowledge::default(),
            max_kept_bound: false,
            final_prompt: None,
            final_raw: String::new(),
            parsed: None,
            parse_error: None,
            gold: q.gold(),
            correct: false,
            calls: CallCounts::default(),
            latency_ms: 0,
            error: None,
        }
    }

    /// The compact, timing-free form stored in the run report.
    pub fn record(&self) -> QuestionRecord {
        QuestionRecord {
            question_id: self.question_id.clone(),
            num_queries: self.num_queries,
            queries: self
                .queries
                .iter()
                .map(|a| QueryRecord {
                    sample_index: a.sample_index,
                    query: a.query.clone(),
                    parse_error: a.parse_error.clone(),
                })
                .collect(),
            base_entropy_bits: self.base_entropy.as_ref().map(|e| e.bits),
            snippets: self
                .scored
                .iter()
                .map(|s| SnippetRecord {
                    sample_index: s.sample_index(),
                    post_entropy_bits: s.post_entropy_bits,
                    delta_h_bits: s.delta_h_bits,
                })
                .collect(),
            retrieved: self
                .retrieved
                .iter()
                .map(|s| s.query.sample_index)
                .collect(),
            failures: self.failures.clone(),
            kept: self.selected.kept_indices(),
            max_kept_bound: self.max_kept_bound,
            final_raw: self.final_raw.clone(),
            parsed: self.parsed,
            gold: self.gold,
            correct: self.correct,
            calls: self.calls,
            error: self.error.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub sample_index: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnippetRecord {
    pub sample_index: u32,
    pub post_entropy_bits: f64,
    pub delta_h_bits: f64,
}

/// Per-question entry of [`RunReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub question_id: String,
    pub num_queries: u32,
    pub queries: Vec<QueryRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_entropy_bits: Option<f64>,
    pub snippets: Vec<SnippetRecord>,
    pub retrieved: Vec<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<SampleFailure>,
    pub kept: Vec<u32>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub max_kept_bound: bool,
    pub final_raw: String,
    pub parsed: Option<OptionLabel>,
    pub gold: Option<OptionLabel>,
    pub correct: bool,
    pub calls: CallCounts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n: usize,
    pub n_correct: usize,
    pub accuracy: f64,
    pub n_parse_failures: usize,
    pub n_errors: usize,
    pub calls: CallCounts,
}

impl Aggregate {
    pub fn from_records(records: &[QuestionRecord]) -> Self {
        let n = records.len();
        let n_correct = records.iter().filter(|r| r.correct).count();
        let mut calls = CallCounts::default();
        for r in records {
            calls.add(&r.calls);
        }
        Aggregate {
            n,
            n_correct,
            accuracy: if n == 0 {
                0.0
            } else {
                n_correct as f64 / n as f64
            },
            n_parse_failures: records
                .iter()
                .filter(|r| r.parsed.is_none() && r.error.is_none())
                .count(),
            n_errors: records.iter().filter(|r| r.error.is_some()).count(),
            calls,
        }
    }
}

/// Deterministic summary of one run. Contains no timings, so identical
/// inputs give identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub label: String,
    pub config: RunConfig,
    pub prompt_version: String,
    pub llm: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<String>,
    pub questions: Vec<QuestionRecord>,
    pub aggregate: Aggregate,
}

pub struct RunOutcome {
    pub report: RunReport,
    pub traces: Vec<QuestionTrace>,
}

/// Runs one question through the configured mode.
///
/// Backend failures are recorded in the returned trace. Only an exhausted
/// search quota is returned as an error, because it should end the run.
pub fn run_question(
    q: &Question,
    cfg: &RunConfig,
    backends: &Backends,
    prompts: &PromptSet,
) -> Result<QuestionTrace, Error> {
    let search = backends.search_for(cfg.mode)?;
    let started = Instant::now();
    let mut trace = QuestionTrace::new(q, cfg);
    match answer(q, cfg, backends.llm.as_ref(), search, prompts, &mut trace) {
        Ok(()) => {}
        Err(Error::QuotaAbort(msg)) => return Err(Error::QuotaAbort(msg)),
        Err(e) => {
            trace.parsed = None;
            trace.correct = false;
            trace.error = Some(e.to_string());
        }
    }
    trace.latency_ms = started.elapsed().as_millis() as u64;
    Ok(trace)
}

/// An exhausted quota ends the run; any other search error is local.
fn quota_or(e: SearchError) -> Result<SearchError, Error> {
    match e {
        SearchError::Quota(msg) => Err(Error::QuotaAbort(msg)),
        other => Ok(other),
    }
}

fn answer(
    q: &Question,
    cfg: &RunConfig,
    llm: &dyn LlmBackend,
    search: Option<&dyn SearchBackend>,
    prompts: &PromptSet,
    trace: &mut QuestionTrace,
) -> Result<(), Error> {
    let knowledge = match (cfg.mode, search) {
        (Mode::Cot, _) | (_, None) => String::new(),
        (Mode::QuestionOnlyRetrieval, Some(search)) => {
            let query = SyntheticQuery::new(0, q.stem(), "")?;
            let (snippet, origin) = match search::search(search, &query, cfg.max_snippet_chars) {
                Ok(found) => found,
                Err(e) => return Err(quota_or(e)?.into()),
            };
            trace.calls.record_search(origin);
            if !snippet.is_empty() {
                trace.retrieved.push(snippet);
            }
            render_knowledge(&trace.retrieved)
        }
        (Mode::SearchragUnfiltered, Some(search)) => {
            retrieve_all(q, cfg, llm, search, prompts, trace)?;
            let mut bodies = HashSet::new();
            render_knowledge(
                trace
                    .retrieved
                    .iter()
                    .filter(|s| bodies.insert(s.body.as_str())),
            )
        }
        (Mode::Searchrag, Some(search)) => {
            let base = uncertainty::probe_entropy(q, None, llm, prompts, cfg)?;
            trace.calls.base_probe += 1;
            retrieve_all(q, cfg, llm, search, prompts, trace)?;

            let probes: Vec<Result<ScoredSnippet, Error>> = trace
                .retrieved
                .par_iter()
                .map(|s| uncertainty::score_snippet(q, s, &base, llm, prompts, cfg))
                .collect();
            for (snippet, result) in trace.retrieved.iter().zip(probes) {
                trace.calls.snippet_probe += 1;
                match result {
                    Ok(scored) => trace.scored.push(scored),
                    Err(e) => trace.failures.push(SampleFailure {
                        sample_index: snippet.query.sample_index,
                        stage: FailureStage::Probe,
                        message: e.to_string(),
                    }),
                }
            }
            trace.base_entropy = Some(base);
            let (selected, bound) = uncertainty::select_with_limit(&trace.scored, cfg.max_kept);
            trace.selected = selected;
            trace.max_kept_bound = bound;
            trace.selected.rendered.clone()
        }
    };

    let prompt = prompts.render_final_text(q, &knowledge)?;
    let req = ChatRequest {
        system: prompt.system.clone(),
        user: prompt.user.clone(),
        temperature: 0.0,
        max_tokens: cfg.max_gen_tokens,
        want_logprobs: false,
        top_logprobs: 0,
        seed: cfg.seed,
        sample_index: None,
    };
    trace.final_prompt = Some(prompt);
    let resp = llm.complete(&req)?;
    trace.calls.final_answer += 1;
    trace.final_raw = resp.text;
    match parse_answer(&trace.final_raw, q) {
        Ok(label) => trace.parsed = Some(label),
        Err(e) => trace.parse_error = Some(e.reason),
    }
    trace.correct = trace.parsed.is_some() && trace.parsed == q.gold();
    Ok(())
}

/// Samples queries and searches each parsed one. Empty results are counted
/// as searches but not kept; search failures are recorded and skipped.
fn retrieve_all(
    q: &Question,
    cfg: &RunConfig,
    llm: &dyn LlmBackend,
    search: &dyn SearchBackend,
    prompts: &PromptSet,
    trace: &mut QuestionTrace,
) -> Result<(), Error> {
    trace.queries = sample_queries(q, cfg, llm, prompts)?;
    trace.calls.query_gen += trace.queries.len() as u32;
    let queries: Vec<SyntheticQuery> = trace
        .queries
        .iter()
        .filter_map(QueryAttempt::synthetic_query)
        .collect();
    let results: Vec<_> = queries
        .par_iter()
        .map(|sq| search::search(search, sq, cfg.max_snippet_chars))
        .collect();
    for (sq, result) in queries.iter().zip(results) {
        match result {
            Ok((snippet, origin)) => {
                trace.calls.record_search(origin);
                if !snippet.is_empty() {
                    trace.retrieved.push(snippet);
                }
            }
            Err(e) => {
                let message = quota_or(e)?.to_string();
                trace.failures.push(SampleFailure {
                    sample_index: sq.sample_index,
                    stage: FailureStage::Search,
                    message,
                });
            }
        }
    }
    Ok(())
}

/// Runs every question, at most `cfg.parallelism` at a time. Traces come
/// back in dataset order regardless of scheduling.
pub fn run_dataset(
    questions: &[Question],
    cfg: &RunConfig,
    backends: &Backends,
    prompts: &PromptSet,
) -> Result<RunOutcome, Error> {
    cfg.validate()?;
    if questions.is_empty() {
        return Err(crate::error::DatasetError::Empty.into());
    }
    backends.search_for(cfg.mode)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let aborted = AtomicBool::new(false);
    let abort_reason = Mutex::new(None::<String>);

    let traces: Vec<Option<QuestionTrace>> = pool.install(|| {
        questions
            .par_iter()
            .map(|q| {
                if aborted.load(Ordering::SeqCst) {
                    return None;
                }
                match run_question(q, cfg, backends, prompts) {
                    Ok(t) => Some(t),
                    Err(e) => {
                        aborted.store(true, Ordering::SeqCst);
                        abort_reason
                            .lock()
                            .unwrap_or_else(|p| p.into_inner())
                            .get_or_insert(e.to_string());
                        None
                    }
                }
            })
            .collect()
    });

    if aborted.load(Ordering::SeqCst) {
        let reason = abort_reason
            .into_inner()
            .unwrap_or_else(|p| p.into_inner())
            .unwrap_or_default();
        return Err(Error::QuotaAbort(reason));
    }
    let traces: Vec<QuestionTrace> = traces.into_iter().flatten().collect();
    let report = build_report(cfg.mode.as_str(), cfg, backends, prompts, &traces);
    Ok(RunOutcome { report, traces })
}

pub fn build_report(
    label: &str,
    cfg: &RunConfig,
    backends: &Backends,
    prompts: &PromptSet,
    traces: &[QuestionTrace],
) -> RunReport {
    let questions: Vec<QuestionRecord> = traces.iter().map(QuestionTrace::record).collect();
    RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        label: label.to_string(),
        config: cfg.clone(),
        prompt_version: prompts.version.clone(),
        llm: backends.llm.name().to_string(),
        search: match cfg.mode {
            Mode::Cot => None,
            _ => backends.search.as_ref().map(|s| s.name().to_string()),
        },
        aggregate: Aggregate::from_records(&questions),
        questions,
    }
}
