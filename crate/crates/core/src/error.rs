use std::path::PathBuf;

use thiserror::Error;

use crate::types::OptionLabel;

/// Violations of domain-type invariants.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TypeError {
    #[error("invalid option label {0:?}")]
    BadLabel(String),
    #[error("question stem is empty")]
    EmptyStem,
    #[error("questions need 2 to 4 options, got {0}")]
    OptionCount(usize),
    #[error("option labels must be contiguous from A")]
    NonContiguousLabels,
    #[error("gold label {0} is not one of the options")]
    GoldNotAnOption(OptionLabel),
    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("duplicate token {0:?}")]
    DuplicateToken(String),
    #[error("probability mass sums to {0}, expected 1")]
    MassNotNormalized(f64),
    #[error("query text is empty after normalization")]
    EmptyQuery,
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistributionError {
    #[error("logprob list is empty")]
    Empty,
    #[error("logprob {logprob} for token {token:?} is positive or not a number")]
    InvalidLogprob { token: String, logprob: f64 },
    #[error("duplicate token {0:?} in logprob list")]
    DuplicateToken(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LlmError {
    /// Network failure or timeout. Retried.
    #[error("transport error: {0}")]
    Transport(String),
    /// The endpoint answered with something we cannot interpret.
    #[error("protocol error: {0}")]
    Protocol(String),
    /// Log-probabilities were requested but the endpoint cannot return them.
    #[error("capability error: {0}")]
    Capability(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("mock script error: {0}")]
    Script(String),
}

impl LlmError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, LlmError::Transport(_))
    }
}

impl From<DistributionError> for LlmError {
    fn from(e: DistributionError) -> Self {
        LlmError::Protocol(e.to_string())
    }
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    /// Out of credits or the key was refused; the run should stop.
    #[error("search quota exhausted or key rejected: {0}")]
    Quota(String),
    #[error("no cached response for {0:?} and no upstream configured")]
    CacheMiss(String),
    #[error("corpus {path}: line {line}: {message}")]
    CorpusLoad {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("cache I/O error at {path}: {source}")]
    CacheIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SearchError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, SearchError::Transport(_))
    }
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("template {template} references {{{placeholder}}} but no value was supplied")]
    MissingPlaceholder {
        template: String,
        placeholder: String,
    },
    #[error("template {template} is malformed: {message}")]
    Malformed { template: String, message: String },
    #[error("reading prompt {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A model generation did not contain what we were looking for.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse failure: {reason}")]
pub struct ParseFailure {
    pub reason: String,
}

impl ParseFailure {
    pub(crate) fn new(reason: impl Into<String>) -> Self {
        ParseFailure {
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("reading dataset {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("dataset is empty")]
    Empty,
}

impl DatasetError {
    pub fn line(&self) -> Option<usize> {
        match self {
            DatasetError::Format { line, .. } => Some(*line),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SummaryError {
    #[error("baseline report {0:?} not found")]
    BaselineMissing(String),
    #[error("baseline {0:?} has zero accuracy; relative improvement is undefined")]
    ZeroBaseline(String),
    #[error("no reports to summarize")]
    NoReports,
}

/// Top-level error for whole-run operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Summary(#[from] SummaryError),
    /// The run was aborted because the search provider refused further queries.
    #[error("run aborted: {0}")]
    QuotaAbort(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
