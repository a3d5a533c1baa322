//! Evaluation harness: datasets, backend construction, reports and the
//! command-line interface.

pub mod backends;
pub mod cli;
pub mod dataset;
pub mod summary;

pub use backends::{BackendSpec, LlmSpec, SearchKind};
pub use dataset::{load_dataset, parse_dataset};
pub use summary::{emit_summary, format_improve, improvement, Summary, SummaryRow};
