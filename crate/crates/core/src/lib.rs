//! Search-engine retrieval augmentation for multiple-choice question
//! answering.
//!
//! For each question the model writes many short search queries, each query
//! is sent to a search backend, and each resulting snippet is kept only if it
//! lowers the entropy of the model's first answer token. The kept snippets
//! are then handed to the model as context for the final answer.

pub mod error;
pub mod harness;
pub mod llm;
pub mod pipeline;
pub mod prompts;
pub mod retry;
pub mod search;
pub mod types;
pub mod uncertainty;

pub use error::Error;
