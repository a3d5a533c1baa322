//! Completion backends.
//!
//! A backend turns a [`ChatRequest`] into text and, on request, the
//! probability distribution of the first generated token. Two backends ship:
//! an HTTP client for OpenAI-compatible chat endpoints and a scripted mock.

mod http;
mod mock;

pub use http::{HttpLlm, HttpLlmConfig};
pub use mock::{MockLlm, MockRule, MockScript, RotationMode};

use serde::{Deserialize, Serialize};

use crate::error::{DistributionError, LlmError};
use crate::types::TokenDistribution;

/// Logprobs above zero by more than this are rejected.
const LOGPROB_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub want_logprobs: bool,
    pub top_logprobs: u32,
    /// Forwarded to endpoints that support it; always honored by the mock.
    pub seed: u64,
    /// Position within a batch of repeated samples, when there is one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_index: Option<u32>,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.max_tokens == 0 {
            return Err(LlmError::InvalidRequest("max_tokens must be >= 1".into()));
        }
        if self.want_logprobs && self.top_logprobs == 0 {
            return Err(LlmError::InvalidRequest(
                "top_logprobs must be >= 1 when logprobs are wanted".into(),
            ));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(LlmError::InvalidRequest(format!(
                "bad temperature {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    /// Present iff the request asked for logprobs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_token_dist: Option<TokenDistribution>,
}

pub trait LlmBackend: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError>;

    /// Short name recorded in reports.
    fn name(&self) -> &str;
}

impl<T: LlmBackend + ?Sized> LlmBackend for Box<T> {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        (**self).complete(req)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

impl<T: LlmBackend + ?Sized> LlmBackend for std::sync::Arc<T> {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        (**self).complete(req)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

/// Converts top-k `(token, logprob)` pairs into a distribution whose residual
/// holds the mass the endpoint did not report.
///
/// If rounding in the endpoint pushes the reported mass above one, entries
/// are rescaled to sum to exactly one and the residual is zero.
pub fn build_distribution(
    logprobs: &[(String, f64)],
) -> Result<TokenDistribution, DistributionError> {
    if logprobs.is_empty() {
        return Err(DistributionError::Empty);
    }
    let mut entries: Vec<(String, f64)> = Vec::with_capacity(logprobs.len());
    for (token, lp) in logprobs {
        if lp.is_nan() || *lp > LOGPROB_TOLERANCE {
            return Err(DistributionError::InvalidLogprob {
                token: token.clone(),
                logprob: *lp,
            });
        }
        if entries.iter().any(|(t, _)| t == token) {
            return Err(DistributionError::DuplicateToken(token.clone()));
        }
        entries.push((token.clone(), lp.min(0.0).exp()));
    }
    let total: f64 = entries.iter().map(|(_, p)| p).sum();
    let residual = if total > 1.0 {
        for (_, p) in entries.iter_mut() {
            *p /= total;
        }
        0.0
    } else {
        (1.0 - total).max(0.0)
    };
    Ok(TokenDistribution::from_normalized(entries, residual))
}
