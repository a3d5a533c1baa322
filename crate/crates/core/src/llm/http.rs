use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use ureq::Agent;

use super::{build_distribution, ChatRequest, ChatResponse, LlmBackend};
use crate::error::LlmError;
use crate::retry::RetryPolicy;

pub const ENV_URL: &str = "SEARCHRAG_LLM_URL";
pub const ENV_KEY: &str = "SEARCHRAG_LLM_KEY";
pub const ENV_MODEL: &str = "SEARCHRAG_LLM_MODEL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpLlmConfig {
    /// Either the full `/chat/completions` URL or the API base it hangs off.
    pub url: String,
    pub model: String,
    #[serde(default)]
    pub api_key: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    /// Whether to forward the request seed to the endpoint.
    #[serde(default = "default_true")]
    pub send_seed: bool,
}

fn default_timeout_secs() -> u64 {
    120
}

fn default_true() -> bool {
    true
}

impl HttpLlmConfig {
    pub fn from_env() -> Result<Self, LlmError> {
        let url = std::env::var(ENV_URL)
            .map_err(|_| LlmError::InvalidRequest(format!("{ENV_URL} is not set")))?;
        let model = std::env::var(ENV_MODEL)
            .map_err(|_| LlmError::InvalidRequest(format!("{ENV_MODEL} is not set")))?;
        Ok(HttpLlmConfig {
            url,
            model,
            api_key: std::env::var(ENV_KEY).ok(),
            timeout_secs: default_timeout_secs(),
            send_seed: true,
        })
    }

    fn endpoint(&self) -> String {
        let url = self.url.trim_end_matches('/');
        if url.ends_with("/chat/completions") {
            url.to_string()
        } else {
            format!("{url}/chat/completions")
        }
    }
}

/// Client for OpenAI-compatible `/chat/completions` endpoints.
pub struct HttpLlm {
    config: HttpLlmConfig,
    endpoint: String,
    agent: Agent,
    retry: RetryPolicy,
}

impl HttpLlm {
    pub fn new(config: HttpLlmConfig) -> Self {
        Self::with_retry(config, RetryPolicy::default())
    }

    pub fn with_retry(config: HttpLlmConfig, retry: RetryPolicy) -> Self {
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        HttpLlm {
            endpoint: config.endpoint(),
            config,
            agent,
            retry,
        }
    }

    fn body(&self, req: &ChatRequest) -> serde_json::Value {
        let mut body = json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": req.system},
                {"role": "user", "content": req.user},
            ],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
            "logprobs": req.want_logprobs,
        });
        if req.want_logprobs {
            body["top_logprobs"] = json!(req.top_logprobs);
        }
        if self.config.send_seed {
            body["seed"] = json!(req.seed);
        }
        body
    }

    fn attempt(
        &self,
        req: &ChatRequest,
        body: &serde_json::Value,
    ) -> Result<ChatResponse, LlmError> {
        let mut call = self
            .agent
            .post(&self.endpoint)
            .header("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = call
            .send_json(body)
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| LlmError::Transport(format!("reading response body: {e}")))?;
        match status {
            200..=299 => parse_completion(&text, req.want_logprobs),
            408 | 429 | 500..=599 => Err(LlmError::Transport(format!(
                "HTTP {status}: {}",
                excerpt(&text)
            ))),
            400 if req.want_logprobs && text.to_ascii_lowercase().contains("logprob") => Err(
                LlmError::Capability(format!("endpoint rejected logprobs: {}", excerpt(&text))),
            ),
            _ => Err(LlmError::Protocol(format!(
                "HTTP {status}: {}",
                excerpt(&text)
            ))),
        }
    }
}

impl LlmBackend for HttpLlm {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        req.validate()?;
        let body = self.body(req);
        self.retry
            .run(|| self.attempt(req, &body), LlmError::is_retriable)
    }

    fn name(&self) -> &str {
        "http"
    }
}

fn excerpt(s: &str) -> &str {
    match s.char_indices().nth(300) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

#[derive(Deserialize)]
struct CompletionPayload {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
    #[serde(default)]
    logprobs: Option<ChoiceLogprobs>,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChoiceLogprobs {
    #[serde(default)]
    content: Option<Vec<TokenLogprob>>,
}

#[derive(Deserialize)]
struct TokenLogprob {
    #[serde(default)]
    top_logprobs: Vec<TopLogprob>,
}

#[derive(Deserialize)]
struct TopLogprob {
    token: String,
    logprob: f64,
}

/// Parses an OpenAI-style completion payload.
pub(crate) fn parse_completion(
    payload: &str,
    want_logprobs: bool,
) -> Result<ChatResponse, LlmError> {
    let parsed: CompletionPayload = serde_json::from_str(payload)
        .map_err(|e| LlmError::Protocol(format!("malformed completion payload: {e}")))?;
    let choice = parsed
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| LlmError::Protocol("completion has no choices".into()))?;
    let text = choice.message.content.unwrap_or_default();
    if !want_logprobs {
        return Ok(ChatResponse {
            text,
            first_token_dist: None,
        });
    }
    let first = choice
        .logprobs
        .and_then(|l| l.content)
        .and_then(|c| c.into_iter().next())
        .filter(|t| !t.top_logprobs.is_empty())
        .ok_or_else(|| {
            LlmError::Capability("endpoint returned no first-token top_logprobs".into())
        })?;
    // Some servers repeat a token in the top-k list; keep the first (highest) entry.
    let mut pairs: Vec<(String, f64)> = Vec::with_capacity(first.top_logprobs.len());
    for t in first.top_logprobs {
        if !pairs.iter().any(|(tok, _)| *tok == t.token) {
            pairs.push((t.token, t.logprob));
        }
    }
    let dist = build_distribution(&pairs)?;
    Ok(ChatResponse {
        text,
        first_token_dist: Some(dist),
    })
}
