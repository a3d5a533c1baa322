use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use ureq::Agent;

use super::{AnswerBox, SearchBackend, SearchOrigin, SearchOutcome, SearchResponse, MAX_ORGANIC};
use crate::error::SearchError;
use crate::retry::RetryPolicy;
use crate::types::{KnowledgeGraph, OrganicResult};

pub const ENV_SERPER_KEY: &str = "SEARCHRAG_SERPER_KEY";
pub const ENV_SERPER_URL: &str = "SEARCHRAG_SERPER_URL";
pub const DEFAULT_SERPER_URL: &str = "https://google.serper.dev/search";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SerperConfig {
    #[serde(default = "default_url")]
    pub url: String,
    pub api_key: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_url() -> String {
    DEFAULT_SERPER_URL.to_string()
}

fn default_timeout_secs() -> u64 {
    30
}

impl SerperConfig {
    pub fn from_env() -> Option<Self> {
        let api_key = std::env::var(ENV_SERPER_KEY)
            .ok()
            .filter(|k| !k.is_empty())?;
        Some(SerperConfig {
            url: std::env::var(ENV_SERPER_URL).unwrap_or_else(|_| default_url()),
            api_key,
            timeout_secs: default_timeout_secs(),
        })
    }
}

/// Live client for a Serper-compatible search endpoint.
pub struct SerperClient {
    config: SerperConfig,
    agent: Agent,
    retry: RetryPolicy,
}

impl SerperClient {
    pub fn new(config: SerperConfig) -> Self {
        Self::with_retry(config, RetryPolicy::default())
    }

    pub fn with_retry(config: SerperConfig, retry: RetryPolicy) -> Self {
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        SerperClient {
            config,
            agent,
            retry,
        }
    }

    fn attempt(&self, query: &str) -> Result<SearchResponse, SearchError> {
        let mut resp = self
            .agent
            .post(&self.config.url)
            .header("X-API-KEY", &self.config.api_key)
            .header("Content-Type", "application/json")
            .send_json(json!({ "q": query }))
            .map_err(|e| SearchError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| SearchError::Transport(e.to_string()))?;
        match status {
            200..=299 => parse_serper(&body),
            401..=403 => Err(SearchError::Quota(format!(
                "HTTP {status}: {}",
                body.trim()
            ))),
            408 | 429 | 500..=599 => Err(SearchError::Transport(format!("HTTP {status}"))),
            _ => Err(SearchError::Protocol(format!(
                "HTTP {status}: {}",
                body.trim()
            ))),
        }
    }
}

impl SearchBackend for SerperClient {
    fn fetch(&self, query: &str) -> Result<SearchOutcome, SearchError> {
        let response = self
            .retry
            .run(|| self.attempt(query), SearchError::is_retriable)?;
        Ok(SearchOutcome {
            response,
            origin: SearchOrigin::Live,
        })
    }

    fn name(&self) -> &str {
        "serper"
    }
}

fn value_text(v: &Value) -> Option<String> {
    let s = match v {
        Value::String(s) => s.trim().to_string(),
        Value::Number(n) => n.to_string(),
        _ => return None,
    };
    (!s.is_empty()).then_some(s)
}

fn text_field(v: &Value, key: &str) -> Option<String> {
    value_text(v.get(key)?)
}

/// Extracts the retained parts of a Serper-style payload.
///
/// Keeps the knowledge graph, the answer box and the first three organic
/// results that carry both a title and a snippet. Everything else (images,
/// ads, AI overviews, related searches) is ignored.
pub fn parse_serper(payload: &str) -> Result<SearchResponse, SearchError> {
    let root: Value = serde_json::from_str(payload)
        .map_err(|e| SearchError::Protocol(format!("malformed search payload: {e}")))?;
    if !root.is_object() {
        return Err(SearchError::Protocol(
            "search payload is not a JSON object".into(),
        ));
    }

    let knowledge_graph = root.get("knowledgeGraph").and_then(|kg| {
        let title = text_field(kg, "title")?;
        let attributes: BTreeMap<String, String> = kg
            .get("attributes")
            .and_then(Value::as_object)
            .map(|m| {
                m.iter()
                    .filter_map(|(k, v)| {
                        let k = k.trim();
                        if k.is_empty() {
                            return None;
                        }
                        Some((k.to_string(), value_text(v)?))
                    })
                    .collect()
            })
            .unwrap_or_default();
        Some(KnowledgeGraph {
            title,
            description: text_field(kg, "description"),
            attributes,
        })
    });

    let answer_box = root
        .get("answerBox")
        .and_then(|ab| text_field(ab, "answer").or_else(|| text_field(ab, "snippet")))
        .map(|text| AnswerBox { text });

    let organic = root
        .get("organic")
        .and_then(Value::as_array)
        .map(|items| {
            items
                .iter()
                .filter_map(|item| Some((text_field(item, "title")?, text_field(item, "snippet")?)))
                .take(MAX_ORGANIC)
                .enumerate()
                .map(|(i, (title, snippet))| OrganicResult {
                    rank: i as u32 + 1,
                    title,
                    snippet,
                })
                .collect()
        })
        .unwrap_or_default();

    Ok(SearchResponse {
        knowledge_graph,
        answer_box,
        organic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drops_non_textual_and_excess_results() {
        let payload = r#"{
            "searchParameters": {"q": "x"},
            "images": [{"title": "pic", "imageUrl": "http://i"}],
            "ads": [{"title": "buy", "snippet": "now"}],
            "aiOverview": {"snippet": "generated"},
            "answerBox": {"snippet": "boxed", "title": "t"},
            "organic": [
                {"title": "One", "snippet": "first", "position": 1},
                {"title": "No snippet", "position": 2},
                {"title": "Two", "snippet": "second", "position": 3},
                {"title": "Three", "snippet": "third", "position": 4},
                {"title": "Four", "snippet": "fourth", "position": 5}
            ]
        }"#;
        let r = parse_serper(payload).unwrap();
        assert!(r.knowledge_graph.is_none());
        assert_eq!(
            r.answer_box,
            Some(AnswerBox {
                text: "boxed".into()
            })
        );
        let titles: Vec<_> = r.organic.iter().map(|o| o.title.as_str()).collect();
        assert_eq!(titles, ["One", "Two", "Three"]);
        assert!(r.validate().is_ok());
    }

    #[test]
    fn answer_preferred_over_snippet() {
        let r = parse_serper(r#"{"answerBox": {"answer": "42", "snippet": "long"}}"#).unwrap();
        assert_eq!(r.answer_box.unwrap().text, "42");
    }

    #[test]
    fn empty_object_is_empty_response() {
        assert!(parse_serper("{}").unwrap().is_empty());
        assert!(matches!(parse_serper("[]"), Err(SearchError::Protocol(_))));
        assert!(matches!(
            parse_serper("nope"),
            Err(SearchError::Protocol(_))
        ));
    }
}
