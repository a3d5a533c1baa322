mod support;

use std::time::Duration;

use searchrag_core::error::{LlmError, SearchError};
use searchrag_core::llm::{ChatRequest, HttpLlm, HttpLlmConfig, LlmBackend};
use searchrag_core::retry::RetryPolicy;
use searchrag_core::search::{SearchBackend, SearchOrigin, SerperClient, SerperConfig};
use searchrag_core::types::EntropySpace;
use searchrag_core::uncertainty::{entropy_bits, AnswerTokenMap, EntropyReport};
use serde_json::Value;
use support::{read_fixture, TestServer};

fn llm(url: &str) -> HttpLlm {
    let cfg = HttpLlmConfig {
        url: url.to_string(),
        model: "test-model".into(),
        api_key: Some("sk-test".into()),
        timeout_secs: 5,
        send_seed: true,
    };
    HttpLlm::with_retry(
        cfg,
        RetryPolicy {
            attempts: 3,
            base_delay: Duration::from_millis(1),
            factor: 2,
        },
    )
}

fn probe_request() -> ChatRequest {
    ChatRequest {
        system: "sys".into(),
        user: "user".into(),
        temperature: 0.0,
        max_tokens: 1,
        want_logprobs: true,
        top_logprobs: 5,
        seed: 7,
        sample_index: None,
    }
}

#[test]
fn logprob_completion_round_trip() {
    let server = TestServer::start(vec![(200, read_fixture("openai/chat_logprobs.json"))]);
    let resp = llm(&server.url).complete(&probe_request()).unwrap();
    assert_eq!(resp.text, " B");
    let dist = resp.first_token_dist.unwrap();
    assert_eq!(dist.entries().len(), 5);
    assert!((dist.prob(" B").unwrap() - (-0.105f64).exp()).abs() < 1e-12);
    let expected_residual = 1.0
        - [-0.105f64, -2.40, -5.0, -6.5, -7.5]
            .iter()
            .map(|l| l.exp())
            .sum::<f64>();
    assert!((dist.residual() - expected_residual).abs() < 1e-12);

    // " B" and "B" pool into one label bucket.
    let report = EntropyReport::measure(&dist, &AnswerTokenMap::default(), EntropySpace::Labels);
    let b = report.effective_dist.prob("B").unwrap();
    assert!((b - ((-0.105f64).exp() + (-7.5f64).exp())).abs() < 1e-12);
    assert!(report.bits < entropy_bits(&dist));

    let reqs = server.requests();
    assert_eq!(reqs.len(), 1);
    assert_eq!(reqs[0].path, "/chat/completions");
    assert_eq!(reqs[0].header("authorization"), Some("Bearer sk-test"));
    let body: Value = serde_json::from_str(&reqs[0].body).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["logprobs"], true);
    assert_eq!(body["top_logprobs"], 5);
    assert_eq!(body["max_tokens"], 1);
    assert_eq!(body["seed"], 7);
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(body["messages"][1]["content"], "user");
}

#[test]
fn missing_logprobs_is_capability_error() {
    let server = TestServer::start(vec![(200, read_fixture("openai/chat_no_logprobs.json"))]);
    let err = llm(&server.url).complete(&probe_request()).unwrap_err();
    assert!(matches!(err, LlmError::Capability(_)), "{err:?}");
    // Plain generations do not need them.
    let mut req = probe_request();
    req.want_logprobs = false;
    let server = TestServer::start(vec![(200, read_fixture("openai/chat_no_logprobs.json"))]);
    assert_eq!(llm(&server.url).complete(&req).unwrap().text, " B");
}

#[test]
fn server_errors_are_retried() {
    let ok = read_fixture("openai/chat_logprobs.json");
    let server = TestServer::start(vec![(503, "{}".into()), (500, "{}".into()), (200, ok)]);
    assert!(llm(&server.url).complete(&probe_request()).is_ok());
    assert_eq!(server.requests().len(), 3);
}

#[test]
fn retries_are_bounded() {
    let server = TestServer::start(vec![(503, "{}".into())]);
    let err = llm(&server.url).complete(&probe_request()).unwrap_err();
    assert!(matches!(err, LlmError::Transport(_)));
    assert_eq!(server.requests().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let server = TestServer::start(vec![(404, r#"{"error": "no such model"}"#.into())]);
    let err = llm(&server.url).complete(&probe_request()).unwrap_err();
    assert!(matches!(err, LlmError::Protocol(_)));
    assert_eq!(server.requests().len(), 1);
}

fn serper(url: &str) -> SerperClient {
    let cfg = SerperConfig {
        url: url.to_string(),
        api_key: "serper-key".into(),
        timeout_secs: 5,
    };
    SerperClient::with_retry(cfg, RetryPolicy::no_delay(3))
}

#[test]
fn serper_request_and_parse() {
    let server = TestServer::start(vec![(200, read_fixture("serper/apple.json"))]);
    let out = serper(&server.url).fetch("apple").unwrap();
    assert_eq!(out.origin, SearchOrigin::Live);
    assert_eq!(out.response.knowledge_graph.unwrap().title, "Apple");
    let reqs = server.requests();
    assert_eq!(reqs[0].header("x-api-key"), Some("serper-key"));
    let body: Value = serde_json::from_str(&reqs[0].body).unwrap();
    assert_eq!(body, serde_json::json!({"q": "apple"}));
}

#[test]
fn serper_quota_is_distinct() {
    for status in [401, 402, 403] {
        let server = TestServer::start(vec![(
            status,
            r#"{"message": "Not enough credits"}"#.into(),
        )]);
        let err = serper(&server.url).fetch("x").unwrap_err();
        assert!(matches!(err, SearchError::Quota(_)), "{status}: {err:?}");
        assert_eq!(server.requests().len(), 1);
    }
    let server = TestServer::start(vec![(429, "{}".into()), (200, "{}".into())]);
    assert!(serper(&server.url).fetch("x").unwrap().response.is_empty());
}
