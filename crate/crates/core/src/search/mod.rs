//! Retrieval: query text in, snippet out.
//!
//! Three backends implement [`SearchBackend`]: the live Serper-style client,
//! a read-through disk cache that can wrap any other backend, and an offline
//! keyword-overlap corpus. All of them return a [`SearchResponse`], which
//! [`assemble_snippet`] renders the same way regardless of where it came from.

mod cache;
mod corpus;
mod serper;

pub use cache::{cache_key, CacheEntry, CachedSearch};
pub use corpus::{Corpus, CorpusDoc, CorpusSearch};
pub use serper::{parse_serper, SerperClient, SerperConfig, ENV_SERPER_KEY, ENV_SERPER_URL};

use serde::{Deserialize, Serialize};

use crate::error::SearchError;
use crate::types::{KnowledgeGraph, OrganicResult, Snippet, SourcePart, SyntheticQuery};

/// Organic results kept per query.
pub const MAX_ORGANIC: usize = 3;

/// Queries longer than this are truncated before being sent.
pub const MAX_QUERY_CHARS: usize = 2048;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerBox {
    pub text: String,
}

/// The textual parts of a search result page we retain.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SearchResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knowledge_graph: Option<KnowledgeGraph>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_box: Option<AnswerBox>,
    #[serde(default)]
    pub organic: Vec<OrganicResult>,
}

impl SearchResponse {
    /// Organic ranks must run 1, 2, 3, ... and no retained text may be empty.
    pub fn validate(&self) -> Result<(), String> {
        for (i, r) in self.organic.iter().enumerate() {
            if r.rank as usize != i + 1 {
                return Err(format!("organic result {i} has rank {}", r.rank));
            }
            if r.title.trim().is_empty() || r.snippet.trim().is_empty() {
                return Err(format!("organic result {} has empty text", r.rank));
            }
        }
        if let Some(kg) = &self.knowledge_graph {
            if kg.title.trim().is_empty() {
                return Err("knowledge graph title is empty".into());
            }
        }
        if self
            .answer_box
            .as_ref()
            .is_some_and(|a| a.text.trim().is_empty())
        {
            return Err("answer box text is empty".into());
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.knowledge_graph.is_none() && self.answer_box.is_none() && self.organic.is_empty()
    }

    /// Parts in rendering order: knowledge graph, answer box, organic 1..3.
    pub fn source_parts(&self) -> Vec<SourcePart> {
        let mut parts = Vec::new();
        if let Some(kg) = &self.knowledge_graph {
            parts.push(SourcePart::KnowledgeGraph(kg.clone()));
        }
        if let Some(ab) = &self.answer_box {
            parts.push(SourcePart::AnswerBox {
                text: ab.text.clone(),
            });
        }
        parts.extend(
            self.organic
                .iter()
                .take(MAX_ORGANIC)
                .cloned()
                .map(SourcePart::Organic),
        );
        parts
    }
}

/// Where a response came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchOrigin {
    Live,
    Cache,
    Corpus,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchOutcome {
    pub response: SearchResponse,
    pub origin: SearchOrigin,
}

pub trait SearchBackend: Send + Sync {
    fn fetch(&self, query: &str) -> Result<SearchOutcome, SearchError>;

    fn name(&self) -> &str;
}

impl<T: SearchBackend + ?Sized> SearchBackend for Box<T> {
    fn fetch(&self, query: &str) -> Result<SearchOutcome, SearchError> {
        (**self).fetch(query)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

impl<T: SearchBackend + ?Sized> SearchBackend for std::sync::Arc<T> {
    fn fetch(&self, query: &str) -> Result<SearchOutcome, SearchError> {
        (**self).fetch(query)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

/// Retrieves evidence for one query. A response with no usable parts yields
/// a snippet with an empty body rather than an error.
pub fn search(
    backend: &dyn SearchBackend,
    query: &SyntheticQuery,
    max_chars: usize,
) -> Result<(Snippet, SearchOrigin), SearchError> {
    let text = truncate_chars(query.text(), MAX_QUERY_CHARS);
    let outcome = backend.fetch(text)?;
    let body = assemble_snippet(&outcome.response, max_chars);
    let snippet = Snippet {
        query: query.clone(),
        body,
        source_parts: outcome.response.source_parts(),
    };
    Ok((snippet, outcome.origin))
}

/// Renders a response as plain text, at most `max_chars` characters.
///
/// Order is fixed: knowledge graph (`title — description`, then one
/// `attr: value` line per attribute), answer box text, then organic results
/// 1..3 as `title — snippet`. Overlong text is cut at a whitespace boundary.
pub fn assemble_snippet(resp: &SearchResponse, max_chars: usize) -> String {
    let mut lines: Vec<String> = Vec::new();
    if let Some(kg) = &resp.knowledge_graph {
        match &kg.description {
            Some(d) => lines.push(format!("{} — {}", kg.title, d)),
            None => lines.push(kg.title.clone()),
        }
        lines.extend(kg.attributes.iter().map(|(k, v)| format!("{k}: {v}")));
    }
    if let Some(ab) = &resp.answer_box {
        lines.push(ab.text.clone());
    }
    lines.extend(
        resp.organic
            .iter()
            .filter(|r| (1..=MAX_ORGANIC as u32).contains(&r.rank))
            .map(|r| format!("{} — {}", r.title, r.snippet)),
    );
    truncate_on_whitespace(&lines.join("\n"), max_chars.max(1))
}

fn truncate_chars(s: &str, max_chars: usize) -> &str {
    match s.char_indices().nth(max_chars) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// Cuts `s` to at most `max_chars` characters, backing off to the last
/// whitespace when the cut would split a word. Words longer than the limit
/// are cut hard.
pub(crate) fn truncate_on_whitespace(s: &str, max_chars: usize) -> String {
    let Some((cut, next)) = s.char_indices().nth(max_chars) else {
        return s.to_string();
    };
    let prefix = &s[..cut];
    let end = if next.is_whitespace() {
        cut
    } else {
        match prefix.char_indices().rev().find(|(_, c)| c.is_whitespace()) {
            Some((i, _)) if i > 0 => i,
            _ => cut,
        }
    };
    s[..end].trim_end().to_string()
}
