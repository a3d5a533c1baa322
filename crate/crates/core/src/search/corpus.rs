use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{SearchBackend, SearchOrigin, SearchOutcome, SearchResponse};
use crate::error::SearchError;
use crate::types::OrganicResult;

/// Snippet text is cut to this many words.
pub const SNIPPET_WORDS: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusDoc {
    pub id: String,
    pub title: String,
    pub text: String,
}

#[derive(Debug, Clone)]
struct IndexedDoc {
    doc: CorpusDoc,
    terms: BTreeSet<String>,
}

/// In-memory document set searched by keyword overlap.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    docs: Vec<IndexedDoc>,
}

/// Case-folded alphanumeric terms.
pub fn terms(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

impl Corpus {
    pub fn new(docs: Vec<CorpusDoc>) -> Self {
        let docs = docs
            .into_iter()
            .map(|doc| {
                let terms = terms(&format!("{} {}", doc.title, doc.text));
                IndexedDoc { doc, terms }
            })
            .collect();
        Corpus { docs }
    }

    /// Loads `{id, title, text}` lines. Blank lines are skipped.
    pub fn load(path: &Path) -> Result<Self, SearchError> {
        let err = |line: usize, message: String| SearchError::CorpusLoad {
            path: PathBuf::from(path),
            line,
            message,
        };
        let raw = fs::read_to_string(path).map_err(|e| err(0, e.to_string()))?;
        let mut docs = Vec::new();
        for (i, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let doc: CorpusDoc =
                serde_json::from_str(line).map_err(|e| err(i + 1, e.to_string()))?;
            docs.push(doc);
        }
        Ok(Self::new(docs))
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Overlap score of every document that shares at least one term with
    /// `query`, best first, ties by document id.
    pub fn rank(&self, query: &str) -> Vec<(&CorpusDoc, usize)> {
        let q = terms(query);
        let mut scored: Vec<(&CorpusDoc, usize)> = self
            .docs
            .iter()
            .map(|d| (&d.doc, q.iter().filter(|t| d.terms.contains(*t)).count()))
            .filter(|(_, score)| *score > 0)
            .collect();
        scored.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.id.cmp(&b.0.id)));
        scored
    }

    pub fn search(&self, query: &str, top_n: usize) -> SearchResponse {
        let organic = self
            .rank(query)
            .into_iter()
            .take(top_n)
            .enumerate()
            .map(|(i, (doc, _))| OrganicResult {
                rank: i as u32 + 1,
                title: doc.title.clone(),
                snippet: doc
                    .text
                    .split_whitespace()
                    .take(SNIPPET_WORDS)
                    .collect::<Vec<_>>()
                    .join(" "),
            })
            .collect();
        SearchResponse {
            organic,
            ..Default::default()
        }
    }
}

/// Offline stand-in for a web search engine.
pub struct CorpusSearch {
    corpus: Corpus,
    top_n: usize,
}

impl CorpusSearch {
    pub fn new(corpus: Corpus, top_n: usize) -> Self {
        CorpusSearch { corpus, top_n }
    }
}

impl SearchBackend for CorpusSearch {
    fn fetch(&self, query: &str) -> Result<SearchOutcome, SearchError> {
        Ok(SearchOutcome {
            response: self.corpus.search(query, self.top_n),
            origin: SearchOrigin::Corpus,
        })
    }

    fn name(&self) -> &str {
        "corpus"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, title: &str, text: &str) -> CorpusDoc {
        CorpusDoc {
            id: id.into(),
            title: title.into(),
            text: text.into(),
        }
    }

    #[test]
    fn title_query_ranks_first() {
        let c = Corpus::new(vec![
            doc("1", "Aspirin overview", "pain relief"),
            doc("2", "Cisplatin ototoxicity", "hearing loss after platinum"),
        ]);
        let r = c.search("cisplatin ototoxicity", 1);
        assert_eq!(r.organic.len(), 1);
        assert_eq!(r.organic[0].title, "Cisplatin ototoxicity");
    }

    #[test]
    fn zero_overlap_is_empty() {
        let c = Corpus::new(vec![doc("1", "Aspirin", "pain relief")]);
        assert!(c.search("zebra", 3).organic.is_empty());
    }

    #[test]
    fn ties_break_by_id() {
        let c = Corpus::new(vec![doc("b", "x", "shared"), doc("a", "y", "shared")]);
        let ids: Vec<_> = c
            .rank("shared")
            .into_iter()
            .map(|(d, _)| d.id.clone())
            .collect();
        assert_eq!(ids, ["a", "b"]);
    }

    #[test]
    fn long_text_cut_to_word_budget() {
        let text = (0..500)
            .map(|i| format!("w{i}"))
            .collect::<Vec<_>>()
            .join(" ");
        let c = Corpus::new(vec![doc("1", "t", &text)]);
        let r = c.search("w0", 1);
        assert_eq!(
            r.organic[0].snippet.split_whitespace().count(),
            SNIPPET_WORDS
        );
    }

    #[test]
    fn terms_are_case_folded() {
        assert_eq!(
            terms("DNA, dna; Cross-linking"),
            ["cross", "dna", "linking"].map(String::from).into()
        );
    }
}
