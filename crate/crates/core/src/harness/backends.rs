use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::llm::{HttpLlm, HttpLlmConfig, LlmBackend, MockLlm};
use crate::pipeline::Backends;
use crate::search::{
    CachedSearch, Corpus, CorpusSearch, SearchBackend, SerperClient, SerperConfig, ENV_SERPER_KEY,
};

/// `http` (endpoint from the environment) or `mock:<script.json>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum LlmSpec {
    Http,
    Mock(PathBuf),
}

impl FromStr for LlmSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            _ if s == "http" => Ok(LlmSpec::Http),
            Some(("mock", path)) if !path.is_empty() => Ok(LlmSpec::Mock(PathBuf::from(path))),
            _ => Err(format!("expected `http` or `mock:<script>`, got {s:?}")),
        }
    }
}

impl TryFrom<String> for LlmSpec {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl fmt::Display for LlmSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LlmSpec::Http => f.write_str("http"),
            LlmSpec::Mock(p) => write!(f, "mock:{}", p.display()),
        }
    }
}

impl From<LlmSpec> for String {
    fn from(s: LlmSpec) -> Self {
        s.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SearchKind {
    /// Live search API; with a cache directory, responses are written through.
    Serper,
    /// Replay from the cache directory only; a miss is an error.
    Cache,
    /// Keyword search over a local JSONL corpus.
    Corpus,
}

fn default_top_n() -> usize {
    3
}

/// Which backends to build, in a form shared by the CLI and the C ABI.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendSpec {
    pub llm: LlmSpec,
    #[serde(default)]
    pub search: Option<SearchKind>,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub corpus: Option<PathBuf>,
    #[serde(default = "default_top_n")]
    pub corpus_top_n: usize,
}

impl BackendSpec {
    pub fn new(llm: LlmSpec) -> Self {
        BackendSpec {
            llm,
            search: None,
            cache_dir: None,
            corpus: None,
            corpus_top_n: default_top_n(),
        }
    }

    pub fn build_llm(&self) -> Result<Arc<dyn LlmBackend>, Error> {
        Ok(match &self.llm {
            LlmSpec::Http => Arc::new(HttpLlm::new(HttpLlmConfig::from_env()?)),
            LlmSpec::Mock(path) => Arc::new(MockLlm::load(path)?),
        })
    }

    pub fn build_search(&self) -> Result<Option<Arc<dyn SearchBackend>>, Error> {
        let Some(kind) = self.search else {
            return Ok(None);
        };
        let inner: Arc<dyn SearchBackend> = match kind {
            SearchKind::Cache => {
                let dir = self
                    .cache_dir
                    .as_ref()
                    .ok_or_else(|| Error::Config("--search cache needs --cache-dir".into()))?;
                return Ok(Some(Arc::new(CachedSearch::new(dir, None)?)));
            }
            SearchKind::Serper => {
                let cfg = SerperConfig::from_env().ok_or_else(|| {
                    Error::Config(format!("--search serper needs {ENV_SERPER_KEY}"))
                })?;
                Arc::new(SerperClient::new(cfg))
            }
            SearchKind::Corpus => {
                let path = self
                    .corpus
                    .as_ref()
                    .ok_or_else(|| Error::Config("--search corpus needs --corpus".into()))?;
                Arc::new(CorpusSearch::new(Corpus::load(path)?, self.corpus_top_n))
            }
        };
        Ok(Some(match &self.cache_dir {
            Some(dir) => Arc::new(CachedSearch::new(dir, Some(inner))?),
            None => inner,
        }))
    }

    pub fn build(&self) -> Result<Backends, Error> {
        Ok(Backends::new(self.build_llm()?, self.build_search()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn llm_spec_parsing() {
        assert_eq!("http".parse::<LlmSpec>(), Ok(LlmSpec::Http));
        assert_eq!(
            "mock:a/b.json".parse::<LlmSpec>(),
            Ok(LlmSpec::Mock("a/b.json".into()))
        );
        assert!("mock:".parse::<LlmSpec>().is_err());
        assert!("openai".parse::<LlmSpec>().is_err());
        let spec: BackendSpec =
            serde_json::from_str(r#"{"llm": "mock:s.json", "search": "corpus"}"#).unwrap();
        assert_eq!(spec.search, Some(SearchKind::Corpus));
        assert_eq!(spec.corpus_top_n, 3);
    }

    #[test]
    fn missing_paths_are_config_errors() {
        let mut spec = BackendSpec::new(LlmSpec::Http);
        spec.search = Some(SearchKind::Cache);
        assert!(matches!(spec.build_search(), Err(Error::Config(_))));
        spec.search = Some(SearchKind::Corpus);
        assert!(matches!(spec.build_search(), Err(Error::Config(_))));
    }
}
