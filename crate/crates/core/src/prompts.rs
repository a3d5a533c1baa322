//! The three prompt templates and the parsers for what comes back.
//!
//! Templates live in `prompts/v1/*.txt` and are compiled in; a directory
//! with files of the same names can override any of them at run time.
//!
//! Template files have a `[system]` section and a `[user]` section.
//! Placeholders are `{question}`, `{options}` and `{snippets}`. Text between
//! `{#snippets}` and `{/snippets}` is emitted only when snippets are supplied.
//! Substitution is single pass: braces inside substituted values are never
//! interpreted.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ParseFailure, PromptError};
use crate::types::{OptionLabel, Question, SelectedKnowledge, Snippet};

pub const PROMPT_VERSION: &str = "v1";

pub const QUERY_MARKER: &str = "search_query:";
pub const ANSWER_MARKER: &str = "answer_choice";

const BUILTIN_QUERY_GEN: &str = include_str!("../prompts/v1/query_gen.txt");
const BUILTIN_PROBE: &str = include_str!("../prompts/v1/uncertainty_probe.txt");
const BUILTIN_FINAL: &str = include_str!("../prompts/v1/final_answer.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateName {
    QueryGen,
    UncertaintyProbe,
    FinalAnswer,
}

impl TemplateName {
    pub const ALL: [TemplateName; 3] = [
        TemplateName::QueryGen,
        TemplateName::UncertaintyProbe,
        TemplateName::FinalAnswer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateName::QueryGen => "query_gen",
            TemplateName::UncertaintyProbe => "uncertainty_probe",
            TemplateName::FinalAnswer => "final_answer",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.txt", self.as_str())
    }

    fn builtin_source(self) -> &'static str {
        match self {
            TemplateName::QueryGen => BUILTIN_QUERY_GEN,
            TemplateName::UncertaintyProbe => BUILTIN_PROBE,
            TemplateName::FinalAnswer => BUILTIN_FINAL,
        }
    }
}

/// A rendered system/user message pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub system: String,
    pub user: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: TemplateName,
    pub system: String,
    pub user_template: String,
}

impl PromptTemplate {
    pub fn parse(name: TemplateName, source: &str) -> Result<Self, PromptError> {
        let malformed = |message: &str| PromptError::Malformed {
            template: name.as_str().into(),
            message: message.into(),
        };
        let source = source.strip_suffix('\n').unwrap_or(source);
        let rest = source
            .strip_prefix("[system]\n")
            .ok_or_else(|| malformed("must start with a [system] line"))?;
        let (system, user) = rest
            .split_once("\n[user]\n")
            .ok_or_else(|| malformed("missing [user] section"))?;
        let template = PromptTemplate {
            name,
            system: system.to_string(),
            user_template: user.to_string(),
        };
        for required in ["question", "options"] {
            if !template.placeholders().iter().any(|p| p == required) {
                return Err(malformed(&format!(
                    "user section must contain {{{required}}}"
                )));
            }
        }
        Ok(template)
    }

    /// Placeholder names used in the user template, in order of appearance.
    pub fn placeholders(&self) -> Vec<String> {
        tokenize(&self.user_template)
            .into_iter()
            .filter_map(|t| match t {
                Token::Placeholder(n) => Some(n.to_string()),
                _ => None,
            })
            .collect()
    }

    /// Fills the user template. A placeholder without a value is an error,
    /// unless it sits inside a block whose value is absent.
    pub fn render(&self, values: &BTreeMap<&str, &str>) -> Result<RenderedPrompt, PromptError> {
        let mut out = String::with_capacity(self.user_template.len() + 256);
        let mut skipping: Option<&str> = None;
        for token in tokenize(&self.user_template) {
            match (token, skipping) {
                (Token::BlockEnd(n), Some(s)) if n == s => skipping = None,
                (_, Some(_)) => {}
                (Token::Text(t), None) => out.push_str(t),
                (Token::Placeholder(n), None) => {
                    let v = values
                        .get(n)
                        .ok_or_else(|| PromptError::MissingPlaceholder {
                            template: self.name.as_str().into(),
                            placeholder: n.into(),
                        })?;
                    out.push_str(v);
                }
                (Token::BlockStart(n), None) => {
                    if !values.contains_key(n) {
                        skipping = Some(n);
                    }
                }
                (Token::BlockEnd(_), None) => {}
            }
        }
        Ok(RenderedPrompt {
            system: self.system.clone(),
            user: out,
        })
    }
}

enum Token<'a> {
    Text(&'a str),
    Placeholder(&'a str),
    BlockStart(&'a str),
    BlockEnd(&'a str),
}

fn is_ident(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_lowercase() || b == b'_')
}

fn tokenize(template: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let Some(close) = after.find('}') else { break };
        let inner = &after[..close];
        let token = if let Some(n) = inner.strip_prefix('#').filter(|n| is_ident(n)) {
            Some(Token::BlockStart(n))
        } else if let Some(n) = inner.strip_prefix('/').filter(|n| is_ident(n)) {
            Some(Token::BlockEnd(n))
        } else if is_ident(inner) {
            Some(Token::Placeholder(inner))
        } else {
            None
        };
        match token {
            Some(t) => {
                if open > 0 {
                    tokens.push(Token::Text(&rest[..open]));
                }
                tokens.push(t);
                rest = &after[close + 1..];
            }
            None => {
                tokens.push(Token::Text(&rest[..open + 1]));
                rest = after;
            }
        }
    }
    if !rest.is_empty() {
        tokens.push(Token::Text(rest));
    }
    tokens
}

/// The three templates used by a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub version: String,
    pub query_gen: PromptTemplate,
    pub uncertainty_probe: PromptTemplate,
    pub final_answer: PromptTemplate,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PromptSet {
    pub fn builtin() -> Self {
        let load = |n: TemplateName| {
            PromptTemplate::parse(n, n.builtin_source()).expect("builtin templates are valid")
        };
        PromptSet {
            version: PROMPT_VERSION.to_string(),
            query_gen: load(TemplateName::QueryGen),
            uncertainty_probe: load(TemplateName::UncertaintyProbe),
            final_answer: load(TemplateName::FinalAnswer),
        }
    }

    /// Builtins overridden by whichever template files exist in `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut set = Self::builtin();
        let mut overridden = false;
        for name in TemplateName::ALL {
            let path = dir.join(name.file_name());
            let source = match fs::read_to_string(&path) {
                Ok(s) => s,
                Err(e) if e.kind() == io::ErrorKind::NotFound => continue,
                Err(source) => return Err(PromptError::Io { path, source }),
            };
            *set.template_mut(name) = PromptTemplate::parse(name, &source)?;
            overridden = true;
        }
        if overridden {
            set.version = format!("{PROMPT_VERSION}+{}", dir.display());
        }
        Ok(set)
    }

    pub fn template(&self, name: TemplateName) -> &PromptTemplate {
        match name {
            TemplateName::QueryGen => &self.query_gen,
            TemplateName::UncertaintyProbe => &self.uncertainty_probe,
            TemplateName::FinalAnswer => &self.final_answer,
        }
    }

    fn template_mut(&mut self, name: TemplateName) -> &mut PromptTemplate {
        match name {
            TemplateName::QueryGen => &mut self.query_gen,
            TemplateName::UncertaintyProbe => &mut self.uncertainty_probe,
            TemplateName::FinalAnswer => &mut self.final_answer,
        }
    }

    pub fn render_query_gen(&self, q: &Question) -> Result<RenderedPrompt, PromptError> {
        let options = render_options(q);
        self.query_gen.render(&BTreeMap::from([
            ("question", q.stem()),
            ("options", options.as_str()),
        ]))
    }

    /// The probe without a snippet measures the base entropy; with one it
    /// measures the entropy after augmentation.
    pub fn render_uncertainty_probe(
        &self,
        q: &Question,
        snippet: Option<&Snippet>,
    ) -> Result<RenderedPrompt, PromptError> {
        let options = render_options(q);
        let mut values = BTreeMap::from([("question", q.stem()), ("options", options.as_str())]);
        if let Some(s) = snippet {
            values.insert("snippets", s.body.as_str());
        }
        self.uncertainty_probe.render(&values)
    }

    pub fn render_final(
        &self,
        q: &Question,
        knowledge: &SelectedKnowledge,
    ) -> Result<RenderedPrompt, PromptError> {
        self.render_final_text(q, &knowledge.rendered)
    }

    /// Final prompt from pre-rendered knowledge text; empty text drops the
    /// excerpts block entirely.
    pub fn render_final_text(
        &self,
        q: &Question,
        knowledge: &str,
    ) -> Result<RenderedPrompt, PromptError> {
        let options = render_options(q);
        let mut values = BTreeMap::from([("question", q.stem()), ("options", options.as_str())]);
        if !knowledge.is_empty() {
            values.insert("snippets", knowledge);
        }
        self.final_answer.render(&values)
    }
}

/// `A) text B) text ...`
pub fn render_options(q: &Question) -> String {
    q.options()
        .iter()
        .map(|(label, text)| format!("{label}) {text}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Concatenates snippet bodies for the final prompt, each tagged with its
/// 1-based query number.
pub fn render_knowledge<'a>(snippets: impl IntoIterator<Item = &'a Snippet>) -> String {
    snippets
        .into_iter()
        .map(|s| format!("[{}] {}", s.query.sample_index + 1, s.body))
        .collect::<Vec<_>>()
        .join("\n\n")
}

const QUOTES: &[char] = &[
    '"', '\'', '`', '\u{2018}', '\u{2019}', '\u{201C}', '\u{201D}',
];

/// Extracts the query after the last `Search_query:` marker (any case), up
/// to the end of that line, with whitespace and surrounding quotes removed.
pub fn parse_query(generation: &str) -> Result<String, ParseFailure> {
    let lower = generation.to_ascii_lowercase();
    let at = lower
        .rfind(QUERY_MARKER)
        .ok_or_else(|| ParseFailure::new("no Search_query: marker"))?;
    let tail = &generation[at + QUERY_MARKER.len()..];
    let line = tail.split(['\n', '\r']).next().unwrap_or("");
    let query = line.trim().trim_matches(QUOTES).trim();
    if query.is_empty() {
        return Err(ParseFailure::new("empty query after Search_query: marker"));
    }
    Ok(query.to_string())
}

fn standalone_at(chars: &[char], i: usize, len: usize) -> bool {
    let before_ok = i == 0 || !chars[i - 1].is_alphanumeric();
    let after_ok = i + len >= chars.len() || !chars[i + len].is_alphanumeric();
    before_ok && after_ok
}

fn valid_label(c: char, q: &Question) -> Option<OptionLabel> {
    if !c.is_ascii_uppercase() {
        return None;
    }
    OptionLabel::from_char(c).filter(|l| q.has_label(*l))
}

/// Reads the chosen option out of a final-answer generation.
///
/// The first standalone option letter after the last `answer_choice` marker
/// wins. Without a usable marker, the last `A.`, `A)`, `(A)` or `A:` style
/// token anywhere in the text is taken.
pub fn parse_answer(generation: &str, q: &Question) -> Result<OptionLabel, ParseFailure> {
    let lower = generation.to_ascii_lowercase();
    if let Some(at) = lower.rfind(ANSWER_MARKER) {
        let tail: Vec<char> = generation[at + ANSWER_MARKER.len()..].chars().collect();
        for (i, &c) in tail.iter().enumerate() {
            if let Some(label) = valid_label(c, q) {
                if standalone_at(&tail, i, 1) {
                    return Ok(label);
                }
            }
        }
    }

    let chars: Vec<char> = generation.chars().collect();
    let mut last = None;
    for (i, &c) in chars.iter().enumerate() {
        let Some(label) = valid_label(c, q) else {
            continue;
        };
        let before = if i == 0 { None } else { Some(chars[i - 1]) };
        let after = chars.get(i + 1).copied();
        if before.is_some_and(char::is_alphanumeric) {
            continue;
        }
        let punct_after = matches!(after, Some('.' | ')' | ':'));
        let parenthesized = before == Some('(') && after == Some(')');
        if punct_after || parenthesized {
            // "A.5" is a number, not an option.
            if after == Some('.') && chars.get(i + 2).is_some_and(char::is_ascii_digit) {
                continue;
            }
            last = Some(label);
        }
    }
    last.ok_or_else(|| ParseFailure::new("no option label found"))
}
