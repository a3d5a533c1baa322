use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::error::DatasetError;
use crate::types::{OptionLabel, Question};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetLine {
    id: String,
    question: String,
    options: BTreeMap<OptionLabel, String>,
    #[serde(default)]
    answer: Option<OptionLabel>,
}

/// Reads a JSONL file of `{id, question, options, answer?}` objects.
pub fn load_dataset(path: &Path) -> Result<Vec<Question>, DatasetError> {
    let raw = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_dataset(&raw)
}

/// Parses dataset text. Blank lines are skipped but still counted, so error
/// line numbers match what an editor shows.
pub fn parse_dataset(raw: &str) -> Result<Vec<Question>, DatasetError> {
    let mut seen = HashSet::new();
    let mut questions = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let format = |message: String| DatasetError::Format {
            line: line_no,
            message,
        };
        let rec: DatasetLine = serde_json::from_str(line).map_err(|e| format(e.to_string()))?;
        let q = Question::new(rec.id, rec.question, rec.options, rec.answer)
            .map_err(|e| format(e.to_string()))?;
        if !seen.insert(q.id().to_string()) {
            return Err(format(format!("duplicate question id {:?}", q.id())));
        }
        questions.push(q);
    }
    if questions.is_empty() {
        return Err(DatasetError::Empty);
    }
    Ok(questions)
}
