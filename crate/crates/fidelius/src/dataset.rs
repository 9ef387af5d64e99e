//! MCQA data model and JSONL ingestion.
//!
//! One question item carries an ordered list of labeled options and a gold
//! label. Items are immutable after construction; the option-editing
//! operations return fresh values.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Replacement text installed on an option during fidelity elicitation.
pub const SENTINEL_OPTION: &str = "All other options are wrong.";

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("failed reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: invalid JSON: {message}")]
    Malformed { line: u64, message: String },
    #[error("line {line}: item '{id}': {message}")]
    InvalidItem {
        line: u64,
        id: String,
        message: String,
    },
    #[error("line {line}: duplicate item id '{id}'")]
    DuplicateId { line: u64, id: String },
    #[error("item '{id}': unknown option label '{label}'")]
    UnknownLabel { id: String, label: String },
    #[error("item '{id}': removing '{label}' would leave no options")]
    WouldLeaveNoOptions { id: String, label: String },
}

/// One labeled answer option.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McqaOption {
    pub label: String,
    pub content: String,
}

/// One multiple-choice question with labeled options and a gold label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McqaItem {
    pub id: String,
    pub question: String,
    pub options: Vec<McqaOption>,
    #[serde(rename = "gold")]
    pub gold_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<BTreeMap<String, serde_json::Value>>,
}

impl McqaItem {
    /// Build an item, enforcing the full invariants: at least two options,
    /// unique nonempty labels, gold among the labels.
    pub fn new(
        id: impl Into<String>,
        question: impl Into<String>,
        options: Vec<McqaOption>,
        gold_label: impl Into<String>,
        meta: Option<BTreeMap<String, serde_json::Value>>,
    ) -> Result<Self, String> {
        let item = Self {
            id: id.into(),
            question: question.into(),
            options,
            gold_label: gold_label.into(),
            meta,
        };
        item.validate()?;
        Ok(item)
    }

    fn validate(&self) -> Result<(), String> {
        if self.options.len() < 2 {
            return Err(format!("needs at least 2 options, got {}", self.options.len()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for opt in &self.options {
            if opt.label.is_empty() {
                return Err("empty option label".into());
            }
            if !seen.insert(opt.label.as_str()) {
                return Err(format!("duplicate option label '{}'", opt.label));
            }
        }
        if !seen.contains(self.gold_label.as_str()) {
            return Err(format!("gold label '{}' is not among the options", self.gold_label));
        }
        Ok(())
    }

    /// Number of options currently on the item (M in the entropy normalizer).
    pub fn option_count(&self) -> usize {
        self.options.len()
    }

    pub fn labels(&self) -> Vec<String> {
        self.options.iter().map(|o| o.label.clone()).collect()
    }

    pub fn option(&self, label: &str) -> Option<&McqaOption> {
        self.options.iter().find(|o| o.label == label)
    }

    /// New item with the named option's content swapped out; everything else
    /// untouched. Working items produced here are not re-validated against
    /// the gold-membership invariant (elicitation legitimately edits gold).
    pub fn replace_option_content(
        &self,
        label: &str,
        content: impl Into<String>,
    ) -> Result<Self, DatasetError> {
        if self.option(label).is_none() {
            return Err(DatasetError::UnknownLabel {
                id: self.id.clone(),
                label: label.to_string(),
            });
        }
        let content = content.into();
        let mut item = self.clone();
        for opt in &mut item.options {
            if opt.label == label {
                opt.content = content;
                break;
            }
        }
        Ok(item)
    }

    /// New item without the named option. Remaining options keep their
    /// original label strings; nothing is re-lettered.
    pub fn remove_option(&self, label: &str) -> Result<Self, DatasetError> {
        if self.option(label).is_none() {
            return Err(DatasetError::UnknownLabel {
                id: self.id.clone(),
                label: label.to_string(),
            });
        }
        if self.options.len() < 2 {
            return Err(DatasetError::WouldLeaveNoOptions {
                id: self.id.clone(),
                label: label.to_string(),
            });
        }
        let mut item = self.clone();
        item.options.retain(|o| o.label != label);
        Ok(item)
    }
}

/// A named collection of items with unique ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionSet {
    pub name: String,
    pub items: Vec<McqaItem>,
}

impl QuestionSet {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

impl fmt::Display for QuestionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({} items)", self.name, self.items.len())
    }
}

/// Load a question set from a JSONL file, one item per line, preserving file
/// order. Blank lines are skipped. An empty file yields an empty set with a
/// warning.
pub fn load_question_set(path: &Path) -> Result<QuestionSet, DatasetError> {
    let file = fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "unnamed".to_string());
    let reader = BufReader::new(file);

    let mut items: Vec<McqaItem> = Vec::new();
    let mut seen_ids = std::collections::BTreeSet::new();
    for (index, line) in reader.lines().enumerate() {
        let line_no = index as u64 + 1;
        let line = line.map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let item: McqaItem =
            serde_json::from_str(trimmed).map_err(|e| DatasetError::Malformed {
                line: line_no,
                message: e.to_string(),
            })?;
        item.validate().map_err(|message| DatasetError::InvalidItem {
            line: line_no,
            id: item.id.clone(),
            message,
        })?;
        if !seen_ids.insert(item.id.clone()) {
            return Err(DatasetError::DuplicateId {
                line: line_no,
                id: item.id,
            });
        }
        items.push(item);
    }
    if items.is_empty() {
        log::warn!("question set {} is empty", path.display());
    }
    Ok(QuestionSet { name, items })
}

/// Write a question set as JSONL, one item per line, in order.
pub fn save_question_set(set: &QuestionSet, path: &Path) -> Result<(), DatasetError> {
    let mut out = Vec::new();
    for item in &set.items {
        // serde_json on these types cannot fail
        let line = serde_json::to_string(item).expect("serialize item");
        out.extend_from_slice(line.as_bytes());
        out.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    file.write_all(&out).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}
