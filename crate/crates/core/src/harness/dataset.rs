//! Question datasets: one JSON object per line with `id`, `question`,
//! `answer` and optional `tags`.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answer::AnswerLabel;
use crate::types::{AgentResponse, Question};
use crate::voting::clusters;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub id: String,
    pub question: String,
    pub answer: AnswerLabel,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<String>,
}

impl DatasetRecord {
    pub fn to_question(&self) -> Question {
        Question {
            id: self.id.clone(),
            text: self.question.clone(),
            gold_answer: Some(self.answer.clone()),
        }
    }
}

pub fn read_dataset<R: BufRead>(reader: R) -> Result<Vec<DatasetRecord>, DatasetError> {
    let mut records = Vec::new();
    let mut ids = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let parse_err = |message: String| DatasetError::Parse {
            line: line_no,
            message,
        };
        let line = line.map_err(|e| parse_err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DatasetRecord =
            serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        record
            .to_question()
            .validate()
            .map_err(|e| parse_err(e.to_string()))?;
        if record.answer.is_empty() {
            return Err(parse_err(format!(
                "question {:?} has an empty gold answer",
                record.id
            )));
        }
        if !ids.insert(record.id.clone()) {
            return Err(parse_err(format!("duplicate question id {:?}", record.id)));
        }
        records.push(record);
    }
    Ok(records)
}

pub fn load_dataset(path: &Path) -> Result<Vec<DatasetRecord>, DatasetError> {
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_dataset(BufReader::new(file))
}

/// True when every initial answer falls in one cluster.
pub fn is_unanimous(initials: &[AgentResponse]) -> bool {
    clusters(initials.iter().map(|r| &r.answer)).len() <= 1
}

/// Keeps the questions whose agents do not all share one initial answer.
/// Questions where every agent is wrong but they disagree are kept.
pub fn filter_dataset<T: Clone>(
    records: &[T],
    initial_answer_sets: &[Vec<AgentResponse>],
) -> Vec<T> {
    records
        .iter()
        .zip(initial_answer_sets)
        .filter(|(_, initials)| !is_unanimous(initials))
        .map(|(r, _)| r.clone())
        .collect()
}
