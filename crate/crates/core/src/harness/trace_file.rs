//! Line-delimited JSON trace files.
//!
//! A file holds one or more traces. Each trace is a `meta` record followed
//! by its `initial` and `debate_event` records:
//!
//! ```text
//! {"type":"meta","schema_version":1,"question_id":"q1","method":"svr_mad",...}
//! {"type":"initial","agent_id":0,"turn":0,...}
//! {"type":"debate_event","sequence_index":0,"sender_ids":[3],"receiver_id":1,...}
//! ```
//!
//! The meta record carries the expected record counts so a truncated file is
//! detected even when it ends on a line boundary.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answer::AnswerLabel;
use crate::types::{
    AgentResponse, DebateEvent, DebateTrace, DecisionParams, Method, TerminationReason,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl TraceError {
    fn parse(line: usize, message: impl Into<String>) -> Self {
        TraceError::Parse {
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaRecord {
    pub schema_version: u32,
    pub question_id: String,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_answer: Option<AnswerLabel>,
    #[serde(default)]
    pub params: DecisionParams,
    pub final_answer: AnswerLabel,
    pub termination_reason: TerminationReason,
    pub n_agents: usize,
    pub n_events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceRecord {
    Meta(MetaRecord),
    Initial(AgentResponse),
    DebateEvent(DebateEvent),
}

/// Records of one trace, in file order.
pub fn trace_records(trace: &DebateTrace) -> Vec<TraceRecord> {
    let mut records = Vec::with_capacity(1 + trace.initial_responses.len() + trace.events.len());
    records.push(TraceRecord::Meta(MetaRecord {
        schema_version: SCHEMA_VERSION,
        question_id: trace.question_id.clone(),
        method: trace.method,
        gold_answer: trace.gold_answer.clone(),
        params: trace.params.clone(),
        final_answer: trace.final_answer.clone(),
        termination_reason: trace.termination_reason,
        n_agents: trace.initial_responses.len(),
        n_events: trace.events.len(),
    }));
    records.extend(
        trace
            .initial_responses
            .iter()
            .cloned()
            .map(TraceRecord::Initial),
    );
    records.extend(trace.events.iter().cloned().map(TraceRecord::DebateEvent));
    records
}

pub fn write_traces<'a, W: Write>(
    mut writer: W,
    traces: impl IntoIterator<Item = &'a DebateTrace>,
) -> io::Result<()> {
    for trace in traces {
        for record in trace_records(trace) {
            serde_json::to_writer(&mut writer, &record)?;
            writer.write_all(b"\n")?;
        }
    }
    writer.flush()
}

pub fn persist_traces<'a>(
    traces: impl IntoIterator<Item = &'a DebateTrace>,
    path: &Path,
) -> Result<(), TraceError> {
    let io_err = |source| TraceError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    write_traces(BufWriter::new(file), traces).map_err(io_err)
}

pub fn persist_trace(trace: &DebateTrace, path: &Path) -> Result<(), TraceError> {
    persist_traces(std::iter::once(trace), path)
}

struct Pending {
    meta: MetaRecord,
    meta_line: usize,
    initials: Vec<AgentResponse>,
    events: Vec<DebateEvent>,
}

impl Pending {
    fn finish(self, line: usize) -> Result<DebateTrace, TraceError> {
        let m = self.meta;
        if self.initials.len() != m.n_agents || self.events.len() != m.n_events {
            return Err(TraceError::parse(
                line,
                format!(
                    "trace {:?} ({}) started at line {} is incomplete: expected {} initial and {} event records, found {} and {}",
                    m.question_id,
                    m.method,
                    self.meta_line,
                    m.n_agents,
                    m.n_events,
                    self.initials.len(),
                    self.events.len()
                ),
            ));
        }
        Ok(DebateTrace {
            question_id: m.question_id,
            method: m.method,
            gold_answer: m.gold_answer,
            params: m.params,
            initial_responses: self.initials,
            events: self.events,
            final_answer: m.final_answer,
            termination_reason: m.termination_reason,
        })
    }
}

/// Parses every trace in a reader. Structural checks only; semantic
/// invariants are left to [`DebateTrace::validate`].
pub fn read_traces<R: BufRead>(reader: R) -> Result<Vec<DebateTrace>, TraceError> {
    let mut traces = Vec::new();
    let mut pending: Option<Pending> = None;
    let mut last_line = 0;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let line = line.map_err(|e| TraceError::parse(line_no, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TraceRecord =
            serde_json::from_str(&line).map_err(|e| TraceError::parse(line_no, e.to_string()))?;
        match record {
            TraceRecord::Meta(meta) => {
                if meta.schema_version != SCHEMA_VERSION {
                    return Err(TraceError::parse(
                        line_no,
                        format!("unsupported schema version {}", meta.schema_version),
                    ));
                }
                if let Some(p) = pending.take() {
                    traces.push(p.finish(line_no)?);
                }
                pending = Some(Pending {
                    meta,
                    meta_line: line_no,
                    initials: Vec::new(),
                    events: Vec::new(),
                });
            }
            TraceRecord::Initial(r) => pending
                .as_mut()
                .ok_or_else(|| TraceError::parse(line_no, "initial record before any meta record"))?
                .initials
                .push(r),
            TraceRecord::DebateEvent(e) => pending
                .as_mut()
                .ok_or_else(|| {
                    TraceError::parse(line_no, "debate_event record before any meta record")
                })?
                .events
                .push(e),
        }
    }
    if let Some(p) = pending {
        traces.push(p.finish(last_line + 1)?);
    }
    Ok(traces)
}

pub fn load_traces(path: &Path) -> Result<Vec<DebateTrace>, TraceError> {
    let file = File::open(path).map_err(|source| TraceError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_traces(BufReader::new(file))
}

/// Loads a file that must contain exactly one trace.
pub fn load_trace(path: &Path) -> Result<DebateTrace, TraceError> {
    let mut traces = load_traces(path)?;
    match traces.len() {
        1 => Ok(traces.remove(0)),
        n => Err(TraceError::parse(
            0,
            format!("expected exactly one trace, found {n}"),
        )),
    }
}

/// `*.jsonl` files of a directory in name order.
pub fn trace_files(dir: &Path) -> Result<Vec<PathBuf>, TraceError> {
    let entries = fs::read_dir(dir).map_err(|source| TraceError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    Ok(files)
}

pub fn load_trace_dir(dir: &Path) -> Result<Vec<DebateTrace>, TraceError> {
    let mut all = Vec::new();
    for file in trace_files(dir)? {
        all.extend(load_traces(&file)?);
    }
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn response(agent_id: usize, answer: &str) -> AgentResponse {
        AgentResponse {
            agent_id,
            turn: 0,
            reasoning: format!("line one\n\"quoted\" reasoning\nAnswer: {answer}"),
            answer: answer.into(),
            token_logliks: vec![-0.123456789012345, -1e-12, 0.0],
            input_tokens: 17,
            output_tokens: 3,
            self_confidence: Some(0.3),
        }
    }

    fn trace(events: usize) -> DebateTrace {
        let initial_responses: Vec<AgentResponse> =
            (0..3).map(|i| response(i, ["A", "B", "C"][i])).collect();
        let events = (0..events)
            .map(|k| DebateEvent {
                sequence_index: k,
                round: Some(1),
                sender_ids: vec![(k + 1) % 3],
                answer_only_ids: vec![],
                receiver_id: k % 3,
                receiver_pre: initial_responses[k % 3].clone(),
                receiver_post: response(k % 3, "A"),
                retained: initial_responses[k % 3].answer.canonical() == "A",
            })
            .collect();
        DebateTrace {
            question_id: "q,1".into(),
            method: Method::SidEt,
            gold_answer: Some("A".into()),
            params: DecisionParams {
                sid_threshold: Some(f64::NEG_INFINITY),
                ..Default::default()
            },
            initial_responses,
            events,
            final_answer: "A".into(),
            termination_reason: TerminationReason::Consensus,
        }
    }

    fn round_trip(traces: &[DebateTrace]) -> Vec<DebateTrace> {
        let mut buf = Vec::new();
        write_traces(&mut buf, traces).unwrap();
        read_traces(buf.as_slice()).unwrap()
    }

    #[test]
    fn empty_trace_round_trips() {
        let t = trace(0);
        assert_eq!(round_trip(std::slice::from_ref(&t)), vec![t]);
    }

    #[test]
    fn several_traces_round_trip() {
        let ts = vec![trace(4), trace(0), trace(2)];
        assert_eq!(round_trip(&ts), ts);
    }

    #[test]
    fn truncation_is_detected() {
        let mut buf = Vec::new();
        write_traces(&mut buf, &[trace(3)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();

        // cut on a line boundary
        let cut = lines[..lines.len() - 1].join("\n");
        let err = read_traces(cut.as_bytes()).unwrap_err();
        assert!(matches!(err, TraceError::Parse { line: 7, .. }), "{err}");

        // cut mid-record
        let cut = &text[..text.len() - 20];
        assert!(matches!(
            read_traces(cut.as_bytes()),
            Err(TraceError::Parse { line: 7, .. })
        ));
    }

    #[test]
    fn rejects_orphans_and_unknown_versions() {
        let orphan = serde_json::to_string(&TraceRecord::Initial(response(0, "A"))).unwrap();
        assert!(matches!(
            read_traces(orphan.as_bytes()),
            Err(TraceError::Parse { line: 1, .. })
        ));

        let mut buf = Vec::new();
        write_traces(&mut buf, &[trace(0)]).unwrap();
        let text = String::from_utf8(buf)
            .unwrap()
            .replace("\"schema_version\":1", "\"schema_version\":9");
        assert!(read_traces(text.as_bytes()).is_err());
    }

    #[test]
    fn file_helpers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.jsonl");
        let t = trace(2);
        persist_trace(&t, &path).unwrap();
        assert_eq!(load_trace(&path).unwrap(), t);
        persist_traces([&t, &t], &dir.path().join("two.jsonl")).unwrap();
        assert!(load_trace(&dir.path().join("two.jsonl")).is_err());
        assert_eq!(load_trace_dir(dir.path()).unwrap().len(), 3);
    }
}
