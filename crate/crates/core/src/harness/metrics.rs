//! Per-question metrics and method reports.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{DebateTrace, Method};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("report csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("report io: {0}")]
    Io(#[from] io::Error),
    #[error("unknown method {0:?} in report")]
    UnknownMethod(String),
}

/// Counted directed context transfers of a trace.
pub fn count_ncomm(trace: &DebateTrace) -> usize {
    trace.ncomm()
}

/// Input plus output tokens over every generation, initial ones included.
pub fn count_tokens(trace: &DebateTrace) -> u64 {
    trace.total_tokens()
}

/// Fraction of correct rows; 0 for an empty report.
pub fn score_accuracy(rows: &[QuestionRow]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    rows.iter().filter(|r| r.correct).count() as f64 / rows.len() as f64
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRow {
    pub method: String,
    pub question_id: String,
    pub ncomm: usize,
    pub tokens: u64,
    pub correct: bool,
}

impl QuestionRow {
    pub fn from_trace(trace: &DebateTrace) -> Self {
        Self {
            method: trace.method.name().to_string(),
            question_id: trace.question_id.clone(),
            ncomm: count_ncomm(trace),
            tokens: count_tokens(trace),
            correct: trace.is_correct().unwrap_or(false),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodReport {
    pub method: Method,
    pub rows: Vec<QuestionRow>,
}

impl MethodReport {
    pub fn from_traces<'a>(
        method: Method,
        traces: impl IntoIterator<Item = &'a DebateTrace>,
    ) -> Self {
        Self {
            method,
            rows: traces.into_iter().map(QuestionRow::from_trace).collect(),
        }
    }

    pub fn mean_ncomm(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().map(|r| r.ncomm as f64).sum::<f64>() / self.rows.len() as f64
    }

    pub fn total_tokens(&self) -> u64 {
        self.rows.iter().map(|r| r.tokens).sum()
    }

    pub fn accuracy(&self) -> f64 {
        score_accuracy(&self.rows)
    }

    pub fn footer(&self) -> String {
        format!(
            "# aggregate,method={},questions={},mean_ncomm={:.4},total_tokens_k={:.3},accuracy_pct={:.4}",
            self.method,
            self.rows.len(),
            self.mean_ncomm(),
            self.total_tokens() as f64 / 1_000.0,
            self.accuracy() * 100.0
        )
    }
}

/// Writes the per-question rows of every report, then one aggregate
/// footer line per report.
pub fn write_report_csv<W: Write>(
    mut writer: W,
    reports: &[MethodReport],
) -> Result<(), ReportError> {
    {
        let mut csv = csv::Writer::from_writer(&mut writer);
        for report in reports {
            for row in &report.rows {
                csv.serialize(row)?;
            }
        }
        if reports.iter().all(|r| r.rows.is_empty()) {
            csv.write_record(["method", "question_id", "ncomm", "tokens", "correct"])?;
        }
        csv.flush()?;
    }
    for report in reports {
        writeln!(writer, "{}", report.footer())?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads report rows back, grouped by method in order of first appearance.
/// Footer lines are ignored; aggregates are recomputed from the rows.
pub fn read_report_csv<R: Read>(reader: R) -> Result<Vec<MethodReport>, ReportError> {
    let mut csv = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut reports: Vec<MethodReport> = Vec::new();
    for row in csv.deserialize() {
        let row: QuestionRow = row?;
        let method = Method::parse(&row.method)
            .ok_or_else(|| ReportError::UnknownMethod(row.method.clone()))?;
        match reports.iter_mut().find(|r| r.method == method) {
            Some(report) => report.rows.push(row),
            None => reports.push(MethodReport {
                method,
                rows: vec![row],
            }),
        }
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: &str, q: &str, ncomm: usize, tokens: u64, correct: bool) -> QuestionRow {
        QuestionRow {
            method: method.into(),
            question_id: q.into(),
            ncomm,
            tokens,
            correct,
        }
    }

    #[test]
    fn accuracy_of_three_in_four() {
        let rows = vec![
            row("svr_mad", "a", 1, 10, true),
            row("svr_mad", "b", 1, 10, true),
            row("svr_mad", "c", 1, 10, false),
            row("svr_mad", "d", 1, 10, true),
        ];
        assert_eq!(score_accuracy(&rows), 0.75);
        assert_eq!(score_accuracy(&[]), 0.0);
    }

    #[test]
    fn csv_round_trip_with_footer() {
        let reports = vec![
            MethodReport {
                method: Method::SvrMad,
                rows: vec![
                    row("svr_mad", "q,1", 5, 1234, true),
                    row("svr_mad", "q2", 3, 99, false),
                ],
            },
            MethodReport {
                method: Method::SelfConsistency,
                rows: vec![
                    row("self_consistency", "q,1", 0, 600, true),
                    row("self_consistency", "q2", 0, 50, true),
                ],
            },
        ];
        let mut buf = Vec::new();
        write_report_csv(&mut buf, &reports).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("method,question_id,ncomm,tokens,correct\n"));
        assert!(text.contains("# aggregate,method=svr_mad,questions=2,mean_ncomm=4.0000,total_tokens_k=1.333,accuracy_pct=50.0000"));
        assert_eq!(read_report_csv(buf.as_slice()).unwrap(), reports);
    }
}
