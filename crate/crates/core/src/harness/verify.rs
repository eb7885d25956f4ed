//! Offline verification of persisted traces: structure, decision rules and
//! report metrics, without any backend.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use crate::answer::{answers_equal, AnswerLabel};
use crate::baselines::{majority_of_latest, max_min_log_likelihood};
use crate::orchestrator::{acceptance_check, consensus_answer, fallback_vote, replay_states};
use crate::types::{DebateTrace, Method, TerminationReason};
use crate::voting::plurality;

use super::metrics::{MethodReport, QuestionRow};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mismatch {
    pub method: String,
    pub question_id: String,
    pub detail: String,
}

impl fmt::Display for Mismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {:?}: {}", self.method, self.question_id, self.detail)
    }
}

fn mismatch(trace: &DebateTrace, detail: impl Into<String>) -> Mismatch {
    Mismatch {
        method: trace.method.name().to_string(),
        question_id: trace.question_id.clone(),
        detail: detail.into(),
    }
}

/// Recomputes the final answer a trace's method would produce from its
/// recorded events. `Err` describes a trace the rule cannot have produced.
pub fn recompute_final_answer(trace: &DebateTrace) -> Result<AnswerLabel, String> {
    let initial_answers: Vec<AnswerLabel> = trace
        .initial_responses
        .iter()
        .map(|r| r.answer.clone())
        .collect();
    match trace.method {
        Method::SelfConsistency => {
            if !trace.events.is_empty() {
                return Err("self-consistency trace has debate events".into());
            }
            Ok(plurality(&initial_answers)
                .cloned()
                .unwrap_or_else(AnswerLabel::empty))
        }
        Method::SvrMad => recompute_svr_mad(trace, &initial_answers),
        Method::SidEt if trace.termination_reason == TerminationReason::Accepted => {
            if !trace.events.is_empty() {
                return Err("skipped SID-ET trace has debate events".into());
            }
            let (best, value) =
                max_min_log_likelihood(&trace.initial_responses).map_err(|e| e.to_string())?;
            let threshold = trace
                .params
                .sid_threshold
                .ok_or("SID-ET trace has no threshold")?;
            if value < threshold {
                return Err(format!(
                    "skip recorded but best min log-likelihood {value} < threshold {threshold}"
                ));
            }
            Ok(initial_answers[best].clone())
        }
        Method::Mad | Method::GroupDebate | Method::S2Mad | Method::SidEt => {
            Ok(majority_of_latest(trace))
        }
    }
}

fn recompute_svr_mad(
    trace: &DebateTrace,
    initial_answers: &[AnswerLabel],
) -> Result<AnswerLabel, String> {
    let params = &trace.params;
    if let Some(budget) = params.budget {
        if trace.events.len() > budget {
            return Err(format!(
                "{} debates exceed the budget {budget}",
                trace.events.len()
            ));
        }
    }
    let mut pairs = HashSet::new();
    for e in &trace.events {
        let sender = e
            .sender_id()
            .ok_or_else(|| format!("event {} is not pairwise", e.sequence_index))?;
        if !pairs.insert((sender, e.receiver_id)) {
            return Err(format!("pair ({sender}, {}) debated twice", e.receiver_id));
        }
    }
    let states = replay_states(trace);
    match trace.termination_reason {
        TerminationReason::Consensus => {
            if !trace.events.is_empty() {
                return Err("consensus trace has debate events".into());
            }
            let stop = params
                .consensus_stop_count
                .ok_or("missing consensus_stop_count")?;
            consensus_answer(initial_answers, stop)
                .ok_or_else(|| "recorded consensus does not hold".to_string())
        }
        TerminationReason::Accepted => {
            let last = trace.events.last().ok_or("acceptance without debates")?;
            let challengers = params
                .acceptance_challengers
                .ok_or("missing acceptance_challengers")?;
            let state = &states[last.receiver_id];
            if !acceptance_check(state, challengers) {
                return Err(format!(
                    "accepted receiver {} has {} debates and {} changes",
                    last.receiver_id,
                    state.debates(),
                    state.changes()
                ));
            }
            Ok(state.current_answer().clone())
        }
        TerminationReason::BudgetExhausted => Ok(fallback_vote(&states, initial_answers)),
    }
}

/// Structural and decision-rule checks for each trace.
pub fn verify_traces(traces: &[DebateTrace]) -> Vec<Mismatch> {
    let mut out = Vec::new();
    for trace in traces {
        if let Err(e) = trace.validate() {
            out.push(mismatch(trace, e.to_string()));
            continue;
        }
        match recompute_final_answer(trace) {
            Ok(answer) if answers_equal(&answer, &trace.final_answer) => {}
            Ok(answer) => out.push(mismatch(
                trace,
                format!(
                    "final answer {:?} but the rule gives {:?}",
                    trace.final_answer.raw(),
                    answer.raw()
                ),
            )),
            Err(detail) => out.push(mismatch(trace, detail)),
        }
    }
    out
}

/// Compares metrics recomputed from traces with stored report rows.
pub fn verify_report(traces: &[DebateTrace], reports: &[MethodReport]) -> Vec<Mismatch> {
    let mut stored: BTreeMap<(String, String), &QuestionRow> = BTreeMap::new();
    for row in reports.iter().flat_map(|r| &r.rows) {
        stored.insert((row.method.clone(), row.question_id.clone()), row);
    }
    let mut out = Vec::new();
    for trace in traces {
        let live = QuestionRow::from_trace(trace);
        match stored.remove(&(live.method.clone(), live.question_id.clone())) {
            Some(row) if *row == live => {}
            Some(row) => out.push(mismatch(
                trace,
                format!(
                    "report has ncomm={} tokens={} correct={}, trace gives ncomm={} tokens={} correct={}",
                    row.ncomm, row.tokens, row.correct, live.ncomm, live.tokens, live.correct
                ),
            )),
            None => out.push(mismatch(trace, "no report row")),
        }
    }
    for ((method, question_id), _) in stored {
        out.push(Mismatch {
            method,
            question_id,
            detail: "report row without a trace".into(),
        });
    }
    out
}
