//! SID-ET: skip debate when one agent's pre-debate min log-likelihood clears
//! a threshold, otherwise run all-to-all debate.

use std::collections::BTreeMap;

use super::{all_to_all_as, base_trace, finish, RoundOptions};
use crate::backend::Backend;
use crate::orchestrator::RunError;
use crate::signals::{min_log_likelihood, SignalError};
use crate::types::{AgentResponse, DecisionParams, Method, Question, RunResult, TerminationReason};

/// Skip rates considered by the tuning scan, in percent.
pub const SKIP_RATES: [u32; 9] = [10, 20, 30, 40, 50, 60, 70, 80, 90];

/// The agent with the highest min log-likelihood (ties to the lowest id)
/// and that value.
pub fn max_min_log_likelihood(initials: &[AgentResponse]) -> Result<(usize, f64), SignalError> {
    let mut best: Option<(usize, f64)> = None;
    for r in initials {
        let v = min_log_likelihood(&r.token_logliks)?;
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((r.agent_id, v));
        }
    }
    best.ok_or(SignalError::SignalUnavailable("no agents"))
}

pub fn sid_et(
    question: &Question,
    initials: &[AgentResponse],
    options: RoundOptions,
    threshold: f64,
    backend: &dyn Backend,
) -> Result<RunResult, RunError> {
    let params = DecisionParams {
        consensus_stop_count: Some(options.consensus_stop_count),
        sid_threshold: Some(threshold),
        ..DecisionParams::default()
    };
    let (best, value) =
        max_min_log_likelihood(initials).map_err(|e| RunError::new(Method::SidEt, question, e))?;
    if value >= threshold {
        let trace = base_trace(Method::SidEt, question, initials, params);
        let answer = initials[best].answer.clone();
        return Ok(finish(trace, answer, TerminationReason::Accepted));
    }
    all_to_all_as(Method::SidEt, params, question, initials, options, backend)
}

/// Threshold under which `rate_percent` of the questions are skipped, from
/// each question's best pre-debate min log-likelihood. Ties at the cut can
/// raise the realized skip fraction.
pub fn sid_threshold_for_skip_rate(max_min_lls: &[f64], rate_percent: u32) -> f64 {
    let mut sorted: Vec<f64> = max_min_lls.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let k = ((sorted.len() as f64) * f64::from(rate_percent) / 100.0).round() as usize;
    match k {
        0 => f64::INFINITY,
        k => sorted[k.min(sorted.len()) - 1],
    }
}

/// Scans skip rates from 90% down to 10%: the first rate whose accuracy
/// reaches the reference wins, else the first whose token cost exceeds the
/// reference, else 10%.
///
/// Rates missing from `evaluations` are skipped.
pub fn tune_sid_skip_rate(
    evaluations: &BTreeMap<u32, (f64, f64)>,
    tok_ref: f64,
    acc_ref: f64,
) -> u32 {
    for rate in SKIP_RATES.iter().rev() {
        let Some(&(tok, acc)) = evaluations.get(rate) else {
            continue;
        };
        if acc >= acc_ref || tok > tok_ref {
            return *rate;
        }
    }
    10
}
