//! Acceptance-threshold sweeps over posterior variants.

use rayon::prelude::*;
use rayon::ThreadPool;
use serde::Serialize;

use crate::backend::Backend;
use crate::orchestrator::{svr_mad, AcceptanceRule, PosteriorVariant, RunError, SvrMadOptions};
use crate::types::TerminationReason;

use super::runner::QuestionInput;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub variant: &'static str,
    pub threshold: f64,
    pub questions: usize,
    /// Runs that reached the debate loop (no pre-debate consensus).
    pub debated: usize,
    pub accepted: usize,
    pub total_tokens: u64,
    pub correct: usize,
}

impl SweepPoint {
    /// Share of debated runs ended by acceptance.
    pub fn acceptance_rate(&self) -> f64 {
        if self.debated == 0 {
            0.0
        } else {
            self.accepted as f64 / self.debated as f64
        }
    }

    pub fn accuracy(&self) -> f64 {
        if self.questions == 0 {
            0.0
        } else {
            self.correct as f64 / self.questions as f64
        }
    }
}

/// Default threshold grid per variant, on the oriented posterior scale.
pub fn default_thresholds(variant: PosteriorVariant) -> Vec<f64> {
    use crate::signals::PriorSignalKind::*;
    let (lo, hi, steps) = match variant {
        PosteriorVariant::Svr => (-1.0, 1.0, 8),
        PosteriorVariant::MeanSignal(MinLl) => (-6.0, 0.0, 12),
        PosteriorVariant::MeanSignal(Ppl) => (-6.0, -1.0, 10),
        PosteriorVariant::MeanSignal(Conf) => (0.0, 1.0, 10),
    };
    (0..=steps)
        .map(|i| lo + (hi - lo) * f64::from(i) / f64::from(steps))
        .collect()
}

/// Runs the survival-rate debate with the variant's acceptance rule at each
/// threshold and aggregates acceptance, tokens and accuracy.
pub fn ablation_sweep(
    inputs: &[QuestionInput],
    base: &SvrMadOptions,
    variant: PosteriorVariant,
    thresholds: &[f64],
    backend: &dyn Backend,
    pool: &ThreadPool,
) -> Result<Vec<SweepPoint>, RunError> {
    thresholds
        .iter()
        .map(|&threshold| {
            let options = SvrMadOptions {
                acceptance: AcceptanceRule {
                    variant,
                    threshold,
                    min_debates: base.acceptance.min_debates,
                },
                ..base.clone()
            };
            let runs: Vec<Result<_, RunError>> = pool.install(|| {
                inputs
                    .par_iter()
                    .map(|i| svr_mad(&i.question, &i.initials, &options, backend))
                    .collect()
            });
            let mut point = SweepPoint {
                variant: variant.name(),
                threshold,
                questions: inputs.len(),
                debated: 0,
                accepted: 0,
                total_tokens: 0,
                correct: 0,
            };
            for run in runs {
                let run = run?;
                if run.termination_reason != TerminationReason::Consensus {
                    point.debated += 1;
                }
                if run.termination_reason == TerminationReason::Accepted {
                    point.accepted += 1;
                }
                point.total_tokens += run.trace.total_tokens();
                if run.trace.is_correct().unwrap_or(false) {
                    point.correct += 1;
                }
            }
            Ok(point)
        })
        .collect()
}

/// Accuracy of a token/accuracy curve at a token budget, by linear
/// interpolation between neighbouring points; outside the curve's range
/// the nearest endpoint is used. Points at equal token cost are averaged.
pub fn accuracy_at_tokens(points: &[SweepPoint], tokens: f64) -> Option<f64> {
    let mut curve: Vec<(f64, f64)> = Vec::new();
    let mut sorted: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (p.total_tokens as f64, p.accuracy()))
        .collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut i = 0;
    while i < sorted.len() {
        let x = sorted[i].0;
        let same: Vec<f64> = sorted[i..]
            .iter()
            .take_while(|p| p.0 == x)
            .map(|p| p.1)
            .collect();
        i += same.len();
        curve.push((x, same.iter().sum::<f64>() / same.len() as f64));
    }
    let (first, last) = (curve.first()?, curve.last()?);
    if tokens <= first.0 {
        return Some(first.1);
    }
    if tokens >= last.0 {
        return Some(last.1);
    }
    curve.windows(2).find(|w| tokens <= w[1].0).map(|w| {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        y0 + (y1 - y0) * (tokens - x0) / (x1 - x0)
    })
}

/// Plot-ready tab-separated curves.
pub fn format_sweep_tsv(points: &[SweepPoint]) -> String {
    let mut out =
        String::from("variant\tthreshold\tquestions\tacceptance_rate\ttotal_tokens\taccuracy\n");
    for p in points {
        out.push_str(&format!(
            "{}\t{}\t{}\t{:.4}\t{}\t{:.4}\n",
            p.variant,
            p.threshold,
            p.questions,
            p.acceptance_rate(),
            p.total_tokens,
            p.accuracy()
        ));
    }
    out
}
