//! Prior signals, the survival-rate posterior and the scores derived from them.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{AgentResponse, CorrectnessState, DebateEvent};

/// Neutral confidence used when a response states none.
pub const CONFIDENCE_FALLBACK: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SignalError {
    #[error("signal unavailable: {0}")]
    SignalUnavailable(&'static str),
    #[error("survival rate undefined without debates")]
    Undefined,
    #[error("invalid counters: retentions {retentions} + changes {changes} != debates {debates}")]
    InvalidCounters {
        debates: u32,
        retentions: u32,
        changes: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorSignalKind {
    MinLl,
    Ppl,
    Conf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    HigherIsBetter,
    LowerIsBetter,
}

impl PriorSignalKind {
    pub const ALL: [PriorSignalKind; 3] = [Self::MinLl, Self::Ppl, Self::Conf];

    pub fn orientation(self) -> Orientation {
        match self {
            Self::MinLl | Self::Conf => Orientation::HigherIsBetter,
            Self::Ppl => Orientation::LowerIsBetter,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::MinLl => "min_ll",
            Self::Ppl => "ppl",
            Self::Conf => "conf",
        }
    }

    /// Raw signal of one response.
    pub fn measure(self, response: &AgentResponse) -> Result<SignalValue, SignalError> {
        let value = match self {
            Self::MinLl => min_log_likelihood(&response.token_logliks)?,
            Self::Ppl => perplexity(&response.token_logliks)?,
            Self::Conf => response_confidence(response),
        };
        Ok(SignalValue { kind: self, value })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalValue {
    pub kind: PriorSignalKind,
    pub value: f64,
}

impl SignalValue {
    pub fn orientation(&self) -> Orientation {
        self.kind.orientation()
    }

    /// Value flipped so that larger always means "more likely correct".
    pub fn oriented(&self) -> f64 {
        match self.orientation() {
            Orientation::HigherIsBetter => self.value,
            Orientation::LowerIsBetter => -self.value,
        }
    }
}

pub fn min_log_likelihood(token_logliks: &[f64]) -> Result<f64, SignalError> {
    token_logliks
        .iter()
        .copied()
        .reduce(f64::min)
        .ok_or(SignalError::SignalUnavailable("no token log-likelihoods"))
}

/// `exp(-mean(logliks))`, natural base.
pub fn perplexity(token_logliks: &[f64]) -> Result<f64, SignalError> {
    if token_logliks.is_empty() {
        return Err(SignalError::SignalUnavailable("no token log-likelihoods"));
    }
    let mean = token_logliks.iter().sum::<f64>() / token_logliks.len() as f64;
    Ok((-mean).exp())
}

fn confidence_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)confidence\s*:\s*([+-]?(?:\d+(?:\.\d*)?|\.\d+))\s*(%)?")
            .expect("valid regex")
    })
}

/// Last `Confidence: <number>[%]` statement in the text, scaled to [0, 1].
pub fn extract_self_confidence(reasoning: &str) -> Option<f64> {
    let caps = confidence_regex().captures_iter(reasoning).last()?;
    let mut value: f64 = caps[1].parse().ok()?;
    if caps.get(2).is_some() {
        value /= 100.0;
    }
    Some(value.clamp(0.0, 1.0))
}

/// Stated confidence of a response, falling back to the neutral value.
pub fn response_confidence(response: &AgentResponse) -> f64 {
    response
        .self_confidence
        .or_else(|| extract_self_confidence(&response.reasoning))
        .unwrap_or(CONFIDENCE_FALLBACK)
}

/// Min-max normalization across one question's agents after orientation
/// correction. All-equal inputs map to 0.5.
pub fn normalize_priors(raw: &[SignalValue]) -> Vec<f64> {
    let oriented: Vec<f64> = raw.iter().map(SignalValue::oriented).collect();
    let lo = oriented.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = oriented.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if span <= 0.0 || !span.is_finite() {
        return vec![0.5; raw.len()];
    }
    oriented.iter().map(|v| (v - lo) / span).collect()
}

/// Survival rate `(r - c) / D`.
pub fn svr(debates: u32, retentions: u32, changes: u32) -> Result<f64, SignalError> {
    if retentions + changes != debates {
        return Err(SignalError::InvalidCounters {
            debates,
            retentions,
            changes,
        });
    }
    if debates == 0 {
        return Err(SignalError::Undefined);
    }
    Ok((f64::from(retentions) - f64::from(changes)) / f64::from(debates))
}

/// Posterior-dominant score in [0, 1]: the prior until the agent has been
/// debated, afterwards the survival rate mapped affinely from [-1, 1].
pub fn correctness_score(state: &CorrectnessState) -> f64 {
    match svr(state.debates(), state.retentions(), state.changes()) {
        Ok(rate) => (rate + 1.0) / 2.0,
        Err(_) => state.prior(),
    }
}

/// Mean of the receiver's post-debate signal over its debates (raw values,
/// orientation preserved).
pub fn mean_posterior_signal<'a, I>(events: I, kind: PriorSignalKind) -> Result<f64, SignalError>
where
    I: IntoIterator<Item = &'a DebateEvent>,
{
    let mut total = 0.0;
    let mut count = 0usize;
    for event in events {
        let value = match kind {
            PriorSignalKind::Conf => event
                .receiver_post
                .self_confidence
                .or_else(|| extract_self_confidence(&event.receiver_post.reasoning))
                .ok_or(SignalError::SignalUnavailable(
                    "post-debate confidence missing",
                ))?,
            _ => kind.measure(&event.receiver_post)?.value,
        };
        total += value;
        count += 1;
    }
    if count == 0 {
        return Err(SignalError::SignalUnavailable("no debates observed"));
    }
    Ok(total / count as f64)
}

/// Maps a raw signal onto [0, 1] on a fixed probability-like scale:
/// `exp(min_ll)`, `1 / ppl`, and the confidence itself.
pub fn unit_scale(kind: PriorSignalKind, value: f64) -> f64 {
    let scaled = match kind {
        PriorSignalKind::MinLl => value.min(0.0).exp(),
        PriorSignalKind::Ppl => {
            if value > 0.0 {
                1.0 / value.max(1.0)
            } else {
                0.0
            }
        }
        PriorSignalKind::Conf => value,
    };
    if scaled.is_nan() {
        0.0
    } else {
        scaled.clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::answer::AnswerLabel;
    use proptest::prelude::*;
    use std::f64::consts::E;

    fn sv(kind: PriorSignalKind, values: &[f64]) -> Vec<SignalValue> {
        values
            .iter()
            .map(|&value| SignalValue { kind, value })
            .collect()
    }

    #[test]
    fn min_ll_examples() {
        assert_eq!(min_log_likelihood(&[-0.2, -3.1, -0.7]), Ok(-3.1));
        assert_eq!(min_log_likelihood(&[-0.5]), Ok(-0.5));
        assert_eq!(min_log_likelihood(&[0.0, 0.0]), Ok(0.0));
        assert!(matches!(
            min_log_likelihood(&[]),
            Err(SignalError::SignalUnavailable(_))
        ));
    }

    #[test]
    fn perplexity_examples() {
        assert_eq!(perplexity(&[0.0, 0.0, 0.0]), Ok(1.0));
        assert!((perplexity(&[-1.0]).unwrap() - E).abs() < 1e-9);
        assert!((perplexity(&[-0.5, -1.5]).unwrap() - E).abs() < 1e-9);
        assert!(perplexity(&[]).is_err());
    }

    #[test]
    fn confidence_examples() {
        assert_eq!(
            extract_self_confidence("so the answer is 3. Confidence: 0.8"),
            Some(0.8)
        );
        assert_eq!(extract_self_confidence("...confidence: 85%"), Some(0.85));
        assert_eq!(extract_self_confidence("no statement"), None);
        assert_eq!(
            extract_self_confidence("Confidence: 0.2\nlater CONFIDENCE : 0.9"),
            Some(0.9)
        );
        assert_eq!(extract_self_confidence("Confidence: 7"), Some(1.0));
        assert_eq!(extract_self_confidence("Confidence: -3"), Some(0.0));
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(
            normalize_priors(&sv(PriorSignalKind::MinLl, &[-3.0, -1.0, -2.0])),
            vec![0.0, 1.0, 0.5]
        );
        assert_eq!(
            normalize_priors(&sv(PriorSignalKind::Ppl, &[2.0, 2.0])),
            vec![0.5, 0.5]
        );
        assert_eq!(
            normalize_priors(&sv(PriorSignalKind::Conf, &[0.1, 0.9])),
            vec![0.0, 1.0]
        );
        // lower perplexity ranks higher
        assert_eq!(
            normalize_priors(&sv(PriorSignalKind::Ppl, &[1.0, 3.0])),
            vec![1.0, 0.0]
        );
    }

    #[test]
    fn svr_examples() {
        assert_eq!(svr(4, 3, 1), Ok(0.5));
        assert_eq!(svr(3, 3, 0), Ok(1.0));
        assert_eq!(svr(2, 0, 2), Ok(-1.0));
        assert_eq!(svr(0, 0, 0), Err(SignalError::Undefined));
        assert!(matches!(
            svr(3, 1, 1),
            Err(SignalError::InvalidCounters { .. })
        ));
    }

    #[test]
    fn correctness_score_examples() {
        let fresh = CorrectnessState::new(0, 0.7, AnswerLabel::new("A"));
        assert_eq!(correctness_score(&fresh), 0.7);

        let mut s = CorrectnessState::new(0, 0.1, AnswerLabel::new("A"));
        s.record(true, "A".into());
        s.record(true, "A".into());
        assert_eq!(correctness_score(&s), 1.0);

        let mut s = CorrectnessState::new(0, 0.1, AnswerLabel::new("A"));
        for retained in [true, true, true, false] {
            s.record(retained, "A".into());
        }
        assert_eq!(correctness_score(&s), 0.75);
    }

    proptest! {
        #[test]
        fn svr_extremes(d in 1u32..200) {
            prop_assert_eq!(svr(d, d, 0), Ok(1.0));
            prop_assert_eq!(svr(d, 0, d), Ok(-1.0));
        }

        #[test]
        fn score_monotone_in_retentions(d in 1u32..40, r in 0u32..40) {
            let r = r % d;
            let make = |r: u32| {
                let mut s = CorrectnessState::new(0, 0.5, AnswerLabel::new("A"));
                for i in 0..d {
                    s.record(i < r, "A".into());
                }
                correctness_score(&s)
            };
            prop_assert!(make(r) <= make(r + 1));
        }

        #[test]
        fn normalization_preserves_argmax(values in proptest::collection::vec(-20.0f64..0.0, 1..10), ppl in any::<bool>()) {
            let kind = if ppl { PriorSignalKind::Ppl } else { PriorSignalKind::MinLl };
            let raw = sv(kind, &values);
            let norm = normalize_priors(&raw);
            let argmax = |xs: &[f64]| xs.iter().enumerate().fold(0, |best, (i, &v)| if v > xs[best] { i } else { best });
            let oriented: Vec<f64> = raw.iter().map(SignalValue::oriented).collect();
            prop_assert!(norm.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert_eq!(argmax(&oriented), argmax(&norm));
        }

        #[test]
        fn perplexity_permutation_invariant(mut values in proptest::collection::vec(-10.0f64..0.0, 1..16), seed in any::<u64>()) {
            let before = perplexity(&values).unwrap();
            let n = values.len();
            values.rotate_left((seed as usize) % n);
            values.reverse();
            let after = perplexity(&values).unwrap();
            prop_assert!((before - after).abs() <= 1e-9 * before.max(1.0));
            prop_assert!(before >= 1.0);
        }
    }
}
