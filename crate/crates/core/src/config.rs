//! Experiment configuration. Defaults follow the published six-agent setup.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signals::PriorSignalKind;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("n_agents must be at least 1")]
    NoAgents,
    #[error("comms_per_round must be in 1..={max}, got {got}")]
    CommsPerRound { got: usize, max: usize },
    #[error("acceptance_challengers must be in 1..={max}, got {got}")]
    AcceptanceChallengers { got: u32, max: usize },
    #[error("consensus_stop_count {got} exceeds n_agents {n_agents}")]
    ConsensusStop { got: usize, n_agents: usize },
    #[error("grouping must partition {n_agents} agents into non-empty groups, got {groups:?}")]
    Grouping { groups: Vec<usize>, n_agents: usize },
    #[error("simulator parameter {name} = {value} is out of range")]
    SimParam { name: &'static str, value: f64 },
    #[error("sid_skip_rate must be one of 10, 20, ..., 90, got {0}")]
    SkipRate(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetPolicy {
    /// `S * (k + m)` with `k` answer clusters and `m` the largest cluster size.
    AnswerClusters,
    FixedCap(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub top_k: u32,
    pub max_output_tokens: u32,
    pub reasoning_effort: String,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            top_p: 0.95,
            top_k: 40,
            max_output_tokens: 16_384,
            reasoning_effort: "medium".to_string(),
        }
    }
}

/// Probability that a receiver keeps its answer after one sender's
/// message, indexed by (receiver correct, sender correct).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetentionMatrix {
    pub correct_vs_correct: f64,
    pub correct_vs_wrong: f64,
    pub wrong_vs_correct: f64,
    pub wrong_vs_wrong: f64,
}

impl RetentionMatrix {
    pub fn get(&self, receiver_correct: bool, sender_correct: bool) -> f64 {
        match (receiver_correct, sender_correct) {
            (true, true) => self.correct_vs_correct,
            (true, false) => self.correct_vs_wrong,
            (false, true) => self.wrong_vs_correct,
            (false, false) => self.wrong_vs_wrong,
        }
    }

    pub fn uniform(p: f64) -> Self {
        Self {
            correct_vs_correct: p,
            correct_vs_wrong: p,
            wrong_vs_correct: p,
            wrong_vs_wrong: p,
        }
    }
}

impl Default for RetentionMatrix {
    fn default() -> Self {
        Self {
            correct_vs_correct: 0.95,
            correct_vs_wrong: 0.9,
            wrong_vs_correct: 0.35,
            wrong_vs_wrong: 0.6,
        }
    }
}

/// Parameters of the seeded agent simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimParams {
    pub p_correct: f64,
    pub answer_pool_size: usize,
    pub retention: RetentionMatrix,
    pub adopt_prob: f64,
    /// Shift applied to correct agents' signal distributions; 0 makes
    /// every prior signal uninformative.
    pub prior_separation: f64,
    pub loglik_mean: f64,
    pub loglik_sd: f64,
    pub logprob_tokens: usize,
    pub confidence_mean: f64,
    pub confidence_sd: f64,
    /// Confidence shift per unit of `prior_separation` for correct agents.
    pub confidence_gain: f64,
    pub question_tokens_mean: f64,
    pub question_tokens_sd: f64,
    pub output_tokens_mean: f64,
    pub output_tokens_sd: f64,
    pub hint_tokens: u64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            p_correct: 0.4,
            answer_pool_size: 4,
            retention: RetentionMatrix::default(),
            adopt_prob: 0.8,
            prior_separation: 1.0,
            loglik_mean: -1.5,
            loglik_sd: 0.8,
            logprob_tokens: 24,
            confidence_mean: 0.6,
            confidence_sd: 0.15,
            confidence_gain: 0.15,
            question_tokens_mean: 180.0,
            question_tokens_sd: 40.0,
            output_tokens_mean: 2_000.0,
            output_tokens_sd: 500.0,
            hint_tokens: 40,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let probs = [
            ("p_correct", self.p_correct),
            ("adopt_prob", self.adopt_prob),
            (
                "retention.correct_vs_correct",
                self.retention.correct_vs_correct,
            ),
            (
                "retention.correct_vs_wrong",
                self.retention.correct_vs_wrong,
            ),
            (
                "retention.wrong_vs_correct",
                self.retention.wrong_vs_correct,
            ),
            ("retention.wrong_vs_wrong", self.retention.wrong_vs_wrong),
        ];
        for (name, value) in probs {
            if !(0.0..=1.0).contains(&value) {
                return Err(ConfigError::SimParam { name, value });
            }
        }
        let non_negative = [
            ("prior_separation", self.prior_separation),
            ("loglik_sd", self.loglik_sd),
            ("confidence_sd", self.confidence_sd),
            ("question_tokens_mean", self.question_tokens_mean),
            ("question_tokens_sd", self.question_tokens_sd),
            ("output_tokens_mean", self.output_tokens_mean),
            ("output_tokens_sd", self.output_tokens_sd),
        ];
        for (name, value) in non_negative {
            if value < 0.0 || !value.is_finite() {
                return Err(ConfigError::SimParam { name, value });
            }
        }
        if self.answer_pool_size < 2 {
            return Err(ConfigError::SimParam {
                name: "answer_pool_size",
                value: self.answer_pool_size as f64,
            });
        }
        if self.logprob_tokens == 0 {
            return Err(ConfigError::SimParam {
                name: "logprob_tokens",
                value: 0.0,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpParams {
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub sampling: SamplingParams,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_retry_base_ms")]
    pub retry_base_ms: u64,
}

fn default_timeout_secs() -> u64 {
    600
}

fn default_retry_base_ms() -> u64 {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendDescriptor {
    Simulated {
        #[serde(default)]
        params: SimParams,
    },
    /// Directory of trace files (or a single trace file) to replay.
    Replay {
        path: PathBuf,
    },
    Http(HttpParams),
}

impl Default for BackendDescriptor {
    fn default() -> Self {
        BackendDescriptor::Simulated {
            params: SimParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub n_agents: usize,
    /// Probes per receiver iteration (`S`).
    pub comms_per_round: usize,
    /// Unanimous challengers needed for acceptance (`C`).
    pub acceptance_challengers: u32,
    pub prior_signal: PriorSignalKind,
    pub budget_policy: BudgetPolicy,
    /// Round cap for round-based baselines.
    pub max_rounds: u32,
    pub consensus_stop_count: usize,
    /// GroupDebate group sizes; must sum to `n_agents`.
    pub grouping: Vec<usize>,
    /// SID-ET skip rate in percent; ignored when `sid_threshold` is set.
    pub sid_skip_rate: u32,
    pub sid_threshold: Option<f64>,
    pub backend: BackendDescriptor,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_agents: 6,
            comms_per_round: 2,
            acceptance_challengers: 2,
            prior_signal: PriorSignalKind::MinLl,
            budget_policy: BudgetPolicy::AnswerClusters,
            max_rounds: 2,
            consensus_stop_count: 5,
            grouping: vec![3, 3],
            sid_skip_rate: 60,
            sid_threshold: None,
            backend: BackendDescriptor::default(),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = self.n_agents;
        if n == 0 {
            return Err(ConfigError::NoAgents);
        }
        let max_peers = n.saturating_sub(1).max(1);
        if self.comms_per_round == 0 || self.comms_per_round > max_peers {
            return Err(ConfigError::CommsPerRound {
                got: self.comms_per_round,
                max: max_peers,
            });
        }
        if self.acceptance_challengers == 0 || self.acceptance_challengers as usize > max_peers {
            return Err(ConfigError::AcceptanceChallengers {
                got: self.acceptance_challengers,
                max: max_peers,
            });
        }
        if self.consensus_stop_count > n {
            return Err(ConfigError::ConsensusStop {
                got: self.consensus_stop_count,
                n_agents: n,
            });
        }
        if self.grouping.iter().sum::<usize>() != n || self.grouping.contains(&0) {
            return Err(ConfigError::Grouping {
                groups: self.grouping.clone(),
                n_agents: n,
            });
        }
        if !(10..=90).contains(&self.sid_skip_rate) || !self.sid_skip_rate.is_multiple_of(10) {
            return Err(ConfigError::SkipRate(self.sid_skip_rate));
        }
        if let BackendDescriptor::Simulated { params } = &self.backend {
            params.validate()?;
        }
        Ok(())
    }
}
