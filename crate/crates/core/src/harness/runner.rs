//! Executes methods over a question set from shared initial responses.

use std::collections::BTreeMap;

use rayon::prelude::*;
use rayon::ThreadPool;
use tracing::info;

use crate::backend::{Backend, BackendError};
use crate::baselines::{
    all_to_all, group_debate, max_min_log_likelihood, s2_mad, self_consistency, sid_et,
    sid_threshold_for_skip_rate, tune_sid_skip_rate, GroupingPlan, RoundOptions, SKIP_RATES,
};
use crate::config::ExperimentConfig;
use crate::orchestrator::{generate_initials, svr_mad, RunError, SvrMadOptions};
use crate::signals::SignalError;
use crate::types::{AgentResponse, DebateTrace, Method, Question, RunResult};

use super::dataset::is_unanimous;
use super::metrics::MethodReport;
use super::HarnessError;

/// One question with the initial responses every method starts from.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionInput {
    pub question: Question,
    pub initials: Vec<AgentResponse>,
}

pub fn thread_pool(parallelism: usize) -> Result<ThreadPool, HarnessError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))
}

/// Generates initial responses for every question, ordered by question id.
pub fn generate_inputs(
    questions: &[Question],
    n_agents: usize,
    backend: &dyn Backend,
    pool: &ThreadPool,
) -> Result<Vec<QuestionInput>, BackendError> {
    let mut sorted: Vec<&Question> = questions.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    pool.install(|| {
        sorted
            .par_iter()
            .map(|q| {
                generate_initials(q, n_agents, backend).map(|initials| QuestionInput {
                    question: (*q).clone(),
                    initials,
                })
            })
            .collect()
    })
}

/// Drops questions whose agents all give the same initial answer.
pub fn filter_inputs(inputs: Vec<QuestionInput>) -> Vec<QuestionInput> {
    inputs
        .into_iter()
        .filter(|i| !is_unanimous(&i.initials))
        .collect()
}

/// Per-method settings resolved from a configuration and the question set.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSettings {
    pub svr: SvrMadOptions,
    pub rounds: RoundOptions,
    pub grouping: Vec<usize>,
    pub seed: u64,
    pub sid_threshold: f64,
}

impl MethodSettings {
    /// The SID-ET threshold is the configured one, or else the quantile of
    /// the inputs' best min log-likelihoods at the configured skip rate.
    pub fn from_config(
        config: &ExperimentConfig,
        inputs: &[QuestionInput],
    ) -> Result<Self, SignalError> {
        let sid_threshold = match config.sid_threshold {
            Some(t) => t,
            None => sid_threshold_for_skip_rate(&best_min_lls(inputs)?, config.sid_skip_rate),
        };
        Ok(Self {
            svr: SvrMadOptions::from_config(config),
            rounds: RoundOptions::from_config(config),
            grouping: config.grouping.clone(),
            seed: config.seed,
            sid_threshold,
        })
    }
}

pub fn best_min_lls(inputs: &[QuestionInput]) -> Result<Vec<f64>, SignalError> {
    inputs
        .iter()
        .map(|i| max_min_log_likelihood(&i.initials).map(|(_, v)| v))
        .collect()
}

pub fn run_method(
    method: Method,
    input: &QuestionInput,
    settings: &MethodSettings,
    backend: &dyn Backend,
) -> Result<RunResult, RunError> {
    let (q, initials) = (&input.question, input.initials.as_slice());
    match method {
        Method::SvrMad => svr_mad(q, initials, &settings.svr, backend),
        Method::SelfConsistency => Ok(self_consistency(q, initials)),
        Method::Mad => all_to_all(q, initials, settings.rounds, backend),
        Method::GroupDebate => {
            let plan =
                GroupingPlan::random(&settings.grouping, initials.len(), settings.seed, &q.id)
                    .map_err(|e| RunError::new(method, q, BackendError::Config(e.to_string())))?;
            group_debate(q, initials, settings.rounds, &plan, backend)
        }
        Method::SidEt => sid_et(
            q,
            initials,
            settings.rounds,
            settings.sid_threshold,
            backend,
        ),
        Method::S2Mad => s2_mad(q, initials, settings.rounds, backend),
    }
}

/// Runs one method over every input; traces come back in input order. The
/// first failure in input order is reported.
pub fn run_method_all(
    method: Method,
    inputs: &[QuestionInput],
    settings: &MethodSettings,
    backend: &dyn Backend,
    pool: &ThreadPool,
) -> Result<Vec<DebateTrace>, RunError> {
    let results: Vec<Result<RunResult, RunError>> = pool.install(|| {
        inputs
            .par_iter()
            .map(|i| run_method(method, i, settings, backend))
            .collect()
    });
    results.into_iter().map(|r| r.map(|r| r.trace)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodRun {
    pub method: Method,
    pub traces: Vec<DebateTrace>,
}

impl MethodRun {
    pub fn report(&self) -> MethodReport {
        MethodReport::from_traces(self.method, &self.traces)
    }
}

pub fn run_methods(
    methods: &[Method],
    inputs: &[QuestionInput],
    settings: &MethodSettings,
    backend: &dyn Backend,
    pool: &ThreadPool,
) -> Result<Vec<MethodRun>, RunError> {
    methods
        .iter()
        .map(|&method| {
            info!(%method, questions = inputs.len(), "running method");
            run_method_all(method, inputs, settings, backend, pool)
                .map(|traces| MethodRun { method, traces })
        })
        .collect()
}

/// Outcome of the skip-rate scan for SID-ET.
#[derive(Debug, Clone, PartialEq)]
pub struct SidTuning {
    pub rate: u32,
    pub threshold: f64,
    /// Rate -> (total tokens, accuracy fraction).
    pub table: BTreeMap<u32, (f64, f64)>,
    pub thresholds: BTreeMap<u32, f64>,
}

/// Evaluates SID-ET at every skip rate and picks one against the reference
/// token cost and accuracy.
pub fn tune_sid(
    inputs: &[QuestionInput],
    settings: &MethodSettings,
    backend: &dyn Backend,
    pool: &ThreadPool,
    tok_ref: f64,
    acc_ref: f64,
) -> Result<SidTuning, HarnessError> {
    let values = best_min_lls(inputs).map_err(|e| HarnessError::Config(e.to_string()))?;
    let mut table = BTreeMap::new();
    let mut thresholds = BTreeMap::new();
    for rate in SKIP_RATES {
        let threshold = sid_threshold_for_skip_rate(&values, rate);
        let mut at_rate = settings.clone();
        at_rate.sid_threshold = threshold;
        let report = MethodReport::from_traces(
            Method::SidEt,
            &run_method_all(Method::SidEt, inputs, &at_rate, backend, pool)?,
        );
        table.insert(rate, (report.total_tokens() as f64, report.accuracy()));
        thresholds.insert(rate, threshold);
    }
    let rate = tune_sid_skip_rate(&table, tok_ref, acc_ref);
    Ok(SidTuning {
        rate,
        threshold: thresholds[&rate],
        table,
        thresholds,
    })
}
