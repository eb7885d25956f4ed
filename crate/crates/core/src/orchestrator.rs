//! Survival-rate guided debate.
//!
//! Scores start from normalized prior signals. Each iteration probes the
//! highest-scoring agent that still has unprobed disagreeing peers: up to
//! `S` of the strongest disagreeing peers each send it their solution in a
//! pairwise debate. After debate evidence exists an agent's score is its
//! survival rate `(r - c) / D`. A receiver that survives at least `C`
//! challengers without changing its answer ends the run; when the budget
//! runs out every agent casts a fallback vote.

use std::collections::HashSet;

use thiserror::Error;
use tracing::debug;

use crate::answer::{answers_equal, AnswerLabel};
use crate::backend::{Backend, BackendError, DebateRequest};
use crate::config::{BudgetPolicy, ExperimentConfig};
use crate::signals::{
    correctness_score, mean_posterior_signal, normalize_priors, svr, unit_scale, PriorSignalKind,
    SignalError, SignalValue,
};
use crate::types::{
    AgentResponse, CorrectnessState, DebateEvent, DebateTrace, DecisionParams, Method, Question,
    RunResult, TerminationReason,
};
use crate::voting::{agent_vote, clusters, largest_cluster, majority_with_pre_debate_tiebreak};

/// Ordered (sender, receiver) pairs that have already debated.
pub type DebatedPairs = HashSet<(usize, usize)>;

#[derive(Debug, Error)]
pub enum RunErrorKind {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

/// A failed run with whatever trace was recorded before the failure.
#[derive(Debug, Error)]
#[error("{method} run on question {question_id:?} failed: {kind}")]
pub struct RunError {
    pub method: Method,
    pub question_id: String,
    #[source]
    pub kind: RunErrorKind,
    pub partial: Option<Box<DebateTrace>>,
}

impl RunError {
    pub(crate) fn new(method: Method, question: &Question, kind: impl Into<RunErrorKind>) -> Self {
        Self {
            method,
            question_id: question.id.clone(),
            kind: kind.into(),
            partial: None,
        }
    }

    pub(crate) fn with_partial(mut self, trace: DebateTrace) -> Self {
        self.partial = Some(Box::new(trace));
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoReceiver;

impl std::fmt::Display for NoReceiver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("no agent has an unprobed disagreeing peer")
    }
}

impl std::error::Error for NoReceiver {}

/// Which posterior replaces the prior once an agent has been debated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PosteriorVariant {
    /// Survival rate.
    Svr,
    /// Mean of a post-debate signal over the receiver's debates.
    MeanSignal(PriorSignalKind),
}

impl PosteriorVariant {
    pub fn name(self) -> &'static str {
        match self {
            Self::Svr => "svr",
            Self::MeanSignal(kind) => kind.name(),
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name.trim() {
            "svr" => Some(Self::Svr),
            "min_ll" => Some(Self::MeanSignal(PriorSignalKind::MinLl)),
            "ppl" => Some(Self::MeanSignal(PriorSignalKind::Ppl)),
            "conf" => Some(Self::MeanSignal(PriorSignalKind::Conf)),
            _ => None,
        }
    }
}

/// Early-termination rule: a receiver with at least `min_debates` debates
/// whose oriented posterior reaches `threshold` is accepted.
///
/// With [`PosteriorVariant::Svr`] and threshold 1 this is the standard rule
/// "no change in at least C debates". For mean-signal variants the
/// posterior is oriented so larger is better (perplexity is negated).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcceptanceRule {
    pub variant: PosteriorVariant,
    pub threshold: f64,
    pub min_debates: u32,
}

impl AcceptanceRule {
    pub fn standard(challengers: u32) -> Self {
        Self {
            variant: PosteriorVariant::Svr,
            threshold: 1.0,
            min_debates: challengers,
        }
    }

    pub fn is_standard(&self) -> bool {
        self.variant == PosteriorVariant::Svr && self.threshold == 1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvrMadOptions {
    pub comms_per_round: usize,
    pub budget_policy: BudgetPolicy,
    pub consensus_stop_count: usize,
    pub prior_signal: PriorSignalKind,
    pub acceptance: AcceptanceRule,
}

impl SvrMadOptions {
    pub fn from_config(config: &ExperimentConfig) -> Self {
        Self {
            comms_per_round: config.comms_per_round,
            budget_policy: config.budget_policy,
            consensus_stop_count: config.consensus_stop_count,
            prior_signal: config.prior_signal,
            acceptance: AcceptanceRule::standard(config.acceptance_challengers),
        }
    }
}

/// Debate budget: `S * (k + m)` under the default policy, where `k` counts
/// distinct answers and `m` is the largest cluster's size.
pub fn compute_budget(
    initial_answers: &[AnswerLabel],
    comms_per_round: usize,
    policy: BudgetPolicy,
) -> usize {
    match policy {
        BudgetPolicy::FixedCap(cap) => cap,
        BudgetPolicy::AnswerClusters => {
            let groups = clusters(initial_answers);
            let k = groups.len();
            let m = groups
                .iter()
                .map(|(_, members)| members.len())
                .max()
                .unwrap_or(0);
            comms_per_round * (k + m)
        }
    }
}

fn has_open_challenger(
    receiver: usize,
    states: &[CorrectnessState],
    debated: &DebatedPairs,
) -> bool {
    let answer = states[receiver].current_answer();
    states.iter().any(|s| {
        s.agent_id() != receiver
            && !answers_equal(s.current_answer(), answer)
            && !debated.contains(&(s.agent_id(), receiver))
    })
}

/// Highest-scoring agent that still has an unprobed disagreeing peer; ties
/// go to the lowest id.
pub fn select_receiver_by<F>(
    states: &[CorrectnessState],
    debated: &DebatedPairs,
    score: F,
) -> Result<usize, NoReceiver>
where
    F: Fn(&CorrectnessState) -> f64,
{
    let mut best: Option<(usize, f64)> = None;
    for state in states {
        if state.accepted() || !has_open_challenger(state.agent_id(), states, debated) {
            continue;
        }
        let s = score(state);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((state.agent_id(), s));
        }
    }
    best.map(|(id, _)| id).ok_or(NoReceiver)
}

pub fn select_receiver(
    states: &[CorrectnessState],
    debated: &DebatedPairs,
) -> Result<usize, NoReceiver> {
    select_receiver_by(states, debated, correctness_score)
}

/// Up to `limit` disagreeing peers that have not yet debated `receiver`,
/// strongest first, ties by lowest id.
pub fn select_challengers_by<F>(
    receiver: usize,
    states: &[CorrectnessState],
    debated: &DebatedPairs,
    limit: usize,
    score: F,
) -> Vec<usize>
where
    F: Fn(&CorrectnessState) -> f64,
{
    let answer = states[receiver].current_answer();
    let mut candidates: Vec<(usize, f64)> = states
        .iter()
        .filter(|s| {
            s.agent_id() != receiver
                && !answers_equal(s.current_answer(), answer)
                && !debated.contains(&(s.agent_id(), receiver))
        })
        .map(|s| (s.agent_id(), score(s)))
        .collect();
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    candidates
        .into_iter()
        .take(limit)
        .map(|(id, _)| id)
        .collect()
}

pub fn select_challengers(
    receiver: usize,
    states: &[CorrectnessState],
    debated: &DebatedPairs,
    limit: usize,
) -> Vec<usize> {
    select_challengers_by(receiver, states, debated, limit, correctness_score)
}

/// Counts one debate outcome against its receiver.
pub fn apply_outcome(state: &mut CorrectnessState, event: &DebateEvent) {
    debug_assert_eq!(event.receiver_id, state.agent_id());
    state.record(event.retained, event.receiver_post.answer.clone());
}

/// Standard acceptance: no answer change in at least `challengers` debates.
pub fn acceptance_check(state: &CorrectnessState, challengers: u32) -> bool {
    state.changes() == 0 && state.debates() >= challengers
}

/// Fallback decision when no agent was accepted.
pub fn fallback_vote(states: &[CorrectnessState], initial_answers: &[AnswerLabel]) -> AnswerLabel {
    let votes: Vec<&AnswerLabel> = states
        .iter()
        .zip(initial_answers)
        .map(|(s, y)| agent_vote(s.post_debate_answers(), y))
        .collect();
    majority_with_pre_debate_tiebreak(&votes, initial_answers).clone()
}

/// Normalized prior scores for one question's initial responses.
pub fn prior_scores(
    initials: &[AgentResponse],
    kind: PriorSignalKind,
) -> Result<Vec<f64>, SignalError> {
    let raw: Vec<SignalValue> = initials
        .iter()
        .map(|r| kind.measure(r))
        .collect::<Result<_, _>>()?;
    Ok(normalize_priors(&raw))
}

/// Pre-debate consensus: the largest answer cluster if it has at least
/// `stop_count` members.
pub fn consensus_answer(answers: &[AnswerLabel], stop_count: usize) -> Option<AnswerLabel> {
    largest_cluster(answers).and_then(|(a, size)| (size >= stop_count).then(|| a.clone()))
}

pub fn generate_initials(
    question: &Question,
    n_agents: usize,
    backend: &dyn Backend,
) -> Result<Vec<AgentResponse>, BackendError> {
    (0..n_agents)
        .map(|i| backend.generate_initial(question, i))
        .collect()
}

/// Per-run scoring bookkeeping for the configured posterior.
struct Scorer {
    rule: AcceptanceRule,
    /// Oriented mean-signal posterior per agent, when the variant uses one.
    mean_signal: Vec<Option<f64>>,
}

impl Scorer {
    fn new(rule: AcceptanceRule, n: usize) -> Self {
        Self {
            rule,
            mean_signal: vec![None; n],
        }
    }

    fn refresh(&mut self, agent: usize, events: &[DebateEvent]) -> Result<(), SignalError> {
        if let PosteriorVariant::MeanSignal(kind) = self.rule.variant {
            let raw =
                mean_posterior_signal(events.iter().filter(|e| e.receiver_id == agent), kind)?;
            self.mean_signal[agent] = Some(raw);
        }
        Ok(())
    }

    fn score(&self, state: &CorrectnessState) -> f64 {
        match self.rule.variant {
            PosteriorVariant::Svr => correctness_score(state),
            PosteriorVariant::MeanSignal(kind) => match self.mean_signal[state.agent_id()] {
                Some(raw) if state.debates() > 0 => unit_scale(kind, raw),
                _ => state.prior(),
            },
        }
    }

    fn posterior(&self, state: &CorrectnessState) -> Option<f64> {
        match self.rule.variant {
            PosteriorVariant::Svr => svr(state.debates(), state.retentions(), state.changes()).ok(),
            PosteriorVariant::MeanSignal(kind) => self.mean_signal[state.agent_id()]
                .map(|raw| SignalValue { kind, value: raw }.oriented()),
        }
    }

    fn accepts(&self, state: &CorrectnessState) -> bool {
        if self.rule.is_standard() {
            return acceptance_check(state, self.rule.min_debates);
        }
        state.debates() >= self.rule.min_debates.max(1)
            && self
                .posterior(state)
                .is_some_and(|p| p >= self.rule.threshold)
    }
}

/// Runs the survival-rate guided debate on one question from shared initial
/// responses.
pub fn svr_mad(
    question: &Question,
    initials: &[AgentResponse],
    options: &SvrMadOptions,
    backend: &dyn Backend,
) -> Result<RunResult, RunError> {
    let method = Method::SvrMad;
    let n = initials.len();
    let initial_answers: Vec<AnswerLabel> = initials.iter().map(|r| r.answer.clone()).collect();
    let budget = compute_budget(
        &initial_answers,
        options.comms_per_round,
        options.budget_policy,
    );

    let mut trace = DebateTrace {
        question_id: question.id.clone(),
        method,
        gold_answer: question.gold_answer.clone(),
        params: DecisionParams {
            consensus_stop_count: Some(options.consensus_stop_count),
            acceptance_challengers: Some(options.acceptance.min_debates),
            budget: Some(budget),
            sid_threshold: None,
        },
        initial_responses: initials.to_vec(),
        events: Vec::new(),
        final_answer: AnswerLabel::empty(),
        termination_reason: TerminationReason::BudgetExhausted,
    };

    let priors = prior_scores(initials, options.prior_signal)
        .map_err(|e| RunError::new(method, question, e))?;
    let mut states: Vec<CorrectnessState> = initials
        .iter()
        .zip(&priors)
        .map(|(r, &p)| CorrectnessState::new(r.agent_id, p, r.answer.clone()))
        .collect();

    if let Some(answer) = consensus_answer(&initial_answers, options.consensus_stop_count) {
        trace.final_answer = answer.clone();
        trace.termination_reason = TerminationReason::Consensus;
        return Ok(RunResult {
            final_answer: answer,
            termination_reason: TerminationReason::Consensus,
            trace,
            final_states: states,
        });
    }

    let mut scorer = Scorer::new(options.acceptance, n);
    let mut history: Vec<Vec<AgentResponse>> = initials.iter().map(|r| vec![r.clone()]).collect();
    let mut debated = DebatedPairs::new();
    let mut remaining = budget;

    while remaining > 0 {
        let Ok(receiver) = select_receiver_by(&states, &debated, |s| scorer.score(s)) else {
            debug!(question = %question.id, "no eligible receiver");
            break;
        };
        let mut challengers = select_challengers_by(
            receiver,
            &states,
            &debated,
            options.comms_per_round.min(remaining),
            |s| scorer.score(s),
        );
        challengers.sort_unstable();

        // every probe of this iteration starts from the same receiver snapshot
        let receiver_history = history[receiver].clone();
        let pre = receiver_history
            .last()
            .expect("history starts with the initial response")
            .clone();
        let turn = receiver_history.len() as u32;
        let mut posts = Vec::with_capacity(challengers.len());
        for (offset, &sender) in challengers.iter().enumerate() {
            let sender_output = history[sender].last().expect("non-empty history").clone();
            let request = DebateRequest {
                method,
                question,
                receiver_id: receiver,
                receiver_history: &receiver_history,
                senders: std::slice::from_ref(&sender_output),
                answer_only: &[],
                event_index: trace.events.len() + offset,
                turn,
            };
            match backend.debate(&request) {
                Ok(post) => posts.push(post),
                Err(e) => return Err(RunError::new(method, question, e).with_partial(trace)),
            }
        }

        for (sender, post) in challengers.iter().copied().zip(posts) {
            let event = DebateEvent {
                sequence_index: trace.events.len(),
                round: None,
                sender_ids: vec![sender],
                answer_only_ids: Vec::new(),
                receiver_id: receiver,
                retained: answers_equal(&pre.answer, &post.answer),
                receiver_pre: pre.clone(),
                receiver_post: post.clone(),
            };
            apply_outcome(&mut states[receiver], &event);
            debated.insert((sender, receiver));
            history[receiver].push(post);
            trace.events.push(event);
            remaining -= 1;
        }
        scorer
            .refresh(receiver, &trace.events)
            .map_err(|e| RunError::new(method, question, e).with_partial(trace.clone()))?;

        if scorer.accepts(&states[receiver]) {
            states[receiver].mark_accepted();
            let answer = states[receiver].current_answer().clone();
            trace.final_answer = answer.clone();
            trace.termination_reason = TerminationReason::Accepted;
            return Ok(RunResult {
                final_answer: answer,
                termination_reason: TerminationReason::Accepted,
                trace,
                final_states: states,
            });
        }
    }

    let answer = fallback_vote(&states, &initial_answers);
    trace.final_answer = answer.clone();
    trace.termination_reason = TerminationReason::BudgetExhausted;
    Ok(RunResult {
        final_answer: answer,
        termination_reason: TerminationReason::BudgetExhausted,
        trace,
        final_states: states,
    })
}

/// Rebuilds per-agent states from a pairwise trace (priors are not
/// recoverable and are left at zero).
pub fn replay_states(trace: &DebateTrace) -> Vec<CorrectnessState> {
    let mut states: Vec<CorrectnessState> = trace
        .initial_responses
        .iter()
        .map(|r| CorrectnessState::new(r.agent_id, 0.0, r.answer.clone()))
        .collect();
    for event in &trace.events {
        if let Some(state) = states.get_mut(event.receiver_id) {
            apply_outcome(state, event);
        }
    }
    states
}
