//! Baseline aggregation and debate methods sharing the trace model of the
//! survival-rate debate: self-consistency voting, plain all-to-all debate,
//! GroupDebate, SID-ET and S²-MAD.

mod sid;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::answer::{answers_equal, AnswerLabel};
use crate::backend::{seed, Backend, DebateRequest};
use crate::config::{ConfigError, ExperimentConfig};
use crate::orchestrator::RunError;
use crate::types::{
    AgentResponse, CorrectnessState, DebateEvent, DebateTrace, DecisionParams, Method, Question,
    RunResult, TerminationReason,
};
use crate::voting::{largest_cluster, plurality};

pub use sid::{
    max_min_log_likelihood, sid_et, sid_threshold_for_skip_rate, tune_sid_skip_rate, SKIP_RATES,
};

/// Round limits shared by the round-based baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundOptions {
    pub max_rounds: u32,
    pub consensus_stop_count: usize,
}

impl RoundOptions {
    pub fn from_config(config: &ExperimentConfig) -> Self {
        Self {
            max_rounds: config.max_rounds,
            consensus_stop_count: config.consensus_stop_count,
        }
    }
}

/// Partition of agents into debate groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupingPlan {
    pub groups: Vec<Vec<usize>>,
}

impl GroupingPlan {
    /// Seeded random assignment of `n_agents` into groups of the given sizes.
    pub fn random(
        sizes: &[usize],
        n_agents: usize,
        seed: u64,
        question_id: &str,
    ) -> Result<Self, ConfigError> {
        if sizes.iter().sum::<usize>() != n_agents || sizes.contains(&0) {
            return Err(ConfigError::Grouping {
                groups: sizes.to_vec(),
                n_agents,
            });
        }
        let mut agents: Vec<usize> = (0..n_agents).collect();
        agents.shuffle(&mut seed::stream(seed, "grouping", question_id, &[]));
        let mut groups = Vec::with_capacity(sizes.len());
        let mut rest = agents.as_slice();
        for &size in sizes {
            let (head, tail) = rest.split_at(size);
            let mut group = head.to_vec();
            group.sort_unstable();
            groups.push(group);
            rest = tail;
        }
        Ok(Self { groups })
    }

    pub fn validate(&self, n_agents: usize) -> Result<(), ConfigError> {
        let mut seen = vec![false; n_agents];
        let ok = self.groups.iter().all(|g| !g.is_empty())
            && self
                .groups
                .iter()
                .flatten()
                .all(|&a| a < n_agents && !std::mem::replace(&mut seen[a], true))
            && seen.iter().all(|&s| s);
        if ok {
            Ok(())
        } else {
            Err(ConfigError::Grouping {
                groups: self.groups.iter().map(Vec::len).collect(),
                n_agents,
            })
        }
    }

    fn group_of(&self, agent: usize) -> Option<&[usize]> {
        self.groups
            .iter()
            .find(|g| g.contains(&agent))
            .map(Vec::as_slice)
    }
}

fn base_trace(
    method: Method,
    question: &Question,
    initials: &[AgentResponse],
    params: DecisionParams,
) -> DebateTrace {
    DebateTrace {
        question_id: question.id.clone(),
        method,
        gold_answer: question.gold_answer.clone(),
        params,
        initial_responses: initials.to_vec(),
        events: Vec::new(),
        final_answer: AnswerLabel::empty(),
        termination_reason: TerminationReason::BudgetExhausted,
    }
}

fn finish(mut trace: DebateTrace, answer: AnswerLabel, reason: TerminationReason) -> RunResult {
    trace.final_answer = answer.clone();
    trace.termination_reason = reason;
    let final_states = states_from_trace(&trace);
    RunResult {
        final_answer: answer,
        termination_reason: reason,
        trace,
        final_states,
    }
}

fn states_from_trace(trace: &DebateTrace) -> Vec<CorrectnessState> {
    crate::orchestrator::replay_states(trace)
}

/// Plurality of the agents' latest answers, ties to the lowest agent id.
pub fn majority_of_latest(trace: &DebateTrace) -> AnswerLabel {
    let latest = trace.latest_responses();
    plurality(latest.iter().map(|r| &r.answer))
        .cloned()
        .unwrap_or_else(AnswerLabel::empty)
}

/// Majority vote over the initial answers without any debate.
pub fn self_consistency(question: &Question, initials: &[AgentResponse]) -> RunResult {
    let trace = base_trace(
        Method::SelfConsistency,
        question,
        initials,
        DecisionParams::default(),
    );
    let answer = plurality(initials.iter().map(|r| &r.answer))
        .cloned()
        .unwrap_or_else(AnswerLabel::empty);
    finish(trace, answer, TerminationReason::BudgetExhausted)
}

/// One receiver's messages in a synchronous round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Delivery {
    pub receiver: usize,
    pub senders: Vec<usize>,
    pub answer_only: Vec<usize>,
}

/// Synchronous rounds: every receiver regenerates from the previous round's
/// snapshot. After a non-final round the run stops once enough agents agree.
/// A round with no deliveries ends the run.
pub(crate) fn run_rounds<F>(
    mut trace: DebateTrace,
    question: &Question,
    options: RoundOptions,
    backend: &dyn Backend,
    mut plan: F,
) -> Result<RunResult, RunError>
where
    F: FnMut(u32, &[AgentResponse]) -> Vec<Delivery>,
{
    let method = trace.method;
    let mut history: Vec<Vec<AgentResponse>> = trace
        .initial_responses
        .iter()
        .map(|r| vec![r.clone()])
        .collect();
    let mut reason = TerminationReason::BudgetExhausted;

    for round in 1..=options.max_rounds {
        let snapshot: Vec<AgentResponse> = history
            .iter()
            .map(|h| h.last().expect("non-empty").clone())
            .collect();
        let mut deliveries = plan(round, &snapshot);
        deliveries.retain(|d| !d.senders.is_empty());
        deliveries.sort_by_key(|d| d.receiver);
        if deliveries.is_empty() {
            reason = TerminationReason::Consensus;
            break;
        }

        let mut posts = Vec::with_capacity(deliveries.len());
        for (offset, d) in deliveries.iter().enumerate() {
            let senders: Vec<AgentResponse> =
                d.senders.iter().map(|&s| snapshot[s].clone()).collect();
            let answer_only: Vec<AgentResponse> =
                d.answer_only.iter().map(|&s| snapshot[s].clone()).collect();
            let request = DebateRequest {
                method,
                question,
                receiver_id: d.receiver,
                receiver_history: &history[d.receiver],
                senders: &senders,
                answer_only: &answer_only,
                event_index: trace.events.len() + offset,
                turn: round,
            };
            match backend.debate(&request) {
                Ok(post) => posts.push(post),
                Err(e) => return Err(RunError::new(method, question, e).with_partial(trace)),
            }
        }

        for (d, post) in deliveries.into_iter().zip(posts) {
            let pre = snapshot[d.receiver].clone();
            trace.events.push(DebateEvent {
                sequence_index: trace.events.len(),
                round: Some(round),
                sender_ids: d.senders,
                answer_only_ids: d.answer_only,
                receiver_id: d.receiver,
                retained: answers_equal(&pre.answer, &post.answer),
                receiver_pre: pre,
                receiver_post: post.clone(),
            });
            history[d.receiver].push(post);
        }

        if round < options.max_rounds {
            let latest = trace.latest_responses();
            let agreeing = largest_cluster(latest.iter().map(|r| &r.answer)).map_or(0, |(_, n)| n);
            if agreeing >= options.consensus_stop_count {
                reason = TerminationReason::Consensus;
                break;
            }
        }
    }

    let answer = majority_of_latest(&trace);
    Ok(finish(trace, answer, reason))
}

fn round_params(options: RoundOptions) -> DecisionParams {
    DecisionParams {
        consensus_stop_count: Some(options.consensus_stop_count),
        ..DecisionParams::default()
    }
}

/// Plain all-to-all debate: every agent receives every peer each round.
pub fn all_to_all(
    question: &Question,
    initials: &[AgentResponse],
    options: RoundOptions,
    backend: &dyn Backend,
) -> Result<RunResult, RunError> {
    all_to_all_as(
        Method::Mad,
        round_params(options),
        question,
        initials,
        options,
        backend,
    )
}

pub(crate) fn all_to_all_as(
    method: Method,
    params: DecisionParams,
    question: &Question,
    initials: &[AgentResponse],
    options: RoundOptions,
    backend: &dyn Backend,
) -> Result<RunResult, RunError> {
    let n = initials.len();
    let trace = base_trace(method, question, initials, params);
    run_rounds(trace, question, options, backend, |_, _| {
        (0..n)
            .map(|receiver| Delivery {
                receiver,
                senders: (0..n).filter(|&s| s != receiver).collect(),
                answer_only: Vec::new(),
            })
            .collect()
    })
}

/// GroupDebate: full-context exchange inside each group; other groups'
/// latest answers are forwarded as answer-only messages.
pub fn group_debate(
    question: &Question,
    initials: &[AgentResponse],
    options: RoundOptions,
    plan: &GroupingPlan,
    backend: &dyn Backend,
) -> Result<RunResult, RunError> {
    let n = initials.len();
    plan.validate(n).map_err(|e| {
        RunError::new(
            Method::GroupDebate,
            question,
            crate::backend::BackendError::Config(e.to_string()),
        )
    })?;
    let trace = base_trace(
        Method::GroupDebate,
        question,
        initials,
        round_params(options),
    );
    run_rounds(trace, question, options, backend, |_, _| {
        (0..n)
            .map(|receiver| {
                let group = plan.group_of(receiver).unwrap_or(&[]);
                Delivery {
                    receiver,
                    senders: group.iter().copied().filter(|&s| s != receiver).collect(),
                    answer_only: (0..n).filter(|a| !group.contains(a)).collect(),
                }
            })
            .collect()
    })
}

/// S²-MAD with answer-equivalence pruning: `j` sends to `i` only when their
/// answers differ at the start of the round.
pub fn s2_mad(
    question: &Question,
    initials: &[AgentResponse],
    options: RoundOptions,
    backend: &dyn Backend,
) -> Result<RunResult, RunError> {
    let trace = base_trace(Method::S2Mad, question, initials, round_params(options));
    run_rounds(trace, question, options, backend, |_, snapshot| {
        s2_links(snapshot)
    })
}

pub(crate) fn s2_links(snapshot: &[AgentResponse]) -> Vec<Delivery> {
    let n = snapshot.len();
    (0..n)
        .map(|receiver| Delivery {
            receiver,
            senders: (0..n)
                .filter(|&s| {
                    s != receiver && !answers_equal(&snapshot[s].answer, &snapshot[receiver].answer)
                })
                .collect(),
            answer_only: Vec::new(),
        })
        .filter(|d| !d.senders.is_empty())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resp(agent_id: usize, answer: &str) -> AgentResponse {
        AgentResponse {
            agent_id,
            turn: 0,
            reasoning: format!("Answer: {answer}"),
            answer: answer.into(),
            token_logliks: vec![-0.5],
            input_tokens: 10,
            output_tokens: 10,
            self_confidence: None,
        }
    }

    #[test]
    fn self_consistency_votes() {
        let q = Question::new("q", "t", Some("A".into())).unwrap();
        let r = self_consistency(&q, &[resp(0, "A"), resp(1, "A"), resp(2, "B")]);
        assert_eq!(r.final_answer.canonical(), "A");
        assert_eq!(r.trace.ncomm(), 0);
        let r = self_consistency(&q, &[resp(0, "A"), resp(1, "B")]);
        assert_eq!(r.final_answer.canonical(), "A");
    }

    #[test]
    fn s2_links_prune_agreeing_pairs() {
        let links = s2_links(&[resp(0, "A"), resp(1, "A"), resp(2, "B")]);
        let pairs: Vec<(usize, usize)> = links
            .iter()
            .flat_map(|d| d.senders.iter().map(move |&s| (s, d.receiver)))
            .collect();
        assert_eq!(pairs, vec![(2, 0), (2, 1), (0, 2), (1, 2)]);
        let distinct: Vec<AgentResponse> = (0..6).map(|i| resp(i, &i.to_string())).collect();
        assert_eq!(
            s2_links(&distinct)
                .iter()
                .map(|d| d.senders.len())
                .sum::<usize>(),
            30
        );
        let same: Vec<AgentResponse> = (0..6).map(|i| resp(i, "A")).collect();
        assert!(s2_links(&same).is_empty());
    }

    #[test]
    fn grouping_is_a_seeded_partition() {
        let plan = GroupingPlan::random(&[3, 3], 6, 11, "q1").unwrap();
        plan.validate(6).unwrap();
        assert_eq!(plan, GroupingPlan::random(&[3, 3], 6, 11, "q1").unwrap());
        assert!(GroupingPlan::random(&[3, 2], 6, 11, "q1").is_err());
        let bad = GroupingPlan {
            groups: vec![vec![0, 1, 2], vec![2, 3, 4]],
        };
        assert!(bad.validate(6).is_err());
    }
}
