mod common;

use std::sync::atomic::{AtomicUsize, Ordering};

use common::{initials, question, response, Follower, Stubborn};
use mad_core::backend::{Backend, BackendError, DebateRequest, SimulatedBackend};
use mad_core::baselines::{
    all_to_all, group_debate, s2_mad, self_consistency, sid_et, GroupingPlan, RoundOptions,
};
use mad_core::config::SimParams;
use mad_core::harness::{count_ncomm, run_method, MethodSettings, QuestionInput};
use mad_core::orchestrator::generate_initials;
use mad_core::{AgentResponse, ExperimentConfig, Method, Question, TerminationReason};

/// Counts full-context transfers as they are requested.
struct Counting<B> {
    inner: B,
    transfers: AtomicUsize,
}

impl<B> Counting<B> {
    fn new(inner: B) -> Self {
        Self {
            inner,
            transfers: AtomicUsize::new(0),
        }
    }

    fn take(&self) -> usize {
        self.transfers.swap(0, Ordering::SeqCst)
    }
}

impl<B: Backend> Backend for Counting<B> {
    fn generate_initial(
        &self,
        question: &Question,
        agent_id: usize,
    ) -> Result<AgentResponse, BackendError> {
        self.inner.generate_initial(question, agent_id)
    }

    fn debate(&self, request: &DebateRequest<'_>) -> Result<AgentResponse, BackendError> {
        self.transfers
            .fetch_add(request.senders.len(), Ordering::SeqCst);
        self.inner.debate(request)
    }

    fn name(&self) -> &'static str {
        "counting"
    }
}

const SIX: [&str; 6] = ["A", "B", "C", "D", "E", "F"];

fn rounds(max_rounds: u32) -> RoundOptions {
    RoundOptions {
        max_rounds,
        consensus_stop_count: 5,
    }
}

fn halves() -> GroupingPlan {
    GroupingPlan {
        groups: vec![vec![0, 1, 2], vec![3, 4, 5]],
    }
}

#[test]
fn all_to_all_two_rounds_is_sixty() {
    let run = all_to_all(&question("q", "A"), &initials(&SIX), rounds(2), &Stubborn).unwrap();
    assert_eq!(count_ncomm(&run.trace), 60);
    assert_eq!(run.trace.events.len(), 12);
    assert_eq!(run.termination_reason, TerminationReason::BudgetExhausted);
}

#[test]
fn all_to_all_one_round_is_thirty() {
    let run = all_to_all(&question("q", "A"), &initials(&SIX), rounds(1), &Stubborn).unwrap();
    assert_eq!(count_ncomm(&run.trace), 30);

    // round-1 consensus: everyone but agent 0 follows agent 0
    let run = all_to_all(&question("q", "A"), &initials(&SIX), rounds(2), &Follower).unwrap();
    assert_eq!(count_ncomm(&run.trace), 30);
    assert_eq!(run.termination_reason, TerminationReason::Consensus);
    assert_eq!(run.final_answer.canonical(), "A");
}

#[test]
fn group_debate_counts_within_group_senders_only() {
    let q = question("q", "A");
    let run = group_debate(&q, &initials(&SIX), rounds(2), &halves(), &Stubborn).unwrap();
    assert_eq!(count_ncomm(&run.trace), 24);
    assert!(run
        .trace
        .events
        .iter()
        .all(|e| e.answer_only_ids.len() == 3));

    let run = group_debate(
        &q,
        &initials(&["A", "A", "A", "A", "B", "C"]),
        rounds(2),
        &halves(),
        &Follower,
    )
    .unwrap();
    assert_eq!(count_ncomm(&run.trace), 12);
    assert_eq!(run.termination_reason, TerminationReason::Consensus);
}

#[test]
fn group_debate_with_retainers_keeps_pre_debate_majority() {
    let answers = ["B", "A", "B", "C", "B", "A"];
    let run = group_debate(
        &question("q", "A"),
        &initials(&answers),
        rounds(2),
        &halves(),
        &Stubborn,
    )
    .unwrap();
    assert_eq!(run.final_answer.canonical(), "B");
}

#[test]
fn s2_mad_prunes_agreeing_links() {
    let q = question("q", "A");
    let run = s2_mad(&q, &initials(&["A", "A", "B"]), rounds(1), &Stubborn).unwrap();
    assert_eq!(count_ncomm(&run.trace), 4);
    let links: Vec<(usize, usize)> = run
        .trace
        .events
        .iter()
        .flat_map(|e| e.sender_ids.iter().map(move |&s| (s, e.receiver_id)))
        .collect();
    assert_eq!(links, vec![(2, 0), (2, 1), (0, 2), (1, 2)]);

    let run = s2_mad(&q, &initials(&SIX), rounds(1), &Stubborn).unwrap();
    assert_eq!(count_ncomm(&run.trace), 30);

    let run = s2_mad(&q, &initials(&["A"; 6]), rounds(2), &Stubborn).unwrap();
    assert_eq!(count_ncomm(&run.trace), 0);
    assert_eq!(run.termination_reason, TerminationReason::Consensus);
}

#[test]
fn self_consistency_is_free() {
    let run = self_consistency(&question("q", "A"), &initials(&["A", "B", "A"]));
    assert_eq!(count_ncomm(&run.trace), 0);
    assert_eq!(run.final_answer.canonical(), "A");
    let tie = self_consistency(&question("q", "A"), &initials(&["A", "B"]));
    assert_eq!(tie.final_answer.canonical(), "A");
}

#[test]
fn sid_et_skip_and_debate() {
    let q = question("q", "A");
    let mut agents: Vec<AgentResponse> = SIX
        .iter()
        .enumerate()
        .map(|(i, a)| response(i, a, -3.0))
        .collect();
    agents[0] = response(0, "A", -0.05);
    agents[1] = response(1, "B", -2.0);

    let skip = sid_et(&q, &agents, rounds(2), -0.1, &Stubborn).unwrap();
    assert_eq!(count_ncomm(&skip.trace), 0);
    assert_eq!(skip.final_answer.canonical(), "A");
    assert_eq!(skip.trace.total_tokens(), 6 * 150);

    let debate = sid_et(&q, &agents, rounds(2), -0.01, &Stubborn).unwrap();
    assert_eq!(count_ncomm(&debate.trace), 60);

    let consensus = sid_et(&q, &agents, rounds(2), -0.01, &Follower).unwrap();
    assert_eq!(count_ncomm(&consensus.trace), 30);
}

#[test]
fn recount_matches_live_counter_on_simulated_runs() {
    let backend = Counting::new(SimulatedBackend::new(SimParams::default(), 11).unwrap());
    let config = ExperimentConfig::default();
    for i in 0..40 {
        let q = question(&format!("q{i}"), "42");
        let input = QuestionInput {
            initials: generate_initials(&q, 6, &backend).unwrap(),
            question: q,
        };
        let settings = MethodSettings::from_config(&config, std::slice::from_ref(&input)).unwrap();
        for method in Method::ALL {
            backend.take();
            let run = run_method(method, &input, &settings, &backend).unwrap();
            assert_eq!(count_ncomm(&run.trace), backend.take(), "{method} on q{i}");
            assert!(
                run.trace.total_tokens()
                    >= input.initials.iter().map(AgentResponse::total_tokens).sum()
            );
        }
    }
}
