#![allow(dead_code)]

use mad_core::backend::{Backend, BackendError, DebateRequest};
use mad_core::{AgentResponse, Question};

pub fn question(id: &str, gold: &str) -> Question {
    Question::new(id, "What is the answer?", Some(gold.into())).unwrap()
}

pub fn response(agent_id: usize, answer: &str, min_ll: f64) -> AgentResponse {
    AgentResponse {
        agent_id,
        turn: 0,
        reasoning: format!("Answer: {answer}"),
        answer: answer.into(),
        token_logliks: vec![-0.01, min_ll],
        input_tokens: 100,
        output_tokens: 50,
        self_confidence: Some(0.5),
    }
}

pub fn initials(answers: &[&str]) -> Vec<AgentResponse> {
    answers
        .iter()
        .enumerate()
        .map(|(i, a)| response(i, a, -1.0 - i as f64 * 0.1))
        .collect()
}

/// Every receiver keeps its current answer.
pub struct Stubborn;

impl Backend for Stubborn {
    fn generate_initial(
        &self,
        _question: &Question,
        agent_id: usize,
    ) -> Result<AgentResponse, BackendError> {
        Ok(response(agent_id, "A", -1.0))
    }

    fn debate(&self, request: &DebateRequest<'_>) -> Result<AgentResponse, BackendError> {
        if request.senders.is_empty() {
            return Err(BackendError::NoPeers);
        }
        let mut next = request.receiver_current().expect("history").clone();
        next.turn = request.turn;
        next.input_tokens = 10;
        next.output_tokens = 5;
        Ok(next)
    }

    fn name(&self) -> &'static str {
        "stubborn"
    }
}

/// Every receiver adopts the answer of its lowest-id full-context sender.
pub struct Follower;

impl Backend for Follower {
    fn generate_initial(
        &self,
        _question: &Question,
        agent_id: usize,
    ) -> Result<AgentResponse, BackendError> {
        Ok(response(agent_id, "A", -1.0))
    }

    fn debate(&self, request: &DebateRequest<'_>) -> Result<AgentResponse, BackendError> {
        let leader = request
            .senders
            .iter()
            .min_by_key(|s| s.agent_id)
            .ok_or(BackendError::NoPeers)?;
        let mut next = response(request.receiver_id, leader.answer.raw(), -1.0);
        next.turn = request.turn;
        Ok(next)
    }

    fn name(&self) -> &'static str {
        "follower"
    }
}
