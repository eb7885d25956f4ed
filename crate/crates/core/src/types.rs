//! Domain types shared across the engine.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answer::{answers_equal, AnswerLabel};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("question id must be non-empty")]
    EmptyQuestionId,
    #[error("question {0:?} has empty text")]
    EmptyQuestionText(String),
    #[error("debate event {index}: sender and receiver are both agent {agent}")]
    SelfDebate { index: usize, agent: usize },
    #[error("debate event {index}: sender list is empty")]
    NoSenders { index: usize },
    #[error("debate event at position {position} has sequence index {found}")]
    SequenceGap { position: usize, found: usize },
    #[error(
        "debate event {index}: retained flag {flag} disagrees with answers {pre:?} -> {post:?}"
    )]
    RetainedMismatch {
        index: usize,
        flag: bool,
        pre: String,
        post: String,
    },
    #[error("initial response at position {position} belongs to agent {agent}")]
    InitialOrder { position: usize, agent: usize },
    #[error("agent id {agent} out of range for {n_agents} agents")]
    AgentOutOfRange { agent: usize, n_agents: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_answer: Option<AnswerLabel>,
}

impl Question {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        gold_answer: Option<AnswerLabel>,
    ) -> Result<Self, ValidationError> {
        let question = Self {
            id: id.into(),
            text: text.into(),
            gold_answer,
        };
        question.validate()?;
        Ok(question)
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.id.is_empty() {
            return Err(ValidationError::EmptyQuestionId);
        }
        if self.text.trim().is_empty() {
            return Err(ValidationError::EmptyQuestionText(self.id.clone()));
        }
        Ok(())
    }
}

/// One agent's output at one turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentResponse {
    pub agent_id: usize,
    pub turn: u32,
    pub reasoning: String,
    pub answer: AnswerLabel,
    /// Natural-log token probabilities; may be shorter than `output_tokens`.
    pub token_logliks: Vec<f64>,
    pub input_tokens: u64,
    pub output_tokens: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub self_confidence: Option<f64>,
}

impl AgentResponse {
    pub fn total_tokens(&self) -> u64 {
        self.input_tokens + self.output_tokens
    }
}

/// Per-agent scoring state. Counters only move through [`CorrectnessState::record`],
/// which keeps `retentions + changes == debates == post_debate_answers.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectnessState {
    agent_id: usize,
    prior: f64,
    debates: u32,
    retentions: u32,
    changes: u32,
    current_answer: AnswerLabel,
    post_debate_answers: Vec<AnswerLabel>,
    accepted: bool,
}

impl CorrectnessState {
    pub fn new(agent_id: usize, prior: f64, initial_answer: AnswerLabel) -> Self {
        Self {
            agent_id,
            prior,
            debates: 0,
            retentions: 0,
            changes: 0,
            current_answer: initial_answer,
            post_debate_answers: Vec::new(),
            accepted: false,
        }
    }

    pub fn agent_id(&self) -> usize {
        self.agent_id
    }
    pub fn prior(&self) -> f64 {
        self.prior
    }
    pub fn debates(&self) -> u32 {
        self.debates
    }
    pub fn retentions(&self) -> u32 {
        self.retentions
    }
    pub fn changes(&self) -> u32 {
        self.changes
    }
    pub fn current_answer(&self) -> &AnswerLabel {
        &self.current_answer
    }
    pub fn post_debate_answers(&self) -> &[AnswerLabel] {
        &self.post_debate_answers
    }
    pub fn accepted(&self) -> bool {
        self.accepted
    }

    /// Records one debate outcome for this agent as receiver.
    pub fn record(&mut self, retained: bool, post_answer: AnswerLabel) {
        self.debates += 1;
        if retained {
            self.retentions += 1;
        } else {
            self.changes += 1;
        }
        self.post_debate_answers.push(post_answer.clone());
        self.current_answer = post_answer;
    }

    pub(crate) fn mark_accepted(&mut self) {
        self.accepted = true;
    }
}

/// One directed communication into a receiver, followed by the receiver's
/// regeneration.
///
/// Pairwise probes carry exactly one full-context sender. Round-based
/// baselines deliver several senders to one regeneration; GroupDebate also
/// forwards final answers from other groups, listed in `answer_only_ids`
/// and not counted as context transfers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebateEvent {
    pub sequence_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round: Option<u32>,
    pub sender_ids: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub answer_only_ids: Vec<usize>,
    pub receiver_id: usize,
    pub receiver_pre: AgentResponse,
    pub receiver_post: AgentResponse,
    pub retained: bool,
}

impl DebateEvent {
    /// The sender of a pairwise debate.
    pub fn sender_id(&self) -> Option<usize> {
        match self.sender_ids.as_slice() {
            [only] => Some(*only),
            _ => None,
        }
    }

    /// Directed full-context transfers carried by this event.
    pub fn context_transfers(&self) -> usize {
        self.sender_ids.len()
    }

    pub fn outcome_retained(&self) -> bool {
        answers_equal(&self.receiver_pre.answer, &self.receiver_post.answer)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    Accepted,
    BudgetExhausted,
    Consensus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    SvrMad,
    SelfConsistency,
    GroupDebate,
    SidEt,
    S2Mad,
    /// Plain all-to-all debate.
    Mad,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::SvrMad,
        Method::SelfConsistency,
        Method::GroupDebate,
        Method::SidEt,
        Method::S2Mad,
        Method::Mad,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::SvrMad => "svr_mad",
            Method::SelfConsistency => "self_consistency",
            Method::GroupDebate => "group_debate",
            Method::SidEt => "sid_et",
            Method::S2Mad => "s2_mad",
            Method::Mad => "mad",
        }
    }

    pub fn parse(name: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name() == name.trim())
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Parameters a replay needs to re-derive the final answer from a trace.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DecisionParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consensus_stop_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acceptance_challengers: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        with = "extended_f64"
    )]
    pub sid_threshold: Option<f64>,
}

/// JSON has no infinities; thresholds may legitimately be `±inf`, so those
/// are written as the strings `"inf"` / `"-inf"`.
mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &Option<f64>, serializer: S) -> Result<S::Ok, S::Error> {
        match value {
            None => serializer.serialize_none(),
            Some(v) if v.is_finite() => serializer.serialize_f64(*v),
            Some(v) if *v == f64::INFINITY => serializer.serialize_str("inf"),
            Some(v) if *v == f64::NEG_INFINITY => serializer.serialize_str("-inf"),
            Some(_) => serializer.serialize_str("nan"),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        deserializer: D,
    ) -> Result<Option<f64>, D::Error> {
        match Option::<Repr>::deserialize(deserializer)? {
            None => Ok(None),
            Some(Repr::Num(v)) => Ok(Some(v)),
            Some(Repr::Text(t)) => match t.as_str() {
                "inf" => Ok(Some(f64::INFINITY)),
                "-inf" => Ok(Some(f64::NEG_INFINITY)),
                "nan" => Ok(Some(f64::NAN)),
                other => Err(serde::de::Error::custom(format!(
                    "invalid number {other:?}"
                ))),
            },
        }
    }
}

/// Everything one method did on one question.
#[derive(Debug, Clone, PartialEq)]
pub struct DebateTrace {
    pub question_id: String,
    pub method: Method,
    pub gold_answer: Option<AnswerLabel>,
    pub params: DecisionParams,
    pub initial_responses: Vec<AgentResponse>,
    pub events: Vec<DebateEvent>,
    pub final_answer: AnswerLabel,
    pub termination_reason: TerminationReason,
}

impl DebateTrace {
    pub fn n_agents(&self) -> usize {
        self.initial_responses.len()
    }

    /// Structural invariants: initial responses in agent order, gap-free
    /// sequence indices, no self-debates, retained flags consistent with
    /// the recorded answers.
    pub fn validate(&self) -> Result<(), ValidationError> {
        let n = self.n_agents();
        for (position, r) in self.initial_responses.iter().enumerate() {
            if r.agent_id != position {
                return Err(ValidationError::InitialOrder {
                    position,
                    agent: r.agent_id,
                });
            }
        }
        for (position, e) in self.events.iter().enumerate() {
            if e.sequence_index != position {
                return Err(ValidationError::SequenceGap {
                    position,
                    found: e.sequence_index,
                });
            }
            if e.sender_ids.is_empty() {
                return Err(ValidationError::NoSenders { index: position });
            }
            for &id in e
                .sender_ids
                .iter()
                .chain(&e.answer_only_ids)
                .chain([&e.receiver_id])
            {
                if id >= n {
                    return Err(ValidationError::AgentOutOfRange {
                        agent: id,
                        n_agents: n,
                    });
                }
            }
            if e.sender_ids.contains(&e.receiver_id) || e.answer_only_ids.contains(&e.receiver_id) {
                return Err(ValidationError::SelfDebate {
                    index: position,
                    agent: e.receiver_id,
                });
            }
            if e.retained != e.outcome_retained() {
                return Err(ValidationError::RetainedMismatch {
                    index: position,
                    flag: e.retained,
                    pre: e.receiver_pre.answer.raw().to_string(),
                    post: e.receiver_post.answer.raw().to_string(),
                });
            }
        }
        Ok(())
    }

    /// Number of counted directed context transfers.
    pub fn ncomm(&self) -> usize {
        self.events.iter().map(DebateEvent::context_transfers).sum()
    }

    /// Input plus output tokens over every generation, initial ones included.
    pub fn total_tokens(&self) -> u64 {
        self.initial_responses
            .iter()
            .chain(self.events.iter().map(|e| &e.receiver_post))
            .map(AgentResponse::total_tokens)
            .sum()
    }

    pub fn is_correct(&self) -> Option<bool> {
        self.gold_answer
            .as_ref()
            .map(|gold| answers_equal(gold, &self.final_answer))
    }

    /// Each agent's most recent response.
    pub fn latest_responses(&self) -> Vec<&AgentResponse> {
        let mut latest: Vec<&AgentResponse> = self.initial_responses.iter().collect();
        for e in &self.events {
            latest[e.receiver_id] = &e.receiver_post;
        }
        latest
    }
}

/// Result of one method run on one question.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub final_answer: AnswerLabel,
    pub termination_reason: TerminationReason,
    pub trace: DebateTrace,
    pub final_states: Vec<CorrectnessState>,
}
