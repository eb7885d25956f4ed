//! Multi-agent debate with survival-rate guided communication.
//!
//! The [`orchestrator`] probes the most promising agent with its strongest
//! disagreeing peers and stops once an agent keeps its answer against
//! enough challengers. [`baselines`] holds the comparison methods,
//! [`backend`] the simulated, replayed and HTTP agent backends, and
//! [`harness`] the experiment plumbing.

pub mod answer;
pub mod backend;
pub mod baselines;
pub mod config;
pub mod harness;
pub mod orchestrator;
pub mod signals;
pub mod types;
pub mod voting;

pub use answer::AnswerLabel;
pub use config::ExperimentConfig;
pub use types::{
    AgentResponse, CorrectnessState, DebateEvent, DebateTrace, Method, Question, RunResult,
    TerminationReason,
};
