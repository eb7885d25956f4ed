//! Agent backends and debate prompt construction.
//!
//! A backend turns a question into an agent's initial response and turns a
//! receiver's history plus peer outputs into its next response. Three
//! implementations exist: a seeded simulator, a trace replayer and an
//! OpenAI-compatible HTTP client.

mod http;
mod prompt;
mod replay;
mod simulated;

use std::sync::Arc;

use thiserror::Error;

use crate::config::{BackendDescriptor, ExperimentConfig};
use crate::signals::PriorSignalKind;
use crate::types::{AgentResponse, Method, Question};

pub use http::{parse_chat_completion, ChatCompletion, HttpBackend, API_KEY_ENV};
pub use prompt::{extract_answer, format_debate_prompt, format_initial_prompt, PromptTemplate};
pub use replay::ReplayBackend;
pub use simulated::SimulatedBackend;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("request failed after {attempts} attempt(s): {message}")]
    Transport {
        message: String,
        attempts: u32,
        retryable: bool,
    },
    #[error("malformed completion response: {0}")]
    Parse(String),
    #[error("trace incomplete for question {question_id:?}: {detail}")]
    TraceIncomplete { question_id: String, detail: String },
    #[error("backend misconfigured: {0}")]
    Config(String),
    #[error("debate requested with no peer outputs")]
    NoPeers,
}

/// Inputs of one receiver regeneration.
#[derive(Debug, Clone, Copy)]
pub struct DebateRequest<'a> {
    pub method: Method,
    pub question: &'a Question,
    pub receiver_id: usize,
    /// The receiver's own turns, oldest first; the last one is current.
    pub receiver_history: &'a [AgentResponse],
    /// Full-context peer outputs.
    pub senders: &'a [AgentResponse],
    /// Peers whose final answer only is forwarded.
    pub answer_only: &'a [AgentResponse],
    /// Position of the resulting event in the run's trace.
    pub event_index: usize,
    pub turn: u32,
}

impl DebateRequest<'_> {
    pub fn receiver_current(&self) -> Option<&AgentResponse> {
        self.receiver_history.last()
    }
}

pub trait Backend: Send + Sync {
    fn generate_initial(
        &self,
        question: &Question,
        agent_id: usize,
    ) -> Result<AgentResponse, BackendError>;

    fn debate(&self, request: &DebateRequest<'_>) -> Result<AgentResponse, BackendError>;

    fn name(&self) -> &'static str;
}

/// Instantiates the backend a configuration describes.
pub fn build_backend(config: &ExperimentConfig) -> Result<Arc<dyn Backend>, BackendError> {
    let ask_confidence = config.prior_signal == PriorSignalKind::Conf;
    Ok(match &config.backend {
        BackendDescriptor::Simulated { params } => {
            Arc::new(SimulatedBackend::new(params.clone(), config.seed)?)
        }
        BackendDescriptor::Replay { path } => Arc::new(ReplayBackend::from_path(path)?),
        BackendDescriptor::Http(params) => Arc::new(HttpBackend::new(
            params.clone(),
            PromptTemplate {
                ask_confidence,
                ..PromptTemplate::default()
            },
        )?),
    })
}

pub(crate) mod seed {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use sha2::{Digest, Sha256};

    /// Independent RNG stream for `(seed, tag, key, indices)`. Stable across
    /// platforms and releases, unlike `std`'s hasher.
    pub(crate) fn stream(seed: u64, tag: &str, key: &str, indices: &[u64]) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(seed.to_le_bytes());
        hasher.update((tag.len() as u64).to_le_bytes());
        hasher.update(tag.as_bytes());
        hasher.update((key.len() as u64).to_le_bytes());
        hasher.update(key.as_bytes());
        for i in indices {
            hasher.update(i.to_le_bytes());
        }
        let digest = hasher.finalize();
        let mut bytes = [0u8; 32];
        bytes.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(bytes)
    }
}
