use std::collections::HashMap;
use std::path::Path;

use super::{Backend, BackendError, DebateRequest};
use crate::harness::trace_file::{load_trace_dir, load_traces, TraceError};
use crate::types::{AgentResponse, DebateEvent, DebateTrace, Method, Question};

/// Serves responses recorded in trace files.
///
/// Initial responses are keyed by (question, agent) and shared by every
/// method; debate events are keyed by (method, question, sequence index).
#[derive(Debug, Default)]
pub struct ReplayBackend {
    initials: HashMap<(String, usize), AgentResponse>,
    events: HashMap<(Method, String, usize), DebateEvent>,
}

impl ReplayBackend {
    pub fn from_traces<'a>(traces: impl IntoIterator<Item = &'a DebateTrace>) -> Self {
        let mut backend = Self::default();
        for trace in traces {
            for r in &trace.initial_responses {
                backend
                    .initials
                    .entry((trace.question_id.clone(), r.agent_id))
                    .or_insert_with(|| r.clone());
            }
            for e in &trace.events {
                backend.events.insert(
                    (trace.method, trace.question_id.clone(), e.sequence_index),
                    e.clone(),
                );
            }
        }
        backend
    }

    /// Loads a single trace file or every `*.jsonl` file in a directory.
    pub fn from_path(path: &Path) -> Result<Self, BackendError> {
        let traces = if path.is_dir() {
            load_trace_dir(path)
        } else {
            load_traces(path)
        }
        .map_err(|e: TraceError| BackendError::Config(format!("cannot load replay traces: {e}")))?;
        Ok(Self::from_traces(traces.iter()))
    }
}

impl Backend for ReplayBackend {
    fn generate_initial(
        &self,
        question: &Question,
        agent_id: usize,
    ) -> Result<AgentResponse, BackendError> {
        self.initials
            .get(&(question.id.clone(), agent_id))
            .cloned()
            .ok_or_else(|| BackendError::TraceIncomplete {
                question_id: question.id.clone(),
                detail: format!("no initial response for agent {agent_id}"),
            })
    }

    fn debate(&self, request: &DebateRequest<'_>) -> Result<AgentResponse, BackendError> {
        let qid = &request.question.id;
        let incomplete = |detail: String| BackendError::TraceIncomplete {
            question_id: qid.clone(),
            detail,
        };
        let event = self
            .events
            .get(&(request.method, qid.clone(), request.event_index))
            .ok_or_else(|| {
                incomplete(format!(
                    "no {} event {}",
                    request.method, request.event_index
                ))
            })?;
        if event.receiver_id != request.receiver_id {
            return Err(incomplete(format!(
                "event {} was recorded for receiver {}, requested {}",
                request.event_index, event.receiver_id, request.receiver_id
            )));
        }
        let mut requested: Vec<usize> = request.senders.iter().map(|s| s.agent_id).collect();
        requested.sort_unstable();
        let mut recorded = event.sender_ids.clone();
        recorded.sort_unstable();
        if requested != recorded {
            return Err(incomplete(format!(
                "event {} senders {:?} differ from requested {:?}",
                request.event_index, recorded, requested
            )));
        }
        Ok(event.receiver_post.clone())
    }

    fn name(&self) -> &'static str {
        "replay"
    }
}
