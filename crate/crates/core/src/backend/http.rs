//! OpenAI-compatible chat-completions backend.

use std::thread;
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use super::prompt::{extract_answer, format_debate_prompt, format_initial_prompt, PromptTemplate};
use super::{Backend, BackendError, DebateRequest};
use crate::config::HttpParams;
use crate::signals::extract_self_confidence;
use crate::types::{AgentResponse, Question};

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "MAD_API_KEY";

const MAX_ATTEMPTS: u32 = 3;

#[derive(Debug, Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    top_p: f64,
    top_k: u32,
    max_tokens: u32,
    logprobs: bool,
    reasoning_effort: &'a str,
}

#[derive(Debug, Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Debug, Deserialize)]
struct RawCompletion {
    choices: Vec<RawChoice>,
    #[serde(default)]
    usage: Option<RawUsage>,
}

#[derive(Debug, Deserialize)]
struct RawChoice {
    message: RawMessage,
    #[serde(default)]
    logprobs: Option<RawLogprobs>,
}

#[derive(Debug, Deserialize)]
struct RawMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Debug, Deserialize)]
struct RawLogprobs {
    #[serde(default)]
    content: Option<Vec<RawTokenLogprob>>,
}

#[derive(Debug, Deserialize)]
struct RawTokenLogprob {
    logprob: f64,
}

#[derive(Debug, Deserialize)]
struct RawUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

/// The fields the engine reads from a completion.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatCompletion {
    pub content: String,
    pub token_logliks: Vec<f64>,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// Parses a chat-completions response body.
pub fn parse_chat_completion(body: &str) -> Result<ChatCompletion, BackendError> {
    let raw: RawCompletion =
        serde_json::from_str(body).map_err(|e| BackendError::Parse(e.to_string()))?;
    let choice = raw
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| BackendError::Parse("response has no choices".to_string()))?;
    let token_logliks: Vec<f64> = choice
        .logprobs
        .and_then(|l| l.content)
        .unwrap_or_default()
        .into_iter()
        .map(|t| t.logprob)
        .collect();
    if let Some(bad) = token_logliks
        .iter()
        .find(|l| !l.is_finite() && **l != f64::NEG_INFINITY)
    {
        return Err(BackendError::Parse(format!("invalid token logprob {bad}")));
    }
    let usage = raw.usage.unwrap_or(RawUsage {
        prompt_tokens: 0,
        completion_tokens: 0,
    });
    Ok(ChatCompletion {
        content: choice.message.content.unwrap_or_default(),
        token_logliks: token_logliks.into_iter().map(|l| l.min(0.0)).collect(),
        prompt_tokens: usage.prompt_tokens,
        completion_tokens: usage.completion_tokens,
    })
}

pub struct HttpBackend {
    params: HttpParams,
    template: PromptTemplate,
    client: Client,
    api_key: Option<String>,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("endpoint", &self.params.endpoint)
            .field("model", &self.params.model)
            .finish_non_exhaustive()
    }
}

impl HttpBackend {
    pub fn new(params: HttpParams, template: PromptTemplate) -> Result<Self, BackendError> {
        let client = Client::builder()
            .timeout(Duration::from_secs(params.timeout_secs))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(Self {
            params,
            template,
            client,
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
        })
    }

    fn url(&self) -> String {
        format!(
            "{}/v1/chat/completions",
            self.params.endpoint.trim_end_matches('/')
        )
    }

    fn complete(&self, prompt: &str) -> Result<ChatCompletion, BackendError> {
        let s = &self.params.sampling;
        let body = ChatRequest {
            model: &self.params.model,
            messages: vec![ChatMessage {
                role: "user",
                content: prompt,
            }],
            temperature: s.temperature,
            top_p: s.top_p,
            top_k: s.top_k,
            max_tokens: s.max_output_tokens,
            logprobs: true,
            reasoning_effort: &s.reasoning_effort,
        };

        let mut last_error = None;
        for attempt in 1..=MAX_ATTEMPTS {
            if attempt > 1 {
                let delay = self.params.retry_base_ms.saturating_mul(1 << (attempt - 2));
                debug!(attempt, delay_ms = delay, "retrying chat completion");
                thread::sleep(Duration::from_millis(delay));
            }
            let mut request = self.client.post(self.url()).json(&body);
            if let Some(key) = &self.api_key {
                request = request.bearer_auth(key);
            }
            let (message, retryable) = match request.send() {
                Ok(resp) => {
                    let status = resp.status();
                    let text = resp.text().unwrap_or_default();
                    if status.is_success() {
                        return parse_chat_completion(&text);
                    }
                    let retryable =
                        status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error();
                    (
                        format!("HTTP {status}: {}", truncate(&text, 200)),
                        retryable,
                    )
                }
                Err(e) => (e.to_string(), true),
            };
            warn!(attempt, %message, "chat completion failed");
            last_error = Some(BackendError::Transport {
                message,
                attempts: attempt,
                retryable,
            });
            if !retryable {
                break;
            }
        }
        Err(last_error.expect("at least one attempt"))
    }

    fn to_response(&self, completion: ChatCompletion, agent_id: usize, turn: u32) -> AgentResponse {
        AgentResponse {
            agent_id,
            turn,
            answer: extract_answer(&completion.content),
            self_confidence: extract_self_confidence(&completion.content),
            reasoning: completion.content,
            token_logliks: completion.token_logliks,
            input_tokens: completion.prompt_tokens,
            output_tokens: completion.completion_tokens,
        }
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

impl Backend for HttpBackend {
    fn generate_initial(
        &self,
        question: &Question,
        agent_id: usize,
    ) -> Result<AgentResponse, BackendError> {
        let prompt = format_initial_prompt(question, &self.template);
        let completion = self.complete(&prompt)?;
        Ok(self.to_response(completion, agent_id, 0))
    }

    fn debate(&self, request: &DebateRequest<'_>) -> Result<AgentResponse, BackendError> {
        let prompt = format_debate_prompt(
            request.question,
            request.receiver_history,
            request.senders,
            request.answer_only,
            &self.template,
        )?;
        let completion = self.complete(&prompt)?;
        Ok(self.to_response(completion, request.receiver_id, request.turn))
    }

    fn name(&self) -> &'static str {
        "http"
    }
}
