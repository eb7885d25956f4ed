use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{seed, Backend, BackendError, DebateRequest};
use crate::answer::{answers_equal, AnswerLabel};
use crate::config::SimParams;
use crate::types::{AgentResponse, Question};

/// Seeded agent simulator.
///
/// Each agent's initial answer is the gold answer with probability
/// `p_correct`, otherwise a member of a fixed pool of wrong answers. During a
/// debate the receiver faces its senders one at a time in ascending id and
/// keeps its current answer with probability `retention(receiver correct,
/// sender correct)`; on a change it adopts a disagreeing sender's answer with
/// probability `adopt_prob` and otherwise drifts to another wrong answer.
///
/// Token log-likelihoods and stated confidence are drawn from distributions
/// that correct agents see shifted by `prior_separation`.
///
/// All randomness derives from `(seed, question id, agent or event index)`,
/// so results do not depend on scheduling.
#[derive(Debug, Clone)]
pub struct SimulatedBackend {
    params: SimParams,
    seed: u64,
}

const ANSWER_ONLY_TOKENS: u64 = 12;

impl SimulatedBackend {
    pub fn new(params: SimParams, seed: u64) -> Result<Self, BackendError> {
        params
            .validate()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(Self { params, seed })
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    fn gold<'q>(&self, question: &'q Question) -> Result<&'q AnswerLabel, BackendError> {
        question.gold_answer.as_ref().ok_or_else(|| {
            BackendError::Config(format!(
                "simulated backend needs a gold answer for {}",
                question.id
            ))
        })
    }

    /// The question's pool of wrong answers, none equivalent to gold.
    pub fn wrong_answers(&self, gold: &AnswerLabel) -> Vec<AnswerLabel> {
        (1..)
            .map(|k| AnswerLabel::new(format!("alt-{k}")))
            .filter(|a| !answers_equal(a, gold))
            .take(self.params.answer_pool_size)
            .collect()
    }

    fn question_tokens(&self, question: &Question) -> u64 {
        let mut rng = seed::stream(self.seed, "question", &question.id, &[]);
        draw_count(
            &mut rng,
            self.params.question_tokens_mean,
            self.params.question_tokens_sd,
            1,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn synthesize(
        &self,
        rng: &mut ChaCha8Rng,
        question: &Question,
        agent_id: usize,
        turn: u32,
        answer: AnswerLabel,
        correct: bool,
        input_tokens: u64,
    ) -> AgentResponse {
        let p = &self.params;
        let shift = if correct { p.prior_separation } else { 0.0 };

        let loglik = normal(p.loglik_mean + shift, p.loglik_sd);
        let token_logliks: Vec<f64> = (0..p.logprob_tokens)
            .map(|_| loglik.sample(rng).min(0.0))
            .collect();

        let conf = normal(
            p.confidence_mean + p.confidence_gain * shift,
            p.confidence_sd,
        );
        let confidence = (conf.sample(rng).clamp(0.0, 1.0) * 1000.0).round() / 1000.0;

        let output_tokens = draw_count(
            rng,
            p.output_tokens_mean,
            p.output_tokens_sd,
            p.logprob_tokens as u64,
        );

        let reasoning = format!(
            "Agent {agent_id} turn {turn} on {}: worked solution.\nAnswer: {}\nConfidence: {confidence:.3}",
            question.id,
            answer.raw()
        );
        AgentResponse {
            agent_id,
            turn,
            reasoning,
            answer,
            token_logliks,
            input_tokens,
            output_tokens,
            self_confidence: Some(confidence),
        }
    }

    fn other_wrong(
        &self,
        rng: &mut ChaCha8Rng,
        pool: &[AnswerLabel],
        current: &AnswerLabel,
    ) -> AnswerLabel {
        let choices: Vec<&AnswerLabel> =
            pool.iter().filter(|a| !answers_equal(a, current)).collect();
        choices[rng.random_range(0..choices.len())].clone()
    }
}

fn normal(mean: f64, sd: f64) -> Normal<f64> {
    Normal::new(mean, sd).expect("validated standard deviation")
}

fn draw_count(rng: &mut ChaCha8Rng, mean: f64, sd: f64, floor: u64) -> u64 {
    let v = normal(mean, sd).sample(rng).round();
    if v.is_finite() && v > floor as f64 {
        v as u64
    } else {
        floor
    }
}

impl Backend for SimulatedBackend {
    fn generate_initial(
        &self,
        question: &Question,
        agent_id: usize,
    ) -> Result<AgentResponse, BackendError> {
        let gold = self.gold(question)?;
        let pool = self.wrong_answers(gold);
        let mut rng = seed::stream(self.seed, "initial", &question.id, &[agent_id as u64]);
        let correct = rng.random_bool(self.params.p_correct);
        let answer = if correct {
            gold.clone()
        } else {
            pool[rng.random_range(0..pool.len())].clone()
        };
        let input = self.question_tokens(question);
        Ok(self.synthesize(&mut rng, question, agent_id, 0, answer, correct, input))
    }

    fn debate(&self, request: &DebateRequest<'_>) -> Result<AgentResponse, BackendError> {
        if request.senders.is_empty() {
            return Err(BackendError::NoPeers);
        }
        let question = request.question;
        let gold = self.gold(question)?;
        let pool = self.wrong_answers(gold);
        let current_response = request.receiver_current().ok_or_else(|| {
            BackendError::Config(format!(
                "receiver {} has no prior response",
                request.receiver_id
            ))
        })?;
        let mut rng = seed::stream(
            self.seed,
            "debate",
            &question.id,
            &[request.event_index as u64, request.receiver_id as u64],
        );

        let mut senders: Vec<&AgentResponse> = request.senders.iter().collect();
        senders.sort_by_key(|s| s.agent_id);

        let mut current = current_response.answer.clone();
        for sender in senders {
            let receiver_correct = answers_equal(&current, gold);
            let sender_correct = answers_equal(&sender.answer, gold);
            let keep = rng.random_bool(self.params.retention.get(receiver_correct, sender_correct));
            if keep {
                continue;
            }
            let disagrees = !answers_equal(&sender.answer, &current);
            current = if disagrees && rng.random_bool(self.params.adopt_prob) {
                sender.answer.clone()
            } else {
                self.other_wrong(&mut rng, &pool, &current)
            };
        }

        let context: u64 = request
            .receiver_history
            .iter()
            .map(|r| r.output_tokens)
            .sum::<u64>()
            + request.senders.iter().map(|r| r.output_tokens).sum::<u64>()
            + ANSWER_ONLY_TOKENS * request.answer_only.len() as u64;
        let input = self.question_tokens(question) + self.params.hint_tokens + context;
        let correct = answers_equal(&current, gold);
        Ok(self.synthesize(
            &mut rng,
            question,
            request.receiver_id,
            request.turn,
            current,
            correct,
            input,
        ))
    }

    fn name(&self) -> &'static str {
        "simulated"
    }
}
