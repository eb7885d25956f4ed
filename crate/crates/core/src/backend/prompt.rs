use serde::{Deserialize, Serialize};

use super::BackendError;
use crate::answer::AnswerLabel;
use crate::types::{AgentResponse, Question};

/// Wording of generated prompts. Peer solutions are always listed in
/// ascending agent id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptTemplate {
    pub answer_instruction: String,
    pub debate_hint: String,
    pub confidence_instruction: String,
    pub ask_confidence: bool,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            answer_instruction:
                "Give your final answer on the last line in the form 'Answer: <answer>'."
                    .to_string(),
            debate_hint: "Using the solutions from other agents as additional information, \
                re-examine the problem and your own solution step by step."
                .to_string(),
            confidence_instruction: "State your confidence as 'Confidence: <0-1>'.".to_string(),
            ask_confidence: false,
        }
    }
}

impl PromptTemplate {
    fn closing(&self, out: &mut String) {
        out.push_str(&self.answer_instruction);
        if self.ask_confidence {
            out.push(' ');
            out.push_str(&self.confidence_instruction);
        }
    }
}

pub fn format_initial_prompt(question: &Question, template: &PromptTemplate) -> String {
    let mut out = String::with_capacity(question.text.len() + 128);
    out.push_str(question.text.trim_end());
    out.push_str("\n\n");
    template.closing(&mut out);
    out
}

/// Question, the receiver's own earlier turns, every peer's solution and the
/// reflection instruction, in that order.
pub fn format_debate_prompt(
    question: &Question,
    receiver_history: &[AgentResponse],
    peer_outputs: &[AgentResponse],
    answer_only: &[AgentResponse],
    template: &PromptTemplate,
) -> Result<String, BackendError> {
    if peer_outputs.is_empty() {
        return Err(BackendError::NoPeers);
    }
    let mut out = String::new();
    out.push_str(question.text.trim_end());
    out.push_str("\n\n");

    if !receiver_history.is_empty() {
        out.push_str("Your previous solutions:\n");
        for turn in receiver_history {
            out.push_str(&format!(
                "[Your turn {}]\n{}\n\n",
                turn.turn,
                turn.reasoning.trim_end()
            ));
        }
    }

    let mut peers: Vec<&AgentResponse> = peer_outputs.iter().collect();
    peers.sort_by_key(|r| r.agent_id);
    out.push_str("These are the solutions to the problem from other agents:\n");
    for peer in peers {
        out.push_str(&format!(
            "[Agent {}]\n{}\n\n",
            peer.agent_id,
            peer.reasoning.trim_end()
        ));
    }

    if !answer_only.is_empty() {
        let mut others: Vec<&AgentResponse> = answer_only.iter().collect();
        others.sort_by_key(|r| r.agent_id);
        out.push_str("Final answers from agents in other groups:\n");
        for other in others {
            out.push_str(&format!(
                "[Agent {}] Answer: {}\n",
                other.agent_id,
                other.answer.raw()
            ));
        }
        out.push('\n');
    }

    out.push_str(&template.debate_hint);
    out.push(' ');
    template.closing(&mut out);
    Ok(out)
}

/// Answer from the last line of the form `Answer: <...>` (also accepting
/// `Final answer:` and markdown emphasis). No such line yields EMPTY.
pub fn extract_answer(text: &str) -> AnswerLabel {
    for line in text.lines().rev() {
        if let Some(rest) = answer_payload(line) {
            return AnswerLabel::new(rest);
        }
    }
    AnswerLabel::empty()
}

fn answer_payload(line: &str) -> Option<&str> {
    let trimmed =
        line.trim_start_matches(|c: char| c.is_whitespace() || c == '*' || c == '#' || c == '>');
    let lower = trimmed.to_ascii_lowercase();
    let after_final = if lower.starts_with("final ") { 6 } else { 0 };
    if !lower[after_final..].starts_with("answer") {
        return None;
    }
    let rest = &trimmed[after_final + "answer".len()..];
    let rest = rest.trim_start_matches(['*', ' ']);
    let rest = rest.strip_prefix(':')?;
    Some(rest.trim_matches(|c: char| c.is_whitespace() || c == '*'))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resp(agent_id: usize, reasoning: &str) -> AgentResponse {
        AgentResponse {
            agent_id,
            turn: 0,
            reasoning: reasoning.to_string(),
            answer: extract_answer(reasoning),
            token_logliks: vec![-0.1],
            input_tokens: 1,
            output_tokens: 1,
            self_confidence: None,
        }
    }

    fn question() -> Question {
        Question::new("q1", "What is 6 * 7?", Some("42".into())).unwrap()
    }

    #[test]
    fn single_peer_appears_once() {
        let peer = resp(2, "peer reasoning XYZ\nAnswer: 41");
        let prompt = format_debate_prompt(
            &question(),
            &[resp(0, "mine\nAnswer: 42")],
            &[peer],
            &[],
            &PromptTemplate::default(),
        )
        .unwrap();
        assert_eq!(prompt.matches("peer reasoning XYZ").count(), 1);
        assert!(prompt.starts_with("What is 6 * 7?"));
        assert!(prompt.contains("Using the solutions from other agents"));
    }

    #[test]
    fn peers_are_ordered_by_id() {
        let peers = [resp(3, "third agent text"), resp(1, "first agent text")];
        let prompt =
            format_debate_prompt(&question(), &[], &peers, &[], &PromptTemplate::default())
                .unwrap();
        let p1 = prompt.find("first agent text").unwrap();
        let p3 = prompt.find("third agent text").unwrap();
        assert!(p1 < p3);
    }

    #[test]
    fn no_peers_is_an_error() {
        assert_eq!(
            format_debate_prompt(&question(), &[], &[], &[], &PromptTemplate::default()),
            Err(BackendError::NoPeers)
        );
    }

    #[test]
    fn confidence_instruction_only_when_requested() {
        let mut t = PromptTemplate::default();
        assert!(!format_initial_prompt(&question(), &t).contains("Confidence"));
        t.ask_confidence = true;
        assert!(format_initial_prompt(&question(), &t).contains("Confidence: <0-1>"));
    }

    #[test]
    fn answer_extraction_uses_last_answer_line() {
        assert_eq!(
            extract_answer("Answer: 3\nthen\nAnswer: 5").canonical(),
            "5"
        );
        assert_eq!(extract_answer("**Final Answer:** (b)").canonical(), "B");
        assert_eq!(extract_answer("the answer is 7").canonical(), "");
        assert!(extract_answer("").is_empty());
        assert!(extract_answer("Answer:").is_empty());
        assert_eq!(extract_answer("  answer : 007 ").canonical(), "7");
    }
}
