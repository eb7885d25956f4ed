//! Difficulty-stratified ranking of per-agent signals: for each bucket of
//! questions (by how many agents start out correct) and each signal, how
//! often the top-ranked agent is correct.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::answer::{answers_equal, AnswerLabel};
use crate::backend::{Backend, DebateRequest};
use crate::orchestrator::RunError;
use crate::signals::{svr, PriorSignalKind, SignalError};
use crate::types::{AgentResponse, Method, Question};

use super::dataset::is_unanimous;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankSignal {
    MinLl,
    Ppl,
    Conf,
    Svr,
}

impl RankSignal {
    pub const ALL: [RankSignal; 4] = [Self::MinLl, Self::Ppl, Self::Conf, Self::Svr];

    pub fn name(self) -> &'static str {
        match self {
            Self::MinLl => "min_ll",
            Self::Ppl => "ppl",
            Self::Conf => "conf",
            Self::Svr => "svr",
        }
    }

    pub fn prior(self) -> Option<PriorSignalKind> {
        match self {
            Self::MinLl => Some(PriorSignalKind::MinLl),
            Self::Ppl => Some(PriorSignalKind::Ppl),
            Self::Conf => Some(PriorSignalKind::Conf),
            Self::Svr => None,
        }
    }
}

impl fmt::Display for RankSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Difficulty bucket: number of agents correct before debate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Bucket {
    One,
    Two,
    Three,
    FourPlus,
}

impl Bucket {
    pub const ALL: [Bucket; 4] = [Self::One, Self::Two, Self::Three, Self::FourPlus];

    pub fn of(correct_agents: usize) -> Option<Bucket> {
        match correct_agents {
            0 => None,
            1 => Some(Self::One),
            2 => Some(Self::Two),
            3 => Some(Self::Three),
            _ => Some(Self::FourPlus),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::One => "1",
            Self::Two => "2",
            Self::Three => "3",
            Self::FourPlus => "4+",
        }
    }
}

/// Per-question input: which agents start correct, and per signal each
/// agent's value oriented so that larger is better.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuestionSignals {
    pub question_id: String,
    pub unanimous: bool,
    pub correct: Vec<bool>,
    pub values: BTreeMap<RankSignal, Vec<f64>>,
}

impl QuestionSignals {
    /// Prior signals measured on the initial responses plus optional
    /// survival rates.
    pub fn from_initials(
        question_id: &str,
        initials: &[AgentResponse],
        gold: &AnswerLabel,
        svr_values: Option<Vec<f64>>,
    ) -> Result<Self, SignalError> {
        let mut values = BTreeMap::new();
        for kind in PriorSignalKind::ALL {
            let oriented = initials
                .iter()
                .map(|r| kind.measure(r).map(|v| v.oriented()))
                .collect::<Result<Vec<f64>, _>>()?;
            let signal = match kind {
                PriorSignalKind::MinLl => RankSignal::MinLl,
                PriorSignalKind::Ppl => RankSignal::Ppl,
                PriorSignalKind::Conf => RankSignal::Conf,
            };
            values.insert(signal, oriented);
        }
        if let Some(v) = svr_values {
            values.insert(RankSignal::Svr, v);
        }
        Ok(Self {
            question_id: question_id.to_string(),
            unanimous: is_unanimous(initials),
            correct: initials
                .iter()
                .map(|r| answers_equal(&r.answer, gold))
                .collect(),
            values,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumRow {
    pub bucket: Bucket,
    pub signal: RankSignal,
    pub questions: usize,
    pub top_correct_pct: f64,
}

/// Index of the largest value, ties to the lowest index. NaN never wins.
pub fn top_ranked(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        if best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Top-ranked-correct percentage per (bucket, signal). Unanimous questions
/// and questions with no correct agent are excluded; empty buckets and
/// signals absent from every question of a bucket produce no row.
pub fn stratify_and_rank(data: &[QuestionSignals]) -> Vec<StratumRow> {
    let mut tallies: BTreeMap<(Bucket, RankSignal), (usize, usize)> = BTreeMap::new();
    for q in data {
        if q.unanimous {
            continue;
        }
        let Some(bucket) = Bucket::of(q.correct.iter().filter(|&&c| c).count()) else {
            continue;
        };
        for (&signal, values) in &q.values {
            let entry = tallies.entry((bucket, signal)).or_default();
            entry.0 += 1;
            if top_ranked(values).is_some_and(|i| q.correct.get(i).copied().unwrap_or(false)) {
                entry.1 += 1;
            }
        }
    }
    tallies
        .into_iter()
        .map(|((bucket, signal), (questions, hits))| StratumRow {
            bucket,
            signal,
            questions,
            top_correct_pct: 100.0 * hits as f64 / questions as f64,
        })
        .collect()
}

/// Survival rates from a pairwise decomposition of one all-to-all round:
/// every agent receives each peer's initial output in a separate debate,
/// so each agent has `N - 1` debates.
pub fn pairwise_svr(
    question: &Question,
    initials: &[AgentResponse],
    backend: &dyn Backend,
) -> Result<Vec<f64>, RunError> {
    let n = initials.len();
    let mut rates = Vec::with_capacity(n);
    let mut event_index = 0;
    for receiver in 0..n {
        let history = std::slice::from_ref(&initials[receiver]);
        let mut retained = 0u32;
        let mut changed = 0u32;
        for sender in (0..n).filter(|&s| s != receiver) {
            let request = DebateRequest {
                method: Method::Mad,
                question,
                receiver_id: receiver,
                receiver_history: history,
                senders: std::slice::from_ref(&initials[sender]),
                answer_only: &[],
                event_index,
                turn: 1,
            };
            event_index += 1;
            let post = backend
                .debate(&request)
                .map_err(|e| RunError::new(Method::Mad, question, e))?;
            if answers_equal(&post.answer, &initials[receiver].answer) {
                retained += 1;
            } else {
                changed += 1;
            }
        }
        let rate = svr(retained + changed, retained, changed)
            .map_err(|e| RunError::new(Method::Mad, question, e))?;
        rates.push(rate);
    }
    Ok(rates)
}

/// Tab-separated table: one line per bucket, one column per signal.
pub fn format_strata_tsv(rows: &[StratumRow]) -> String {
    let signals: Vec<RankSignal> = RankSignal::ALL
        .into_iter()
        .filter(|s| rows.iter().any(|r| r.signal == *s))
        .collect();
    let mut out = String::from("bucket\tquestions");
    for s in &signals {
        out.push('\t');
        out.push_str(s.name());
    }
    out.push('\n');
    for bucket in Bucket::ALL {
        let in_bucket: Vec<&StratumRow> = rows.iter().filter(|r| r.bucket == bucket).collect();
        let Some(first) = in_bucket.first() else {
            continue;
        };
        out.push_str(&format!("{}\t{}", bucket.label(), first.questions));
        for s in &signals {
            match in_bucket.iter().find(|r| r.signal == *s) {
                Some(r) => out.push_str(&format!("\t{:.2}", r.top_correct_pct)),
                None => out.push('\t'),
            }
        }
        out.push('\n');
    }
    out
}
