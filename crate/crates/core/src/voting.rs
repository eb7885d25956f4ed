//! Answer clustering and majority votes.

use crate::answer::AnswerLabel;

/// Answer clusters in order of first occurrence, each with its member indices.
pub fn clusters<'a, I>(answers: I) -> Vec<(&'a AnswerLabel, Vec<usize>)>
where
    I: IntoIterator<Item = &'a AnswerLabel>,
{
    let mut out: Vec<(&'a AnswerLabel, Vec<usize>)> = Vec::new();
    for (i, answer) in answers.into_iter().enumerate() {
        match out.iter_mut().find(|(rep, _)| rep.equivalent(answer)) {
            Some((_, members)) => members.push(i),
            None => out.push((answer, vec![i])),
        }
    }
    out
}

/// Plurality answer; ties go to the tied answer held by the lowest index.
pub fn plurality<'a, I>(answers: I) -> Option<&'a AnswerLabel>
where
    I: IntoIterator<Item = &'a AnswerLabel>,
{
    let groups = clusters(answers);
    let best = groups.iter().map(|(_, m)| m.len()).max()?;
    // clusters are ordered by first occurrence, so the first max wins ties
    groups
        .into_iter()
        .find(|(_, m)| m.len() == best)
        .map(|(a, _)| a)
}

/// Largest cluster and its size; ties go to the earliest cluster.
pub fn largest_cluster<'a, I>(answers: I) -> Option<(&'a AnswerLabel, usize)>
where
    I: IntoIterator<Item = &'a AnswerLabel>,
{
    let groups = clusters(answers);
    let best = groups.iter().map(|(_, m)| m.len()).max()?;
    groups
        .into_iter()
        .find(|(_, m)| m.len() == best)
        .map(|(a, m)| (a, m.len()))
}

/// An agent's fallback vote: the unique mode of its post-debate answers,
/// otherwise (tie or empty history) its pre-debate answer.
pub fn agent_vote<'a>(
    post_debate_answers: &'a [AnswerLabel],
    pre_debate: &'a AnswerLabel,
) -> &'a AnswerLabel {
    let groups = clusters(post_debate_answers);
    let Some(best) = groups.iter().map(|(_, m)| m.len()).max() else {
        return pre_debate;
    };
    let mut top = groups.iter().filter(|(_, m)| m.len() == best);
    match (top.next(), top.next()) {
        (Some((answer, _)), None) => answer,
        _ => pre_debate,
    }
}

/// Majority over per-agent votes. A tie among the most-voted answers is
/// broken by how many agents held each one before debate; a remaining tie
/// goes to the option voted for by the lowest agent id.
pub fn majority_with_pre_debate_tiebreak<'a>(
    votes: &[&'a AnswerLabel],
    pre_debate: &[AnswerLabel],
) -> &'a AnswerLabel {
    assert!(!votes.is_empty(), "majority over zero votes");
    let groups = clusters(votes.iter().copied());
    let best = groups.iter().map(|(_, m)| m.len()).max().unwrap_or(0);
    let tied: Vec<&(&AnswerLabel, Vec<usize>)> =
        groups.iter().filter(|(_, m)| m.len() == best).collect();
    if tied.len() == 1 {
        return tied[0].0;
    }
    let pre_count = |a: &AnswerLabel| pre_debate.iter().filter(|y| y.equivalent(a)).count();
    let best_pre = tied.iter().map(|(a, _)| pre_count(a)).max().unwrap_or(0);
    let finalists: Vec<&&(&AnswerLabel, Vec<usize>)> = tied
        .iter()
        .filter(|(a, _)| pre_count(a) == best_pre)
        .collect();
    // first agent whose vote is a finalist
    votes
        .iter()
        .find(|v| finalists.iter().any(|(a, _)| a.equivalent(v)))
        .copied()
        .unwrap_or(finalists[0].0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(xs: &[&str]) -> Vec<AnswerLabel> {
        xs.iter().map(|x| AnswerLabel::new(*x)).collect()
    }

    #[test]
    fn plurality_and_ties() {
        let a = labels(&["A", "A", "B"]);
        assert_eq!(plurality(&a).unwrap().canonical(), "A");
        let t = labels(&["B", "A", "A", "B"]);
        assert_eq!(plurality(&t).unwrap().canonical(), "B");
        assert!(plurality(&[]).is_none());
    }

    #[test]
    fn agent_vote_rules() {
        let y = AnswerLabel::new("B");
        assert_eq!(agent_vote(&labels(&["B", "A", "A"]), &y).canonical(), "A");
        assert_eq!(agent_vote(&labels(&["C", "A"]), &y).canonical(), "B");
        assert_eq!(agent_vote(&[], &y).canonical(), "B");
    }

    #[test]
    fn overall_tiebreak_by_pre_debate_majority() {
        let votes = labels(&["A", "B", "B", "A"]);
        let refs: Vec<&AnswerLabel> = votes.iter().collect();
        let pre = labels(&["A", "B", "B", "C"]);
        assert_eq!(
            majority_with_pre_debate_tiebreak(&refs, &pre).canonical(),
            "B"
        );
        let pre = labels(&["C", "C", "D", "D"]);
        assert_eq!(
            majority_with_pre_debate_tiebreak(&refs, &pre).canonical(),
            "A"
        );
    }
}
