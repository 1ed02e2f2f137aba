//! Hand-written difficulty edits. Hardening tries, in order: a more
//! relevant wrong candidate, one more candidate, one fewer edge at the
//! blank. Easing tries: one more edge at the blank, one fewer candidate, a
//! less relevant wrong candidate. The answer and blank never move.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{accuracy, Eta, RoundOutcome};
use crate::kg::{Direction, EntityId, KnowledgeGraph};
use crate::questions::{is_accidentally_correct, neighborhood, relevance, Question, SubgraphEdge};

const DRAW_ATTEMPTS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rule {
    /// More relevant wrong candidate.
    MoreRelevant,
    /// One more candidate.
    MoreCandidates,
    /// One fewer edge at the blank.
    FewerBlankEdges,
    /// One more edge at the blank.
    MoreBlankEdges,
    /// One fewer candidate.
    FewerCandidates,
    /// Less relevant wrong candidate.
    LessRelevant,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::MoreRelevant => "r3+",
            Rule::MoreCandidates => "r2+",
            Rule::FewerBlankEdges => "r1+",
            Rule::MoreBlankEdges => "r1-",
            Rule::FewerCandidates => "r2-",
            Rule::LessRelevant => "r3-",
        })
    }
}

fn admissible(kg: &KnowledgeGraph, q: &Question, e: EntityId) -> bool {
    e != q.removed() && !q.candidates.contains(&e) && !is_accidentally_correct(kg, &q.subgraph, e)
}

/// Admissible entities of the highest relevance tier above `floor`.
fn best_tier_above(kg: &KnowledgeGraph, q: &Question, floor: u8) -> Vec<EntityId> {
    let sg = &q.subgraph;
    if floor < 2 {
        let shown: Vec<EntityId> = sg.visible().filter(|&e| admissible(kg, q, e)).collect();
        if !shown.is_empty() {
            return shown;
        }
    }
    if floor < 1 {
        return neighborhood(kg, sg)
            .into_iter()
            .filter(|&e| admissible(kg, q, e))
            .collect();
    }
    Vec::new()
}

fn harden_relevance<R: Rng + ?Sized>(
    kg: &KnowledgeGraph,
    q: &Question,
    rng: &mut R,
) -> Option<Question> {
    let mut slots: Vec<usize> = (0..q.candidates.len())
        .filter(|&i| q.candidates[i] != q.removed())
        .collect();
    slots.shuffle(rng);
    for i in slots {
        let old = relevance(kg, &q.subgraph, q.candidates[i]);
        if let Some(&e) = best_tier_above(kg, q, old).choose(rng) {
            let mut out = q.clone();
            let mut c = out.candidates.clone();
            c[i] = e;
            out.set_candidates(c);
            return Some(out);
        }
    }
    None
}

fn add_candidate<R: Rng + ?Sized>(
    kg: &KnowledgeGraph,
    q: &Question,
    max_candidates: usize,
    rng: &mut R,
) -> Option<Question> {
    if q.candidates.len() >= max_candidates {
        return None;
    }
    let answer = q.removed();
    let extra = if !q.candidates.contains(&answer) {
        // a wrong-candidate judgment becomes a two-way choice
        answer
    } else {
        let tier = best_tier_above(kg, q, 0);
        match tier.choose(rng) {
            Some(&e) => e,
            None => draw_lower(kg, q, 3, rng)?,
        }
    };
    let mut c = q.candidates.clone();
    let at = rng.gen_range(0..=c.len());
    c.insert(at, extra);
    let mut out = q.clone();
    out.set_candidates(c);
    Some(out)
}

/// Uniform admissible entity with relevance strictly below `ceiling`.
fn draw_lower<R: Rng + ?Sized>(
    kg: &KnowledgeGraph,
    q: &Question,
    ceiling: u8,
    rng: &mut R,
) -> Option<EntityId> {
    let n = kg.num_entities() as u32;
    (0..DRAW_ATTEMPTS)
        .map(|_| EntityId(rng.gen_range(0..n)))
        .find(|&e| admissible(kg, q, e) && relevance(kg, &q.subgraph, e) < ceiling)
}

fn still_valid(kg: &KnowledgeGraph, q: &Question) -> bool {
    q.wrong_candidates()
        .all(|c| !is_accidentally_correct(kg, &q.subgraph, c))
}

fn drop_blank_edge<R: Rng + ?Sized>(
    kg: &KnowledgeGraph,
    q: &Question,
    rng: &mut R,
) -> Option<Question> {
    let sg = &q.subgraph;
    let b = sg.blank();
    let mut incident: Vec<usize> = (0..sg.edges().len())
        .filter(|&i| {
            let e = sg.edges()[i];
            e.from == b || e.to == b
        })
        .collect();
    if incident.len() < 2 {
        return None;
    }
    incident.shuffle(rng);
    for i in incident {
        if !crate::questions::connected_without(sg.len(), sg.edges(), Some(i)) {
            continue;
        }
        let mut out = q.clone();
        out.subgraph.remove_edge(i);
        if still_valid(kg, &out) {
            return Some(out);
        }
    }
    None
}

fn add_blank_edge<R: Rng + ?Sized>(
    kg: &KnowledgeGraph,
    q: &Question,
    rng: &mut R,
) -> Option<Question> {
    let sg = &q.subgraph;
    let answer = q.removed();
    let wrong: Vec<EntityId> = q.wrong_candidates().collect();
    let before: Vec<u8> = wrong.iter().map(|&c| relevance(kg, sg, c)).collect();
    let mut options: Vec<_> = kg
        .neighbors(answer)
        .iter()
        .filter(|n| {
            n.entity != answer && !sg.contains_entity(n.entity) && !q.candidates.contains(&n.entity)
        })
        .collect();
    options.shuffle(rng);
    for n in options {
        let mut out = q.clone();
        let idx = out.subgraph.push_node(n.entity);
        let b = out.subgraph.blank();
        let (from, to) = match n.direction {
            Direction::Outgoing => (b, idx),
            Direction::Incoming => (idx, b),
        };
        out.subgraph.push_edge(SubgraphEdge {
            from,
            relation: n.relation,
            to,
        });
        // showing a new node must not make any wrong candidate more relevant
        let raised = wrong
            .iter()
            .zip(&before)
            .any(|(&c, &r)| relevance(kg, &out.subgraph, c) > r);
        if !raised {
            return Some(out);
        }
    }
    None
}

fn drop_candidate<R: Rng + ?Sized>(
    kg: &KnowledgeGraph,
    q: &Question,
    rng: &mut R,
) -> Option<Question> {
    if q.candidates.len() < 2 {
        return None;
    }
    let answer = q.removed();
    let top = q
        .wrong_candidates()
        .map(|c| relevance(kg, &q.subgraph, c))
        .max()?;
    let most: Vec<EntityId> = q
        .wrong_candidates()
        .filter(|&c| relevance(kg, &q.subgraph, c) == top)
        .collect();
    let gone = *most.choose(rng)?;
    let c: Vec<EntityId> = q
        .candidates
        .iter()
        .copied()
        .filter(|&c| c != gone)
        .collect();
    debug_assert!(c.contains(&answer));
    let mut out = q.clone();
    out.set_candidates(c);
    Some(out)
}

fn ease_relevance<R: Rng + ?Sized>(
    kg: &KnowledgeGraph,
    q: &Question,
    rng: &mut R,
) -> Option<Question> {
    let mut slots: Vec<(usize, u8)> = (0..q.candidates.len())
        .filter(|&i| q.candidates[i] != q.removed())
        .map(|i| (i, relevance(kg, &q.subgraph, q.candidates[i])))
        .filter(|&(_, r)| r > 0)
        .collect();
    slots.shuffle(rng);
    for (i, old) in slots {
        if let Some(e) = draw_lower(kg, q, old, rng) {
            let mut out = q.clone();
            let mut c = out.candidates.clone();
            c[i] = e;
            out.set_candidates(c);
            return Some(out);
        }
    }
    None
}

/// First applicable of r3+, r2+ (up to `max_candidates`), r1+. `None`
/// means no rule applied and the question comes back unchanged.
pub fn rule_harden<R: Rng + ?Sized>(
    kg: &KnowledgeGraph,
    q: &Question,
    max_candidates: usize,
    rng: &mut R,
) -> (Question, Option<Rule>) {
    if let Some(out) = harden_relevance(kg, q, rng) {
        return (out, Some(Rule::MoreRelevant));
    }
    if let Some(out) = add_candidate(kg, q, max_candidates, rng) {
        return (out, Some(Rule::MoreCandidates));
    }
    if let Some(out) = drop_blank_edge(kg, q, rng) {
        return (out, Some(Rule::FewerBlankEdges));
    }
    (q.clone(), None)
}

/// First applicable of r1-, r2- (down to one candidate), r3-.
pub fn rule_ease<R: Rng + ?Sized>(
    kg: &KnowledgeGraph,
    q: &Question,
    rng: &mut R,
) -> (Question, Option<Rule>) {
    if let Some(out) = add_blank_edge(kg, q, rng) {
        return (out, Some(Rule::MoreBlankEdges));
    }
    if let Some(out) = drop_candidate(kg, q, rng) {
        return (out, Some(Rule::FewerCandidates));
    }
    if let Some(out) = ease_relevance(kg, q, rng) {
        return (out, Some(Rule::LessRelevant));
    }
    (q.clone(), None)
}

/// Above the target interval the correctly answered questions are
/// hardened, below it the wrongly answered ones are eased; inside it the
/// round is returned as is. Output keeps the round's size.
pub fn rule_tune<R: Rng + ?Sized>(
    kg: &KnowledgeGraph,
    o: &RoundOutcome,
    eta: Eta,
    max_candidates: usize,
    rng: &mut R,
) -> Result<Vec<Question>, super::TuneError> {
    let acc = accuracy(o)?;
    let mut noops = 0usize;
    let out: Vec<Question> = if acc > eta.hi {
        o.q_minus
            .iter()
            .cloned()
            .chain(o.q_plus.iter().map(|q| {
                let (h, rule) = rule_harden(kg, q, max_candidates, rng);
                noops += usize::from(rule.is_none());
                h
            }))
            .collect()
    } else if acc < eta.lo {
        o.q_plus
            .iter()
            .cloned()
            .chain(o.q_minus.iter().map(|q| {
                let (e, rule) = rule_ease(kg, q, rng);
                noops += usize::from(rule.is_none());
                e
            }))
            .collect()
    } else {
        o.q_plus.iter().chain(&o.q_minus).cloned().collect()
    };
    if noops > 0 {
        log::debug!("{noops} questions had no applicable rule");
    }
    Ok(out)
}
