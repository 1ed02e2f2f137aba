//! Question-difficulty tuning: given which questions the answer model got
//! right, produce the next question set of the same size.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{EntityId, KnowledgeGraph};
use crate::questions::{difficulty_features, DifficultyVector, Qid, Question};

pub mod bayes;
pub mod retrieval;
pub mod rules;

pub use bayes::{bayes_fit, bayes_predict, bayes_tune, FeatureKind, Label, NaiveBayes};
pub use retrieval::{
    combined_scores, fit_gaussian_query, knowledge_point_query, point_factor, rank, retrieval_tune,
    sim_l, sim_v, GaussianQuery, SignedQuery,
};
pub use rules::{rule_ease, rule_harden, rule_tune, Rule};

#[derive(Debug, Error, PartialEq)]
pub enum TuneError {
    #[error("round has no questions")]
    EmptyRound,
    #[error("class {0:?} has no questions")]
    EmptyClass(Label),
    #[error("need at least {needed} samples, have {found}")]
    TooFewSamples { needed: usize, found: usize },
    #[error("question base holds {available} questions, {requested} requested")]
    BaseTooSmall { requested: usize, available: usize },
    #[error("question base is empty")]
    EmptyBase,
    #[error("no relevant questions recorded")]
    NoRelevant,
    #[error("gamma {0} outside [0, 1]")]
    InvalidGamma(f64),
    #[error("question {0:?} is not in the question base")]
    UnknownQid(Qid),
}

/// Target accuracy interval, both ends inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eta {
    pub lo: f64,
    pub hi: f64,
}

impl Eta {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, acc: f64) -> bool {
        self.lo <= acc && acc <= self.hi
    }

    pub fn midpoint(&self) -> f64 {
        (self.lo + self.hi) / 2.0
    }

    /// How many of `n` questions should be ones the model answers
    /// correctly: `n * midpoint`, halves rounded up.
    pub fn positive_share(&self, n: usize) -> usize {
        round_half_up(n as f64 * self.midpoint()).min(n)
    }
}

impl Default for Eta {
    fn default() -> Self {
        Self { lo: 0.5, hi: 0.52 }
    }
}

pub(crate) fn round_half_up(x: f64) -> usize {
    // products like n * 0.51 land a hair off the exact half
    let f = x.floor();
    if x - f >= 0.5 - 1e-9 {
        f as usize + 1
    } else {
        f as usize
    }
}

/// Questions answered correctly and wrongly in one round.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RoundOutcome {
    pub q_plus: Vec<Question>,
    pub q_minus: Vec<Question>,
}

impl RoundOutcome {
    pub fn split(questions: &[Question], correct: &[bool]) -> Self {
        assert_eq!(questions.len(), correct.len());
        let mut o = Self::default();
        for (q, &ok) in questions.iter().zip(correct) {
            if ok {
                o.q_plus.push(q.clone());
            } else {
                o.q_minus.push(q.clone());
            }
        }
        o
    }

    pub fn len(&self) -> usize {
        self.q_plus.len() + self.q_minus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn qids(&self) -> BTreeSet<Qid> {
        self.q_plus
            .iter()
            .chain(&self.q_minus)
            .map(|q| q.qid)
            .collect()
    }
}

pub fn accuracy(o: &RoundOutcome) -> Result<f64, TuneError> {
    if o.is_empty() {
        return Err(TuneError::EmptyRound);
    }
    Ok(o.q_plus.len() as f64 / o.len() as f64)
}

/// Entities shown in a question; the units of the knowledge-point query.
pub fn knowledge_points(q: &Question) -> BTreeSet<EntityId> {
    q.subgraph.visible().collect()
}

/// What the tuners remember about one answered question.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub qid: Qid,
    pub features: DifficultyVector,
    pub points: BTreeSet<EntityId>,
}

impl Instance {
    pub fn of(kg: &KnowledgeGraph, q: &Question) -> Self {
        Self {
            qid: q.qid,
            features: difficulty_features(kg, q),
            points: knowledge_points(q),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RoundRecord {
    pub plus: Vec<Instance>,
    pub minus: Vec<Instance>,
}

/// Which pool a query is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

/// Relevance counts for one sign: `big_r` distinct relevant questions,
/// `r[v]` of them containing `v`; `big_n` and `n[v]` over the question base.
#[derive(Debug, Clone, PartialEq)]
pub struct PointStats {
    pub big_r: usize,
    pub big_n: usize,
    pub r: HashMap<EntityId, usize>,
    pub n: HashMap<EntityId, usize>,
}

impl PointStats {
    pub fn r_of(&self, v: EntityId) -> usize {
        self.r.get(&v).copied().unwrap_or(0)
    }

    pub fn n_of(&self, v: EntityId) -> usize {
        self.n.get(&v).copied().unwrap_or(0)
    }
}

/// Question base with cached features plus every round's outcome.
#[derive(Debug, Clone)]
pub struct TunerHistory {
    base: Vec<Instance>,
    position: HashMap<Qid, usize>,
    n_counts: HashMap<EntityId, usize>,
    rounds: Vec<RoundRecord>,
}

impl TunerHistory {
    pub fn new(kg: &KnowledgeGraph, qb: &[Question]) -> Self {
        let base: Vec<Instance> = qb.iter().map(|q| Instance::of(kg, q)).collect();
        let position = base.iter().enumerate().map(|(i, b)| (b.qid, i)).collect();
        let mut n_counts = HashMap::new();
        for b in &base {
            for &v in &b.points {
                *n_counts.entry(v).or_insert(0) += 1;
            }
        }
        Self {
            base,
            position,
            n_counts,
            rounds: Vec::new(),
        }
    }

    pub fn base(&self) -> &[Instance] {
        &self.base
    }

    pub fn base_len(&self) -> usize {
        self.base.len()
    }

    pub fn instance(&self, qid: Qid) -> Option<&Instance> {
        self.position.get(&qid).map(|&i| &self.base[i])
    }

    pub fn rounds(&self) -> &[RoundRecord] {
        &self.rounds
    }

    pub fn last_round(&self) -> Option<&RoundRecord> {
        self.rounds.last()
    }

    pub fn record(&mut self, kg: &KnowledgeGraph, o: &RoundOutcome) {
        self.rounds.push(RoundRecord {
            plus: o.q_plus.iter().map(|q| Instance::of(kg, q)).collect(),
            minus: o.q_minus.iter().map(|q| Instance::of(kg, q)).collect(),
        });
    }

    /// Every recorded instance of one sign, across all rounds.
    pub fn pool(&self, sign: Sign) -> impl Iterator<Item = &Instance> {
        self.rounds.iter().flat_map(move |r| match sign {
            Sign::Plus => r.plus.iter(),
            Sign::Minus => r.minus.iter(),
        })
    }

    pub fn point_stats(&self, sign: Sign) -> PointStats {
        // the relevant set holds distinct questions; a later answer to the
        // same qid replaces an earlier one
        let mut latest: BTreeMap<Qid, &Instance> = BTreeMap::new();
        for inst in self.pool(sign) {
            latest.insert(inst.qid, inst);
        }
        let mut r = HashMap::new();
        for inst in latest.values() {
            for &v in &inst.points {
                *r.entry(v).or_insert(0) += 1;
            }
        }
        PointStats {
            big_r: latest.len(),
            big_n: self.base.len(),
            r,
            n: self.n_counts.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_basic() {
        let o = RoundOutcome::default();
        assert_eq!(accuracy(&o), Err(TuneError::EmptyRound));
    }

    #[test]
    fn eta_split_rounding() {
        let eta = Eta::default();
        assert!(eta.contains(0.51));
        assert!(eta.contains(0.5));
        assert!(!eta.contains(0.8));
        assert_eq!(eta.positive_share(1000), 510);
        assert_eq!(Eta::new(0.5, 0.5).positive_share(5), 3);
        assert_eq!(Eta::new(0.0, 0.5).positive_share(2), 1);
        assert_eq!(Eta::new(1.0, 1.0).positive_share(7), 7);
    }

    #[test]
    fn half_up() {
        assert_eq!(round_half_up(2.5), 3);
        assert_eq!(round_half_up(2.4999), 2);
        assert_eq!(round_half_up(1000.0 * 0.51), 510);
        assert_eq!(round_half_up(1001.0 * 0.51), 511);
        assert_eq!(round_half_up(509.999_999_999_9), 510);
    }
}
