//! Defect-subgraph questions: random-walk sampling, candidate generation
//! with the accidental-correctness filter, and difficulty features.

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{Direction, EntityId, KnowledgeGraph, RelationId};

pub const DEFAULT_WALK_RETRIES: usize = 100;
pub const WALK_STEPS_PER_NODE: usize = 50;
pub const CANDIDATE_ATTEMPTS_PER_SLOT: usize = 200;

#[derive(Debug, Error)]
pub enum QuestionError {
    #[error("subgraph size must be at least 2, got {0}")]
    SizeTooSmall(usize),
    #[error("graph has no edges to walk")]
    EmptyGraph,
    #[error("random walk did not reach {size} distinct nodes after {retries} restarts")]
    WalkFailed { size: usize, retries: usize },
    #[error("need at least one candidate")]
    NoCandidates,
    #[error("found only {found} of {needed} admissible wrong candidates")]
    NotEnoughCandidates { needed: usize, found: usize },
    #[error("sampling pool {0} is empty")]
    EmptyPool(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Qid(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubgraphEdge {
    pub from: usize,
    pub relation: RelationId,
    pub to: usize,
}

/// A connected subgraph with one node's identity erased.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectSubgraph {
    nodes: Vec<Option<EntityId>>,
    edges: Vec<SubgraphEdge>,
    blank: usize,
    removed: EntityId,
}

impl DefectSubgraph {
    /// `nodes` are the true entities; position `blank` gets erased.
    pub fn new(nodes: Vec<EntityId>, edges: Vec<SubgraphEdge>, blank: usize) -> Self {
        assert!(blank < nodes.len(), "blank index out of range");
        let removed = nodes[blank];
        let mut nodes: Vec<Option<EntityId>> = nodes.into_iter().map(Some).collect();
        nodes[blank] = None;
        Self {
            nodes,
            edges,
            blank,
            removed,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Visible entity at `i`, `None` for the blank.
    pub fn node(&self, i: usize) -> Option<EntityId> {
        self.nodes[i]
    }

    pub fn nodes(&self) -> &[Option<EntityId>] {
        &self.nodes
    }

    /// Entity at `i` with the blank filled by the ground truth.
    pub fn resolved(&self, i: usize) -> EntityId {
        self.nodes[i].unwrap_or(self.removed)
    }

    pub fn edges(&self) -> &[SubgraphEdge] {
        &self.edges
    }

    pub fn blank(&self) -> usize {
        self.blank
    }

    pub fn removed(&self) -> EntityId {
        self.removed
    }

    pub fn incident_to_blank(&self) -> impl Iterator<Item = &SubgraphEdge> {
        self.edges
            .iter()
            .filter(move |e| e.from == self.blank || e.to == self.blank)
    }

    /// Entities shown in the question (every node except the blank).
    pub fn visible(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.nodes.iter().flatten().copied()
    }

    pub fn contains_entity(&self, e: EntityId) -> bool {
        self.nodes.iter().any(|n| *n == Some(e))
    }

    pub(crate) fn push_node(&mut self, e: EntityId) -> usize {
        self.nodes.push(Some(e));
        self.nodes.len() - 1
    }

    pub(crate) fn push_edge(&mut self, e: SubgraphEdge) {
        self.edges.push(e);
    }

    pub(crate) fn remove_edge(&mut self, idx: usize) -> SubgraphEdge {
        self.edges.remove(idx)
    }

    pub fn is_connected(&self) -> bool {
        connected_without(self.nodes.len(), &self.edges, None)
    }

    /// Checks every structural invariant against the source graph.
    pub fn check(&self, kg: &KnowledgeGraph) -> Result<(), String> {
        let blanks = self.nodes.iter().filter(|n| n.is_none()).count();
        if blanks != 1 || self.nodes[self.blank].is_some() {
            return Err(format!("expected exactly one blank at {}", self.blank));
        }
        for e in &self.edges {
            if e.from >= self.len() || e.to >= self.len() {
                return Err(format!("edge {e:?} out of range"));
            }
            if !kg.has_triple(self.resolved(e.from), e.relation, self.resolved(e.to)) {
                return Err(format!("edge {e:?} is not a graph triple"));
            }
        }
        if !self.is_connected() {
            return Err("subgraph is disconnected".into());
        }
        Ok(())
    }
}

pub(crate) fn connected_without(n: usize, edges: &[SubgraphEdge], skip: Option<usize>) -> bool {
    if n == 0 {
        return true;
    }
    let mut adj = vec![Vec::new(); n];
    for (i, e) in edges.iter().enumerate() {
        if Some(i) == skip {
            continue;
        }
        adj[e.from].push(e.to);
        adj[e.to].push(e.from);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Random walk ignoring edge direction until `size` distinct nodes are
/// collected; keeps every graph edge among them and blanks a uniform node.
pub fn sample_subgraph<R: Rng + ?Sized>(
    kg: &KnowledgeGraph,
    size: usize,
    rng: &mut R,
) -> Result<DefectSubgraph, QuestionError> {
    if size < 2 {
        return Err(QuestionError::SizeTooSmall(size));
    }
    if kg.is_empty() {
        return Err(QuestionError::EmptyGraph);
    }
    for _ in 0..DEFAULT_WALK_RETRIES {
        if let Some(nodes) = walk(kg, size, rng) {
            let edges = induced_edges(kg, &nodes);
            let blank = rng.gen_range(0..nodes.len());
            return Ok(DefectSubgraph::new(nodes, edges, blank));
        }
    }
    Err(QuestionError::WalkFailed {
        size,
        retries: DEFAULT_WALK_RETRIES,
    })
}

fn walk<R: Rng + ?Sized>(kg: &KnowledgeGraph, size: usize, rng: &mut R) -> Option<Vec<EntityId>> {
    let start = EntityId(rng.gen_range(0..kg.num_entities() as u32));
    let mut nodes = vec![start];
    let mut cur = start;
    for _ in 0..WALK_STEPS_PER_NODE * size {
        let next = kg.neighbors(cur).choose(rng)?.entity;
        if !nodes.contains(&next) {
            nodes.push(next);
            if nodes.len() == size {
                return Some(nodes);
            }
        }
        cur = next;
    }
    None
}

fn induced_edges(kg: &KnowledgeGraph, nodes: &[EntityId]) -> Vec<SubgraphEdge> {
    let pos: HashMap<EntityId, usize> = nodes.iter().enumerate().map(|(i, &e)| (e, i)).collect();
    let mut edges = Vec::new();
    for (i, &e) in nodes.iter().enumerate() {
        for n in kg.neighbors(e) {
            if n.direction != Direction::Outgoing {
                continue;
            }
            if let Some(&j) = pos.get(&n.entity) {
                if j != i {
                    edges.push(SubgraphEdge {
                        from: i,
                        relation: n.relation,
                        to: j,
                    });
                }
            }
        }
    }
    edges
}

/// True iff putting `candidate` in the blank makes every edge touching the
/// blank a true triple, i.e. the candidate is indistinguishable from the
/// answer (the 1-N relation case and its multi-edge generalization).
pub fn is_accidentally_correct(
    kg: &KnowledgeGraph,
    sg: &DefectSubgraph,
    candidate: EntityId,
) -> bool {
    let b = sg.blank();
    let fill = |i: usize| if i == b { candidate } else { sg.resolved(i) };
    sg.incident_to_blank()
        .all(|e| kg.has_triple(fill(e.from), e.relation, fill(e.to)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuestionKind {
    Judgment,
    Choice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Truth {
    /// Whether the single candidate is the answer.
    Judgment(bool),
    /// Index of the answer among the candidates.
    Choice(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub qid: Qid,
    pub subgraph: DefectSubgraph,
    pub candidates: Vec<EntityId>,
    pub truth: Truth,
}

impl Question {
    pub fn kind(&self) -> QuestionKind {
        match self.truth {
            Truth::Judgment(_) => QuestionKind::Judgment,
            Truth::Choice(_) => QuestionKind::Choice,
        }
    }

    pub fn removed(&self) -> EntityId {
        self.subgraph.removed()
    }

    /// Candidates that are not the answer.
    pub fn wrong_candidates(&self) -> impl Iterator<Item = EntityId> + '_ {
        let answer = self.removed();
        self.candidates
            .iter()
            .copied()
            .filter(move |&c| c != answer)
    }

    /// Per-candidate binary labels (1 = the answer).
    pub fn labels(&self) -> Vec<bool> {
        match self.truth {
            Truth::Judgment(t) => vec![t],
            Truth::Choice(i) => (0..self.candidates.len()).map(|k| k == i).collect(),
        }
    }

    /// Rebuilds `truth` after the candidate list changed.
    pub(crate) fn set_candidates(&mut self, candidates: Vec<EntityId>) {
        let answer = self.removed();
        self.truth = if candidates.len() == 1 {
            Truth::Judgment(candidates[0] == answer)
        } else {
            Truth::Choice(
                candidates
                    .iter()
                    .position(|&c| c == answer)
                    .expect("choice questions keep the answer"),
            )
        };
        self.candidates = candidates;
    }

    /// Checks every question invariant.
    pub fn check(&self, kg: &KnowledgeGraph) -> Result<(), String> {
        self.subgraph.check(kg)?;
        let answer = self.removed();
        match self.truth {
            Truth::Judgment(t) => {
                if self.candidates.len() != 1 {
                    return Err("judgment question must have one candidate".into());
                }
                if t != (self.candidates[0] == answer) {
                    return Err("judgment truth does not match candidate".into());
                }
            }
            Truth::Choice(i) => {
                if self.candidates.len() < 2 {
                    return Err("choice question needs at least two candidates".into());
                }
                if self.candidates.iter().filter(|&&c| c == answer).count() != 1 {
                    return Err("choice question must contain the answer exactly once".into());
                }
                if self.candidates.get(i) != Some(&answer) {
                    return Err("choice truth index is wrong".into());
                }
            }
        }
        let distinct: BTreeSet<_> = self.candidates.iter().collect();
        if distinct.len() != self.candidates.len() {
            return Err("duplicate candidates".into());
        }
        for c in self.wrong_candidates() {
            if is_accidentally_correct(kg, &self.subgraph, c) {
                return Err(format!("wrong candidate {c} is accidentally correct"));
            }
        }
        Ok(())
    }
}

/// Where a wrong candidate is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateSource {
    /// Uniform over the whole graph.
    Random,
    /// A visible node of the question.
    InQuestion,
    /// A one-hop neighbor of a visible node, outside the subgraph.
    Neighborhood,
}

/// Relevance of `e` to a question: 2 if shown in it, 1 if adjacent to a
/// shown node, 0 otherwise.
pub fn relevance(kg: &KnowledgeGraph, sg: &DefectSubgraph, e: EntityId) -> u8 {
    if sg.contains_entity(e) {
        2
    } else if sg
        .visible()
        .any(|v| kg.neighbors(v).iter().any(|n| n.entity == e))
    {
        1
    } else {
        0
    }
}

/// Entities adjacent to a shown node but not in the subgraph (the answer
/// included, since callers filter it).
pub fn neighborhood(kg: &KnowledgeGraph, sg: &DefectSubgraph) -> BTreeSet<EntityId> {
    sg.visible()
        .flat_map(|v| kg.neighbors(v).iter().map(|n| n.entity))
        .filter(|&e| !sg.contains_entity(e))
        .collect()
}

fn admissible(kg: &KnowledgeGraph, sg: &DefectSubgraph, taken: &[EntityId], e: EntityId) -> bool {
    e != sg.removed() && !taken.contains(&e) && !is_accidentally_correct(kg, sg, e)
}

/// Draws one admissible wrong candidate from `source`, avoiding `taken`.
pub fn draw_wrong_candidate<R: Rng + ?Sized>(
    kg: &KnowledgeGraph,
    sg: &DefectSubgraph,
    source: CandidateSource,
    taken: &[EntityId],
    rng: &mut R,
) -> Option<EntityId> {
    match source {
        CandidateSource::Random => {
            let n = kg.num_entities() as u32;
            (0..CANDIDATE_ATTEMPTS_PER_SLOT)
                .map(|_| EntityId(rng.gen_range(0..n)))
                .find(|&e| admissible(kg, sg, taken, e))
        }
        CandidateSource::InQuestion => {
            let pool: Vec<EntityId> = sg
                .visible()
                .filter(|&e| admissible(kg, sg, taken, e))
                .collect();
            pool.choose(rng).copied()
        }
        CandidateSource::Neighborhood => {
            let pool: Vec<EntityId> = neighborhood(kg, sg)
                .into_iter()
                .filter(|&e| admissible(kg, sg, taken, e))
                .collect();
            pool.choose(rng).copied()
        }
    }
}

/// Builds a judgment (`n_candidates == 1`) or choice question. A judgment
/// question carries the answer with probability one half.
pub fn make_question<R: Rng + ?Sized>(
    kg: &KnowledgeGraph,
    sg: DefectSubgraph,
    n_candidates: usize,
    qid: Qid,
    rng: &mut R,
) -> Result<Question, QuestionError> {
    make_question_from(kg, sg, n_candidates, CandidateSource::Random, qid, rng)
}

/// As [`make_question`], with wrong candidates drawn from `source`.
pub fn make_question_from<R: Rng + ?Sized>(
    kg: &KnowledgeGraph,
    sg: DefectSubgraph,
    n_candidates: usize,
    source: CandidateSource,
    qid: Qid,
    rng: &mut R,
) -> Result<Question, QuestionError> {
    if n_candidates == 0 {
        return Err(QuestionError::NoCandidates);
    }
    let answer = sg.removed();
    let (wrong_needed, include_answer) = if n_candidates == 1 {
        if rng.gen_bool(0.5) {
            (0, true)
        } else {
            (1, false)
        }
    } else {
        (n_candidates - 1, true)
    };
    let mut wrong = Vec::with_capacity(wrong_needed);
    for _ in 0..wrong_needed {
        match draw_wrong_candidate(kg, &sg, source, &wrong, rng) {
            Some(e) => wrong.push(e),
            None => {
                return Err(QuestionError::NotEnoughCandidates {
                    needed: wrong_needed,
                    found: wrong.len(),
                })
            }
        }
    }
    let mut candidates = wrong;
    if include_answer {
        let at = rng.gen_range(0..=candidates.len());
        candidates.insert(at, answer);
    }
    let mut q = Question {
        qid,
        subgraph: sg,
        candidates: Vec::new(),
        truth: Truth::Judgment(false),
    };
    q.set_candidates(candidates);
    Ok(q)
}

/// Difficulty of a question: share of edges touching the blank, candidate
/// count, and mean relevance of the wrong candidates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifficultyVector {
    pub mu1: f64,
    pub mu2: usize,
    pub mu3: f64,
}

impl DifficultyVector {
    pub fn as_array(&self) -> [f64; 3] {
        [self.mu1, self.mu2 as f64, self.mu3]
    }
}

pub fn difficulty_features(kg: &KnowledgeGraph, q: &Question) -> DifficultyVector {
    let total = q.subgraph.edges().len();
    let incident = q.subgraph.incident_to_blank().count();
    let mu1 = if total == 0 {
        0.0
    } else {
        incident as f64 / total as f64
    };
    let rel: Vec<u8> = q
        .wrong_candidates()
        .map(|c| relevance(kg, &q.subgraph, c))
        .collect();
    let mu3 = if rel.is_empty() {
        0.0
    } else {
        rel.iter().map(|&r| r as f64).sum::<f64>() / rel.len() as f64
    };
    DifficultyVector {
        mu1,
        mu2: q.candidates.len(),
        mu3,
    }
}

/// The sets candidate counts and subgraph sizes are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuestionPools {
    pub candidate_counts: Vec<usize>,
    pub subgraph_sizes: Vec<usize>,
}

impl Default for QuestionPools {
    fn default() -> Self {
        Self {
            candidate_counts: (1..=5).collect(),
            subgraph_sizes: (3..=8).collect(),
        }
    }
}

impl QuestionPools {
    pub fn max_candidates(&self) -> usize {
        self.candidate_counts.iter().copied().max().unwrap_or(1)
    }
}

/// Samples `n` questions with qids `first_qid, first_qid + 1, ...`.
pub fn sample_question_set<R: Rng + ?Sized>(
    kg: &KnowledgeGraph,
    n: usize,
    pools: &QuestionPools,
    first_qid: u64,
    rng: &mut R,
) -> Result<Vec<Question>, QuestionError> {
    if pools.candidate_counts.is_empty() {
        return Err(QuestionError::EmptyPool("candidate counts"));
    }
    if pools.subgraph_sizes.is_empty() {
        return Err(QuestionError::EmptyPool("subgraph sizes"));
    }
    (0..n as u64)
        .map(|i| {
            let n_candidates = *pools.candidate_counts.choose(rng).expect("non-empty");
            let size = *pools.subgraph_sizes.choose(rng).expect("non-empty");
            let sg = sample_subgraph(kg, size, rng)?;
            make_question(kg, sg, n_candidates, Qid(first_qid + i), rng)
        })
        .collect()
}
