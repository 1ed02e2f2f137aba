//! The shared translation model: TransE with a margin hinge over squared
//! Euclidean distance, trained in segments that alternate between parties.

mod vocab;

pub use vocab::{PartyVocabulary, Token};

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{EntityId, KnowledgeGraph, Triple};

pub const DEFAULT_NEGATIVE_RETRIES: usize = 100;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("graph needs at least 2 entities to corrupt triples, has {0}")]
    TooFewEntities(usize),
    #[error("no admissible negative sample after {0} retries (graph too dense)")]
    TooDense(usize),
    #[error("loss diverged (non-finite); lower the learning rate")]
    NonFiniteLoss,
    #[error("unknown name {0:?}")]
    UnknownName(String),
    #[error("token {0} has no vector")]
    Unregistered(Token),
    #[error("at least one alternation is required")]
    NoAlternations,
    #[error("malformed translation model: {0}")]
    Schema(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Entity and relation vector tables keyed by opaque tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct TranslationEmbedding {
    dim: usize,
    margin: f64,
    entities: BTreeMap<Token, Vec<f64>>,
    relations: BTreeMap<Token, Vec<f64>>,
    normalize_entities: bool,
}

/// Wire form of the translation model.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TmFile {
    pub dim: usize,
    pub margin: f64,
    pub entities: BTreeMap<Token, Vec<f64>>,
    pub relations: BTreeMap<Token, Vec<f64>>,
}

impl TranslationEmbedding {
    pub fn new(dim: usize, margin: f64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self {
            dim,
            margin,
            entities: BTreeMap::new(),
            relations: BTreeMap::new(),
            normalize_entities: false,
        }
    }

    /// Rescale touched entity vectors to unit L2 norm after every update.
    pub fn with_entity_normalization(mut self, on: bool) -> Self {
        self.normalize_entities = on;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn entity(&self, t: Token) -> Option<&[f64]> {
        self.entities.get(&t).map(Vec::as_slice)
    }

    pub fn relation(&self, t: Token) -> Option<&[f64]> {
        self.relations.get(&t).map(Vec::as_slice)
    }

    pub fn entity_vector(
        &self,
        vocab: &PartyVocabulary,
        e: EntityId,
    ) -> Result<&[f64], EmbedError> {
        let t = vocab.entity(e);
        self.entity(t).ok_or(EmbedError::Unregistered(t))
    }

    /// Initializes vectors for every token of `vocab` not yet in the tables,
    /// uniform on `[-6/sqrt(dim), 6/sqrt(dim)]`. Existing rows are untouched.
    pub fn register<R: Rng + ?Sized>(&mut self, vocab: &PartyVocabulary, rng: &mut R) {
        let bound = 6.0 / (self.dim as f64).sqrt();
        let dim = self.dim;
        let normalize = self.normalize_entities;
        for &t in vocab.entity_tokens() {
            self.entities.entry(t).or_insert_with(|| {
                let mut v = uniform_vec(dim, bound, rng);
                if normalize {
                    normalize_l2(&mut v);
                }
                v
            });
        }
        for &t in vocab.relation_tokens() {
            self.relations
                .entry(t)
                .or_insert_with(|| uniform_vec(dim, bound, rng));
        }
    }

    pub fn to_json(&self) -> String {
        let file = TmFile {
            dim: self.dim,
            margin: self.margin,
            entities: self.entities.clone(),
            relations: self.relations.clone(),
        };
        serde_json::to_string(&file).expect("finite vectors always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, EmbedError> {
        let file: TmFile = serde_json::from_str(text)?;
        file.validate()?;
        Ok(Self {
            dim: file.dim,
            margin: file.margin,
            entities: file.entities,
            relations: file.relations,
            normalize_entities: false,
        })
    }

    /// Copies the normalization switch from `self` into a model received
    /// over the wire (the switch is local training policy, not model state).
    pub(crate) fn adopt(&mut self, mut received: TranslationEmbedding) {
        received.normalize_entities = self.normalize_entities;
        *self = received;
    }
}

impl TmFile {
    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dim == 0 {
            return Err(EmbedError::Schema("dim must be positive".into()));
        }
        if !self.margin.is_finite() {
            return Err(EmbedError::Schema("margin must be finite".into()));
        }
        for (table, rows) in [("entities", &self.entities), ("relations", &self.relations)] {
            for (t, v) in rows {
                if v.len() != self.dim {
                    return Err(EmbedError::Schema(format!(
                        "{table}[{t}] has length {}, expected {}",
                        v.len(),
                        self.dim
                    )));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(EmbedError::Schema(format!("{table}[{t}] is not finite")));
                }
            }
        }
        Ok(())
    }
}

/// Which end of a triple gets corrupted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorruptSide {
    Head,
    Tail,
}

/// `p_tr` is drawn on (0, 1]; strictly above one half replaces the head.
pub fn corruption_side(p_tr: f64) -> CorruptSide {
    if p_tr > 0.5 {
        CorruptSide::Head
    } else {
        CorruptSide::Tail
    }
}

pub fn corrupt(t: Triple, side: CorruptSide, replacement: EntityId) -> Triple {
    match side {
        CorruptSide::Head => Triple::new(replacement, t.predicate, t.object),
        CorruptSide::Tail => Triple::new(t.subject, t.predicate, replacement),
    }
}

/// Draws a corrupted triple that is not in `kg`.
pub fn negative_sample<R: Rng + ?Sized>(
    t: Triple,
    kg: &KnowledgeGraph,
    max_retries: usize,
    rng: &mut R,
) -> Result<Triple, EmbedError> {
    let n = kg.num_entities();
    if n < 2 {
        return Err(EmbedError::TooFewEntities(n));
    }
    for _ in 0..max_retries {
        let p_tr = 1.0 - rng.gen::<f64>();
        let replacement = EntityId(rng.gen_range(0..n as u32));
        let candidate = corrupt(t, corruption_side(p_tr), replacement);
        if !kg.contains(&candidate) {
            return Ok(candidate);
        }
    }
    Err(EmbedError::TooDense(max_retries))
}

fn sq_residual(s: &[f64], p: &[f64], o: &[f64], out: &mut [f64]) -> f64 {
    let mut d = 0.0;
    for i in 0..s.len() {
        let r = s[i] + p[i] - o[i];
        out[i] = r;
        d += r * r;
    }
    d
}

/// `[margin + d(s+p, o) - d(s'+p, o')]_+` with squared Euclidean `d`.
pub fn pair_loss(margin: f64, pos: [&[f64]; 3], neg: [&[f64]; 3]) -> f64 {
    let mut scratch = vec![0.0; pos[0].len()];
    let d_pos = sq_residual(pos[0], pos[1], pos[2], &mut scratch);
    let d_neg = sq_residual(neg[0], neg[1], neg[2], &mut scratch);
    (margin + d_pos - d_neg).max(0.0)
}

/// Gradients of [`pair_loss`] for an active pair, one per argument slot.
/// When the loss is zero every gradient is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGrad {
    pub loss: f64,
    pub pos: [Vec<f64>; 3],
    pub neg: [Vec<f64>; 3],
}

pub fn pair_grad(margin: f64, pos: [&[f64]; 3], neg: [&[f64]; 3]) -> PairGrad {
    let dim = pos[0].len();
    let mut r_pos = vec![0.0; dim];
    let mut r_neg = vec![0.0; dim];
    let d_pos = sq_residual(pos[0], pos[1], pos[2], &mut r_pos);
    let d_neg = sq_residual(neg[0], neg[1], neg[2], &mut r_neg);
    let loss = margin + d_pos - d_neg;
    if loss <= 0.0 {
        let z = vec![0.0; dim];
        return PairGrad {
            loss: 0.0,
            pos: [z.clone(), z.clone(), z.clone()],
            neg: [z.clone(), z.clone(), z],
        };
    }
    let g_pos: Vec<f64> = r_pos.iter().map(|r| 2.0 * r).collect();
    let g_neg: Vec<f64> = r_neg.iter().map(|r| -2.0 * r).collect();
    PairGrad {
        loss,
        pos: [
            g_pos.clone(),
            g_pos.clone(),
            g_pos.iter().map(|g| -g).collect(),
        ],
        neg: [
            g_neg.clone(),
            g_neg.clone(),
            g_neg.iter().map(|g| -g).collect(),
        ],
    }
}

/// Dense working copy of one party's rows, indexed by local ids.
struct LocalTables {
    entities: Vec<Vec<f64>>,
    relations: Vec<Vec<f64>>,
}

impl LocalTables {
    fn gather(tm: &TranslationEmbedding, vocab: &PartyVocabulary) -> Result<Self, EmbedError> {
        let get = |table: &BTreeMap<Token, Vec<f64>>, t: &Token| {
            table.get(t).cloned().ok_or(EmbedError::Unregistered(*t))
        };
        Ok(Self {
            entities: vocab
                .entity_tokens()
                .iter()
                .map(|t| get(&tm.entities, t))
                .collect::<Result<_, _>>()?,
            relations: vocab
                .relation_tokens()
                .iter()
                .map(|t| get(&tm.relations, t))
                .collect::<Result<_, _>>()?,
        })
    }

    fn scatter(self, tm: &mut TranslationEmbedding, vocab: &PartyVocabulary) {
        for (t, v) in vocab.entity_tokens().iter().zip(self.entities) {
            tm.entities.insert(*t, v);
        }
        for (t, v) in vocab.relation_tokens().iter().zip(self.relations) {
            tm.relations.insert(*t, v);
        }
    }
}

/// One shuffled pass of SGD over `kg`. Returns the mean pair loss.
/// Missing entities and relations are registered first.
pub fn transe_epoch<R: Rng + ?Sized>(
    tm: &mut TranslationEmbedding,
    kg: &KnowledgeGraph,
    vocab: &PartyVocabulary,
    lr: f64,
    rng: &mut R,
) -> Result<f64, EmbedError> {
    tm.register(vocab, rng);
    if kg.is_empty() {
        return Ok(0.0);
    }
    let mut tables = LocalTables::gather(tm, vocab)?;
    let mut order: Vec<usize> = (0..kg.num_triples()).collect();
    order.shuffle(rng);

    let margin = tm.margin;
    let mut total = 0.0;
    for i in order {
        let t = kg.triples()[i];
        let neg = negative_sample(t, kg, DEFAULT_NEGATIVE_RETRIES, rng)?;
        let g = {
            let e = &tables.entities;
            let p = &tables.relations[t.predicate.index()];
            pair_grad(
                margin,
                [&e[t.subject.index()], p, &e[t.object.index()]],
                [&e[neg.subject.index()], p, &e[neg.object.index()]],
            )
        };
        if !g.loss.is_finite() {
            return Err(EmbedError::NonFiniteLoss);
        }
        if g.loss <= 0.0 {
            continue;
        }
        total += g.loss;

        // All gradients were computed from the pre-update vectors; the
        // predicate collects its positive and negative contributions.
        axpy(-lr, &g.pos[1], &mut tables.relations[t.predicate.index()]);
        axpy(-lr, &g.neg[1], &mut tables.relations[t.predicate.index()]);
        let touched = [
            (t.subject, &g.pos[0]),
            (t.object, &g.pos[2]),
            (neg.subject, &g.neg[0]),
            (neg.object, &g.neg[2]),
        ];
        for (e, grad) in touched {
            axpy(-lr, grad, &mut tables.entities[e.index()]);
        }
        if tm.normalize_entities {
            for (e, _) in touched {
                normalize_l2(&mut tables.entities[e.index()]);
            }
        }
    }
    tables.scatter(tm, vocab);
    let mean = total / kg.num_triples() as f64;
    if !mean.is_finite() {
        return Err(EmbedError::NonFiniteLoss);
    }
    Ok(mean)
}

/// One party's view during incremental training.
#[derive(Clone, Copy)]
pub struct TrainingParty<'a> {
    pub kg: &'a KnowledgeGraph,
    pub vocab: &'a PartyVocabulary,
}

/// Alternates training segments between parties. Between segments the model
/// is serialized and re-read, exactly as it would be handed to the other
/// party; nothing else crosses over. Returns the per-epoch mean losses.
pub fn incremental_train<R: Rng + ?Sized>(
    tm: &mut TranslationEmbedding,
    parties: &[TrainingParty<'_>],
    alternations: usize,
    epochs_per_segment: usize,
    lr: f64,
    rng: &mut R,
) -> Result<Vec<f64>, EmbedError> {
    if alternations == 0 {
        return Err(EmbedError::NoAlternations);
    }
    let mut losses = Vec::with_capacity(alternations * parties.len() * epochs_per_segment);
    for round in 0..alternations {
        for (pi, party) in parties.iter().enumerate() {
            for _ in 0..epochs_per_segment {
                losses.push(transe_epoch(tm, party.kg, party.vocab, lr, rng)?);
            }
            let handed = TranslationEmbedding::from_json(&tm.to_json())?;
            tm.adopt(handed);
            log::debug!(
                "tm handoff after round {round} party {pi}: loss {:.4}",
                losses.last().copied().unwrap_or(0.0)
            );
        }
    }
    Ok(losses)
}

pub fn embed_entity<'a>(
    tm: &'a TranslationEmbedding,
    vocab: &PartyVocabulary,
    name: &str,
) -> Result<&'a [f64], EmbedError> {
    let t = vocab
        .entity_by_name(name)
        .ok_or_else(|| EmbedError::UnknownName(name.to_owned()))?;
    tm.entity(t).ok_or(EmbedError::Unregistered(t))
}

/// Fraction of triples whose true tail ranks within the `k` closest
/// entities to `s + p` (raw ranking over all entities of `kg`).
pub fn hits_at_k(
    tm: &TranslationEmbedding,
    kg: &KnowledgeGraph,
    vocab: &PartyVocabulary,
    k: usize,
) -> Result<f64, EmbedError> {
    if kg.is_empty() {
        return Ok(0.0);
    }
    let tables = LocalTables::gather(tm, vocab)?;
    let mut scratch = vec![0.0; tm.dim];
    let mut hits = 0usize;
    for t in kg.triples() {
        let s = &tables.entities[t.subject.index()];
        let p = &tables.relations[t.predicate.index()];
        let dist = |e: &[f64], buf: &mut [f64]| sq_residual(s, p, e, buf);
        let truth = dist(&tables.entities[t.object.index()], &mut scratch);
        let better = tables
            .entities
            .iter()
            .filter(|e| dist(e, &mut scratch) < truth)
            .count();
        if better < k {
            hits += 1;
        }
    }
    Ok(hits as f64 / kg.num_triples() as f64)
}

fn uniform_vec<R: Rng + ?Sized>(dim: usize, bound: f64, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| rng.gen_range(-bound..=bound)).collect()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn normalize_l2(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn side_rule() {
        assert_eq!(corruption_side(0.7), CorruptSide::Head);
        assert_eq!(corruption_side(0.3), CorruptSide::Tail);
        assert_eq!(corruption_side(0.5), CorruptSide::Tail);
        assert_eq!(corruption_side(1.0), CorruptSide::Head);
    }

    #[test]
    fn two_entity_graph_corruptions() {
        let kg = KnowledgeGraph::from_named_triples("t", [("a", "p", "b")]);
        let (a, b) = (kg.entity_id("a").unwrap(), kg.entity_id("b").unwrap());
        let t = kg.triples()[0];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let neg = negative_sample(t, &kg, 100, &mut rng).unwrap();
            assert!(!kg.contains(&neg));
            if neg.object == b {
                // head corrupted: the only admissible replacement is b
                assert_eq!(neg.subject, b);
            } else {
                assert_eq!((neg.subject, neg.object), (a, a));
            }
        }
    }

    #[test]
    fn single_entity_graph_cannot_corrupt() {
        let kg = KnowledgeGraph::from_named_triples("t", [("a", "p", "a")]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            negative_sample(kg.triples()[0], &kg, 10, &mut rng),
            Err(EmbedError::TooFewEntities(1))
        ));
    }

    #[test]
    fn complete_graph_is_too_dense() {
        let mut triples = Vec::new();
        for s in ["a", "b"] {
            for o in ["a", "b"] {
                triples.push((s, "p", o));
            }
        }
        let kg = KnowledgeGraph::from_named_triples("t", triples);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            negative_sample(kg.triples()[0], &kg, 100, &mut rng),
            Err(EmbedError::TooDense(100))
        ));
    }

    #[test]
    fn hinge_values() {
        // d_pos = 0, d_neg = 2
        let z = [0.0, 0.0];
        let one = [1.0, 1.0];
        assert_eq!(pair_loss(1.0, [&z, &z, &z], [&one, &z, &z]), 0.0);
        let g = pair_grad(1.0, [&z, &z, &z], [&one, &z, &z]);
        assert!(g
            .pos
            .iter()
            .chain(g.neg.iter())
            .all(|v| v.iter().all(|&x| x == 0.0)));
        // d_pos = 0.25, d_neg = 0.5
        let half = [0.5, 0.0];
        let neg = [0.5, 0.5];
        let l = pair_loss(1.0, [&half, &z, &z], [&neg, &z, &z]);
        assert!((l - 0.75).abs() < 1e-15);
    }

    #[test]
    fn registration_is_idempotent() {
        let kg = KnowledgeGraph::from_named_triples("t", [("a", "p", "b")]);
        let vocab = PartyVocabulary::new(&kg, b"s");
        let mut tm = TranslationEmbedding::new(8, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        tm.register(&vocab, &mut rng);
        let before = tm.clone();
        tm.register(&vocab, &mut rng);
        assert_eq!(tm, before);
        let bound = 6.0 / (8f64).sqrt();
        assert!(tm
            .entities
            .values()
            .chain(tm.relations.values())
            .all(|v| v.len() == 8 && v.iter().all(|x| x.abs() <= bound)));
    }

    #[test]
    fn embed_lookup() {
        let kg = KnowledgeGraph::from_named_triples("t", [("a", "p", "b")]);
        let vocab = PartyVocabulary::new(&kg, b"s");
        let mut tm = TranslationEmbedding::new(4, 1.0);
        tm.register(&vocab, &mut ChaCha8Rng::seed_from_u64(0));
        let v1 = embed_entity(&tm, &vocab, "a").unwrap().to_vec();
        let v2 = embed_entity(&tm, &vocab, "a").unwrap();
        assert_eq!(v1.len(), 4);
        assert_eq!(v1, v2);
        assert!(matches!(
            embed_entity(&tm, &vocab, "zzz"),
            Err(EmbedError::UnknownName(_))
        ));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let kg = KnowledgeGraph::from_named_triples("t", [("a", "p", "b"), ("b", "q", "c")]);
        let vocab = PartyVocabulary::new(&kg, b"s");
        let mut tm = TranslationEmbedding::new(16, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        transe_epoch(&mut tm, &kg, &vocab, 0.01, &mut rng).unwrap();
        let back = TranslationEmbedding::from_json(&tm.to_json()).unwrap();
        assert_eq!(back, tm);
    }

    #[test]
    fn schema_violations_rejected() {
        assert!(TranslationEmbedding::from_json(
            r#"{"dim":2,"margin":1.0,"entities":{"0000000000000001":[1.0]},"relations":{}}"#
        )
        .is_err());
        assert!(TranslationEmbedding::from_json(
            r#"{"dim":2,"margin":1.0,"entities":{"bogus":[1.0,2.0]},"relations":{}}"#
        )
        .is_err());
        assert!(TranslationEmbedding::from_json(
            r#"{"dim":2,"margin":1.0,"entities":{},"relations":{},"extra":1}"#
        )
        .is_err());
        assert!(TranslationEmbedding::from_json(
            r#"{"dim":2,"margin":1.0,"entities":{},"relations":{}}"#
        )
        .is_ok());
    }

    #[test]
    fn zero_alternations_rejected() {
        let kg = KnowledgeGraph::from_named_triples("t", [("a", "p", "b")]);
        let vocab = PartyVocabulary::new(&kg, b"s");
        let mut tm = TranslationEmbedding::new(4, 1.0);
        let party = TrainingParty {
            kg: &kg,
            vocab: &vocab,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            incremental_train(&mut tm, &[party], 0, 1, 0.01, &mut rng),
            Err(EmbedError::NoAlternations)
        ));
    }
}
