//! Retrieval tuner: the answered questions of each sign form a query, and
//! the question base is ranked against it. The query has a dense part (the
//! mean difficulty vector) and a sparse part (knowledge points seen more
//! often under that sign), scored by cosine and by a binary independence
//! model respectively.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Eta, PointStats, Sign, TuneError, TunerHistory};
use crate::kg::EntityId;
use crate::questions::Question;

/// Standard deviation floor for constant samples.
pub const STD_FLOOR: f64 = 1e-9;

/// Per-feature Gaussian fitted to the pooled questions of one sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianQuery {
    pub theta1: [f64; 3],
    pub theta2: [f64; 3],
}

impl GaussianQuery {
    /// The dense query vector.
    pub fn query(&self) -> [f64; 3] {
        self.theta1
    }
}

/// Mean and maximum-likelihood spread of each difficulty feature over
/// every recorded question of `sign`.
pub fn fit_gaussian_query(history: &TunerHistory, sign: Sign) -> Result<GaussianQuery, TuneError> {
    let rows: Vec<[f64; 3]> = history.pool(sign).map(|i| i.features.as_array()).collect();
    fit_rows(&rows)
}

fn fit_rows(rows: &[[f64; 3]]) -> Result<GaussianQuery, TuneError> {
    if rows.len() < 2 {
        return Err(TuneError::TooFewSamples {
            needed: 2,
            found: rows.len(),
        });
    }
    let n = rows.len() as f64;
    let mut theta1 = [0.0; 3];
    let mut theta2 = [0.0; 3];
    for j in 0..3 {
        let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
        theta1[j] = mean;
        theta2[j] = var.sqrt().max(STD_FLOOR);
    }
    Ok(GaussianQuery { theta1, theta2 })
}

fn frequencies(history: &TunerHistory, sign: Sign) -> BTreeMap<EntityId, f64> {
    let mut counts: BTreeMap<EntityId, usize> = BTreeMap::new();
    let mut total = 0usize;
    for inst in history.pool(sign) {
        total += 1;
        for &v in &inst.points {
            *counts.entry(v).or_insert(0) += 1;
        }
    }
    counts
        .into_iter()
        .map(|(v, c)| (v, c as f64 / total as f64))
        .collect()
}

/// Knowledge points strictly more frequent in the `sign` pool than in the
/// opposite one. Pools span all recorded rounds.
pub fn knowledge_point_query(history: &TunerHistory, sign: Sign) -> BTreeSet<EntityId> {
    let other = match sign {
        Sign::Plus => Sign::Minus,
        Sign::Minus => Sign::Plus,
    };
    let own = frequencies(history, sign);
    let theirs = frequencies(history, other);
    own.into_iter()
        .filter(|(v, f)| *f > theirs.get(v).copied().unwrap_or(0.0))
        .map(|(v, _)| v)
        .collect()
}

/// Cosine similarity; zero when either vector is zero.
pub fn sim_l(u: &[f64], q: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(q).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nq = q.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nq == 0.0 {
        0.0
    } else {
        dot / (nu * nq)
    }
}

/// One point's factor `r(R-r) / (n(N-n))`, with half a count added to
/// every cell when any of them is empty.
pub fn point_factor(r: usize, big_r: usize, n: usize, big_n: usize) -> f64 {
    let (r, big_r, n, big_n) = (r as f64, big_r as f64, n as f64, big_n as f64);
    if r == 0.0 || r == big_r || n == 0.0 || n == big_n {
        (r + 0.5) * (big_r - r + 0.5) / ((n + 0.5) * (big_n - n + 0.5))
    } else {
        r * (big_r - r) / (n * (big_n - n))
    }
}

/// Binary-independence score of a question's knowledge points against the
/// active points of a query: `(R/N)^(1-k)` times the point factors of the
/// `k` active points present in the question.
pub fn sim_v(
    active: &BTreeSet<EntityId>,
    points: &BTreeSet<EntityId>,
    stats: &PointStats,
) -> Result<f64, TuneError> {
    if stats.big_n == 0 {
        return Err(TuneError::EmptyBase);
    }
    if stats.big_r == 0 {
        return Err(TuneError::NoRelevant);
    }
    let shared: Vec<EntityId> = active.intersection(points).copied().collect();
    let base = stats.big_r as f64 / stats.big_n as f64;
    let k = shared.len() as i32;
    Ok(shared.iter().fold(base.powi(1 - k), |acc, &v| {
        acc * point_factor(stats.r_of(v), stats.big_r, stats.n_of(v), stats.big_n)
    }))
}

/// Everything needed to score the question base against one sign.
#[derive(Debug, Clone)]
pub struct SignedQuery {
    pub dense: GaussianQuery,
    pub active: BTreeSet<EntityId>,
    pub stats: PointStats,
}

impl SignedQuery {
    pub fn build(history: &TunerHistory, sign: Sign) -> Result<Self, TuneError> {
        Ok(Self {
            dense: fit_gaussian_query(history, sign)?,
            active: knowledge_point_query(history, sign),
            stats: history.point_stats(sign),
        })
    }
}

/// `gamma * sim_l + (1 - gamma) * sim_v` for every question of the base,
/// in base order.
pub fn combined_scores(
    history: &TunerHistory,
    query: &SignedQuery,
    gamma: f64,
) -> Result<Vec<f64>, TuneError> {
    history
        .base()
        .iter()
        .map(|inst| {
            let l = sim_l(&query.dense.query(), &inst.features.as_array());
            let v = sim_v(&query.active, &inst.points, &query.stats)?;
            Ok(gamma * l + (1.0 - gamma) * v)
        })
        .collect()
}

/// Base indices by descending score, ties by ascending qid.
pub fn rank(history: &TunerHistory, scores: &[f64]) -> Vec<usize> {
    let base = history.base();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then(base[a].qid.cmp(&base[b].qid))
    });
    order
}

/// Next round of `n` from the question base: the best matches for the
/// correct-answer query up to the target share, then the best remaining
/// matches for the wrong-answer query. Deterministic.
pub fn retrieval_tune(
    history: &TunerHistory,
    qb: &[Question],
    eta: Eta,
    gamma: f64,
    n: usize,
) -> Result<Vec<Question>, TuneError> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(TuneError::InvalidGamma(gamma));
    }
    if qb.len() < n {
        return Err(TuneError::BaseTooSmall {
            requested: n,
            available: qb.len(),
        });
    }
    debug_assert_eq!(qb.len(), history.base_len());
    let plus = SignedQuery::build(history, Sign::Plus)?;
    let minus = SignedQuery::build(history, Sign::Minus)?;
    let by_plus = rank(history, &combined_scores(history, &plus, gamma)?);
    let by_minus = rank(history, &combined_scores(history, &minus, gamma)?);

    let want_plus = eta.positive_share(n);
    let mut taken = vec![false; qb.len()];
    let mut chosen = Vec::with_capacity(n);
    for &i in by_plus.iter().take(want_plus) {
        taken[i] = true;
        chosen.push(i);
    }
    for &i in &by_minus {
        if chosen.len() == n {
            break;
        }
        if !taken[i] {
            taken[i] = true;
            chosen.push(i);
        }
    }
    Ok(chosen.into_iter().map(|i| qb[i].clone()).collect())
}
