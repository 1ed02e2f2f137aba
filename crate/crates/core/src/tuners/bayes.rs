//! Naive Bayes over difficulty features: fit on the latest round, label the
//! rest of the question base, and pick the next round by predicted label.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Eta, TuneError, TunerHistory};
use crate::questions::{DifficultyVector, Question};

/// Variance floor so a constant feature keeps a finite density.
pub const VARIANCE_FLOOR: f64 = 1e-9;
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    /// Answered correctly.
    Plus,
    /// Answered wrongly.
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FeatureKind {
    /// Discrete values; `levels` is the number of distinct values used for
    /// additive smoothing.
    Categorical {
        levels: usize,
    },
    Gaussian,
}

#[derive(Debug, Clone, PartialEq)]
enum Conditional {
    Categorical {
        counts: BTreeMap<u64, usize>,
        total: usize,
        levels: usize,
    },
    Gaussian {
        mean: f64,
        var: f64,
    },
}

impl Conditional {
    fn log_density(&self, x: f64, alpha: f64) -> f64 {
        match self {
            Conditional::Categorical {
                counts,
                total,
                levels,
            } => {
                let c = counts.get(&x.to_bits()).copied().unwrap_or(0) as f64;
                ((c + alpha) / (*total as f64 + alpha * *levels as f64)).ln()
            }
            Conditional::Gaussian { mean, var } => {
                let d = x - mean;
                -0.5 * (2.0 * std::f64::consts::PI * var).ln() - d * d / (2.0 * var)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NaiveBayes {
    alpha: f64,
    log_prior: [f64; 2],
    conditionals: [Vec<Conditional>; 2],
}

fn class_index(l: Label) -> usize {
    match l {
        Label::Plus => 0,
        Label::Minus => 1,
    }
}

impl NaiveBayes {
    /// Maximum-likelihood fit. Both classes need at least one sample.
    pub fn fit(
        kinds: &[FeatureKind],
        samples: &[(Vec<f64>, Label)],
        alpha: f64,
    ) -> Result<Self, TuneError> {
        let mut by_class: [Vec<&[f64]>; 2] = [Vec::new(), Vec::new()];
        for (x, l) in samples {
            assert_eq!(x.len(), kinds.len(), "feature count mismatch");
            by_class[class_index(*l)].push(x);
        }
        for (l, rows) in [Label::Plus, Label::Minus].into_iter().zip(&by_class) {
            if rows.is_empty() {
                return Err(TuneError::EmptyClass(l));
            }
        }
        let total = samples.len() as f64;
        let log_prior = [
            (by_class[0].len() as f64 / total).ln(),
            (by_class[1].len() as f64 / total).ln(),
        ];
        let fit_class = |rows: &[&[f64]]| -> Vec<Conditional> {
            kinds
                .iter()
                .enumerate()
                .map(|(j, kind)| match *kind {
                    FeatureKind::Categorical { levels } => {
                        let mut counts = BTreeMap::new();
                        for r in rows {
                            *counts.entry(r[j].to_bits()).or_insert(0) += 1;
                        }
                        Conditional::Categorical {
                            counts,
                            total: rows.len(),
                            levels,
                        }
                    }
                    FeatureKind::Gaussian => {
                        let n = rows.len() as f64;
                        let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
                        let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
                        Conditional::Gaussian {
                            mean,
                            var: var + VARIANCE_FLOOR,
                        }
                    }
                })
                .collect()
        };
        Ok(Self {
            alpha,
            log_prior,
            conditionals: [fit_class(&by_class[0]), fit_class(&by_class[1])],
        })
    }

    /// Log of prior times the product of conditionals, per class.
    pub fn log_scores(&self, x: &[f64]) -> [f64; 2] {
        let score = |c: usize| {
            self.conditionals[c]
                .iter()
                .zip(x)
                .fold(self.log_prior[c], |acc, (cond, &v)| {
                    acc + cond.log_density(v, self.alpha)
                })
        };
        [score(0), score(1)]
    }

    /// Log-odds of answered-correctly; positive means [`Label::Plus`].
    pub fn margin(&self, x: &[f64]) -> f64 {
        let [p, m] = self.log_scores(x);
        if p == m {
            // covers both -inf
            0.0
        } else {
            p - m
        }
    }

    /// Higher score wins; near-ties go to [`Label::Minus`] so the question
    /// stays available as a hard one.
    pub fn predict(&self, x: &[f64]) -> Label {
        let [p, m] = self.log_scores(x);
        if p == m {
            return Label::Minus;
        }
        if p.is_infinite() || m.is_infinite() {
            return if p > m { Label::Plus } else { Label::Minus };
        }
        let scale = p.abs().max(m.abs()).max(1.0);
        if p > m && (p - m) > TIE_TOLERANCE * scale {
            Label::Plus
        } else {
            Label::Minus
        }
    }
}

/// Feature layout for question difficulty: the candidate count is
/// categorical, the two ratios Gaussian.
pub fn difficulty_kinds(candidate_levels: usize) -> [FeatureKind; 3] {
    [
        FeatureKind::Gaussian,
        FeatureKind::Categorical {
            levels: candidate_levels,
        },
        FeatureKind::Gaussian,
    ]
}

/// Fits on the latest recorded round. The candidate-count levels are the
/// distinct counts seen in the question base.
pub fn bayes_fit(history: &TunerHistory, alpha: f64) -> Result<NaiveBayes, TuneError> {
    let last = history.last_round().ok_or(TuneError::EmptyRound)?;
    if last.plus.is_empty() && last.minus.is_empty() {
        return Err(TuneError::EmptyRound);
    }
    let levels: BTreeSet<usize> = history.base().iter().map(|b| b.features.mu2).collect();
    let samples: Vec<(Vec<f64>, Label)> = last
        .plus
        .iter()
        .map(|i| (i.features.as_array().to_vec(), Label::Plus))
        .chain(
            last.minus
                .iter()
                .map(|i| (i.features.as_array().to_vec(), Label::Minus)),
        )
        .collect();
    NaiveBayes::fit(&difficulty_kinds(levels.len().max(1)), &samples, alpha)
}

pub fn bayes_predict(model: &NaiveBayes, features: &DifficultyVector) -> Label {
    model.predict(&features.as_array())
}

/// Next round of `n` questions from the question base `qb`, which must be
/// the base `history` was built from. Questions of the latest round are
/// skipped unless that leaves fewer than `n`.
pub fn bayes_tune<R: Rng + ?Sized>(
    history: &TunerHistory,
    qb: &[Question],
    eta: Eta,
    n: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<Vec<Question>, TuneError> {
    if qb.len() < n {
        return Err(TuneError::BaseTooSmall {
            requested: n,
            available: qb.len(),
        });
    }
    let model = bayes_fit(history, alpha)?;
    let last = history.last_round().ok_or(TuneError::EmptyRound)?;
    let recent: BTreeSet<_> = last.plus.iter().chain(&last.minus).map(|i| i.qid).collect();
    let mut pool: Vec<usize> = (0..qb.len())
        .filter(|&i| !recent.contains(&qb[i].qid))
        .collect();
    if pool.len() < n {
        pool = (0..qb.len()).collect();
    }

    let mut margins = Vec::with_capacity(pool.len());
    let (mut plus, mut minus) = (Vec::new(), Vec::new());
    for &i in &pool {
        let inst = history
            .instance(qb[i].qid)
            .ok_or(TuneError::UnknownQid(qb[i].qid))?;
        let x = inst.features.as_array();
        margins.push((i, model.margin(&x)));
        match model.predict(&x) {
            Label::Plus => plus.push(i),
            Label::Minus => minus.push(i),
        }
    }

    let want_plus = eta.positive_share(n);
    let want_minus = n - want_plus;
    plus.shuffle(rng);
    minus.shuffle(rng);
    let take_plus = want_plus.min(plus.len());
    let take_minus = want_minus.min(minus.len());
    let mut chosen: Vec<usize> = plus[..take_plus].to_vec();
    chosen.extend(&minus[..take_minus]);

    let short_plus = want_plus - take_plus;
    let short_minus = want_minus - take_minus;
    if short_plus > 0 {
        // most plus-looking of the predicted-minus leftovers
        let left: BTreeSet<usize> = minus[take_minus..].iter().copied().collect();
        let mut rest: Vec<(usize, f64)> = margins
            .iter()
            .copied()
            .filter(|(i, _)| left.contains(i))
            .collect();
        rest.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        chosen.extend(rest.iter().take(short_plus).map(|&(i, _)| i));
    }
    if short_minus > 0 {
        let left: BTreeSet<usize> = plus[take_plus..].iter().copied().collect();
        let mut rest: Vec<(usize, f64)> = margins
            .iter()
            .copied()
            .filter(|(i, _)| left.contains(i))
            .collect();
        rest.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        chosen.extend(rest.iter().take(short_minus).map(|&(i, _)| i));
    }
    debug_assert_eq!(chosen.len(), n);
    Ok(chosen.into_iter().map(|i| qb[i].clone()).collect())
}
