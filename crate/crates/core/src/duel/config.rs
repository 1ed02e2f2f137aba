use serde::{Deserialize, Serialize};

use super::DuelError;
use crate::answer::{AdversarialConfig, AmShape, JointConfig};
use crate::questions::QuestionPools;
use crate::tuners::Eta;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TunerKind {
    Rule,
    Bayes,
    Retrieval,
}

impl std::fmt::Display for TunerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TunerKind::Rule => "rule",
            TunerKind::Bayes => "bayes",
            TunerKind::Retrieval => "retrieval",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TmConfig {
    pub dim: usize,
    pub margin: f64,
    pub lr: f64,
    pub alternations: usize,
    pub epochs_per_segment: usize,
}

impl Default for TmConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            margin: 1.0,
            lr: 0.01,
            alternations: 5,
            epochs_per_segment: 20,
        }
    }
}

/// `shared` drives the translation model; each party has its own stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub shared: u64,
    pub alpha: u64,
    pub beta: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            shared: 0,
            alpha: 1,
            beta: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DuelConfig {
    /// Target accuracy interval of the adversarial loop, inclusive.
    pub eta: [f64; 2],
    pub tuner: TunerKind,
    /// Weight of the difficulty-vector similarity in the retrieval tuner.
    pub gamma: f64,
    /// Additive smoothing of the candidate-count conditional.
    pub bayes_alpha: f64,
    pub tm: TmConfig,
    pub em_hidden: usize,
    pub self_loops: bool,
    pub am: AmShape,
    pub joint: JointConfig,
    /// Questions sampled for joint encoder/answer training.
    pub joint_size: usize,
    pub adversarial: AdversarialConfig,
    pub round_size: usize,
    pub qb_size: usize,
    pub max_rounds: usize,
    /// Question sets per direction; the first is the tuned final round.
    pub repeat_sets: usize,
    /// Relative tolerance on per-feature means for the extra sets.
    pub similarity_tolerance: f64,
    pub pools: QuestionPools,
    pub seeds: Seeds,
}

impl Default for DuelConfig {
    fn default() -> Self {
        Self {
            eta: [0.5, 0.52],
            tuner: TunerKind::Rule,
            gamma: 0.5,
            bayes_alpha: 1.0,
            tm: TmConfig::default(),
            em_hidden: crate::encoder::DEFAULT_HIDDEN,
            self_loops: false,
            am: AmShape::default(),
            joint: JointConfig::default(),
            joint_size: 1000,
            adversarial: AdversarialConfig::default(),
            round_size: 1000,
            qb_size: 80000,
            max_rounds: 50,
            repeat_sets: 1,
            similarity_tolerance: 0.1,
            pools: QuestionPools::default(),
            seeds: Seeds::default(),
        }
    }
}

impl DuelConfig {
    pub fn eta(&self) -> Eta {
        Eta::new(self.eta[0], self.eta[1])
    }

    pub fn validate(&self) -> Result<(), DuelError> {
        let bad = |m: String| Err(DuelError::Config(m));
        let [lo, hi] = self.eta;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
            return bad(format!(
                "eta must satisfy 0 <= lo < hi <= 1, got [{lo}, {hi}]"
            ));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if !(self.bayes_alpha >= 0.0 && self.bayes_alpha.is_finite()) {
            return bad(format!(
                "bayes_alpha {} must be finite and non-negative",
                self.bayes_alpha
            ));
        }
        if self.tm.dim == 0 || self.em_hidden == 0 {
            return bad("dimensions must be positive".into());
        }
        if self.am.filters == 0 || self.am.width == 0 || self.am.width > self.tm.dim {
            return bad(format!(
                "answer model needs 1 <= width <= tm.dim and filters >= 1, got width {} dim {}",
                self.am.width, self.tm.dim
            ));
        }
        if self.tm.alternations == 0 {
            return bad("tm.alternations must be at least 1".into());
        }
        for (name, lr) in [
            ("tm.lr", self.tm.lr),
            ("joint.lr", self.joint.lr),
            ("adversarial.lr", self.adversarial.lr),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(format!("{name} must be positive, got {lr}"));
            }
        }
        if self.round_size == 0 || self.joint_size == 0 {
            return bad("round_size and joint_size must be positive".into());
        }
        if self.qb_size < self.round_size {
            return bad(format!(
                "qb_size {} smaller than round_size {}",
                self.qb_size, self.round_size
            ));
        }
        if self.repeat_sets == 0 {
            return bad("repeat_sets must be at least 1".into());
        }
        if !(self.similarity_tolerance > 0.0) {
            return bad("similarity_tolerance must be positive".into());
        }
        if self.pools.candidate_counts.is_empty()
            || self.pools.subgraph_sizes.is_empty()
            || self.pools.candidate_counts.contains(&0)
            || self.pools.subgraph_sizes.iter().any(|&s| s < 2)
        {
            return bad("pools need candidate counts >= 1 and subgraph sizes >= 2".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        DuelConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = DuelConfig::default();
        c.eta = [0.52, 0.5];
        assert!(c.validate().is_err());
        let mut c = DuelConfig::default();
        c.repeat_sets = 0;
        assert!(c.validate().is_err());
        let mut c = DuelConfig::default();
        c.qb_size = 10;
        assert!(c.validate().is_err());
        let mut c = DuelConfig::default();
        c.am.width = 65;
        assert!(c.validate().is_err());
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c: DuelConfig = serde_json::from_str(r#"{"tuner":"bayes","tm":{"dim":16}}"#).unwrap();
        assert_eq!(c.tuner, TunerKind::Bayes);
        assert_eq!(c.tm.dim, 16);
        assert_eq!(c.tm.margin, 1.0);
        assert!(serde_json::from_str::<DuelConfig>(r#"{"tunr":"bayes"}"#).is_err());
    }
}
