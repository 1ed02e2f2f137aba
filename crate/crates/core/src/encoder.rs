//! Two-layer graph convolution over a defect subgraph, mean-pooled into a
//! single question vector.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{EmbedError, PartyVocabulary, TranslationEmbedding};
use crate::questions::DefectSubgraph;

pub const DEFAULT_HIDDEN: usize = 64;

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("node {0} has no neighbors")]
    ZeroDegree(usize),
    #[error("feature width {found} does not match encoder input {expected}")]
    Shape { expected: usize, found: usize },
    #[error("malformed encoder: {0}")]
    Schema(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Node features, binary undirected adjacency and node degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgraphMatrices {
    pub features: Array2<f64>,
    pub adjacency: Array2<f64>,
    pub degrees: Array1<f64>,
}

impl SubgraphMatrices {
    pub fn from_parts(features: Array2<f64>, adjacency: Array2<f64>) -> Self {
        let degrees = adjacency.sum_axis(Axis(1));
        Self {
            features,
            adjacency,
            degrees,
        }
    }

    pub fn degree_matrix(&self) -> Array2<f64> {
        Array2::from_diag(&self.degrees)
    }

    /// `D^-1/2 A D^-1/2`, optionally over `A + I`.
    pub fn normalized_adjacency(&self, self_loops: bool) -> Result<Array2<f64>, EncodeError> {
        let n = self.adjacency.nrows();
        let mut a = self.adjacency.clone();
        let mut deg = self.degrees.clone();
        if self_loops {
            for i in 0..n {
                a[[i, i]] += 1.0;
                deg[i] += 1.0;
            }
        }
        if let Some(i) = deg.iter().position(|&d| d == 0.0) {
            return Err(EncodeError::ZeroDegree(i));
        }
        let inv_sqrt = deg.mapv(|d| 1.0 / d.sqrt());
        for ((i, j), v) in a.indexed_iter_mut() {
            *v *= inv_sqrt[i] * inv_sqrt[j];
        }
        Ok(a)
    }
}

/// Node features from the shared embedding (blank row zero) and the
/// subgraph's adjacency with relation labels and direction dropped.
pub fn build_matrices(
    tm: &TranslationEmbedding,
    vocab: &PartyVocabulary,
    sg: &DefectSubgraph,
) -> Result<SubgraphMatrices, EncodeError> {
    let n = sg.len();
    let mut x = Array2::zeros((n, tm.dim()));
    for i in 0..n {
        if let Some(e) = sg.node(i) {
            let v = tm.entity_vector(vocab, e)?;
            x.row_mut(i).assign(&ndarray::ArrayView1::from(v));
        }
    }
    let mut a = Array2::zeros((n, n));
    for e in sg.edges() {
        if e.from != e.to {
            a[[e.from, e.to]] = 1.0;
            a[[e.to, e.from]] = 1.0;
        }
    }
    Ok(SubgraphMatrices::from_parts(x, a))
}

/// `FSG = mean_rows(Â · ReLU(Â X W1) · W2)`; no biases.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnEncoder {
    w1: Array2<f64>,
    w2: Array2<f64>,
    self_loops: bool,
}

/// Intermediate values of one forward pass, kept for backprop.
#[derive(Debug, Clone)]
pub struct EncoderTrace {
    a_hat: Array2<f64>,
    ax: Array2<f64>,
    pre: Array2<f64>,
    ah: Array2<f64>,
    pub fsg: Array1<f64>,
}

impl EncoderTrace {
    /// Sign of every hidden pre-activation.
    pub fn pattern(&self) -> Vec<bool> {
        self.pre.iter().map(|&z| z > 0.0).collect()
    }

    /// True when nudging any single `W1` entry by `h` cannot flip a ReLU,
    /// i.e. the pass is differentiable at finite-difference scale.
    pub fn clear_of_kinks(&self, h: f64) -> bool {
        let reach = h * self.ax.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        self.pre.iter().all(|p| p.abs() > 2.0 * reach)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads {
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
}

impl GcnEncoder {
    /// Weights uniform on `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn new<R: Rng + ?Sized>(d_in: usize, d_h: usize, d_out: usize, rng: &mut R) -> Self {
        Self {
            w1: uniform(d_in, d_h, rng),
            w2: uniform(d_h, d_out, rng),
            self_loops: false,
        }
    }

    pub fn from_weights(w1: Array2<f64>, w2: Array2<f64>) -> Result<Self, EncodeError> {
        if w1.ncols() != w2.nrows() {
            return Err(EncodeError::Schema(format!(
                "hidden widths differ: {} vs {}",
                w1.ncols(),
                w2.nrows()
            )));
        }
        Ok(Self {
            w1,
            w2,
            self_loops: false,
        })
    }

    pub fn with_self_loops(mut self, on: bool) -> Self {
        self.self_loops = on;
        self
    }

    pub fn self_loops(&self) -> bool {
        self.self_loops
    }

    pub fn d_in(&self) -> usize {
        self.w1.nrows()
    }

    pub fn d_hidden(&self) -> usize {
        self.w1.ncols()
    }

    pub fn d_out(&self) -> usize {
        self.w2.ncols()
    }

    pub fn w1(&self) -> &Array2<f64> {
        &self.w1
    }

    pub fn w2(&self) -> &Array2<f64> {
        &self.w2
    }

    pub fn w1_mut(&mut self) -> &mut Array2<f64> {
        &mut self.w1
    }

    pub fn w2_mut(&mut self) -> &mut Array2<f64> {
        &mut self.w2
    }

    pub fn encode(&self, m: &SubgraphMatrices) -> Result<Array1<f64>, EncodeError> {
        Ok(self.forward(m)?.fsg)
    }

    pub fn forward(&self, m: &SubgraphMatrices) -> Result<EncoderTrace, EncodeError> {
        if m.features.ncols() != self.d_in() {
            return Err(EncodeError::Shape {
                expected: self.d_in(),
                found: m.features.ncols(),
            });
        }
        let a_hat = m.normalized_adjacency(self.self_loops)?;
        let ax = a_hat.dot(&m.features);
        let pre = ax.dot(&self.w1);
        let h = pre.mapv(|v| v.max(0.0));
        let ah = a_hat.dot(&h);
        let z = ah.dot(&self.w2);
        let fsg = z.mean_axis(Axis(0)).expect("subgraphs have nodes");
        Ok(EncoderTrace {
            a_hat,
            ax,
            pre,
            ah,
            fsg,
        })
    }

    /// Weight gradients given `dL/dFSG`.
    pub fn backward(&self, trace: &EncoderTrace, d_fsg: &Array1<f64>) -> EncoderGrads {
        let n = trace.pre.nrows();
        let d_z = Array2::from_shape_fn((n, d_fsg.len()), |(_, j)| d_fsg[j] / n as f64);
        let w2 = trace.ah.t().dot(&d_z);
        let d_ah = d_z.dot(&self.w2.t());
        let mut d_pre = trace.a_hat.t().dot(&d_ah);
        d_pre.zip_mut_with(&trace.pre, |g, &p| {
            if p <= 0.0 {
                *g = 0.0;
            }
        });
        let w1 = trace.ax.t().dot(&d_pre);
        EncoderGrads { w1, w2 }
    }

    pub fn step(&mut self, grads: &EncoderGrads, lr: f64) {
        self.w1.scaled_add(-lr, &grads.w1);
        self.w2.scaled_add(-lr, &grads.w2);
    }

    pub fn to_json(&self) -> String {
        let file = EmFile {
            d_in: self.d_in(),
            d_h: self.d_hidden(),
            d_out: self.d_out(),
            w1: self.w1.iter().copied().collect(),
            w2: self.w2.iter().copied().collect(),
            self_loops: self.self_loops,
        };
        serde_json::to_string(&file).expect("finite weights always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, EncodeError> {
        let file: EmFile = serde_json::from_str(text)?;
        file.validate()?;
        let w1 = Array2::from_shape_vec((file.d_in, file.d_h), file.w1)
            .map_err(|e| EncodeError::Schema(e.to_string()))?;
        let w2 = Array2::from_shape_vec((file.d_h, file.d_out), file.w2)
            .map_err(|e| EncodeError::Schema(e.to_string()))?;
        Ok(Self {
            w1,
            w2,
            self_loops: file.self_loops,
        })
    }
}

/// Wire form of an encoder: row-major weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmFile {
    pub d_in: usize,
    pub d_h: usize,
    pub d_out: usize,
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub self_loops: bool,
}

impl EmFile {
    pub fn validate(&self) -> Result<(), EncodeError> {
        if self.d_in == 0 || self.d_h == 0 || self.d_out == 0 {
            return Err(EncodeError::Schema("dimensions must be positive".into()));
        }
        if self.w1.len() != self.d_in * self.d_h {
            return Err(EncodeError::Schema(format!(
                "w1 has {} entries, expected {}",
                self.w1.len(),
                self.d_in * self.d_h
            )));
        }
        if self.w2.len() != self.d_h * self.d_out {
            return Err(EncodeError::Schema(format!(
                "w2 has {} entries, expected {}",
                self.w2.len(),
                self.d_h * self.d_out
            )));
        }
        if self.w1.iter().chain(&self.w2).any(|v| !v.is_finite()) {
            return Err(EncodeError::Schema("non-finite weight".into()));
        }
        Ok(())
    }
}

fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    let bound = 1.0 / (rows as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-bound..=bound))
}
