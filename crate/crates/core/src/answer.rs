//! Answer model: convolutional features over the stacked (question vector,
//! candidate vector) pair, a logistic head, and its training loops.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{PartyVocabulary, TranslationEmbedding};
use crate::encoder::{build_matrices, EncodeError, EncoderGrads, GcnEncoder, SubgraphMatrices};
use crate::kg::KnowledgeGraph;
use crate::questions::{draw_wrong_candidate, CandidateSource, Qid, Question, QuestionKind, Truth};

#[derive(Debug, Error)]
pub enum AnswerError {
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("vector width {dim} is smaller than kernel width {width}")]
    TooNarrow { dim: usize, width: usize },
    #[error("question vector has width {fsg}, candidate has {cand}")]
    WidthMismatch { fsg: usize, cand: usize },
    #[error("non-finite loss during training")]
    NonFiniteLoss,
    #[error("no questions to train on")]
    NoQuestions,
}

/// Hyperparameters of the answer model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmShape {
    pub filters: usize,
    pub width: usize,
    pub leaky_slope: f64,
}

impl Default for AmShape {
    fn default() -> Self {
        Self {
            filters: 8,
            width: 3,
            leaky_slope: 0.01,
        }
    }
}

/// `n_f` row kernels (1 x w) applied to each row, `n_f` joint kernels
/// (2 x w) spanning both rows, LeakyReLU, mean pooling per feature map,
/// then a logistic layer over the `3 n_f` pooled values.
#[derive(Debug, Clone, PartialEq)]
pub struct AnswerModel {
    shape: AmShape,
    /// `n_f x w`
    pub local: Array2<f64>,
    pub local_bias: Array1<f64>,
    /// `n_f x 2w`, row-0 taps then row-1 taps
    pub global: Array2<f64>,
    pub global_bias: Array1<f64>,
    pub w0: Array1<f64>,
    pub b0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmGrads {
    pub local: Array2<f64>,
    pub local_bias: Array1<f64>,
    pub global: Array2<f64>,
    pub global_bias: Array1<f64>,
    pub w0: Array1<f64>,
    pub b0: f64,
}

impl AmGrads {
    fn zeros(shape: &AmShape) -> Self {
        let (f, w) = (shape.filters, shape.width);
        Self {
            local: Array2::zeros((f, w)),
            local_bias: Array1::zeros(f),
            global: Array2::zeros((f, 2 * w)),
            global_bias: Array1::zeros(f),
            w0: Array1::zeros(3 * f),
            b0: 0.0,
        }
    }

    /// Parameters in the order of [`AnswerModel::params_mut`].
    pub fn flat(&self) -> Vec<f64> {
        self.local
            .iter()
            .chain(&self.local_bias)
            .chain(&self.global)
            .chain(&self.global_bias)
            .chain(&self.w0)
            .copied()
            .chain(std::iter::once(self.b0))
            .collect()
    }
}

/// Forward intermediates for one candidate.
#[derive(Debug, Clone)]
pub struct ScoreTrace {
    /// `[filter][row][position]`
    local_pre: Vec<f64>,
    /// `[filter][position]`
    global_pre: Vec<f64>,
    features: Vec<f64>,
    pub logit: f64,
    pub prob: f64,
}

impl ScoreTrace {
    /// Sign of every pre-activation; equal patterns mean the two passes lie
    /// on the same linear piece.
    pub fn pattern(&self) -> Vec<bool> {
        self.local_pre
            .iter()
            .chain(&self.global_pre)
            .map(|&z| z > 0.0)
            .collect()
    }
}

/// Gradients of one candidate's loss.
#[derive(Debug, Clone)]
pub struct ScoreGrads {
    pub model: AmGrads,
    pub d_fsg: Vec<f64>,
    pub d_cand: Vec<f64>,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of `sigmoid(logit)` against `label`, computed
/// without forming the probability.
pub fn bce_from_logit(logit: f64, label: bool) -> f64 {
    let softplus = |x: f64| x.max(0.0) + (-x.abs()).exp().ln_1p();
    if label {
        softplus(-logit)
    } else {
        softplus(logit)
    }
}

pub fn bce(p: f64, label: bool) -> f64 {
    if label {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

impl AnswerModel {
    pub fn new<R: Rng + ?Sized>(shape: AmShape, rng: &mut R) -> Self {
        let (f, w) = (shape.filters, shape.width);
        let lb = 1.0 / (w as f64).sqrt();
        let gb = 1.0 / (2.0 * w as f64).sqrt();
        let hb = 1.0 / (3.0 * f as f64).sqrt();
        Self {
            shape,
            local: Array2::from_shape_simple_fn((f, w), || rng.gen_range(-lb..=lb)),
            local_bias: Array1::zeros(f),
            global: Array2::from_shape_simple_fn((f, 2 * w), || rng.gen_range(-gb..=gb)),
            global_bias: Array1::zeros(f),
            w0: Array1::from_shape_simple_fn(3 * f, || rng.gen_range(-hb..=hb)),
            b0: 0.0,
        }
    }

    pub fn zeros(shape: AmShape) -> Self {
        let g = AmGrads::zeros(&shape);
        Self {
            shape,
            local: g.local,
            local_bias: g.local_bias,
            global: g.global,
            global_bias: g.global_bias,
            w0: g.w0,
            b0: 0.0,
        }
    }

    pub fn shape(&self) -> AmShape {
        self.shape
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.local
            .iter_mut()
            .chain(self.local_bias.iter_mut())
            .chain(self.global.iter_mut())
            .chain(self.global_bias.iter_mut())
            .chain(self.w0.iter_mut())
            .chain(std::iter::once(&mut self.b0))
    }

    fn leaky(&self, x: f64) -> f64 {
        if x > 0.0 {
            x
        } else {
            self.shape.leaky_slope * x
        }
    }

    fn leaky_grad(&self, x: f64) -> f64 {
        if x > 0.0 {
            1.0
        } else {
            self.shape.leaky_slope
        }
    }

    fn check(&self, fsg: &[f64], cand: &[f64]) -> Result<usize, AnswerError> {
        if fsg.len() != cand.len() {
            return Err(AnswerError::WidthMismatch {
                fsg: fsg.len(),
                cand: cand.len(),
            });
        }
        if fsg.len() < self.shape.width {
            return Err(AnswerError::TooNarrow {
                dim: fsg.len(),
                width: self.shape.width,
            });
        }
        Ok(fsg.len() - self.shape.width + 1)
    }

    /// Probability that `cand` answers the question encoded by `fsg`.
    pub fn score(&self, fsg: &[f64], cand: &[f64]) -> Result<f64, AnswerError> {
        Ok(self.forward(fsg, cand)?.prob)
    }

    pub fn forward(&self, fsg: &[f64], cand: &[f64]) -> Result<ScoreTrace, AnswerError> {
        let positions = self.check(fsg, cand)?;
        let (f, w) = (self.shape.filters, self.shape.width);
        let rows = [fsg, cand];
        let mut local_pre = Vec::with_capacity(f * 2 * positions);
        let mut global_pre = Vec::with_capacity(f * positions);
        let mut features = vec![0.0; 3 * f];
        for k in 0..f {
            let kern = self.local.row(k);
            for (r, row) in rows.iter().enumerate() {
                let mut pooled = 0.0;
                for p in 0..positions {
                    let mut z = self.local_bias[k];
                    for t in 0..w {
                        z += kern[t] * row[p + t];
                    }
                    local_pre.push(z);
                    pooled += self.leaky(z);
                }
                features[r * f + k] = pooled / positions as f64;
            }
        }
        for k in 0..f {
            let kern = self.global.row(k);
            let mut pooled = 0.0;
            for p in 0..positions {
                let mut z = self.global_bias[k];
                for t in 0..w {
                    z += kern[t] * fsg[p + t] + kern[w + t] * cand[p + t];
                }
                global_pre.push(z);
                pooled += self.leaky(z);
            }
            features[2 * f + k] = pooled / positions as f64;
        }
        let logit = self.b0
            + self
                .w0
                .iter()
                .zip(&features)
                .map(|(a, b)| a * b)
                .sum::<f64>();
        Ok(ScoreTrace {
            local_pre,
            global_pre,
            features,
            logit,
            prob: sigmoid(logit),
        })
    }

    /// Backprop of `d_logit` through one forward pass.
    pub fn backward(
        &self,
        fsg: &[f64],
        cand: &[f64],
        trace: &ScoreTrace,
        d_logit: f64,
    ) -> ScoreGrads {
        let (f, w) = (self.shape.filters, self.shape.width);
        let positions = fsg.len() - w + 1;
        let rows = [fsg, cand];
        let mut g = AmGrads::zeros(&self.shape);
        let mut d_rows = [vec![0.0; fsg.len()], vec![0.0; cand.len()]];
        g.b0 = d_logit;
        for (i, &x) in trace.features.iter().enumerate() {
            g.w0[i] = d_logit * x;
        }
        let mut idx = 0;
        for k in 0..f {
            for r in 0..2 {
                let d_feat = d_logit * self.w0[r * f + k] / positions as f64;
                for p in 0..positions {
                    let d_pre = d_feat * self.leaky_grad(trace.local_pre[idx]);
                    idx += 1;
                    g.local_bias[k] += d_pre;
                    for t in 0..w {
                        g.local[[k, t]] += d_pre * rows[r][p + t];
                        d_rows[r][p + t] += d_pre * self.local[[k, t]];
                    }
                }
            }
        }
        for k in 0..f {
            let d_feat = d_logit * self.w0[2 * f + k] / positions as f64;
            for p in 0..positions {
                let d_pre = d_feat * self.leaky_grad(trace.global_pre[k * positions + p]);
                g.global_bias[k] += d_pre;
                for t in 0..w {
                    g.global[[k, t]] += d_pre * fsg[p + t];
                    g.global[[k, w + t]] += d_pre * cand[p + t];
                    d_rows[0][p + t] += d_pre * self.global[[k, t]];
                    d_rows[1][p + t] += d_pre * self.global[[k, w + t]];
                }
            }
        }
        let [d_fsg, d_cand] = d_rows;
        ScoreGrads {
            model: g,
            d_fsg,
            d_cand,
        }
    }

    pub fn step(&mut self, g: &AmGrads, lr: f64) {
        self.local.scaled_add(-lr, &g.local);
        self.local_bias.scaled_add(-lr, &g.local_bias);
        self.global.scaled_add(-lr, &g.global);
        self.global_bias.scaled_add(-lr, &g.global_bias);
        self.w0.scaled_add(-lr, &g.w0);
        self.b0 -= lr * g.b0;
    }
}

/// A question as the answering side sees it: no structure, no names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncodedQuestion {
    pub qid: Qid,
    pub kind: QuestionKind,
    pub fsg: Vec<f64>,
    pub candidates: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Response {
    Judgment(bool),
    Choice(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Answer {
    pub qid: Qid,
    pub response: Response,
}

impl Answer {
    pub fn matches(&self, truth: Truth) -> bool {
        match (self.response, truth) {
            (Response::Judgment(a), Truth::Judgment(t)) => a == t,
            (Response::Choice(a), Truth::Choice(t)) => a == t,
            _ => false,
        }
    }
}

/// Judgment: true iff the probability is strictly above one half.
/// Choice: highest probability, lowest index on ties.
pub fn answer(am: &AnswerModel, q: &EncodedQuestion) -> Result<Answer, AnswerError> {
    let probs = q
        .candidates
        .iter()
        .map(|c| am.score(&q.fsg, c))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Answer {
        qid: q.qid,
        response: respond(q.kind, &probs),
    })
}

pub fn respond(kind: QuestionKind, probs: &[f64]) -> Response {
    match kind {
        QuestionKind::Judgment => Response::Judgment(probs[0] > 0.5),
        QuestionKind::Choice => {
            let mut best = 0;
            for (i, &p) in probs.iter().enumerate() {
                if p > probs[best] {
                    best = i;
                }
            }
            Response::Choice(best)
        }
    }
}

/// Encodes a question with `em` and the shared embedding.
pub fn encode_question(
    em: &GcnEncoder,
    tm: &TranslationEmbedding,
    vocab: &PartyVocabulary,
    q: &Question,
) -> Result<EncodedQuestion, AnswerError> {
    let m = build_matrices(tm, vocab, &q.subgraph)?;
    let fsg = em.encode(&m)?;
    let candidates = q
        .candidates
        .iter()
        .map(|&c| tm.entity_vector(vocab, c).map(<[f64]>::to_vec))
        .collect::<Result<Vec<_>, _>>()
        .map_err(EncodeError::from)?;
    Ok(EncodedQuestion {
        qid: q.qid,
        kind: q.kind(),
        fsg: fsg.to_vec(),
        candidates,
    })
}

/// A question with its matrices and candidate vectors looked up once; the
/// embedding is frozen while the answer side trains.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub qid: Qid,
    pub kind: QuestionKind,
    pub truth: Truth,
    pub matrices: SubgraphMatrices,
    pub candidates: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
}

pub fn prepare(
    tm: &TranslationEmbedding,
    vocab: &PartyVocabulary,
    q: &Question,
) -> Result<Prepared, AnswerError> {
    let matrices = build_matrices(tm, vocab, &q.subgraph)?;
    let candidates = q
        .candidates
        .iter()
        .map(|&c| tm.entity_vector(vocab, c).map(<[f64]>::to_vec))
        .collect::<Result<Vec<_>, _>>()
        .map_err(EncodeError::from)?;
    Ok(Prepared {
        qid: q.qid,
        kind: q.kind(),
        truth: q.truth,
        matrices,
        candidates,
        labels: q.labels(),
    })
}

/// Summed candidate loss of one question through encoder and answer model,
/// with gradients for both.
pub fn joint_loss_and_grads(
    am: &AnswerModel,
    em: &GcnEncoder,
    p: &Prepared,
) -> Result<(f64, AmGrads, EncoderGrads), AnswerError> {
    let trace = em.forward(&p.matrices)?;
    let fsg = trace.fsg.as_slice().expect("contiguous");
    let mut total = AmGrads::zeros(&am.shape);
    let mut d_fsg = Array1::<f64>::zeros(fsg.len());
    let mut loss = 0.0;
    for (cand, &label) in p.candidates.iter().zip(&p.labels) {
        let t = am.forward(fsg, cand)?;
        loss += bce_from_logit(t.logit, label);
        let g = am.backward(fsg, cand, &t, t.prob - f64::from(u8::from(label)));
        add_grads(&mut total, &g.model);
        d_fsg += &Array1::from(g.d_fsg);
    }
    let eg = em.backward(&trace, &d_fsg);
    Ok((loss, total, eg))
}

/// Loss of [`joint_loss_and_grads`] together with the sign pattern of every
/// rectifier in encoder and answer model.
pub fn joint_loss_with_pattern(
    am: &AnswerModel,
    em: &GcnEncoder,
    p: &Prepared,
) -> Result<(f64, Vec<bool>), AnswerError> {
    let trace = em.forward(&p.matrices)?;
    let fsg = trace.fsg.as_slice().expect("contiguous");
    let mut pattern = trace.pattern();
    let mut loss = 0.0;
    for (cand, &label) in p.candidates.iter().zip(&p.labels) {
        let t = am.forward(fsg, cand)?;
        loss += bce_from_logit(t.logit, label);
        pattern.extend(t.pattern());
    }
    Ok((loss, pattern))
}

fn add_grads(acc: &mut AmGrads, g: &AmGrads) {
    acc.local += &g.local;
    acc.local_bias += &g.local_bias;
    acc.global += &g.global;
    acc.global_bias += &g.global_bias;
    acc.w0 += &g.w0;
    acc.b0 += g.b0;
}

pub fn prepared_correct(
    am: &AnswerModel,
    em: &GcnEncoder,
    p: &Prepared,
) -> Result<bool, AnswerError> {
    let fsg = em.encode(&p.matrices)?;
    let fsg = fsg.as_slice().expect("contiguous");
    let probs = p
        .candidates
        .iter()
        .map(|c| am.score(fsg, c))
        .collect::<Result<Vec<_>, _>>()?;
    let a = Answer {
        qid: p.qid,
        response: respond(p.kind, &probs),
    };
    Ok(a.matches(p.truth))
}

pub fn prepared_accuracy(
    am: &AnswerModel,
    em: &GcnEncoder,
    ps: &[&Prepared],
) -> Result<f64, AnswerError> {
    if ps.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for p in ps {
        if prepared_correct(am, em, p)? {
            hits += 1;
        }
    }
    Ok(hits as f64 / ps.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JointConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
}

impl Default for JointConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            // Per-question SGD at 0.01 barely moves the model on small graphs.
            lr: 0.05,
            // Validation accuracy often sits flat for a dozen epochs before
            // the model picks up, so stopping early rarely pays off.
            patience: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointHistory {
    pub split: (usize, usize, usize),
    pub train_loss: Vec<f64>,
    pub val_acc: Vec<f64>,
    pub best_epoch: usize,
    pub test_acc: f64,
}

/// Sizes of the train / validation / test parts of `n` questions.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = n * 8 / 10;
    let val = n / 10;
    (train, val, n - train - val)
}

/// Joint training of encoder and answer model on shuffled questions split
/// 80/10/10. Keeps the parameters of the epoch with the best validation
/// accuracy (training accuracy when the validation part is empty).
pub fn train_joint<R: Rng + ?Sized>(
    am: &mut AnswerModel,
    em: &mut GcnEncoder,
    prepared: &[Prepared],
    cfg: &JointConfig,
    rng: &mut R,
) -> Result<JointHistory, AnswerError> {
    if prepared.is_empty() {
        return Err(AnswerError::NoQuestions);
    }
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    order.shuffle(rng);
    let split = split_sizes(prepared.len());
    let (train_idx, rest) = order.split_at(split.0);
    let (val_idx, test_idx) = rest.split_at(split.1);
    let pick = |idx: &[usize]| idx.iter().map(|&i| &prepared[i]).collect::<Vec<_>>();
    let (train, val, test) = (pick(train_idx), pick(val_idx), pick(test_idx));
    let selector = if val.is_empty() { &train } else { &val };

    let mut best = (am.clone(), em.clone());
    let mut best_acc = prepared_accuracy(am, em, selector)?;
    let mut best_epoch = 0;
    let mut history = JointHistory {
        split,
        train_loss: Vec::new(),
        val_acc: Vec::new(),
        best_epoch: 0,
        test_acc: 0.0,
    };
    let mut epoch_order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        epoch_order.shuffle(rng);
        let mut loss_sum = 0.0;
        for &i in &epoch_order {
            let (loss, ga, ge) = joint_loss_and_grads(am, em, train[i])?;
            if !loss.is_finite() {
                return Err(AnswerError::NonFiniteLoss);
            }
            loss_sum += loss;
            am.step(&ga, cfg.lr);
            em.step(&ge, cfg.lr);
        }
        history
            .train_loss
            .push(loss_sum / train.len().max(1) as f64);
        let acc = prepared_accuracy(am, em, selector)?;
        history.val_acc.push(acc);
        if acc > best_acc {
            best_acc = acc;
            best_epoch = epoch;
            best = (am.clone(), em.clone());
        } else if epoch - best_epoch >= cfg.patience {
            log::debug!("joint training stopped early at epoch {epoch}");
            break;
        }
    }
    (*am, *em) = best;
    history.best_epoch = best_epoch;
    history.test_acc = prepared_accuracy(am, em, &test)?;
    Ok(history)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdversarialConfig {
    /// Extra wrong entities sampled per question as additional negatives.
    pub extra_negatives: usize,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for AdversarialConfig {
    fn default() -> Self {
        Self {
            extra_negatives: 3,
            epochs: 2,
            lr: 0.05,
        }
    }
}

/// One (question vector, candidate vector, label) training pair.
#[derive(Debug, Clone)]
pub struct Pair {
    pub fsg: Vec<f64>,
    pub cand: Vec<f64>,
    pub label: bool,
}

/// Pairs from every candidate of `questions` plus `extra_negatives`
/// filtered wrong entities per question. The encoder is only read.
pub fn adversarial_pairs<R: Rng + ?Sized>(
    em: &GcnEncoder,
    tm: &TranslationEmbedding,
    vocab: &PartyVocabulary,
    kg: &KnowledgeGraph,
    questions: &[Question],
    extra_negatives: usize,
    rng: &mut R,
) -> Result<Vec<Pair>, AnswerError> {
    let mut pairs = Vec::new();
    for q in questions {
        let p = prepare(tm, vocab, q)?;
        let fsg = em.encode(&p.matrices)?.to_vec();
        for (cand, &label) in p.candidates.iter().zip(&p.labels) {
            pairs.push(Pair {
                fsg: fsg.clone(),
                cand: cand.clone(),
                label,
            });
        }
        let mut taken = q.candidates.clone();
        for _ in 0..extra_negatives {
            let Some(e) =
                draw_wrong_candidate(kg, &q.subgraph, CandidateSource::Random, &taken, rng)
            else {
                break;
            };
            taken.push(e);
            let cand = tm
                .entity_vector(vocab, e)
                .map_err(EncodeError::from)?
                .to_vec();
            pairs.push(Pair {
                fsg: fsg.clone(),
                cand,
                label: false,
            });
        }
    }
    Ok(pairs)
}

/// Trains only the answer model on the round's pairs; returns the mean
/// loss of each epoch.
pub fn train_adversarial_round<R: Rng + ?Sized>(
    am: &mut AnswerModel,
    em: &GcnEncoder,
    tm: &TranslationEmbedding,
    vocab: &PartyVocabulary,
    kg: &KnowledgeGraph,
    questions: &[Question],
    cfg: &AdversarialConfig,
    rng: &mut R,
) -> Result<Vec<f64>, AnswerError> {
    let pairs = adversarial_pairs(em, tm, vocab, kg, questions, cfg.extra_negatives, rng)?;
    train_pairs(am, &pairs, cfg.epochs, cfg.lr, rng)
}

pub fn train_pairs<R: Rng + ?Sized>(
    am: &mut AnswerModel,
    pairs: &[Pair],
    epochs: usize,
    lr: f64,
    rng: &mut R,
) -> Result<Vec<f64>, AnswerError> {
    if pairs.is_empty() {
        return Err(AnswerError::NoQuestions);
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut losses = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        order.shuffle(rng);
        let mut sum = 0.0;
        for &i in &order {
            let p = &pairs[i];
            let t = am.forward(&p.fsg, &p.cand)?;
            let loss = bce_from_logit(t.logit, p.label);
            if !loss.is_finite() {
                return Err(AnswerError::NonFiniteLoss);
            }
            sum += loss;
            let g = am.backward(&p.fsg, &p.cand, &t, t.prob - f64::from(u8::from(p.label)));
            am.step(&g.model, lr);
        }
        losses.push(sum / pairs.len() as f64);
    }
    Ok(losses)
}
