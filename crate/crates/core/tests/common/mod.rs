#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qeii::answer::{joint_loss_and_grads, joint_loss_with_pattern, prepare, AmShape, AnswerModel};
use qeii::embed::{pair_grad, pair_loss, PartyVocabulary, TranslationEmbedding};
use qeii::encoder::GcnEncoder;
use qeii::gradcheck::{check_gradient, GradReport};
use qeii::kg::KnowledgeGraph;
use qeii::questions::{make_question, sample_subgraph, Qid};

pub const STEP: f64 = 1e-3;
pub const TOLERANCE: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_vec(r: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| r.gen_range(-scale..scale)).collect()
}

/// Runs `point` until `needed` points are differentiable at step size and
/// returns their reports.
pub fn collect_points(
    needed: usize,
    seed: u64,
    mut point: impl FnMut(&mut ChaCha8Rng) -> Option<GradReport>,
) -> Vec<GradReport> {
    let mut r = rng(seed);
    let mut out = Vec::new();
    for _ in 0..needed * 50 {
        if let Some(rep) = point(&mut r) {
            out.push(rep);
            if out.len() == needed {
                break;
            }
        }
    }
    out
}

/// Hinge-active translation pair: all six slot vectors perturbed.
pub fn transe_point(r: &mut ChaCha8Rng) -> Option<GradReport> {
    let dim = 8;
    let margin = 4.0;
    let mut slots: Vec<Vec<f64>> = (0..6).map(|_| random_vec(r, dim, 0.5)).collect();
    let loss_of = |s: &[Vec<f64>]| pair_loss(margin, [&s[0], &s[1], &s[2]], [&s[3], &s[4], &s[5]]);
    if loss_of(&slots) < 0.5 {
        return None;
    }
    let g = pair_grad(
        margin,
        [&slots[0], &slots[1], &slots[2]],
        [&slots[3], &slots[4], &slots[5]],
    );
    let analytic: Vec<f64> = g.pos.iter().chain(&g.neg).flatten().copied().collect();
    check_gradient(&analytic, STEP, |i, d| {
        let (slot, k) = (i / dim, i % dim);
        slots[slot][k] += d;
        let l = loss_of(&slots);
        slots[slot][k] -= d;
        (l > 0.0).then_some(l)
    })
}

/// Probability output of the answer model against every parameter and
/// both input vectors.
pub fn am_score_point(r: &mut ChaCha8Rng) -> Option<GradReport> {
    let shape = AmShape {
        filters: 2,
        width: 3,
        leaky_slope: 0.01,
    };
    let dim = 6;
    let mut am = AnswerModel::new(shape, r);
    for b in am.local_bias.iter_mut().chain(am.global_bias.iter_mut()) {
        *b = r.gen_range(-0.3..0.3);
    }
    am.b0 = r.gen_range(-0.3..0.3);
    let mut fsg = random_vec(r, dim, 1.0);
    let mut cand = random_vec(r, dim, 1.0);
    let t = am.forward(&fsg, &cand).ok()?;
    let base = t.pattern();
    let g = am.backward(&fsg, &cand, &t, t.prob * (1.0 - t.prob));
    let mut analytic = g.model.flat();
    let n_params = analytic.len();
    analytic.extend(&g.d_fsg);
    analytic.extend(&g.d_cand);
    check_gradient(&analytic, STEP, |i, d| {
        let nudge = |am: &mut AnswerModel, fsg: &mut Vec<f64>, cand: &mut Vec<f64>, d: f64| {
            if i < n_params {
                *am.params_mut().nth(i).unwrap() += d;
            } else if i < n_params + dim {
                fsg[i - n_params] += d;
            } else {
                cand[i - n_params - dim] += d;
            }
        };
        nudge(&mut am, &mut fsg, &mut cand, d);
        let t = am.forward(&fsg, &cand).unwrap();
        nudge(&mut am, &mut fsg, &mut cand, -d);
        (t.pattern() == base).then_some(t.prob)
    })
}

pub struct JointFixture {
    pub kg: KnowledgeGraph,
    pub vocab: PartyVocabulary,
    pub tm: TranslationEmbedding,
}

pub fn joint_fixture() -> JointFixture {
    let kg = qeii::synthetic::world(120, 9);
    let vocab = PartyVocabulary::new(&kg, b"grad");
    let mut tm = TranslationEmbedding::new(6, 1.0);
    tm.register(&vocab, &mut rng(1));
    JointFixture { kg, vocab, tm }
}

/// Summed candidate loss of one question against every encoder and answer
/// model parameter.
pub fn joint_point(fx: &JointFixture, r: &mut ChaCha8Rng) -> Option<GradReport> {
    let shape = AmShape {
        filters: 2,
        width: 3,
        leaky_slope: 0.01,
    };
    let size = r.gen_range(3..=5);
    let n_cands = r.gen_range(1..=3);
    let sg = sample_subgraph(&fx.kg, size, r).ok()?;
    let q = make_question(&fx.kg, sg, n_cands, Qid(0), r).ok()?;
    let p = prepare(&fx.tm, &fx.vocab, &q).ok()?;
    let mut am = AnswerModel::new(shape, r);
    let mut em = GcnEncoder::new(6, 4, 6, r).with_self_loops(r.gen_bool(0.5));
    let (_, base) = joint_loss_with_pattern(&am, &em, &p).ok()?;
    let (_, ga, ge) = joint_loss_and_grads(&am, &em, &p).ok()?;
    let mut analytic: Vec<f64> = ge.w1.iter().chain(ge.w2.iter()).copied().collect();
    let n_em = analytic.len();
    let n_w1 = ge.w1.len();
    analytic.extend(ga.flat());
    check_gradient(&analytic, STEP, |i, d| {
        let nudge = |am: &mut AnswerModel, em: &mut GcnEncoder, d: f64| {
            if i < n_w1 {
                *em.w1_mut().iter_mut().nth(i).unwrap() += d;
            } else if i < n_em {
                *em.w2_mut().iter_mut().nth(i - n_w1).unwrap() += d;
            } else {
                *am.params_mut().nth(i - n_em).unwrap() += d;
            }
        };
        nudge(&mut am, &mut em, d);
        let (loss, pattern) = joint_loss_with_pattern(&am, &em, &p).unwrap();
        nudge(&mut am, &mut em, -d);
        (pattern == base).then_some(loss)
    })
}

pub fn worst(reports: &[GradReport]) -> f64 {
    reports.iter().map(|r| r.max_rel_err).fold(0.0, f64::max)
}
