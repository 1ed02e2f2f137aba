//! The duel: shared translation model, each side's adversarial question
//! game, then cross-answering through the exchange and a verdict.

mod config;
mod exchange;
mod party;

pub use config::{DuelConfig, Seeds, TmConfig, TunerKind};
pub use exchange::{Artifact, Exchange};
pub use party::{run_first_subgame, Party, RoundLog, SubgameReport};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::answer::{answer, encode_question, Answer, AnswerError, AnswerModel, EncodedQuestion};
use crate::embed::{
    incremental_train, EmbedError, PartyVocabulary, TrainingParty, TranslationEmbedding,
};
use crate::encoder::GcnEncoder;
use crate::kg::{common_subgraph, KgError, KnowledgeGraph};
use crate::protocol::{Message, MessageKind, ProtocolError, ScoreMessage};
use crate::questions::{
    difficulty_features, sample_question_set, Qid, Question, QuestionError, QuestionPools, Truth,
};
use crate::tuners::TuneError;

pub const ALPHA: &str = "alpha";
pub const BETA: &str = "beta";

/// Extra-set attempts per tolerance level before relaxing it.
const SIMILAR_ATTEMPTS: usize = 5;
const SIMILAR_RELAXATIONS: usize = 10;
const SIMILAR_POOL_FACTOR: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Translation,
    Sample,
    JointTraining,
    Adversarial,
    Tune,
    Encode,
    Answer,
    Exchange,
    Score,
    Common,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Translation => "translation-model",
            Stage::Sample => "question-sampling",
            Stage::JointTraining => "joint-training",
            Stage::Adversarial => "adversarial-training",
            Stage::Tune => "tuning",
            Stage::Encode => "encoding",
            Stage::Answer => "answering",
            Stage::Exchange => "exchange",
            Stage::Score => "scoring",
            Stage::Common => "common-knowledge",
        })
    }
}

impl Stage {
    pub(crate) fn wrap(self, e: impl Into<StageError>) -> DuelError {
        DuelError::Stage {
            stage: self,
            source: e.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Question(#[from] QuestionError),
    #[error(transparent)]
    Answer(#[from] AnswerError),
    #[error(transparent)]
    Tune(#[from] TuneError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Error)]
pub enum DuelError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: StageError,
    },
}

impl DuelError {
    pub fn stage(&self) -> Option<Stage> {
        match self {
            DuelError::Stage { stage, .. } => Some(*stage),
            DuelError::Config(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    AlphaWins,
    BetaWins,
    Equal,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::AlphaWins => "alpha wins",
            Verdict::BetaWins => "beta wins",
            Verdict::Equal => "equal quality",
        })
    }
}

/// Higher cross-answer score wins; only exact equality is a draw.
pub fn verdict(score_alpha: f64, score_beta: f64) -> Verdict {
    if score_alpha > score_beta {
        Verdict::AlphaWins
    } else if score_beta > score_alpha {
        Verdict::BetaWins
    } else {
        Verdict::Equal
    }
}

/// Truth of every question a party sent, kept on its own side.
pub type AnswerKey = BTreeMap<Qid, Truth>;

/// Encodes the sender's final questions with the opponent's encoder.
pub fn encode_for_opponent(
    sender: &Party,
    opponent_em: &GcnEncoder,
    tm: &TranslationEmbedding,
    questions: &[Question],
) -> Result<(Vec<EncodedQuestion>, AnswerKey), DuelError> {
    let encoded = sender.encode_with(opponent_em, tm, questions)?;
    let key = questions.iter().map(|q| (q.qid, q.truth)).collect();
    Ok((encoded, key))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreReport {
    pub n_questions: usize,
    pub n_correct: usize,
    pub score: f64,
    pub verdicts: Vec<(Qid, bool)>,
}

impl ScoreReport {
    pub fn message(&self) -> ScoreMessage {
        ScoreMessage::new(self.n_questions, self.n_correct)
    }
}

/// Marks answers against the key. Answers must cover the key's qids
/// exactly once.
pub fn score(answers: &[Answer], key: &AnswerKey) -> Result<ScoreReport, DuelError> {
    let fail = |m: String| Stage::Score.wrap(StageError::Other(m));
    if key.is_empty() {
        return Err(fail("empty answer key".into()));
    }
    let mut seen = BTreeSet::new();
    let mut verdicts = Vec::with_capacity(answers.len());
    for a in answers {
        let truth = key
            .get(&a.qid)
            .ok_or_else(|| fail(format!("answer to unknown question {}", a.qid.0)))?;
        if !seen.insert(a.qid) {
            return Err(fail(format!("question {} answered twice", a.qid.0)));
        }
        verdicts.push((a.qid, a.matches(*truth)));
    }
    if seen.len() != key.len() {
        return Err(fail(format!(
            "{} of {} questions unanswered",
            key.len() - seen.len(),
            key.len()
        )));
    }
    let n_correct = verdicts.iter().filter(|(_, ok)| *ok).count();
    let msg = ScoreMessage::new(key.len(), n_correct);
    Ok(ScoreReport {
        n_questions: msg.n,
        n_correct,
        score: msg.score,
        verdicts,
    })
}

/// Score of a model answering questions it encodes itself.
pub fn self_score(
    am: &AnswerModel,
    em: &GcnEncoder,
    tm: &TranslationEmbedding,
    vocab: &PartyVocabulary,
    questions: &[Question],
) -> Result<ScoreReport, DuelError> {
    let mut answers = Vec::with_capacity(questions.len());
    for q in questions {
        let eq = encode_question(em, tm, vocab, q).map_err(|e| Stage::Encode.wrap(e))?;
        answers.push(answer(am, &eq).map_err(|e| Stage::Answer.wrap(e))?);
    }
    let key = questions.iter().map(|q| (q.qid, q.truth)).collect();
    score(&answers, &key)
}

fn session_salt(cfg: &DuelConfig) -> Vec<u8> {
    format!("qeii-session-{}", cfg.seeds.shared).into_bytes()
}

/// Both parties, untrained, with vocabularies under the session salt.
pub fn setup(
    kg_alpha: KnowledgeGraph,
    kg_beta: KnowledgeGraph,
    cfg: &DuelConfig,
) -> Result<(Party, Party), DuelError> {
    cfg.validate()?;
    for kg in [&kg_alpha, &kg_beta] {
        if kg.is_empty() {
            return Err(Stage::Sample.wrap(KgError::Empty));
        }
    }
    let salt = session_salt(cfg);
    Ok((
        Party::new(ALPHA, kg_alpha, &salt, cfg, cfg.seeds.alpha),
        Party::new(BETA, kg_beta, &salt, cfg, cfg.seeds.beta),
    ))
}

/// Incremental translation-model training, alternating sides; the final
/// model goes out as `tm.json`.
pub fn train_translation(
    alpha: &Party,
    beta: &Party,
    cfg: &DuelConfig,
    ex: &mut Exchange,
) -> Result<TranslationEmbedding, DuelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seeds.shared);
    let mut tm = TranslationEmbedding::new(cfg.tm.dim, cfg.tm.margin);
    let parties = [
        TrainingParty {
            kg: &alpha.kg,
            vocab: &alpha.vocab,
        },
        TrainingParty {
            kg: &beta.kg,
            vocab: &beta.vocab,
        },
    ];
    let losses = incremental_train(
        &mut tm,
        &parties,
        cfg.tm.alternations,
        cfg.tm.epochs_per_segment,
        cfg.tm.lr,
        &mut rng,
    )
    .map_err(|e| Stage::Translation.wrap(e))?;
    log::info!(
        "translation model: {} epochs, loss {:.4} -> {:.4}",
        losses.len(),
        losses.first().copied().unwrap_or(0.0),
        losses.last().copied().unwrap_or(0.0)
    );
    match ex
        .send("tm.json", &Message::Tm(tm))
        .map_err(|e| Stage::Exchange.wrap(e))?
    {
        Message::Tm(received) => Ok(received),
        _ => unreachable!("kind follows the file name"),
    }
}

/// Runs both first subgames, concurrently.
pub fn play_first_subgames(
    alpha: &mut Party,
    beta: &mut Party,
    tm: &TranslationEmbedding,
    cfg: &DuelConfig,
) -> Result<(), DuelError> {
    let (ra, rb) = std::thread::scope(|s| {
        let ha = s.spawn(|| run_first_subgame(alpha, tm, cfg));
        let hb = s.spawn(|| run_first_subgame(beta, tm, cfg));
        let join = |h: std::thread::ScopedJoinHandle<'_, _>| {
            h.join().unwrap_or_else(|p| std::panic::resume_unwind(p))
        };
        (join(ha), join(hb))
    });
    ra?;
    rb?;
    Ok(())
}

fn send_em(ex: &mut Exchange, party: &Party) -> Result<GcnEncoder, DuelError> {
    let name = MessageKind::Em.file_name(&party.label);
    match ex
        .send(&name, &Message::Em(party.em.clone()))
        .map_err(|e| Stage::Exchange.wrap(e))?
    {
        Message::Em(em) => Ok(em),
        _ => unreachable!("kind follows the file name"),
    }
}

/// `asker` sends `questions` encoded with `answerer`'s encoder (as received
/// by the asker); `answerer` replies; `asker` scores and returns the
/// answerer's score.
fn cross_answer(
    asker: &Party,
    answerer: &Party,
    answerer_em: &GcnEncoder,
    tm: &TranslationEmbedding,
    questions: &[Question],
    prefix: &str,
    ex: &mut Exchange,
) -> Result<ScoreMessage, DuelError> {
    let (encoded, key) = encode_for_opponent(asker, answerer_em, tm, questions)?;
    let name = format!("{prefix}{}", MessageKind::Questions.file_name(&asker.label));
    let received = match ex
        .send(&name, &Message::Questions(encoded))
        .map_err(|e| Stage::Exchange.wrap(e))?
    {
        Message::Questions(q) => q,
        _ => unreachable!("kind follows the file name"),
    };
    let answers = answerer.answer_all(&received)?;
    let name = format!(
        "{prefix}{}",
        MessageKind::Answers.file_name(&answerer.label)
    );
    let returned = match ex
        .send(&name, &Message::Answers(answers))
        .map_err(|e| Stage::Exchange.wrap(e))?
    {
        Message::Answers(a) => a,
        _ => unreachable!("kind follows the file name"),
    };
    let report = score(&returned, &key)?;
    let name = format!("{prefix}{}", MessageKind::Score.file_name(&answerer.label));
    match ex
        .send(&name, &Message::Score(report.message()))
        .map_err(|e| Stage::Exchange.wrap(e))?
    {
        Message::Score(s) => Ok(s),
        _ => unreachable!("kind follows the file name"),
    }
}

fn mean_features(kg: &KnowledgeGraph, qs: &[Question]) -> [f64; 3] {
    let mut m = [0.0; 3];
    for q in qs {
        let f = difficulty_features(kg, q).as_array();
        for j in 0..3 {
            m[j] += f[j];
        }
    }
    m.map(|x| x / qs.len().max(1) as f64)
}

fn within(m: &[f64; 3], target: &[f64; 3], tol: f64) -> bool {
    m.iter()
        .zip(target)
        .all(|(a, b)| (a - b).abs() <= tol * b.abs() + 1e-12)
}

/// A fresh question set whose per-feature mean difficulty is within
/// `tolerance` (relative) of `template`'s. Each template question is
/// matched with its nearest unused question from a larger random pool.
/// Failing that, the tolerance is widened step by step and a warning
/// returned.
pub fn similar_set<R: Rng + ?Sized>(
    kg: &KnowledgeGraph,
    template: &[Question],
    pools: &QuestionPools,
    tolerance: f64,
    first_qid: u64,
    rng: &mut R,
) -> Result<(Vec<Question>, Option<String>), DuelError> {
    let target = mean_features(kg, template);
    let feats: Vec<[f64; 3]> = template
        .iter()
        .map(|q| difficulty_features(kg, q).as_array())
        .collect();
    let spread: Vec<f64> = (0..3)
        .map(|j| {
            let var = feats
                .iter()
                .map(|f| (f[j] - target[j]).powi(2))
                .sum::<f64>()
                / feats.len().max(1) as f64;
            var.sqrt().max(1e-6)
        })
        .collect();
    let mut best: Option<(f64, Vec<Question>)> = None;
    for level in 0..=SIMILAR_RELAXATIONS {
        let tol = tolerance * (level + 1) as f64;
        for _ in 0..SIMILAR_ATTEMPTS {
            let pool = sample_question_set(
                kg,
                template.len() * SIMILAR_POOL_FACTOR,
                pools,
                first_qid,
                rng,
            )
            .map_err(|e| Stage::Sample.wrap(e))?;
            let pool_feats: Vec<[f64; 3]> = pool
                .iter()
                .map(|q| difficulty_features(kg, q).as_array())
                .collect();
            let mut used = vec![false; pool.len()];
            let mut picked = Vec::with_capacity(template.len());
            for f in &feats {
                let dist = |g: &[f64; 3]| {
                    (0..3)
                        .map(|j| ((f[j] - g[j]) / spread[j]).powi(2))
                        .sum::<f64>()
                };
                let i = (0..pool.len())
                    .filter(|&i| !used[i])
                    .min_by(|&a, &b| dist(&pool_feats[a]).total_cmp(&dist(&pool_feats[b])))
                    .expect("pool larger than template");
                used[i] = true;
                picked.push(i);
            }
            picked.sort_unstable();
            let set: Vec<Question> = picked.iter().map(|&i| pool[i].clone()).collect();
            let m = mean_features(kg, &set);
            if within(&m, &target, tol) {
                let warning = (level > 0).then(|| {
                    format!("difficulty tolerance relaxed from {tolerance} to {tol} to fill a question set")
                });
                return Ok((set, warning));
            }
            let gap = m
                .iter()
                .zip(&target)
                .map(|(a, b)| (a - b).abs() / b.abs().max(1e-12))
                .fold(0.0, f64::max);
            if best.as_ref().map_or(true, |(g, _)| gap < *g) {
                best = Some((gap, set));
            }
        }
    }
    let (gap, set) = best.expect("at least one attempt");
    Ok((
        set,
        Some(format!(
            "no question set within relaxed tolerance; closest has relative gap {gap:.4}"
        )),
    ))
}

/// Cross and self scores for one pair of question sets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SetScores {
    pub index: usize,
    /// Alpha answering beta's questions.
    pub alpha_cross: ScoreMessage,
    pub beta_cross: ScoreMessage,
    /// Alpha answering its own questions with its own encoder.
    pub alpha_self: f64,
    pub beta_self: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DuelReport {
    pub sets: Vec<SetScores>,
    pub mean_alpha_cross: f64,
    pub mean_beta_cross: f64,
    pub mean_alpha_self: f64,
    pub mean_beta_self: f64,
    pub verdict: Verdict,
    pub alpha_subgame: SubgameReport,
    pub beta_subgame: SubgameReport,
    pub warnings: Vec<String>,
}

impl DuelReport {
    /// Cross-answer scores of the first set.
    pub fn first_scores(&self) -> (f64, f64) {
        (
            self.sets[0].alpha_cross.score,
            self.sets[0].beta_cross.score,
        )
    }
}

fn set_prefix(index: usize) -> String {
    if index == 0 {
        String::new()
    } else {
        format!("set_{index:02}/")
    }
}

/// Exchanges encoders, then for each of `cfg.repeat_sets` question-set
/// pairs (the tuned final sets first, then sets of similar difficulty)
/// cross-answers both ways and records self-answer scores.
pub fn repeated_evaluation(
    alpha: &mut Party,
    beta: &mut Party,
    tm: &TranslationEmbedding,
    cfg: &DuelConfig,
    ex: &mut Exchange,
) -> Result<(Vec<SetScores>, Vec<String>), DuelError> {
    let em_alpha_at_beta = send_em(ex, alpha)?;
    let em_beta_at_alpha = send_em(ex, beta)?;
    let mut warnings = Vec::new();
    let mut sets = Vec::with_capacity(cfg.repeat_sets);
    for index in 0..cfg.repeat_sets {
        let (qa, qb) = if index == 0 {
            (alpha.q_final.clone(), beta.q_final.clone())
        } else {
            let first_qid = (index as u64) << 32;
            let mut extra = |p: &mut Party| -> Result<Vec<Question>, DuelError> {
                let (set, warn) = similar_set(
                    &p.kg,
                    &p.q_final,
                    &cfg.pools,
                    cfg.similarity_tolerance,
                    first_qid,
                    &mut p.rng,
                )?;
                if let Some(w) = warn {
                    log::warn!("{} set {index}: {w}", p.label);
                    warnings.push(format!("{} set {index}: {w}", p.label));
                }
                Ok(set)
            };
            (extra(alpha)?, extra(beta)?)
        };
        let prefix = set_prefix(index);
        let alpha_cross = cross_answer(beta, alpha, &em_alpha_at_beta, tm, &qb, &prefix, ex)?;
        let beta_cross = cross_answer(alpha, beta, &em_beta_at_alpha, tm, &qa, &prefix, ex)?;
        let alpha_self = self_score(&alpha.am, &alpha.em, tm, &alpha.vocab, &qa)?.score;
        let beta_self = self_score(&beta.am, &beta.em, tm, &beta.vocab, &qb)?.score;
        log::info!(
            "set {index}: alpha {:.2} / beta {:.2} (self {alpha_self:.2} / {beta_self:.2})",
            alpha_cross.score,
            beta_cross.score
        );
        sets.push(SetScores {
            index,
            alpha_cross,
            beta_cross,
            alpha_self,
            beta_self,
        });
    }
    Ok((sets, warnings))
}

/// A finished duel: both trained parties, the shared model and the report.
#[derive(Debug)]
pub struct Duel {
    pub alpha: Party,
    pub beta: Party,
    pub tm: TranslationEmbedding,
    pub report: DuelReport,
}

pub fn run_duel(
    kg_alpha: KnowledgeGraph,
    kg_beta: KnowledgeGraph,
    cfg: &DuelConfig,
    ex: &mut Exchange,
) -> Result<Duel, DuelError> {
    let (mut alpha, mut beta) = setup(kg_alpha, kg_beta, cfg)?;
    let tm = train_translation(&alpha, &beta, cfg, ex)?;
    play_first_subgames(&mut alpha, &mut beta, &tm, cfg)?;
    let (sets, mut warnings) = repeated_evaluation(&mut alpha, &mut beta, &tm, cfg, ex)?;
    let alpha_subgame = alpha.report.clone().expect("subgame finished");
    let beta_subgame = beta.report.clone().expect("subgame finished");
    for (label, r) in [(ALPHA, &alpha_subgame), (BETA, &beta_subgame)] {
        if r.round_cap_warning {
            warnings.insert(
                0,
                format!(
                    "{label}: round cap reached with accuracy {:.4} outside eta",
                    r.final_accuracy
                ),
            );
        }
    }
    let n = sets.len() as f64;
    let mean = |f: &dyn Fn(&SetScores) -> f64| sets.iter().map(f).sum::<f64>() / n;
    let mean_alpha_cross = mean(&|s| s.alpha_cross.score);
    let mean_beta_cross = mean(&|s| s.beta_cross.score);
    let report = DuelReport {
        mean_alpha_cross,
        mean_beta_cross,
        mean_alpha_self: mean(&|s| s.alpha_self),
        mean_beta_self: mean(&|s| s.beta_self),
        verdict: verdict(mean_alpha_cross, mean_beta_cross),
        sets,
        alpha_subgame,
        beta_subgame,
        warnings,
    };
    Ok(Duel {
        alpha,
        beta,
        tm,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommonScores {
    pub repetitions: Vec<(f64, f64)>,
    pub mean_alpha: f64,
    pub mean_beta: f64,
}

/// Both trained answer models on questions drawn from the triples the two
/// graphs share, each with its own encoder; scores averaged over
/// `repetitions` fresh sets of `n` questions.
pub fn common_knowledge_eval(
    alpha: &Party,
    beta: &Party,
    tm: &TranslationEmbedding,
    cfg: &DuelConfig,
    n: usize,
    repetitions: usize,
) -> Result<CommonScores, DuelError> {
    let common = common_subgraph(&alpha.kg, &beta.kg);
    if common.is_empty() {
        return Err(Stage::Common.wrap(KgError::Empty));
    }
    if n == 0 || repetitions == 0 {
        return Err(DuelError::Config(
            "common evaluation needs n and repetitions >= 1".into(),
        ));
    }
    let vocab = PartyVocabulary::new(&common, &session_salt(cfg));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seeds.shared ^ 0x00c0_ffee);
    let mut reps = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let qs = sample_question_set(&common, n, &cfg.pools, 0, &mut rng)
            .map_err(|e| Stage::Common.wrap(e))?;
        let a = self_score(&alpha.am, &alpha.em, tm, &vocab, &qs)?.score;
        let b = self_score(&beta.am, &beta.em, tm, &vocab, &qs)?.score;
        reps.push((a, b));
    }
    let k = reps.len() as f64;
    Ok(CommonScores {
        mean_alpha: reps.iter().map(|r| r.0).sum::<f64>() / k,
        mean_beta: reps.iter().map(|r| r.1).sum::<f64>() / k,
        repetitions: reps,
    })
}
