use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{DuelConfig, DuelError, Stage, TunerKind};
use crate::answer::{
    answer, encode_question, prepare, train_adversarial_round, train_joint, Answer, AnswerModel,
    EncodedQuestion, JointHistory, Prepared,
};
use crate::embed::{PartyVocabulary, TranslationEmbedding};
use crate::encoder::GcnEncoder;
use crate::kg::KnowledgeGraph;
use crate::questions::{sample_question_set, Question};
use crate::tuners::{accuracy, bayes_tune, retrieval_tune, rule_tune, RoundOutcome, TunerHistory};

/// One round of the adversarial loop as the question side saw it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundLog {
    pub round: usize,
    pub accuracy: f64,
    pub size: usize,
    /// Tuner that produced the next round; `None` on the last round.
    pub tuner: Option<TunerKind>,
    /// Why the configured tuner was replaced by the rule tuner.
    pub fallback: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubgameReport {
    pub joint: JointHistory,
    pub rounds: Vec<RoundLog>,
    pub final_accuracy: f64,
    pub converged: bool,
    /// Set when the loop stopped at the round cap with accuracy outside eta.
    pub round_cap_warning: bool,
}

/// Everything one side holds. Nothing here is ever sent as is.
#[derive(Debug, Clone)]
pub struct Party {
    pub label: String,
    pub kg: KnowledgeGraph,
    pub vocab: PartyVocabulary,
    pub em: GcnEncoder,
    pub am: AnswerModel,
    pub q_final: Vec<Question>,
    pub report: Option<SubgameReport>,
    pub(crate) rng: ChaCha8Rng,
}

impl Party {
    pub fn new(label: &str, kg: KnowledgeGraph, salt: &[u8], cfg: &DuelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vocab = PartyVocabulary::new(&kg, salt);
        let dim = cfg.tm.dim;
        let em = GcnEncoder::new(dim, cfg.em_hidden, dim, &mut rng).with_self_loops(cfg.self_loops);
        let am = AnswerModel::new(cfg.am, &mut rng);
        Self {
            label: label.to_owned(),
            kg,
            vocab,
            em,
            am,
            q_final: Vec::new(),
            report: None,
            rng,
        }
    }

    /// Encodes own questions with `em` (the opponent's, when sending).
    pub fn encode_with(
        &self,
        em: &GcnEncoder,
        tm: &TranslationEmbedding,
        questions: &[Question],
    ) -> Result<Vec<EncodedQuestion>, DuelError> {
        questions
            .iter()
            .map(|q| encode_question(em, tm, &self.vocab, q))
            .collect::<Result<_, _>>()
            .map_err(|e| Stage::Encode.wrap(e))
    }

    pub fn answer_all(&self, questions: &[EncodedQuestion]) -> Result<Vec<Answer>, DuelError> {
        questions
            .iter()
            .map(|q| answer(&self.am, q))
            .collect::<Result<_, _>>()
            .map_err(|e| Stage::Answer.wrap(e))
    }

    fn correct_flags(
        &self,
        tm: &TranslationEmbedding,
        qs: &[Question],
    ) -> Result<Vec<bool>, DuelError> {
        let encoded = self.encode_with(&self.em, tm, qs)?;
        let answers = self.answer_all(&encoded)?;
        Ok(qs
            .iter()
            .zip(&answers)
            .map(|(q, a)| a.matches(q.truth))
            .collect())
    }
}

/// Joint training on a fresh question set, then the adversarial loop
/// between question tuner and answer model until accuracy lands in eta or
/// the round cap is hit. The encoder is frozen during the loop.
pub fn run_first_subgame(
    party: &mut Party,
    tm: &TranslationEmbedding,
    cfg: &DuelConfig,
) -> Result<(), DuelError> {
    let kg = &party.kg;
    let q_a = sample_question_set(kg, cfg.joint_size, &cfg.pools, 0, &mut party.rng)
        .map_err(|e| Stage::Sample.wrap(e))?;
    let prepared: Vec<Prepared> = q_a
        .iter()
        .map(|q| prepare(tm, &party.vocab, q))
        .collect::<Result<_, _>>()
        .map_err(|e| Stage::Encode.wrap(e))?;
    let joint = train_joint(
        &mut party.am,
        &mut party.em,
        &prepared,
        &cfg.joint,
        &mut party.rng,
    )
    .map_err(|e| Stage::JointTraining.wrap(e))?;
    log::info!(
        "{}: joint training best epoch {}, test accuracy {:.3}",
        party.label,
        joint.best_epoch,
        joint.test_acc
    );

    let qb = sample_question_set(
        kg,
        cfg.qb_size,
        &cfg.pools,
        cfg.joint_size as u64,
        &mut party.rng,
    )
    .map_err(|e| Stage::Sample.wrap(e))?;
    let mut history = TunerHistory::new(kg, &qb);
    let eta = cfg.eta();
    let max_candidates = cfg.pools.max_candidates();
    let mut current: Vec<Question> = qb[..cfg.round_size].to_vec();
    let mut rounds = Vec::new();
    let (final_accuracy, converged) = loop {
        let flags = party.correct_flags(tm, &current)?;
        let outcome = RoundOutcome::split(&current, &flags);
        let acc = accuracy(&outcome).map_err(|e| Stage::Tune.wrap(e))?;
        let round = rounds.len();
        log::debug!("{}: round {round} accuracy {acc:.4}", party.label);
        if eta.contains(acc) || round >= cfg.max_rounds {
            rounds.push(RoundLog {
                round,
                accuracy: acc,
                size: current.len(),
                tuner: None,
                fallback: None,
            });
            break (acc, eta.contains(acc));
        }
        history.record(kg, &outcome);
        let picked = match cfg.tuner {
            TunerKind::Rule => Ok(None),
            TunerKind::Bayes => bayes_tune(
                &history,
                &qb,
                eta,
                current.len(),
                cfg.bayes_alpha,
                &mut party.rng,
            )
            .map(Some),
            TunerKind::Retrieval => {
                retrieval_tune(&history, &qb, eta, cfg.gamma, current.len()).map(Some)
            }
        };
        let (next, used, fallback) = match picked {
            Ok(Some(next)) => (next, cfg.tuner, None),
            Ok(None) => (
                rule_tune(kg, &outcome, eta, max_candidates, &mut party.rng)
                    .map_err(|e| Stage::Tune.wrap(e))?,
                TunerKind::Rule,
                None,
            ),
            Err(e) => {
                log::debug!(
                    "{}: {} tuner unavailable ({e}); using rules",
                    party.label,
                    cfg.tuner
                );
                (
                    rule_tune(kg, &outcome, eta, max_candidates, &mut party.rng)
                        .map_err(|e| Stage::Tune.wrap(e))?,
                    TunerKind::Rule,
                    Some(e.to_string()),
                )
            }
        };
        debug_assert_eq!(next.len(), current.len());
        rounds.push(RoundLog {
            round,
            accuracy: acc,
            size: current.len(),
            tuner: Some(used),
            fallback,
        });
        train_adversarial_round(
            &mut party.am,
            &party.em,
            tm,
            &party.vocab,
            kg,
            &current,
            &cfg.adversarial,
            &mut party.rng,
        )
        .map_err(|e| Stage::Adversarial.wrap(e))?;
        current = next;
    };
    if !converged {
        log::warn!(
            "{}: round cap {} reached with accuracy {final_accuracy:.4} outside [{}, {}]",
            party.label,
            cfg.max_rounds,
            eta.lo,
            eta.hi
        );
    }
    party.q_final = current;
    party.report = Some(SubgameReport {
        joint,
        rounds,
        final_accuracy,
        converged,
        round_cap_warning: !converged,
    });
    Ok(())
}
