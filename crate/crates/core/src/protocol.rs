//! The five messages that cross the party boundary, their file names, and
//! a scanner that checks exchanged bytes for leaked surface forms.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answer::{Answer, EncodedQuestion, Response};
use crate::embed::{EmbedError, TranslationEmbedding};
use crate::encoder::{EncodeError, GcnEncoder};
use crate::questions::{Qid, QuestionKind};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("unrecognised message file name {0:?}")]
    UnknownFile(String),
    #[error("{kind} message: {reason}")]
    Invalid { kind: MessageKind, reason: String },
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn invalid(kind: MessageKind, reason: impl Into<String>) -> ProtocolError {
    ProtocolError::Invalid {
        kind,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageKind {
    Tm,
    Em,
    Questions,
    Answers,
    Score,
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MessageKind::Tm => "tm",
            MessageKind::Em => "em",
            MessageKind::Questions => "questions",
            MessageKind::Answers => "answers",
            MessageKind::Score => "score",
        })
    }
}

impl MessageKind {
    pub const ALL: [MessageKind; 5] = [
        MessageKind::Tm,
        MessageKind::Em,
        MessageKind::Questions,
        MessageKind::Answers,
        MessageKind::Score,
    ];

    /// `tm.json`, or `<kind>_<party>.json` for the per-party messages.
    pub fn file_name(self, party: &str) -> String {
        match self {
            MessageKind::Tm => "tm.json".to_owned(),
            k => format!("{k}_{party}.json"),
        }
    }

    /// Kind and party label of a message file name.
    pub fn from_file_name(name: &str) -> Result<(Self, Option<String>), ProtocolError> {
        let unknown = || ProtocolError::UnknownFile(name.to_owned());
        let stem = name.strip_suffix(".json").ok_or_else(unknown)?;
        if stem == "tm" {
            return Ok((MessageKind::Tm, None));
        }
        let (prefix, party) = stem.split_once('_').ok_or_else(unknown)?;
        if party.is_empty() {
            return Err(unknown());
        }
        let kind = match prefix {
            "em" => MessageKind::Em,
            "questions" => MessageKind::Questions,
            "answers" => MessageKind::Answers,
            "score" => MessageKind::Score,
            _ => return Err(unknown()),
        };
        Ok((kind, Some(party.to_owned())))
    }

    pub fn from_path(path: &Path) -> Result<(Self, Option<String>), ProtocolError> {
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| ProtocolError::UnknownFile(path.display().to_string()))?;
        Self::from_file_name(name)
    }
}

/// Wire form of one answer: exactly one of the two response fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnswerWire {
    qid: Qid,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    judgment: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    choice: Option<usize>,
}

impl From<&Answer> for AnswerWire {
    fn from(a: &Answer) -> Self {
        let (judgment, choice) = match a.response {
            Response::Judgment(b) => (Some(b), None),
            Response::Choice(i) => (None, Some(i)),
        };
        Self {
            qid: a.qid,
            judgment,
            choice,
        }
    }
}

impl TryFrom<AnswerWire> for Answer {
    type Error = ProtocolError;

    fn try_from(w: AnswerWire) -> Result<Self, Self::Error> {
        let response = match (w.judgment, w.choice) {
            (Some(b), None) => Response::Judgment(b),
            (None, Some(i)) => Response::Choice(i),
            _ => {
                return Err(invalid(
                    MessageKind::Answers,
                    format!("answer {} needs exactly one of judgment, choice", w.qid.0),
                ))
            }
        };
        Ok(Answer {
            qid: w.qid,
            response,
        })
    }
}

/// Percentage score of one answering run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreMessage {
    pub n: usize,
    pub n_correct: usize,
    pub score: f64,
}

impl ScoreMessage {
    pub fn new(n: usize, n_correct: usize) -> Self {
        Self {
            n,
            n_correct,
            score: percentage(n, n_correct),
        }
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.n == 0 || self.n_correct > self.n {
            return Err(invalid(
                MessageKind::Score,
                format!("{} correct of {}", self.n_correct, self.n),
            ));
        }
        if self.score != percentage(self.n, self.n_correct) {
            return Err(invalid(
                MessageKind::Score,
                format!("score {} disagrees with counts", self.score),
            ));
        }
        Ok(())
    }
}

pub fn percentage(n: usize, n_correct: usize) -> f64 {
    100.0 * n_correct as f64 / n as f64
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Tm(TranslationEmbedding),
    Em(GcnEncoder),
    Questions(Vec<EncodedQuestion>),
    Answers(Vec<Answer>),
    Score(ScoreMessage),
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        match self {
            Message::Tm(_) => MessageKind::Tm,
            Message::Em(_) => MessageKind::Em,
            Message::Questions(_) => MessageKind::Questions,
            Message::Answers(_) => MessageKind::Answers,
            Message::Score(_) => MessageKind::Score,
        }
    }

    pub fn to_json(&self) -> String {
        match self {
            Message::Tm(tm) => tm.to_json(),
            Message::Em(em) => em.to_json(),
            Message::Questions(qs) => serde_json::to_string(qs).expect("questions serialize"),
            Message::Answers(a) => {
                let wire: Vec<AnswerWire> = a.iter().map(AnswerWire::from).collect();
                serde_json::to_string(&wire).expect("answers serialize")
            }
            Message::Score(s) => serde_json::to_string(s).expect("score serializes"),
        }
    }

    /// Parses and validates; any schema violation is an error.
    pub fn parse(kind: MessageKind, text: &str) -> Result<Self, ProtocolError> {
        let msg = match kind {
            MessageKind::Tm => Message::Tm(TranslationEmbedding::from_json(text)?),
            MessageKind::Em => Message::Em(GcnEncoder::from_json(text)?),
            MessageKind::Questions => Message::Questions(serde_json::from_str(text)?),
            MessageKind::Answers => {
                let wire: Vec<AnswerWire> = serde_json::from_str(text)?;
                Message::Answers(
                    wire.into_iter()
                        .map(Answer::try_from)
                        .collect::<Result<_, _>>()?,
                )
            }
            MessageKind::Score => Message::Score(serde_json::from_str(text)?),
        };
        msg.validate()?;
        Ok(msg)
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        match self {
            // both models validate while being read
            Message::Tm(_) | Message::Em(_) => Ok(()),
            Message::Questions(qs) => validate_questions(qs),
            Message::Answers(a) => unique_qids(MessageKind::Answers, a.iter().map(|a| a.qid)),
            Message::Score(s) => s.validate(),
        }
    }

    pub fn read(path: &Path) -> Result<Self, ProtocolError> {
        let (kind, _) = MessageKind::from_path(path)?;
        let text = std::fs::read_to_string(path).map_err(|source| ProtocolError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(kind, &text)
    }

    /// One-line description for `inspect`.
    pub fn summary(&self) -> String {
        match self {
            Message::Tm(tm) => format!(
                "tm: dim {}, {} entities, {} relations",
                tm.dim(),
                tm.num_entities(),
                tm.num_relations()
            ),
            Message::Em(em) => format!(
                "em: {} -> {} -> {}{}",
                em.d_in(),
                em.d_hidden(),
                em.d_out(),
                if em.self_loops() { ", self-loops" } else { "" }
            ),
            Message::Questions(qs) => {
                let judgments = qs
                    .iter()
                    .filter(|q| q.kind == QuestionKind::Judgment)
                    .count();
                format!(
                    "questions: {} ({} judgment, {} choice)",
                    qs.len(),
                    judgments,
                    qs.len() - judgments
                )
            }
            Message::Answers(a) => format!("answers: {}", a.len()),
            Message::Score(s) => format!("score: {}/{} = {}", s.n_correct, s.n, s.score),
        }
    }
}

fn unique_qids(kind: MessageKind, qids: impl Iterator<Item = Qid>) -> Result<(), ProtocolError> {
    let mut seen = BTreeSet::new();
    for q in qids {
        if !seen.insert(q) {
            return Err(invalid(kind, format!("duplicate qid {}", q.0)));
        }
    }
    Ok(())
}

fn validate_questions(qs: &[EncodedQuestion]) -> Result<(), ProtocolError> {
    let k = MessageKind::Questions;
    unique_qids(k, qs.iter().map(|q| q.qid))?;
    let Some(first) = qs.first() else {
        return Ok(());
    };
    let (d_fsg, d_cand) = (
        first.fsg.len(),
        first.candidates.first().map_or(0, Vec::len),
    );
    for q in qs {
        let id = q.qid.0;
        match (q.kind, q.candidates.len()) {
            (QuestionKind::Judgment, 1) => {}
            (QuestionKind::Choice, n) if n >= 2 => {}
            (kind, n) => {
                return Err(invalid(
                    k,
                    format!("question {id}: {kind:?} with {n} candidates"),
                ))
            }
        }
        if q.fsg.len() != d_fsg || q.candidates.iter().any(|c| c.len() != d_cand) {
            return Err(invalid(
                k,
                format!("question {id}: inconsistent vector lengths"),
            ));
        }
        if d_fsg == 0 || d_cand == 0 {
            return Err(invalid(k, format!("question {id}: empty vector")));
        }
        if q.fsg
            .iter()
            .chain(q.candidates.iter().flatten())
            .any(|x| !x.is_finite())
        {
            return Err(invalid(k, format!("question {id}: non-finite value")));
        }
    }
    Ok(())
}

/// A surface form found in an artifact.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Leak {
    pub artifact: String,
    pub form: String,
}

/// Every `forms` entry that occurs as a byte substring of any artifact.
/// Deliberately blunt: a name that happens to spell a hex token fragment or
/// a schema key is reported too.
pub fn scan_surface_forms<'a>(
    artifacts: impl IntoIterator<Item = (&'a str, &'a str)>,
    forms: &BTreeSet<String>,
) -> Vec<Leak> {
    let mut leaks = Vec::new();
    for (name, text) in artifacts {
        for form in forms {
            if !form.is_empty() && text.contains(form.as_str()) {
                leaks.push(Leak {
                    artifact: name.to_owned(),
                    form: form.clone(),
                });
            }
        }
    }
    leaks
}
