//! Note-level and sentence-level precision, recall and F1.
//!
//! Both levels are binary: a data element counts once per note (or per
//! sentence) no matter how many mentions of it there are.
//!
//! Note level compares the unique element sets of the whole note. Sentence
//! level assigns each mention to the sentence holding its start offset,
//! scores every sentence where gold or prediction has at least one element,
//! and averages the per-sentence scores over those sentences.
//!
//! Empty-set conventions, applied per note and per sentence:
//!
//! | gold  | pred  | P | R | F1 |
//! |-------|-------|---|---|----|
//! | empty | empty | 1 | 1 | 1  |
//! | some  | empty | 0 | 0 | 0  |
//! | empty | some  | 0 | 0 | 0  |

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::ClinicalNote;
use crate::mention::Mention;
use crate::sentence::{sentence_at, SentenceSpan};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("note {note_id}: mention {element_id} [{start},{end}) is outside the note (length {len})")]
    SpanOutOfBounds { note_id: String, element_id: String, start: usize, end: usize, len: usize },
    #[error("note {note_id}: mention {element_id} starts at {start}, between sentences")]
    SentenceGap { note_id: String, element_id: String, start: usize },
    #[error("no scores to aggregate")]
    EmptyInput,
    #[error("cannot aggregate note-level and sentence-level scores together")]
    MixedLevels,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Note,
    Sentence,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Note => "Note",
            Level::Sentence => "Sentence",
        })
    }
}

/// Which mentions take part in scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScorePolicy {
    /// Negated mentions count like affirmed ones.
    #[default]
    IgnoreAssertion,
    /// Negated mentions are dropped from both sides.
    AffirmedOnly,
}

impl FromStr for ScorePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ignore-assertion" => Ok(ScorePolicy::IgnoreAssertion),
            "affirmed-only" => Ok(ScorePolicy::AffirmedOnly),
            _ => Err(format!("unknown scoring policy {s:?} (expected ignore-assertion or affirmed-only)")),
        }
    }
}

impl ScorePolicy {
    fn admits(self, m: &Mention) -> bool {
        self == ScorePolicy::IgnoreAssertion || !m.assertion.is_negated()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoteScore {
    pub note_id: String,
    pub level: Level,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Number of gold mentions in the note.
    pub concept_frequency: usize,
    /// Word count of the note.
    pub length: usize,
    /// Sentences that entered the average (sentence level only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counted_sentences: Option<usize>,
}

/// `(P, R, F1)` of two unique element sets.
pub fn prf<T: Eq + std::hash::Hash>(gold: &HashSet<T>, pred: &HashSet<T>) -> (f64, f64, f64) {
    match (gold.is_empty(), pred.is_empty()) {
        (true, true) => (1.0, 1.0, 1.0),
        (false, true) | (true, false) => (0.0, 0.0, 0.0),
        (false, false) => {
            let tp = gold.intersection(pred).count() as f64;
            let p = tp / pred.len() as f64;
            let r = tp / gold.len() as f64;
            let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
            (p, r, f1)
        }
    }
}

fn check_bounds(note: &ClinicalNote, mentions: &[Mention]) -> Result<(), EvalError> {
    let len = note.char_len();
    match mentions.iter().find(|m| m.start >= m.end || m.end > len) {
        Some(m) => Err(EvalError::SpanOutOfBounds {
            note_id: note.id().to_string(),
            element_id: m.element_id.clone(),
            start: m.start,
            end: m.end,
            len,
        }),
        None => Ok(()),
    }
}

fn element_set(mentions: &[Mention], policy: ScorePolicy) -> HashSet<&str> {
    mentions.iter().filter(|m| policy.admits(m)).map(|m| m.element_id.as_str()).collect()
}

pub fn note_level_score(
    gold: &[Mention],
    pred: &[Mention],
    note: &ClinicalNote,
    policy: ScorePolicy,
) -> Result<NoteScore, EvalError> {
    check_bounds(note, gold)?;
    check_bounds(note, pred)?;
    let (precision, recall, f1) = prf(&element_set(gold, policy), &element_set(pred, policy));
    Ok(NoteScore {
        note_id: note.id().to_string(),
        level: Level::Note,
        precision,
        recall,
        f1,
        concept_frequency: gold.len(),
        length: note.word_count(),
        counted_sentences: None,
    })
}

pub fn sentence_level_score(
    gold: &[Mention],
    pred: &[Mention],
    note: &ClinicalNote,
    sentences: &[SentenceSpan],
    policy: ScorePolicy,
) -> Result<NoteScore, EvalError> {
    check_bounds(note, gold)?;
    check_bounds(note, pred)?;

    let mut gold_sets: Vec<HashSet<&str>> = vec![HashSet::new(); sentences.len()];
    let mut pred_sets: Vec<HashSet<&str>> = vec![HashSet::new(); sentences.len()];
    for (mentions, sets) in [(gold, &mut gold_sets), (pred, &mut pred_sets)] {
        for m in mentions {
            let i = sentence_at(sentences, m.start).ok_or_else(|| EvalError::SentenceGap {
                note_id: note.id().to_string(),
                element_id: m.element_id.clone(),
                start: m.start,
            })?;
            if policy.admits(m) {
                sets[i].insert(m.element_id.as_str());
            }
        }
    }

    let (mut sp, mut sr, mut sf, mut counted) = (0.0, 0.0, 0.0, 0usize);
    for (g, p) in gold_sets.iter().zip(&pred_sets) {
        if g.is_empty() && p.is_empty() {
            continue;
        }
        let (pi, ri, fi) = prf(g, p);
        sp += pi;
        sr += ri;
        sf += fi;
        counted += 1;
    }
    let (precision, recall, f1) = if counted == 0 {
        // Nothing admitted on either side anywhere in the note.
        (1.0, 1.0, 1.0)
    } else {
        let n = counted as f64;
        (sp / n, sr / n, sf / n)
    };
    Ok(NoteScore {
        note_id: note.id().to_string(),
        level: Level::Sentence,
        precision,
        recall,
        f1,
        concept_frequency: gold.len(),
        length: note.word_count(),
        counted_sentences: Some(counted),
    })
}

/// A mean with its normal-approximation 95% confidence interval, clipped to [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanCi {
    pub mean: f64,
    pub stddev: f64,
    pub lower: f64,
    pub upper: f64,
}

pub const Z_95: f64 = 1.96;

impl MeanCi {
    pub fn of(values: &[f64]) -> Option<MeanCi> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        if values.iter().all(|&v| v == values[0]) {
            let v = values[0];
            return Some(MeanCi { mean: v, stddev: 0.0, lower: v, upper: v });
        }
        let mean = values.iter().sum::<f64>() / n;
        let stddev = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        let half = Z_95 * stddev / n.sqrt();
        Some(MeanCi { mean, stddev, lower: (mean - half).clamp(0.0, 1.0), upper: (mean + half).clamp(0.0, 1.0) })
    }
}

impl fmt::Display for MeanCi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3} ({:.3}-{:.3})", self.mean, self.lower, self.upper)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub level: Level,
    pub notes: Vec<NoteScore>,
    pub precision: MeanCi,
    pub recall: MeanCi,
    pub f1: MeanCi,
}

pub fn aggregate(scores: &[NoteScore]) -> Result<EvalReport, EvalError> {
    let first = scores.first().ok_or(EvalError::EmptyInput)?;
    if scores.iter().any(|s| s.level != first.level) {
        return Err(EvalError::MixedLevels);
    }
    let column = |f: fn(&NoteScore) -> f64| MeanCi::of(&scores.iter().map(f).collect::<Vec<_>>()).unwrap();
    Ok(EvalReport {
        level: first.level,
        notes: scores.to_vec(),
        precision: column(|s| s.precision),
        recall: column(|s| s.recall),
        f1: column(|s| s.f1),
    })
}
