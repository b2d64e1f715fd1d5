//! Merging the mention sets of several annotators for one note.
//!
//! Two mentions from any tools agree when they name the same element and
//! their spans overlap. Agreement is transitive, so each element's mentions
//! fall into overlap clusters. A cluster is represented by its widest member
//! span and is kept according to the merge [`Method`]:
//!
//! * `Union` keeps every cluster,
//! * `Intersection` keeps clusters every tool contributed to,
//! * `Vote(k)` keeps clusters at least `k` tools contributed to.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::corpus::ClinicalNote;
use crate::lexicon::Lexicon;
use crate::mention::{overlap_clusters, AnnotationSet, Assertion, Mention};
use crate::standoff::{parse_ann, resolve_entities, StandoffError};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnsembleError {
    #[error(transparent)]
    Standoff(#[from] StandoffError),
    #[error("tool outputs belong to different notes ({0:?} and {1:?})")]
    MixedNotes(String, String),
    #[error("nothing to merge")]
    NoOutputs,
    #[error("vote threshold {k} must be between 1 and the number of tools ({tools})")]
    BadVoteThreshold { k: usize, tools: usize },
}

/// Mentions one annotator produced for one note.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolOutput {
    pub tool_name: String,
    pub note_id: String,
    pub mentions: Vec<Mention>,
}

impl ToolOutput {
    pub fn new(tool_name: impl Into<String>, note_id: impl Into<String>, mentions: Vec<Mention>) -> Self {
        let tool_name = tool_name.into();
        let mentions = mentions.into_iter().map(|m| Mention { source: tool_name.clone(), ..m }).collect();
        ToolOutput { tool_name, note_id: note_id.into(), mentions }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    Union,
    Intersection,
    Vote(usize),
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "union" => Ok(Method::Union),
            "intersection" => Ok(Method::Intersection),
            _ => match s.strip_prefix("vote:").map(str::parse::<usize>) {
                Some(Ok(k)) if k >= 1 => Ok(Method::Vote(k)),
                _ => Err(format!("unknown method {s:?} (expected union, intersection or vote:<k>)")),
            },
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Union => write!(f, "union"),
            Method::Intersection => write!(f, "intersection"),
            Method::Vote(k) => write!(f, "vote:{k}"),
        }
    }
}

/// What to do with merged mentions that tools marked as negated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NegationPolicy {
    /// Keep the mention, asserted by majority of contributing tools
    /// (affirmed on a tie).
    #[default]
    KeepFlag,
    /// Drop mentions every contributing tool marked negated.
    DropNegated,
}

impl FromStr for NegationPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "keep-flag" => Ok(NegationPolicy::KeepFlag),
            "drop-negated" => Ok(NegationPolicy::DropNegated),
            _ => Err(format!("unknown negation policy {s:?} (expected keep-flag or drop-negated)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EnsembleConfig {
    pub method: Method,
    pub negation_policy: NegationPolicy,
}

/// Read one tool's `.ann` output for a note.
///
/// Labels that are not lexicon elements are skipped and returned as warnings.
pub fn import_tool_output(
    ann: &str,
    note: &ClinicalNote,
    tool_name: &str,
    lexicon: &Lexicon,
) -> Result<(ToolOutput, Vec<String>), EnsembleError> {
    let doc = parse_ann(ann)?;
    let mut warnings = Vec::new();
    let mentions = resolve_entities(&doc, note, lexicon, tool_name, |e| {
        warnings.push(format!("{tool_name}/{}: T{}: unknown label {:?} skipped", note.id(), e.tid, e.label));
        Ok(())
    })?;
    Ok((ToolOutput::new(tool_name, note.id(), mentions), warnings))
}

pub fn ensemble_merge(outputs: &[ToolOutput], cfg: &EnsembleConfig) -> Result<AnnotationSet, EnsembleError> {
    let first = outputs.first().ok_or(EnsembleError::NoOutputs)?;
    if let Some(other) = outputs.iter().find(|o| o.note_id != first.note_id) {
        return Err(EnsembleError::MixedNotes(first.note_id.clone(), other.note_id.clone()));
    }
    let tools = outputs.len();
    let threshold = match cfg.method {
        Method::Union => 1,
        Method::Intersection => tools,
        Method::Vote(k) if (1..=tools).contains(&k) => k,
        Method::Vote(k) => return Err(EnsembleError::BadVoteThreshold { k, tools }),
    };

    // Flatten, remembering which output each mention came from.
    let mut all = Vec::new();
    let mut owner = Vec::new();
    for (i, out) in outputs.iter().enumerate() {
        for m in &out.mentions {
            all.push(m.clone());
            owner.push(i);
        }
    }

    let mut merged = Vec::new();
    for (winner, members) in overlap_clusters(&all) {
        let contributors: BTreeSet<usize> = members.iter().map(|&i| owner[i]).collect();
        if contributors.len() < threshold {
            continue;
        }
        // A tool negates the cluster only if all of its mentions in it are negated.
        let negating = contributors
            .iter()
            .filter(|&&t| members.iter().filter(|&&i| owner[i] == t).all(|&i| all[i].assertion.is_negated()))
            .count();
        if cfg.negation_policy == NegationPolicy::DropNegated && negating == contributors.len() {
            continue;
        }
        let assertion =
            if 2 * negating > contributors.len() { Assertion::Negated } else { Assertion::Affirmed };
        let names: BTreeSet<&str> = contributors.iter().map(|&t| outputs[t].tool_name.as_str()).collect();
        merged.push(Mention {
            assertion,
            source: names.into_iter().collect::<Vec<_>>().join("+"),
            ..all[winner].clone()
        });
    }
    Ok(AnnotationSet::new(first.note_id.clone(), merged))
}
