//! Reader and writer for BRAT-style `.ann` standoff files.
//!
//! Two line types are supported:
//!
//! ```text
//! T<n>\t<label> <start> <end>\t<text>
//! A<n>\t<name> T<n>
//! ```
//!
//! Offsets are char offsets into the LF-normalized note text. Discontinuous
//! spans, relations, events and notes are rejected.
//!
//! Canonical form: entities in ascending `T` number, then attributes in
//! ascending `A` number, every line ending in a single LF.

use std::collections::HashSet;
use std::fmt::Write as _;

use thiserror::Error;

use crate::corpus::ClinicalNote;
use crate::lexicon::{is_valid_id, Lexicon};
use crate::mention::{sort_mentions, Assertion, Mention};

/// Attribute name carrying negation.
pub const NEGATED: &str = "Negated";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StandoffError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate id {id}")]
    DuplicateId { line: usize, id: String },
    #[error("T{tid}: quoted text {quoted:?} does not match note text {actual:?} at [{start},{end})")]
    NoteMismatch { tid: u32, start: usize, end: usize, quoted: String, actual: String },
    #[error("T{tid}: span [{start},{end}) is outside the note (length {len})")]
    OutOfBounds { tid: u32, start: usize, end: usize, len: usize },
    #[error("T{tid}: label {label:?} is not a lexicon element")]
    UnknownLabel { tid: u32, label: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StandoffEntity {
    /// Number after the `T`.
    pub tid: u32,
    pub label: String,
    pub start: usize,
    pub end: usize,
    pub quoted_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StandoffAttribute {
    pub aid: u32,
    pub name: String,
    pub target: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StandoffDoc {
    pub entities: Vec<StandoffEntity>,
    pub attributes: Vec<StandoffAttribute>,
}

fn parse_id(token: &str, prefix: char) -> Option<u32> {
    let digits = token.strip_prefix(prefix)?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || digits.starts_with('0') {
        return None;
    }
    digits.parse().ok().filter(|&n| n > 0)
}

fn parse_offset(s: &str, line: usize) -> Result<usize, StandoffError> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(StandoffError::Parse { line, message: format!("bad offset {s:?}") });
    }
    s.parse().map_err(|_| StandoffError::Parse { line, message: format!("offset {s:?} out of range") })
}

pub fn parse_ann(text: &str) -> Result<StandoffDoc, StandoffError> {
    let mut doc = StandoffDoc::default();
    let mut tids = HashSet::new();
    let mut aids = HashSet::new();
    let mut attr_lines = Vec::new();

    for (i, raw) in text.split('\n').enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| StandoffError::Parse { line: line_no, message };
        let (id, rest) = line.split_once('\t').ok_or_else(|| err("expected a TAB after the id".into()))?;
        match id.chars().next() {
            Some('T') => {
                let tid = parse_id(id, 'T').ok_or_else(|| err(format!("bad entity id {id:?}")))?;
                let (span, quoted) =
                    rest.split_once('\t').ok_or_else(|| err("expected TAB before the quoted text".into()))?;
                if span.contains(';') {
                    return Err(err("discontinuous spans are not supported".into()));
                }
                let parts: Vec<&str> = span.split(' ').collect();
                let [label, start, end] = parts[..] else {
                    return Err(err(format!("expected \"<label> <start> <end>\", got {span:?}")));
                };
                if !is_valid_id(label) {
                    return Err(err(format!("bad label {label:?}")));
                }
                let (start, end) = (parse_offset(start, line_no)?, parse_offset(end, line_no)?);
                if start >= end {
                    return Err(err(format!("start {start} is not before end {end}")));
                }
                if !tids.insert(tid) {
                    return Err(StandoffError::DuplicateId { line: line_no, id: id.to_string() });
                }
                doc.entities.push(StandoffEntity { tid, label: label.to_string(), start, end, quoted_text: quoted.to_string() });
            }
            Some('A') => {
                let aid = parse_id(id, 'A').ok_or_else(|| err(format!("bad attribute id {id:?}")))?;
                let parts: Vec<&str> = rest.split(' ').collect();
                let [name, target] = parts[..] else {
                    return Err(err(format!("expected \"<name> T<n>\", got {rest:?}")));
                };
                if !is_valid_id(name) {
                    return Err(err(format!("bad attribute name {name:?}")));
                }
                let target = parse_id(target, 'T').ok_or_else(|| err(format!("bad attribute target {target:?}")))?;
                if !aids.insert(aid) {
                    return Err(StandoffError::DuplicateId { line: line_no, id: id.to_string() });
                }
                doc.attributes.push(StandoffAttribute { aid, name: name.to_string(), target });
                attr_lines.push(line_no);
            }
            _ => return Err(err(format!("unsupported annotation line {id:?}"))),
        }
    }

    for (attr, line) in doc.attributes.iter().zip(attr_lines) {
        if !tids.contains(&attr.target) {
            return Err(StandoffError::Parse { line, message: format!("attribute target T{} does not exist", attr.target) });
        }
    }
    Ok(doc)
}

pub fn serialize_ann(doc: &StandoffDoc) -> String {
    let mut entities: Vec<&StandoffEntity> = doc.entities.iter().collect();
    entities.sort_by_key(|e| e.tid);
    let mut attributes: Vec<&StandoffAttribute> = doc.attributes.iter().collect();
    attributes.sort_by_key(|a| a.aid);

    let mut out = String::new();
    for e in entities {
        let _ = writeln!(out, "T{}\t{} {} {}\t{}", e.tid, e.label, e.start, e.end, e.quoted_text);
    }
    for a in attributes {
        let _ = writeln!(out, "A{}\t{} T{}", a.aid, a.name, a.target);
    }
    out
}

/// Quoted text as written to a file: line breaks inside a span become spaces
/// so every record stays on one line.
fn quoted_form(surface: &str) -> String {
    surface.replace('\n', " ")
}

/// Entities numbered `T1..` in mention order (sorted by span first), with a
/// `Negated` attribute for every negated mention.
pub fn mentions_to_doc(mentions: &[Mention]) -> StandoffDoc {
    let mut sorted = mentions.to_vec();
    sort_mentions(&mut sorted);
    let mut doc = StandoffDoc::default();
    for (i, m) in sorted.iter().enumerate() {
        let tid = i as u32 + 1;
        doc.entities.push(StandoffEntity {
            tid,
            label: m.element_id.clone(),
            start: m.start,
            end: m.end,
            quoted_text: quoted_form(&m.surface),
        });
        if m.assertion.is_negated() {
            let aid = doc.attributes.len() as u32 + 1;
            doc.attributes.push(StandoffAttribute { aid, name: NEGATED.to_string(), target: tid });
        }
    }
    doc
}

/// Resolve entities against a note. Entities whose label is not a lexicon
/// element are passed to `on_unknown`; returning an error from it aborts.
pub(crate) fn resolve_entities(
    doc: &StandoffDoc,
    note: &ClinicalNote,
    lexicon: &Lexicon,
    source: &str,
    mut on_unknown: impl FnMut(&StandoffEntity) -> Result<(), StandoffError>,
) -> Result<Vec<Mention>, StandoffError> {
    let negated: HashSet<u32> = doc.attributes.iter().filter(|a| a.name == NEGATED).map(|a| a.target).collect();
    let mut mentions = Vec::with_capacity(doc.entities.len());
    for e in &doc.entities {
        let actual = note.slice(e.start, e.end).ok_or(StandoffError::OutOfBounds {
            tid: e.tid,
            start: e.start,
            end: e.end,
            len: note.char_len(),
        })?;
        if quoted_form(actual) != e.quoted_text {
            return Err(StandoffError::NoteMismatch {
                tid: e.tid,
                start: e.start,
                end: e.end,
                quoted: e.quoted_text.clone(),
                actual: actual.to_string(),
            });
        }
        if !lexicon.contains(&e.label) {
            on_unknown(e)?;
            continue;
        }
        mentions.push(Mention {
            element_id: e.label.clone(),
            start: e.start,
            end: e.end,
            surface: actual.to_string(),
            assertion: if negated.contains(&e.tid) { Assertion::Negated } else { Assertion::Affirmed },
            source: source.to_string(),
        });
    }
    sort_mentions(&mut mentions);
    Ok(mentions)
}

/// Mentions of a document, checked against the note text and the lexicon.
pub fn doc_to_mentions(
    doc: &StandoffDoc,
    note: &ClinicalNote,
    lexicon: &Lexicon,
    source: &str,
) -> Result<Vec<Mention>, StandoffError> {
    resolve_entities(doc, note, lexicon, source, |e| {
        Err(StandoffError::UnknownLabel { tid: e.tid, label: e.label.clone() })
    })
}
