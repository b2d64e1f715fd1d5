//! Data-element definitions and the matchers compiled from them.
//!
//! Lexicon files are line oriented:
//!
//! ```text
//! id<TAB>name<TAB>category<TAB>concept_ids<TAB>synonyms<TAB>patterns
//! ```
//!
//! The last three fields hold `;`-separated lists and may be empty or left
//! off entirely. Lines starting with `#` and blank lines are ignored.

use std::collections::{HashMap, HashSet};

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ClinicalNote;

/// Congestive heart failure data elements shipped with the crate.
pub const CHF_LEXICON: &str = include_str!("../data/chf_lexicon.tsv");
/// Kawasaki disease data elements shipped with the crate.
pub const KD_LEXICON: &str = include_str!("../data/kd_lexicon.tsv");

/// Both shipped cohorts as one lexicon document.
pub fn shipped_lexicon_text() -> String {
    format!("{CHF_LEXICON}{KD_LEXICON}")
}

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("line {line}: {field}: {message}")]
    Parse { line: usize, field: &'static str, message: String },
    #[error("duplicate element id {0:?}")]
    DuplicateElementId(String),
    #[error("element {element_id:?}: bad pattern {pattern:?}: {message}")]
    BadPattern { element_id: String, pattern: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataElement {
    pub element_id: String,
    pub name: String,
    pub category: String,
    pub concept_ids: Vec<String>,
    pub synonyms: Vec<String>,
    pub patterns: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    elements: Vec<DataElement>,
    categories: Vec<String>,
    index: HashMap<String, usize>,
}

pub fn is_valid_id(id: &str) -> bool {
    !id.is_empty() && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

fn split_list(field: Option<&str>) -> Vec<String> {
    field
        .map(|f| f.split(';').map(str::trim).filter(|s| !s.is_empty()).map(str::to_string).collect())
        .unwrap_or_default()
}

impl Lexicon {
    /// Parse and validate a lexicon document.
    pub fn parse(text: &str) -> Result<Lexicon, LexiconError> {
        let mut elements = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let lineno = i + 1;
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() < 3 || fields.len() > 6 {
                return Err(LexiconError::Parse {
                    line: lineno,
                    field: "record",
                    message: format!("expected 3 to 6 tab-separated fields, found {}", fields.len()),
                });
            }
            elements.push(DataElement {
                element_id: fields[0].trim().to_string(),
                name: fields[1].trim().to_string(),
                category: fields[2].trim().to_string(),
                concept_ids: split_list(fields.get(3).copied()),
                synonyms: split_list(fields.get(4).copied()),
                patterns: split_list(fields.get(5).copied()),
            });
            let el = elements.last().unwrap();
            if !is_valid_id(&el.element_id) {
                return Err(LexiconError::Parse {
                    line: lineno,
                    field: "id",
                    message: format!("{:?} does not match [A-Za-z0-9_-]+", el.element_id),
                });
            }
            if el.name.is_empty() {
                return Err(LexiconError::Parse { line: lineno, field: "name", message: "empty name".into() });
            }
            if el.category.is_empty() {
                return Err(LexiconError::Parse { line: lineno, field: "category", message: "empty category".into() });
            }
        }
        Lexicon::from_elements(elements)
    }

    /// Validate a list of elements. Categories are ordered by first appearance.
    pub fn from_elements(elements: Vec<DataElement>) -> Result<Lexicon, LexiconError> {
        let mut index = HashMap::new();
        let mut categories: Vec<String> = Vec::new();
        for (i, el) in elements.iter().enumerate() {
            if index.insert(el.element_id.clone(), i).is_some() {
                return Err(LexiconError::DuplicateElementId(el.element_id.clone()));
            }
            for pattern in &el.patterns {
                compile_pattern(&el.element_id, pattern)?;
            }
            if !categories.contains(&el.category) {
                categories.push(el.category.clone());
            }
        }
        if elements.is_empty() {
            log::warn!("lexicon has no data elements");
        }
        Ok(Lexicon { elements, categories, index })
    }

    pub fn elements(&self) -> &[DataElement] {
        &self.elements
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn get(&self, element_id: &str) -> Option<&DataElement> {
        self.index.get(element_id).map(|&i| &self.elements[i])
    }

    pub fn contains(&self, element_id: &str) -> bool {
        self.index.contains_key(element_id)
    }

    /// Elements whose display name starts with `prefix` (case-insensitive),
    /// grouped by category in category order, file order within a category.
    pub fn filter_by_prefix(&self, prefix: &str) -> Vec<&DataElement> {
        let prefix = prefix.to_lowercase();
        self.categories
            .iter()
            .flat_map(|cat| self.elements.iter().filter(move |e| &e.category == cat))
            .filter(|e| e.name.to_lowercase().starts_with(&prefix))
            .collect()
    }

    /// [`Lexicon::filter_by_prefix`] split into `(category, elements)` groups,
    /// omitting empty categories.
    pub fn grouped_by_prefix(&self, prefix: &str) -> Vec<(&str, Vec<&DataElement>)> {
        let mut groups: Vec<(&str, Vec<&DataElement>)> = Vec::new();
        for el in self.filter_by_prefix(prefix) {
            match groups.last_mut() {
                Some((cat, els)) if *cat == el.category => els.push(el),
                _ => groups.push((&el.category, vec![el])),
            }
        }
        groups
    }

    pub fn compile_matchers(&self) -> Result<MatcherSet, LexiconError> {
        MatcherSet::compile(self)
    }
}

fn compile_pattern(element_id: &str, pattern: &str) -> Result<Regex, LexiconError> {
    RegexBuilder::new(pattern).case_insensitive(true).build().map_err(|e| LexiconError::BadPattern {
        element_id: element_id.to_string(),
        pattern: pattern.to_string(),
        message: e.to_string(),
    })
}

/// Literal terms match whole words: the chars just outside the match must
/// not be ASCII alphanumerics. Whitespace inside a term matches any
/// whitespace run, so terms survive line wrapping.
fn compile_literal(term: &str) -> Regex {
    let body = term.split_whitespace().map(regex::escape).collect::<Vec<_>>().join(r"\s+");
    RegexBuilder::new(&body).case_insensitive(true).build().expect("escaped literal is a valid regex")
}

#[derive(Debug, Clone)]
struct ElementMatcher {
    element_id: String,
    literals: Vec<Regex>,
    patterns: Vec<Regex>,
}

/// A raw matcher hit in char offsets.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Hit {
    pub element_id: String,
    pub start: usize,
    pub end: usize,
}

/// Compiled literal and regex matchers for every element of a lexicon.
#[derive(Debug, Clone)]
pub struct MatcherSet {
    matchers: Vec<ElementMatcher>,
}

impl MatcherSet {
    pub fn compile(lexicon: &Lexicon) -> Result<MatcherSet, LexiconError> {
        let mut matchers = Vec::with_capacity(lexicon.len());
        for el in lexicon.elements() {
            let mut seen = HashSet::new();
            let literals = std::iter::once(&el.name)
                .chain(&el.synonyms)
                .filter(|t| !t.trim().is_empty() && seen.insert(t.to_lowercase()))
                .map(|t| compile_literal(t))
                .collect();
            let patterns =
                el.patterns.iter().map(|p| compile_pattern(&el.element_id, p)).collect::<Result<_, _>>()?;
            matchers.push(ElementMatcher { element_id: el.element_id.clone(), literals, patterns });
        }
        Ok(MatcherSet { matchers })
    }

    pub fn len(&self) -> usize {
        self.matchers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matchers.is_empty()
    }

    /// Every hit of every matcher, including overlapping ones, deduplicated
    /// and sorted.
    pub fn find(&self, note: &ClinicalNote) -> Vec<Hit> {
        let text = note.text();
        let mut hits = HashSet::new();
        for m in &self.matchers {
            for re in &m.literals {
                for (s, e) in all_matches(re, text) {
                    if word_bounded(text, s, e) {
                        hits.insert(Hit { element_id: m.element_id.clone(), start: note.char_offset(s), end: note.char_offset(e) });
                    }
                }
            }
            for re in &m.patterns {
                for (s, e) in all_matches(re, text) {
                    hits.insert(Hit { element_id: m.element_id.clone(), start: note.char_offset(s), end: note.char_offset(e) });
                }
            }
        }
        let mut hits: Vec<Hit> = hits.into_iter().collect();
        hits.sort();
        hits
    }
}

/// Leftmost match at every start position, so overlapping occurrences are all
/// reported. Empty matches are skipped.
fn all_matches(re: &Regex, text: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut at = 0;
    while at <= text.len() {
        let Some(m) = re.find_at(text, at) else { break };
        if m.end() > m.start() {
            out.push((m.start(), m.end()));
        }
        at = m.start() + text[m.start()..].chars().next().map_or(1, char::len_utf8);
    }
    out
}

fn word_bounded(text: &str, start: usize, end: usize) -> bool {
    let before = text[..start].chars().next_back();
    let after = text[end..].chars().next();
    !before.is_some_and(|c| c.is_ascii_alphanumeric()) && !after.is_some_and(|c| c.is_ascii_alphanumeric())
}
