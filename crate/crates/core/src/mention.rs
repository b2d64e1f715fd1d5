use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Assertion {
    #[default]
    Affirmed,
    Negated,
}

impl Assertion {
    pub fn is_negated(self) -> bool {
        self == Assertion::Negated
    }
}

/// One annotated occurrence of a data element in a note.
///
/// `start`/`end` are a half-open char range and `surface` is the note text
/// in that range. `source` names the producer (`rock`, an external tool, a
/// `+`-joined list of ensemble contributors, or a human reviewer).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mention {
    pub element_id: String,
    pub start: usize,
    pub end: usize,
    pub surface: String,
    #[serde(default)]
    pub assertion: Assertion,
    #[serde(default)]
    pub source: String,
}

impl Mention {
    pub fn overlaps(&self, other: &Mention) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    /// Ordering key used for every emitted mention list.
    pub fn sort_key(&self) -> (usize, usize, &str) {
        (self.start, self.end, &self.element_id)
    }
}

impl fmt::Display for Mention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{},{}) {:?}", self.element_id, self.start, self.end, self.surface)?;
        if self.assertion.is_negated() {
            write!(f, " (negated)")?;
        }
        Ok(())
    }
}

/// The current annotations of one note.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub note_id: String,
    pub mentions: Vec<Mention>,
}

impl AnnotationSet {
    pub fn new(note_id: impl Into<String>, mut mentions: Vec<Mention>) -> Self {
        sort_mentions(&mut mentions);
        AnnotationSet { note_id: note_id.into(), mentions }
    }

    pub fn len(&self) -> usize {
        self.mentions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mentions.is_empty()
    }
}

pub fn sort_mentions(mentions: &mut [Mention]) {
    mentions.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()).then_with(|| a.source.cmp(&b.source)));
}

/// Resolve overlapping spans of the same element down to one span per
/// overlap cluster.
///
/// Mentions are grouped by element; within an element, spans joined by a
/// chain of overlaps form one cluster. Each cluster is represented by its
/// widest member, ties going to the smallest start. Returns the indices of
/// the cluster members alongside the winner, in output order.
pub(crate) fn overlap_clusters(mentions: &[Mention]) -> Vec<(usize, Vec<usize>)> {
    let mut order: Vec<usize> = (0..mentions.len()).collect();
    order.sort_by(|&a, &b| {
        let (ma, mb) = (&mentions[a], &mentions[b]);
        (ma.element_id.as_str(), ma.start, ma.end).cmp(&(mb.element_id.as_str(), mb.start, mb.end))
    });

    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut reach = 0;
    for &i in &order {
        let m = &mentions[i];
        let joins = clusters.last().is_some_and(|c| mentions[c[0]].element_id == m.element_id && m.start < reach);
        if joins {
            clusters.last_mut().unwrap().push(i);
            reach = reach.max(m.end);
        } else {
            clusters.push(vec![i]);
            reach = m.end;
        }
    }

    let mut out: Vec<(usize, Vec<usize>)> = clusters
        .into_iter()
        .map(|members| {
            let winner = *members
                .iter()
                .min_by(|&&a, &&b| {
                    let (ma, mb) = (&mentions[a], &mentions[b]);
                    mb.len().cmp(&ma.len()).then(ma.start.cmp(&mb.start))
                })
                .unwrap();
            (winner, members)
        })
        .collect();
    out.sort_by(|a, b| mentions[a.0].sort_key().cmp(&mentions[b.0].sort_key()));
    out
}
