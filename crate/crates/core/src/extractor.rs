//! The built-in rule-based annotator: dictionary/regex tagging followed by
//! negation detection.

use crate::corpus::ClinicalNote;
use crate::lexicon::{Lexicon, LexiconError, MatcherSet};
use crate::mention::{overlap_clusters, AnnotationSet, Assertion, Mention};
use crate::negation::{detect_negation, NegationLexicon};
use crate::sentence::split_sentences;

/// Source name of mentions produced by this annotator.
pub const SOURCE: &str = "rock";

/// Tag every matcher hit as an affirmed mention.
///
/// Overlapping hits of one element collapse to the widest hit; hits of
/// different elements are all kept. Output is sorted by `(start, end, element)`.
pub fn tag(note: &ClinicalNote, matchers: &MatcherSet) -> Vec<Mention> {
    let raw: Vec<Mention> = matchers
        .find(note)
        .into_iter()
        .map(|hit| Mention {
            surface: note.slice(hit.start, hit.end).unwrap_or_default().to_string(),
            element_id: hit.element_id,
            start: hit.start,
            end: hit.end,
            assertion: Assertion::Affirmed,
            source: SOURCE.to_string(),
        })
        .collect();
    overlap_clusters(&raw).into_iter().map(|(winner, _)| raw[winner].clone()).collect()
}

/// Split, tag and negate with an already compiled matcher set.
pub fn annotate_with(note: &ClinicalNote, matchers: &MatcherSet, neg: &NegationLexicon) -> AnnotationSet {
    let sentences = split_sentences(note);
    let mentions = tag(note, matchers);
    AnnotationSet::new(note.id(), detect_negation(note, &sentences, &mentions, neg))
}

pub fn annotate(note: &ClinicalNote, lexicon: &Lexicon, neg: &NegationLexicon) -> Result<AnnotationSet, LexiconError> {
    Ok(annotate_with(note, &lexicon.compile_matchers()?, neg))
}
