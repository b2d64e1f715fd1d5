//! Rule-based sentence splitting tuned for clinical notes.
//!
//! A note is cut into sentences at:
//!
//! * `.`, `!` or `?` (possibly repeated, possibly followed by closing
//!   brackets or quotes) when followed by whitespace or end of text;
//! * blank lines;
//! * section header lines, i.e. lines whose trimmed content ends in `:`.
//!   The header line becomes a sentence of its own.
//!
//! A period does not cut when the token it ends is a known abbreviation, when
//! the token is a run of single letters each followed by a period (`b.i.d.`),
//! or when the next non-whitespace character is a lowercase letter.
//!
//! Spans are trimmed, so they never start or end with whitespace, and every
//! non-whitespace char of the note falls in exactly one span.

use std::collections::{BTreeSet, HashSet};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::corpus::ClinicalNote;

pub const DEFAULT_ABBREVIATIONS: &str = include_str!("../data/abbreviations.txt");

/// Half-open char range `[start, end)` of one sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SentenceSpan {
    pub index: usize,
    pub start: usize,
    pub end: usize,
}

impl SentenceSpan {
    pub fn contains(&self, offset: usize) -> bool {
        self.start <= offset && offset < self.end
    }
}

#[derive(Debug, Clone)]
pub struct SentenceSplitter {
    abbreviations: HashSet<String>,
}

impl Default for SentenceSplitter {
    fn default() -> Self {
        SentenceSplitter::from_list(DEFAULT_ABBREVIATIONS)
    }
}

impl SentenceSplitter {
    /// Build from a newline-separated abbreviation list (`#` comments allowed).
    pub fn from_list(list: &str) -> Self {
        let abbreviations = list
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        SentenceSplitter { abbreviations }
    }

    pub fn is_abbreviation(&self, token: &str) -> bool {
        let token = token.trim_start_matches(['(', '[', '"', '\'']).to_lowercase();
        self.abbreviations.contains(&token) || is_letter_dot_run(&token)
    }

    pub fn split(&self, text: &str) -> Vec<SentenceSpan> {
        let chars: Vec<char> = text.chars().collect();
        let mut cuts = BTreeSet::new();
        self.line_cuts(&chars, &mut cuts);
        self.terminator_cuts(&chars, &mut cuts);
        cuts.insert(0);
        cuts.insert(chars.len());

        let bounds: Vec<usize> = cuts.into_iter().collect();
        let mut spans = Vec::new();
        for pair in bounds.windows(2) {
            let (mut start, mut end) = (pair[0], pair[1]);
            while start < end && chars[start].is_whitespace() {
                start += 1;
            }
            while end > start && chars[end - 1].is_whitespace() {
                end -= 1;
            }
            if start < end {
                spans.push(SentenceSpan { index: spans.len(), start, end });
            }
        }
        spans
    }

    fn line_cuts(&self, chars: &[char], cuts: &mut BTreeSet<usize>) {
        let mut line_start = 0;
        while line_start <= chars.len() {
            let line_end = chars[line_start..]
                .iter()
                .position(|&c| c == '\n')
                .map_or(chars.len(), |p| line_start + p);
            let line = &chars[line_start..line_end];
            let last = line.iter().rposition(|c| !c.is_whitespace());
            match last {
                // Blank line.
                None => {
                    cuts.insert(line_start);
                    cuts.insert(line_end);
                }
                Some(i) if line[i] == ':' => {
                    cuts.insert(line_start);
                    cuts.insert(line_start + i + 1);
                }
                Some(_) => {}
            }
            line_start = line_end + 1;
        }
    }

    fn terminator_cuts(&self, chars: &[char], cuts: &mut BTreeSet<usize>) {
        let mut i = 0;
        while i < chars.len() {
            if !is_terminator(chars[i]) {
                i += 1;
                continue;
            }
            let first = i;
            let mut j = i;
            while j < chars.len() && is_terminator(chars[j]) {
                j += 1;
            }
            let run_end = j;
            while j < chars.len() && matches!(chars[j], ')' | ']' | '"' | '\'') {
                j += 1;
            }
            if j == chars.len() || chars[j].is_whitespace() {
                let single_period = chars[first] == '.' && run_end - first == 1;
                if !(single_period && self.period_continues(chars, first, j)) {
                    cuts.insert(j);
                }
            }
            i = j.max(i + 1);
        }
    }

    /// Whether a lone period at `dot` (token ends at `after`) stays inside its sentence.
    fn period_continues(&self, chars: &[char], dot: usize, after: usize) -> bool {
        let token_start = chars[..dot].iter().rposition(|c| c.is_whitespace()).map_or(0, |p| p + 1);
        let token: String = chars[token_start..=dot].iter().collect();
        if self.is_abbreviation(&token) {
            return true;
        }
        chars[after..].iter().find(|c| !c.is_whitespace()).is_some_and(|c| c.is_lowercase())
    }
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_letter_dot_run(token: &str) -> bool {
    let chars: Vec<char> = token.chars().collect();
    chars.len() >= 4
        && chars.len().is_multiple_of(2)
        && chars.chunks(2).all(|p| p[0].is_alphabetic() && p[1] == '.')
}

fn default_splitter() -> &'static SentenceSplitter {
    static SPLITTER: OnceLock<SentenceSplitter> = OnceLock::new();
    SPLITTER.get_or_init(SentenceSplitter::default)
}

/// Split a note with the default abbreviation list.
pub fn split_sentences(note: &ClinicalNote) -> Vec<SentenceSpan> {
    default_splitter().split(note.text())
}

/// Index of the sentence containing a char offset.
pub fn sentence_at(sentences: &[SentenceSpan], offset: usize) -> Option<usize> {
    let i = sentences.partition_point(|s| s.end <= offset);
    sentences.get(i).filter(|s| s.contains(offset)).map(|s| s.index)
}
