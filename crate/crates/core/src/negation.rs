//! NegEx-style negation flags for tagged mentions.
//!
//! Sentences are tokenized into words (alphanumeric runs, allowing inner `-`
//! and `'`) and single punctuation marks. Trigger phrases are tokenized the
//! same way and matched case-insensitively on whole tokens.
//!
//! A mention is negated when, inside its own sentence:
//!
//! * a pre-trigger ends before the mention with fewer than `scope_window`
//!   words between them, or a post-trigger starts after the mention with
//!   fewer than `scope_window` words between them;
//! * no terminator and no mention of a different element lies in that gap;
//! * the trigger is not part of a pseudo-trigger occurrence.
//!
//! Negation lexicon files have `[pre]`, `[post]`, `[pseudo]` and `[term]`
//! sections with one phrase per line; `#` starts a comment line.

use std::collections::HashSet;
use std::sync::OnceLock;

use thiserror::Error;

use crate::corpus::ClinicalNote;
use crate::mention::{Assertion, Mention};
use crate::sentence::{sentence_at, SentenceSpan};

pub const DEFAULT_NEGATION_TRIGGERS: &str = include_str!("../data/negation_triggers.txt");
pub const DEFAULT_SCOPE_WINDOW: usize = 5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NegationLexiconError {
    #[error("line {0}: unknown section {1:?}")]
    UnknownSection(usize, String),
    #[error("line {0}: phrase outside of any section")]
    NoSection(usize),
    #[error("phrase {0:?} appears in more than one list")]
    Overlap(String),
    #[error("scope window must be at least 1")]
    ZeroWindow,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegationLexicon {
    pub pre_triggers: Vec<String>,
    pub post_triggers: Vec<String>,
    pub pseudo_triggers: Vec<String>,
    pub terminators: Vec<String>,
    scope_window: usize,
}

impl Default for NegationLexicon {
    fn default() -> Self {
        NegationLexicon::parse(DEFAULT_NEGATION_TRIGGERS).expect("shipped negation lexicon is valid")
    }
}

impl NegationLexicon {
    pub fn parse(text: &str) -> Result<Self, NegationLexiconError> {
        let mut lists: [Vec<String>; 4] = Default::default();
        let mut current: Option<usize> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                current = Some(match name.trim() {
                    "pre" => 0,
                    "post" => 1,
                    "pseudo" => 2,
                    "term" => 3,
                    other => return Err(NegationLexiconError::UnknownSection(i + 1, other.to_string())),
                });
                continue;
            }
            let section = current.ok_or(NegationLexiconError::NoSection(i + 1))?;
            let phrase = tokenize(line).into_iter().map(|t| t.text).collect::<Vec<_>>().join(" ");
            if !lists[section].contains(&phrase) {
                lists[section].push(phrase);
            }
        }
        let [pre, post, pseudo, term] = lists;
        NegationLexicon::new(pre, post, pseudo, term, DEFAULT_SCOPE_WINDOW)
    }

    pub fn new(
        pre_triggers: Vec<String>,
        post_triggers: Vec<String>,
        pseudo_triggers: Vec<String>,
        terminators: Vec<String>,
        scope_window: usize,
    ) -> Result<Self, NegationLexiconError> {
        if scope_window == 0 {
            return Err(NegationLexiconError::ZeroWindow);
        }
        let mut seen = HashSet::new();
        for phrase in pre_triggers.iter().chain(&post_triggers).chain(&pseudo_triggers).chain(&terminators) {
            if !seen.insert(phrase.to_lowercase()) {
                return Err(NegationLexiconError::Overlap(phrase.clone()));
            }
        }
        Ok(NegationLexicon { pre_triggers, post_triggers, pseudo_triggers, terminators, scope_window })
    }

    pub fn with_scope_window(mut self, scope_window: usize) -> Result<Self, NegationLexiconError> {
        if scope_window == 0 {
            return Err(NegationLexiconError::ZeroWindow);
        }
        self.scope_window = scope_window;
        Ok(self)
    }

    pub fn scope_window(&self) -> usize {
        self.scope_window
    }
}

impl NegationLexicon {
    /// The shipped trigger lists with the default window.
    pub fn shipped() -> &'static NegationLexicon {
        static LEX: OnceLock<NegationLexicon> = OnceLock::new();
        LEX.get_or_init(NegationLexicon::default)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Token {
    /// Lowercased.
    text: String,
    start: usize,
    end: usize,
    is_word: bool,
}

fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    tokenize_range(&chars, 0, chars.len())
}

fn tokenize_range(chars: &[char], from: usize, to: usize) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut i = from;
    while i < to {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_alphanumeric() {
            let start = i;
            i += 1;
            loop {
                if i < to && chars[i].is_alphanumeric() {
                    i += 1;
                } else if i + 1 < to && matches!(chars[i], '-' | '\'') && chars[i + 1].is_alphanumeric() {
                    i += 2;
                } else {
                    break;
                }
            }
            let text: String = chars[start..i].iter().collect::<String>().to_lowercase();
            tokens.push(Token { text, start, end: i, is_word: true });
        } else {
            tokens.push(Token { text: c.to_string(), start: i, end: i + 1, is_word: false });
            i += 1;
        }
    }
    tokens
}

/// Occurrences of any phrase as `(first token, last token)` index pairs.
fn find_phrases(tokens: &[Token], phrases: &[Vec<String>]) -> Vec<(usize, usize)> {
    let mut found = Vec::new();
    for phrase in phrases.iter().filter(|p| !p.is_empty()) {
        for i in 0..tokens.len() {
            if i + phrase.len() <= tokens.len() && phrase.iter().zip(&tokens[i..]).all(|(p, t)| *p == t.text) {
                found.push((i, i + phrase.len() - 1));
            }
        }
    }
    found
}

struct CompiledTriggers {
    pre: Vec<Vec<String>>,
    post: Vec<Vec<String>>,
    pseudo: Vec<Vec<String>>,
    term: Vec<Vec<String>>,
}

impl CompiledTriggers {
    fn new(neg: &NegationLexicon) -> Self {
        let split = |list: &[String]| -> Vec<Vec<String>> {
            list.iter().map(|p| tokenize(p).into_iter().map(|t| t.text).collect()).collect()
        };
        CompiledTriggers {
            pre: split(&neg.pre_triggers),
            post: split(&neg.post_triggers),
            pseudo: split(&neg.pseudo_triggers),
            term: split(&neg.terminators),
        }
    }
}

/// Flag each mention as negated or affirmed. Spans, order and all other
/// fields are left as they are.
pub fn detect_negation(
    note: &ClinicalNote,
    sentences: &[SentenceSpan],
    mentions: &[Mention],
    neg: &NegationLexicon,
) -> Vec<Mention> {
    let triggers = CompiledTriggers::new(neg);
    let chars: Vec<char> = note.text().chars().collect();
    let mut sentence_tokens: Vec<Option<Vec<Token>>> = vec![None; sentences.len()];

    mentions
        .iter()
        .map(|m| {
            let mut out = m.clone();
            out.assertion = Assertion::Affirmed;
            let Some(si) = sentence_at(sentences, m.start) else { return out };
            let sentence = &sentences[si];
            let tokens = sentence_tokens[si].get_or_insert_with(|| tokenize_range(&chars, sentence.start, sentence.end));
            let others: Vec<&Mention> = mentions
                .iter()
                .filter(|o| o.element_id != m.element_id && sentence.contains(o.start))
                .collect();
            if is_negated(m, tokens, &others, &triggers, neg.scope_window) {
                out.assertion = Assertion::Negated;
            }
            out
        })
        .collect()
}

fn is_negated(m: &Mention, tokens: &[Token], others: &[&Mention], triggers: &CompiledTriggers, window: usize) -> bool {
    let pseudo_covered: HashSet<usize> =
        find_phrases(tokens, &triggers.pseudo).into_iter().flat_map(|(a, b)| a..=b).collect();
    let usable = |&(a, b): &(usize, usize)| !(a..=b).any(|t| pseudo_covered.contains(&t));
    let terminators = find_phrases(tokens, &triggers.term);

    // Gap is a char range; blocked if it holds a terminator or another element.
    let blocked = |gap_start: usize, gap_end: usize| {
        terminators.iter().any(|&(a, b)| tokens[a].start >= gap_start && tokens[b].end <= gap_end)
            || others.iter().any(|o| o.start >= gap_start && o.end <= gap_end)
    };
    let words_between = |gap_start: usize, gap_end: usize| {
        tokens.iter().filter(|t| t.is_word && t.start >= gap_start && t.end <= gap_end).count()
    };

    let pre = find_phrases(tokens, &triggers.pre).into_iter().filter(usable).any(|(_, b)| {
        let trigger_end = tokens[b].end;
        trigger_end <= m.start && words_between(trigger_end, m.start) < window && !blocked(trigger_end, m.start)
    });
    if pre {
        return true;
    }
    find_phrases(tokens, &triggers.post).into_iter().filter(usable).any(|(a, _)| {
        let trigger_start = tokens[a].start;
        trigger_start >= m.end && words_between(m.end, trigger_start) < window && !blocked(m.end, trigger_start)
    })
}
