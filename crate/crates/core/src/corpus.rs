//! Note ingestion, corpus loading and descriptive statistics.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::query::{Query, QuerySyntaxError};
use crate::sentence::{split_sentences, SentenceSpan};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("note {0:?} is empty")]
    EmptyNote(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("duplicate note id {0:?}")]
    DuplicateNoteId(String),
    #[error("no stratum label for note {0:?}")]
    MissingStratumLabel(String),
    #[error("split needs k >= 1, got {0}")]
    InvalidK(usize),
    #[error("{path}:{line}: {message}")]
    Format { path: PathBuf, line: usize, message: String },
    #[error(transparent)]
    Query(#[from] QuerySyntaxError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// One clinical note after normalization.
///
/// Offsets used anywhere in the crate are Unicode scalar (char) positions
/// into `text`; the note keeps a byte index so slicing by char offsets is
/// O(1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClinicalNote {
    id: String,
    text: String,
    word_count: usize,
    condition: Option<String>,
    /// Byte offset of every char, plus `text.len()` as a sentinel.
    char_bytes: Vec<usize>,
}

impl ClinicalNote {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn word_count(&self) -> usize {
        self.word_count
    }

    pub fn condition(&self) -> Option<&str> {
        self.condition.as_deref()
    }

    pub fn with_condition(mut self, condition: impl Into<String>) -> Self {
        self.condition = Some(condition.into());
        self
    }

    /// Length of the text in chars.
    pub fn char_len(&self) -> usize {
        self.char_bytes.len() - 1
    }

    /// Text of the half-open char range `[start, end)`, or `None` when the
    /// range is empty, reversed or out of bounds.
    pub fn slice(&self, start: usize, end: usize) -> Option<&str> {
        if start >= end || end > self.char_len() {
            return None;
        }
        Some(&self.text[self.char_bytes[start]..self.char_bytes[end]])
    }

    pub fn byte_offset(&self, char_offset: usize) -> usize {
        self.char_bytes[char_offset]
    }

    /// Char offset of a byte position that lies on a char boundary.
    pub fn char_offset(&self, byte_offset: usize) -> usize {
        match self.char_bytes.binary_search(&byte_offset) {
            Ok(i) => i,
            // Not on a boundary; round down to the char containing it.
            Err(i) => i - 1,
        }
    }
}

/// Decode raw file content into a normalized note.
///
/// Invalid UTF-8 is replaced with U+FFFD, CRLF and lone CR become LF.
pub fn ingest_note(bytes: &[u8], id: impl Into<String>) -> Result<ClinicalNote, CorpusError> {
    let id = id.into();
    let decoded = String::from_utf8_lossy(bytes);
    let text = decoded.replace("\r\n", "\n").replace('\r', "\n");
    if text.trim().is_empty() {
        return Err(CorpusError::EmptyNote(id));
    }
    Ok(note_from_text(id, text))
}

fn note_from_text(id: String, text: String) -> ClinicalNote {
    let word_count = text.split_whitespace().count();
    let mut char_bytes: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
    char_bytes.push(text.len());
    ClinicalNote { id, text, word_count, condition: None, char_bytes }
}

/// An ordered set of notes with their sentence spans.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    notes: Vec<ClinicalNote>,
    sentences: Vec<Vec<SentenceSpan>>,
}

impl Corpus {
    pub fn new(notes: Vec<ClinicalNote>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for note in &notes {
            if !seen.insert(note.id.clone()) {
                return Err(CorpusError::DuplicateNoteId(note.id.clone()));
            }
        }
        let sentences = notes.iter().map(split_sentences).collect();
        Ok(Corpus { notes, sentences })
    }

    /// Load every `<id>.txt` under `dir`, ordered by id.
    pub fn load_dir(dir: &Path) -> Result<Self, CorpusError> {
        let io_err = |source| CorpusError::Io { path: dir.to_path_buf(), source };
        let mut paths = Vec::new();
        for entry in fs::read_dir(dir).map_err(io_err)? {
            let path = entry.map_err(io_err)?.path();
            if path.extension().is_some_and(|e| e == "txt") && path.is_file() {
                paths.push(path);
            }
        }
        paths.sort();
        let mut notes = Vec::with_capacity(paths.len());
        for path in paths {
            let bytes = fs::read(&path).map_err(|source| CorpusError::Io { path: path.clone(), source })?;
            let id = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            notes.push(ingest_note(&bytes, id)?);
        }
        Corpus::new(notes)
    }

    pub fn notes(&self) -> &[ClinicalNote] {
        &self.notes
    }

    pub fn len(&self) -> usize {
        self.notes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ClinicalNote> {
        self.notes.iter().find(|n| n.id == id)
    }

    pub fn sentences(&self, id: &str) -> Option<&[SentenceSpan]> {
        let i = self.notes.iter().position(|n| n.id == id)?;
        Some(&self.sentences[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ClinicalNote, &[SentenceSpan])> {
        self.notes.iter().zip(self.sentences.iter().map(Vec::as_slice))
    }

    fn subset(&self, keep: impl Fn(&ClinicalNote) -> bool) -> Corpus {
        let (notes, sentences) = self
            .notes
            .iter()
            .zip(&self.sentences)
            .filter(|(n, _)| keep(n))
            .map(|(n, s)| (n.clone(), s.clone()))
            .unzip();
        Corpus { notes, sentences }
    }

    /// Sub-corpus restricted to the given ids, in corpus order.
    pub fn restrict(&self, ids: &HashSet<String>) -> Corpus {
        self.subset(|n| ids.contains(&n.id))
    }

    /// Notes whose text satisfies a boolean keyword query.
    pub fn select_by_query(&self, query: &str) -> Result<Corpus, CorpusError> {
        let query = Query::parse(query)?;
        Ok(self.select(&query))
    }

    pub fn select(&self, query: &Query) -> Corpus {
        self.subset(|n| query.matches(n.text()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorpusStats {
    pub note_count: usize,
    pub total_words: usize,
    pub mean_words_per_note: f64,
    /// Sample standard deviation; 0 for a single note.
    pub stddev_words_per_note: f64,
}

pub fn corpus_stats(corpus: &Corpus) -> Result<CorpusStats, CorpusError> {
    word_stats(corpus.notes.iter().map(|n| n.word_count))
}

pub(crate) fn word_stats(counts: impl Iterator<Item = usize>) -> Result<CorpusStats, CorpusError> {
    let counts: Vec<usize> = counts.collect();
    if counts.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let n = counts.len();
    let total: usize = counts.iter().sum();
    let mean = total as f64 / n as f64;
    let stddev = if n < 2 {
        0.0
    } else {
        let ss: f64 = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt()
    };
    Ok(CorpusStats { note_count: n, total_words: total, mean_words_per_note: mean, stddev_words_per_note: stddev })
}
