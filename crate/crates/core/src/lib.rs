//! Core engine for reviewing machine pre-annotations of clinical notes.
//!
//! The crate covers the full batch path: ingesting notes, splitting them into
//! sentences, tagging data-element mentions with a dictionary/regex matcher,
//! flagging negated mentions, merging the outputs of several annotators,
//! reading and writing BRAT-style `.ann` files, and scoring annotations
//! against a gold standard at note and sentence level.
//!
//! All values are immutable once built and every operation is a pure
//! function of its inputs, so notes, lexicons and matcher sets can be shared
//! freely across threads.

pub mod activity;
pub mod corpus;
pub mod ensemble;
pub mod evaluation;
pub mod extractor;
pub mod lexicon;
pub mod mention;
pub mod negation;
pub mod query;
pub mod sentence;
pub mod split;
pub mod standoff;

pub use corpus::{corpus_stats, ingest_note, ClinicalNote, Corpus, CorpusError, CorpusStats};
pub use ensemble::{ensemble_merge, import_tool_output, EnsembleConfig, EnsembleError, Method, NegationPolicy, ToolOutput};
pub use evaluation::{aggregate, note_level_score, sentence_level_score, EvalError, EvalReport, Level, NoteScore, ScorePolicy};
pub use extractor::{annotate, annotate_with, tag};
pub use lexicon::{DataElement, Lexicon, LexiconError, MatcherSet};
pub use mention::{AnnotationSet, Assertion, Mention};
pub use negation::{detect_negation, NegationLexicon};
pub use sentence::{split_sentences, SentenceSpan};
pub use standoff::{parse_ann, serialize_ann, StandoffDoc, StandoffError};
