//! File-backed annotation project.
//!
//! Layout under the project root:
//!
//! ```text
//! lexicon.tsv          copy of the lexicon the project was built with
//! notes/<id>.txt       normalized note text
//! pre/<id>.ann         pre-annotations, written once at init
//! ann/<id>.ann         current annotations, present once a note was saved
//! status.tsv           one row per note
//! events/<user>.log    append-only interaction log
//! ```
//!
//! Every replaced file goes through a temp file and a rename, so a crash
//! mid-save leaves the previous revision readable.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, SecondsFormat, SubsecRound, Utc};
use clean_core::activity::{check_monotone, ActivityError, InteractionEvent};
use clean_core::lexicon::DataElement;
use clean_core::mention::sort_mentions;
use clean_core::standoff::{doc_to_mentions, mentions_to_doc};
use clean_core::{
    annotate_with, import_tool_output, parse_ann, serialize_ann, ClinicalNote, Corpus, CorpusError, Lexicon,
    LexiconError, Mention, NegationLexicon, SentenceSpan, StandoffError,
};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fsutil::{append_durable, remove_stale_temps, write_atomic};

/// Source recorded on pre-annotations loaded from `pre/`.
pub const SOURCE_PRE: &str = "pre";
/// Source recorded on mentions saved by a reviewer.
pub const SOURCE_REVIEWED: &str = "reviewer";

const STATUS_HEADER: &str = "#note_id\tstate\tannotation_count\trevision\tlast_reviewed_by\tlast_updated";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("corpus is empty")]
    CorpusEmpty,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error("{path} already holds a project (use --force to overwrite)")]
    RefusedExistingProject { path: PathBuf },
    #[error("{path} is not a project")]
    NotAProject { path: PathBuf },
    #[error("pre-annotation {note_id}.ann: {source}")]
    PreAnnotation { note_id: String, source: StandoffError },
    #[error("stored annotations {note_id}.ann: {source}")]
    CorruptAnnotations { note_id: String, source: StandoffError },
    #[error("status.tsv line {line}: {message}")]
    CorruptStatus { line: usize, message: String },
    #[error("unknown note {0:?}")]
    UnknownNote(String),
    #[error("mention {index}: {reason}")]
    InvalidMention { index: usize, reason: String },
    #[error("note {note_id:?} is at revision {current}, request was based on {base}")]
    ConflictingRevision { note_id: String, base: u64, current: u64 },
    #[error("note {0:?} is not complete")]
    NotComplete(String),
    #[error("invalid user name {0:?}")]
    InvalidUser(String),
    #[error(transparent)]
    Events(#[from] ActivityError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoteState {
    Incomplete,
    Complete,
}

impl NoteState {
    fn as_str(self) -> &'static str {
        match self {
            NoteState::Incomplete => "incomplete",
            NoteState::Complete => "complete",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoteStatus {
    pub note_id: String,
    pub state: NoteState,
    pub annotation_count: usize,
    /// Bumped on every save; clients echo it back as `base_revision`.
    pub revision: u64,
    pub last_reviewed_by: String,
    pub last_updated: Option<DateTime<Utc>>,
}

impl NoteStatus {
    fn fresh(note_id: &str, annotation_count: usize) -> Self {
        NoteStatus {
            note_id: note_id.to_string(),
            state: NoteState::Incomplete,
            annotation_count,
            revision: 0,
            last_reviewed_by: String::new(),
            last_updated: None,
        }
    }

    fn to_row(&self) -> String {
        let updated =
            self.last_updated.map(|t| t.to_rfc3339_opts(SecondsFormat::Millis, true)).unwrap_or_else(|| "-".into());
        let reviewer = if self.last_reviewed_by.is_empty() { "-" } else { &self.last_reviewed_by };
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.note_id,
            self.state.as_str(),
            self.annotation_count,
            self.revision,
            reviewer,
            updated
        )
    }

    fn from_row(row: &str, line: usize) -> Result<Self, StoreError> {
        let bad = |message: String| StoreError::CorruptStatus { line, message };
        let fields: Vec<&str> = row.split('\t').collect();
        let [id, state, count, revision, reviewer, updated] = fields[..] else {
            return Err(bad(format!("expected 6 fields, found {}", fields.len())));
        };
        let state = match state {
            "incomplete" => NoteState::Incomplete,
            "complete" => NoteState::Complete,
            other => return Err(bad(format!("unknown state {other:?}"))),
        };
        let last_updated = match updated {
            "-" => None,
            t => Some(
                DateTime::parse_from_rfc3339(t).map_err(|e| bad(format!("bad timestamp {t:?}: {e}")))?.with_timezone(&Utc),
            ),
        };
        Ok(NoteStatus {
            note_id: id.to_string(),
            state,
            annotation_count: count.parse().map_err(|_| bad(format!("bad count {count:?}")))?,
            revision: revision.parse().map_err(|_| bad(format!("bad revision {revision:?}")))?,
            last_reviewed_by: if reviewer == "-" { String::new() } else { reviewer.to_string() },
            last_updated,
        })
    }
}

/// Where initial annotations come from.
#[derive(Debug, Clone)]
pub enum PreAnnotationSource {
    /// Run the built-in extractor with this negation lexicon.
    Pipeline(NegationLexicon),
    /// Load `<id>.ann` files from a directory; missing files mean no mentions.
    Directory(PathBuf),
}

#[derive(Debug, Clone, Serialize)]
pub struct NoteListing {
    pub notes: Vec<NoteStatus>,
    pub complete_count: usize,
    pub incomplete_count: usize,
    pub total: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct LexiconGroup {
    pub category: String,
    pub elements: Vec<DataElement>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NoteView {
    pub note_id: String,
    pub text: String,
    pub sentences: Vec<SentenceSpan>,
    pub mentions: Vec<Mention>,
    pub lexicon: Vec<LexiconGroup>,
    pub status: NoteStatus,
}

#[derive(Debug, Clone, Serialize)]
pub struct SaveOutcome {
    pub status: NoteStatus,
    pub next_note_id: Option<String>,
}

struct NoteEntry {
    note: ClinicalNote,
    sentences: Vec<SentenceSpan>,
    /// Held while a save or recheck of this note is in progress.
    writer: Mutex<()>,
}

/// Mutable part of the project; replaced piecewise under a short write lock.
struct State {
    statuses: Vec<NoteStatus>,
    mentions: Vec<Arc<Vec<Mention>>>,
}

pub struct Project {
    root: PathBuf,
    lexicon: Lexicon,
    entries: Vec<NoteEntry>,
    index: HashMap<String, usize>,
    state: RwLock<State>,
    events: Mutex<()>,
}

impl std::fmt::Debug for Project {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Project").field("root", &self.root).field("notes", &self.entries.len()).finish()
    }
}

fn create_dir(path: &Path) -> Result<(), StoreError> {
    fs::create_dir_all(path).map_err(io_at(path))
}

fn remove_if_exists(path: &Path) -> Result<(), StoreError> {
    let result = if path.is_dir() { fs::remove_dir_all(path) } else { fs::remove_file(path) };
    match result {
        Err(e) if e.kind() != io::ErrorKind::NotFound => Err(StoreError::Io { path: path.to_path_buf(), source: e }),
        _ => Ok(()),
    }
}

/// Current time at the precision `status.tsv` keeps.
fn now() -> DateTime<Utc> {
    Utc::now().trunc_subsecs(3)
}

fn valid_user(user: &str) -> bool {
    !user.is_empty()
        && user.len() <= 64
        && !user.starts_with('.')
        && user.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.' | '@'))
}

impl Project {
    /// Create a project at `root` from a corpus and lexicon text.
    pub fn init(
        root: &Path,
        corpus: &Corpus,
        lexicon_text: &str,
        source: &PreAnnotationSource,
        force: bool,
    ) -> Result<Project, StoreError> {
        if corpus.is_empty() {
            return Err(StoreError::CorpusEmpty);
        }
        let lexicon = Lexicon::parse(lexicon_text)?;
        let status_path = root.join("status.tsv");
        if status_path.exists() {
            if !force {
                return Err(StoreError::RefusedExistingProject { path: root.to_path_buf() });
            }
            for sub in ["notes", "pre", "ann", "status.tsv", "lexicon.tsv"] {
                remove_if_exists(&root.join(sub))?;
            }
        }
        for sub in ["notes", "pre", "ann", "events"] {
            create_dir(&root.join(sub))?;
        }

        let matchers = match source {
            PreAnnotationSource::Pipeline(_) => Some(lexicon.compile_matchers()?),
            PreAnnotationSource::Directory(_) => None,
        };
        let mut statuses = Vec::with_capacity(corpus.len());
        for note in corpus.notes() {
            let id = note.id();
            let mentions = match (source, &matchers) {
                (PreAnnotationSource::Pipeline(neg), Some(m)) => annotate_with(note, m, neg).mentions,
                (PreAnnotationSource::Directory(dir), _) => load_pre_dir(dir, note, &lexicon)?,
                _ => unreachable!(),
            };
            let path = root.join("pre").join(format!("{id}.ann"));
            write_atomic(&path, serialize_ann(&mentions_to_doc(&mentions)).as_bytes()).map_err(io_at(&path))?;
            let path = root.join("notes").join(format!("{id}.txt"));
            write_atomic(&path, note.text().as_bytes()).map_err(io_at(&path))?;
            statuses.push(NoteStatus::fresh(id, mentions.len()));
        }
        let path = root.join("lexicon.tsv");
        write_atomic(&path, lexicon_text.as_bytes()).map_err(io_at(&path))?;
        // status.tsv last: its presence marks a complete project.
        write_status(root, &statuses)?;
        Project::open(root)
    }

    pub fn open(root: &Path) -> Result<Project, StoreError> {
        let status_path = root.join("status.tsv");
        if !status_path.is_file() {
            return Err(StoreError::NotAProject { path: root.to_path_buf() });
        }
        let lexicon_path = root.join("lexicon.tsv");
        let lexicon = Lexicon::parse(&fs::read_to_string(&lexicon_path).map_err(io_at(&lexicon_path))?)?;
        let corpus = Corpus::load_dir(&root.join("notes"))?;
        if corpus.is_empty() {
            return Err(StoreError::CorpusEmpty);
        }
        create_dir(&root.join("events"))?;
        let ann_dir = root.join("ann");
        create_dir(&ann_dir)?;
        let stale = remove_stale_temps(&ann_dir).map_err(io_at(&ann_dir))?;
        if stale > 0 {
            log::warn!("removed {stale} interrupted write(s) under {}", ann_dir.display());
        }

        let stored = read_status(&status_path)?;
        let mut entries = Vec::with_capacity(corpus.len());
        let mut statuses = Vec::with_capacity(corpus.len());
        let mut mentions = Vec::with_capacity(corpus.len());
        for (note, sentences) in corpus.iter() {
            let id = note.id();
            let current = ann_dir.join(format!("{id}.ann"));
            let (path, source, saved) = if current.is_file() {
                (current, SOURCE_REVIEWED, true)
            } else {
                (root.join("pre").join(format!("{id}.ann")), SOURCE_PRE, false)
            };
            let list = if path.is_file() {
                let text = fs::read_to_string(&path).map_err(io_at(&path))?;
                let corrupt = |source| StoreError::CorruptAnnotations { note_id: id.to_string(), source };
                let doc = parse_ann(&text).map_err(corrupt)?;
                doc_to_mentions(&doc, note, &lexicon, source).map_err(corrupt)?
            } else {
                Vec::new()
            };
            let mut status = stored.get(id).cloned().unwrap_or_else(|| NoteStatus::fresh(id, 0));
            if !saved && status.revision > 0 {
                log::warn!("note {id}: status says revision {} but no saved annotations exist", status.revision);
            }
            status.annotation_count = list.len();
            statuses.push(status);
            mentions.push(Arc::new(list));
            entries.push(NoteEntry { note: note.clone(), sentences: sentences.to_vec(), writer: Mutex::new(()) });
        }
        let index = entries.iter().enumerate().map(|(i, e)| (e.note.id().to_string(), i)).collect();
        Ok(Project {
            root: root.to_path_buf(),
            lexicon,
            entries,
            index,
            state: RwLock::new(State { statuses, mentions }),
            events: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn note_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.note.id())
    }

    fn position(&self, note_id: &str) -> Result<usize, StoreError> {
        self.index.get(note_id).copied().ok_or_else(|| StoreError::UnknownNote(note_id.to_string()))
    }

    /// All statuses in project order, optionally restricted to note ids
    /// containing `filter` (case-insensitive). Counts cover the whole project.
    pub fn list_notes(&self, filter: Option<&str>) -> NoteListing {
        let statuses = self.state.read().statuses.clone();
        let complete_count = statuses.iter().filter(|s| s.state == NoteState::Complete).count();
        let total = statuses.len();
        let notes = match filter.map(str::to_lowercase).filter(|f| !f.is_empty()) {
            Some(f) => statuses.into_iter().filter(|s| s.note_id.to_lowercase().contains(&f)).collect(),
            None => statuses,
        };
        NoteListing { notes, complete_count, incomplete_count: total - complete_count, total }
    }

    pub fn status(&self, note_id: &str) -> Result<NoteStatus, StoreError> {
        let i = self.position(note_id)?;
        Ok(self.state.read().statuses[i].clone())
    }

    pub fn mentions(&self, note_id: &str) -> Result<Arc<Vec<Mention>>, StoreError> {
        let i = self.position(note_id)?;
        Ok(Arc::clone(&self.state.read().mentions[i]))
    }

    pub fn lexicon_groups(&self, prefix: &str) -> Vec<LexiconGroup> {
        self.lexicon
            .grouped_by_prefix(prefix)
            .into_iter()
            .map(|(category, elements)| LexiconGroup {
                category: category.to_string(),
                elements: elements.into_iter().cloned().collect(),
            })
            .collect()
    }

    pub fn get_note(&self, note_id: &str) -> Result<NoteView, StoreError> {
        let i = self.position(note_id)?;
        let (status, mentions) = {
            let state = self.state.read();
            (state.statuses[i].clone(), Arc::clone(&state.mentions[i]))
        };
        let entry = &self.entries[i];
        Ok(NoteView {
            note_id: note_id.to_string(),
            text: entry.note.text().to_string(),
            sentences: entry.sentences.clone(),
            mentions: mentions.as_ref().clone(),
            lexicon: self.lexicon_groups(""),
            status,
        })
    }

    fn validate(&self, note: &ClinicalNote, mentions: Vec<Mention>) -> Result<Vec<Mention>, StoreError> {
        let mut out = Vec::with_capacity(mentions.len());
        for (index, m) in mentions.into_iter().enumerate() {
            let invalid = |reason: String| StoreError::InvalidMention { index, reason };
            if !self.lexicon.contains(&m.element_id) {
                return Err(invalid(format!("unknown element {:?}", m.element_id)));
            }
            if m.start >= m.end {
                return Err(invalid(format!("empty span [{},{})", m.start, m.end)));
            }
            let Some(actual) = note.slice(m.start, m.end) else {
                return Err(invalid(format!("span [{},{}) exceeds note length {}", m.start, m.end, note.char_len())));
            };
            if !m.surface.is_empty() && m.surface != actual {
                return Err(invalid(format!("surface {:?} does not match note text {actual:?}", m.surface)));
            }
            out.push(Mention { surface: actual.to_string(), source: SOURCE_REVIEWED.to_string(), ..m });
        }
        sort_mentions(&mut out);
        out.dedup();
        Ok(out)
    }

    /// Replace a note's annotations.
    ///
    /// With `base_revision` set, the save is refused if another save landed
    /// since the client loaded the note.
    pub fn save_annotations(
        &self,
        note_id: &str,
        mentions: Vec<Mention>,
        base_revision: Option<u64>,
        mark_complete: bool,
        user: &str,
    ) -> Result<SaveOutcome, StoreError> {
        let i = self.position(note_id)?;
        if !valid_user(user) {
            return Err(StoreError::InvalidUser(user.to_string()));
        }
        let entry = &self.entries[i];
        let mentions = self.validate(&entry.note, mentions)?;

        let _writer = entry.writer.lock();
        let current = self.state.read().statuses[i].revision;
        if let Some(base) = base_revision.filter(|&b| b != current) {
            return Err(StoreError::ConflictingRevision { note_id: note_id.to_string(), base, current });
        }
        let path = self.root.join("ann").join(format!("{note_id}.ann"));
        write_atomic(&path, serialize_ann(&mentions_to_doc(&mentions)).as_bytes()).map_err(io_at(&path))?;

        let mut state = self.state.write();
        let status = &mut state.statuses[i];
        status.state = if mark_complete { NoteState::Complete } else { NoteState::Incomplete };
        status.annotation_count = mentions.len();
        status.revision = current + 1;
        status.last_reviewed_by = user.to_string();
        status.last_updated = Some(now());
        let status = status.clone();
        state.mentions[i] = Arc::new(mentions);
        write_status(&self.root, &state.statuses)?;
        let next_note_id = next_incomplete(&state.statuses, i);
        Ok(SaveOutcome { status, next_note_id })
    }

    /// Reopen a completed note; its annotations are left as they are.
    pub fn recheck(&self, note_id: &str, user: &str) -> Result<NoteStatus, StoreError> {
        let i = self.position(note_id)?;
        if !valid_user(user) {
            return Err(StoreError::InvalidUser(user.to_string()));
        }
        let _writer = self.entries[i].writer.lock();
        let mut state = self.state.write();
        let status = &mut state.statuses[i];
        if status.state != NoteState::Complete {
            return Err(StoreError::NotComplete(note_id.to_string()));
        }
        status.state = NoteState::Incomplete;
        status.last_reviewed_by = user.to_string();
        status.last_updated = Some(now());
        let status = status.clone();
        write_status(&self.root, &state.statuses)?;
        Ok(status)
    }

    pub fn event_log_path(&self, user: &str) -> PathBuf {
        self.root.join("events").join(format!("{user}.log"))
    }

    /// Append a batch to the per-user logs. Returns once the bytes are on
    /// stable storage.
    pub fn log_events(&self, batch: &[InteractionEvent]) -> Result<usize, StoreError> {
        check_monotone(batch)?;
        if let Some(e) = batch.iter().find(|e| !valid_user(&e.user)) {
            return Err(StoreError::InvalidUser(e.user.clone()));
        }
        let mut by_user: Vec<(&str, String)> = Vec::new();
        for e in batch {
            let line = e.to_log_line() + "\n";
            match by_user.iter_mut().find(|(u, _)| *u == e.user) {
                Some((_, buf)) => buf.push_str(&line),
                None => by_user.push((&e.user, line)),
            }
        }
        let _guard = self.events.lock();
        for (user, buf) in by_user {
            let path = self.event_log_path(user);
            append_durable(&path, buf.as_bytes()).map_err(io_at(&path))?;
        }
        Ok(batch.len())
    }
}

fn load_pre_dir(dir: &Path, note: &ClinicalNote, lexicon: &Lexicon) -> Result<Vec<Mention>, StoreError> {
    let path = dir.join(format!("{}.ann", note.id()));
    if !path.is_file() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(&path).map_err(io_at(&path))?;
    let (out, warnings) = import_tool_output(&text, note, SOURCE_PRE, lexicon).map_err(|e| match e {
        clean_core::EnsembleError::Standoff(source) => StoreError::PreAnnotation { note_id: note.id().to_string(), source },
        other => unreachable!("single-output import cannot fail with {other}"),
    })?;
    for w in warnings {
        log::warn!("{w}");
    }
    Ok(out.mentions)
}

fn next_incomplete(statuses: &[NoteStatus], from: usize) -> Option<String> {
    let n = statuses.len();
    (1..n).map(|step| &statuses[(from + step) % n]).find(|s| s.state == NoteState::Incomplete).map(|s| s.note_id.clone())
}

fn write_status(root: &Path, statuses: &[NoteStatus]) -> Result<(), StoreError> {
    let mut text = String::from(STATUS_HEADER);
    text.push('\n');
    for s in statuses {
        text.push_str(&s.to_row());
        text.push('\n');
    }
    let path = root.join("status.tsv");
    write_atomic(&path, text.as_bytes()).map_err(io_at(&path))
}

fn read_status(path: &Path) -> Result<HashMap<String, NoteStatus>, StoreError> {
    let text = fs::read_to_string(path).map_err(io_at(path))?;
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let status = NoteStatus::from_row(line, i + 1)?;
        out.insert(status.note_id.clone(), status);
    }
    Ok(out)
}
