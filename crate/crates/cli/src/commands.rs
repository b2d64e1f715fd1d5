use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{self, Write};
use std::net::{SocketAddr, ToSocketAddrs};
use std::path::{Path, PathBuf};

use clean_core::ensemble::EnsembleError;
use clean_core::evaluation::EvalReport;
use clean_core::lexicon::shipped_lexicon_text;
use clean_core::negation::NegationLexiconError;
use clean_core::standoff::{doc_to_mentions, mentions_to_doc};
use clean_core::{
    aggregate, annotate_with, corpus_stats, ensemble_merge, import_tool_output, note_level_score, parse_ann,
    sentence_level_score, serialize_ann, Corpus, CorpusError, EnsembleConfig, EvalError, Level, Lexicon,
    LexiconError, Mention, Method, NegationLexicon, NegationPolicy, NoteScore, ScorePolicy, StandoffError, ToolOutput,
};
use clean_service::{PreAnnotationSource, Project, ServeError, StoreError};
use thiserror::Error;

use crate::LevelArg;

/// Tool name of the built-in extractor inside a merge.
const BUILTIN_TOOL: &str = clean_core::extractor::SOURCE;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error("negation lexicon: {0}")]
    Negation(#[from] NegationLexiconError),
    #[error("{path}: {source}")]
    Annotation { path: PathBuf, source: StandoffError },
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Serve(#[from] ServeError),
    #[error("{0}")]
    Input(String),
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
    #[error("output: {0}")]
    Stdout(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Write { .. } | CliError::Stdout(_) | CliError::Serve(ServeError::Io(_)) => 1,
            CliError::Store(StoreError::Io { .. }) => 1,
            _ => 2,
        }
    }
}

type Result<T, E = CliError> = std::result::Result<T, E>;

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::Read { path: path.to_path_buf(), source })
}

fn lexicon_text(path: Option<&Path>) -> Result<String> {
    path.map_or_else(|| Ok(shipped_lexicon_text()), read_text)
}

fn negation_lexicon(path: Option<&Path>) -> Result<NegationLexicon> {
    match path {
        Some(p) => Ok(NegationLexicon::parse(&read_text(p)?)?),
        None => Ok(NegationLexicon::shipped().clone()),
    }
}

fn load_corpus(dir: &Path) -> Result<Corpus> {
    let corpus = Corpus::load_dir(dir)?;
    if corpus.is_empty() {
        return Err(CorpusError::EmptyCorpus.into());
    }
    Ok(corpus)
}

pub struct PreannotateArgs {
    pub corpus: PathBuf,
    pub lexicon: Option<PathBuf>,
    pub negation_lexicon: Option<PathBuf>,
    pub tools: Option<PathBuf>,
    pub method: Method,
    pub negation_policy: NegationPolicy,
    pub out: PathBuf,
}

/// Sub-directories of `dir`, sorted, each naming one tool.
fn tool_dirs(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let read_err = |source| CliError::Read { path: dir.to_path_buf(), source };
    let mut tools = Vec::new();
    for entry in fs::read_dir(dir).map_err(read_err)? {
        let path = entry.map_err(read_err)?.path();
        if path.is_dir() {
            let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
            if name == BUILTIN_TOOL {
                return Err(CliError::Input(format!("tool directory {name:?} clashes with the built-in extractor")));
            }
            tools.push((name, path));
        }
    }
    tools.sort();
    Ok(tools)
}

pub fn preannotate(args: &PreannotateArgs) -> Result<()> {
    let corpus = load_corpus(&args.corpus)?;
    let lexicon = Lexicon::parse(&lexicon_text(args.lexicon.as_deref())?)?;
    let matchers = lexicon.compile_matchers()?;
    let neg = negation_lexicon(args.negation_lexicon.as_deref())?;
    let tools = match &args.tools {
        Some(dir) => tool_dirs(dir)?,
        None => Vec::new(),
    };
    let cfg = EnsembleConfig { method: args.method, negation_policy: args.negation_policy };
    if let Method::Vote(k) = cfg.method {
        if k > tools.len() + 1 {
            return Err(EnsembleError::BadVoteThreshold { k, tools: tools.len() + 1 }.into());
        }
    }
    fs::create_dir_all(&args.out).map_err(|source| CliError::Write { path: args.out.clone(), source })?;

    for note in corpus.notes() {
        let builtin = annotate_with(note, &matchers, &neg);
        let mut outputs = vec![ToolOutput::new(BUILTIN_TOOL, note.id(), builtin.mentions)];
        for (name, dir) in &tools {
            let path = dir.join(format!("{}.ann", note.id()));
            if !path.is_file() {
                outputs.push(ToolOutput::new(name.as_str(), note.id(), Vec::new()));
                continue;
            }
            let (out, warnings) = import_tool_output(&read_text(&path)?, note, name, &lexicon).map_err(|e| match e {
                EnsembleError::Standoff(source) => CliError::Annotation { path: path.clone(), source },
                other => other.into(),
            })?;
            for w in warnings {
                log::warn!("{w}");
            }
            outputs.push(out);
        }
        let merged = ensemble_merge(&outputs, &cfg)?;
        let path = args.out.join(format!("{}.ann", note.id()));
        fs::write(&path, serialize_ann(&mentions_to_doc(&merged.mentions)))
            .map_err(|source| CliError::Write { path, source })?;
    }
    log::info!("wrote {} annotation files to {}", corpus.len(), args.out.display());
    Ok(())
}

pub struct EvaluateArgs {
    pub gold: PathBuf,
    pub pred: PathBuf,
    pub corpus: PathBuf,
    pub lexicon: Option<PathBuf>,
    pub level: LevelArg,
    pub policy: ScorePolicy,
    pub json: Option<PathBuf>,
}

fn read_mentions(path: &Path, note: &clean_core::ClinicalNote, lexicon: &Lexicon) -> Result<Vec<Mention>> {
    let ann_err = |source| CliError::Annotation { path: path.to_path_buf(), source };
    let doc = parse_ann(&read_text(path)?).map_err(ann_err)?;
    doc_to_mentions(&doc, note, lexicon, "").map_err(ann_err)
}

fn ann_ids(dir: &Path) -> Result<HashSet<String>> {
    let read_err = |source| CliError::Read { path: dir.to_path_buf(), source };
    let mut ids = HashSet::new();
    for entry in fs::read_dir(dir).map_err(read_err)? {
        let path = entry.map_err(read_err)?.path();
        if path.extension().is_some_and(|e| e == "ann") {
            ids.insert(path.file_stem().unwrap_or_default().to_string_lossy().into_owned());
        }
    }
    Ok(ids)
}

pub fn evaluate(args: &EvaluateArgs, out: &mut impl Write) -> Result<()> {
    let corpus = load_corpus(&args.corpus)?;
    let lexicon = Lexicon::parse(&lexicon_text(args.lexicon.as_deref())?)?;
    let gold_ids = ann_ids(&args.gold)?;
    let pred_ids = ann_ids(&args.pred)?;
    let corpus_ids: HashSet<&str> = corpus.notes().iter().map(|n| n.id()).collect();
    let mut strays: Vec<_> = gold_ids.iter().chain(&pred_ids).filter(|id| !corpus_ids.contains(id.as_str())).collect();
    strays.sort();
    strays.dedup();
    for id in strays {
        log::warn!("{id}.ann has no note in the corpus; ignored");
    }

    let levels: &[Level] = match args.level {
        LevelArg::Note => &[Level::Note],
        LevelArg::Sentence => &[Level::Sentence],
        LevelArg::Both => &[Level::Note, Level::Sentence],
    };
    let mut scores: BTreeMap<Level, Vec<NoteScore>> = BTreeMap::new();
    for (note, sentences) in corpus.iter() {
        if !gold_ids.contains(note.id()) {
            if pred_ids.contains(note.id()) {
                log::warn!("{}: prediction without gold annotations; skipped", note.id());
            }
            continue;
        }
        let gold = read_mentions(&args.gold.join(format!("{}.ann", note.id())), note, &lexicon)?;
        let pred = if pred_ids.contains(note.id()) {
            read_mentions(&args.pred.join(format!("{}.ann", note.id())), note, &lexicon)?
        } else {
            log::warn!("{}: no prediction, scored as empty", note.id());
            Vec::new()
        };
        for &level in levels {
            let score = match level {
                Level::Note => note_level_score(&gold, &pred, note, args.policy)?,
                Level::Sentence => sentence_level_score(&gold, &pred, note, sentences, args.policy)?,
            };
            scores.entry(level).or_default().push(score);
        }
    }
    if scores.is_empty() {
        return Err(CliError::Input(format!("no gold annotations for any corpus note in {}", args.gold.display())));
    }
    let reports: Vec<EvalReport> = levels.iter().map(|l| aggregate(&scores[l])).collect::<Result<_, _>>()?;

    writeln!(out, "note_id\tlevel\tprecision\trecall\tf1\tconcept_frequency\tlength")?;
    for report in &reports {
        for s in &report.notes {
            writeln!(
                out,
                "{}\t{}\t{:.3}\t{:.3}\t{:.3}\t{}\t{}",
                s.note_id,
                s.level,
                s.precision,
                s.recall,
                s.f1,
                s.concept_frequency,
                s.length
            )?;
        }
    }
    writeln!(out)?;
    writeln!(out, "Level\tPrecision (95% CI)\tRecall (95% CI)\tF1 (95% CI)")?;
    for r in &reports {
        writeln!(out, "{}\t{}\t{}\t{}", r.level, r.precision, r.recall, r.f1)?;
    }

    if let Some(path) = &args.json {
        let json = serde_json::to_string_pretty(&reports).expect("reports serialize");
        fs::write(path, json + "\n").map_err(|source| CliError::Write { path: path.clone(), source })?;
    }
    Ok(())
}

pub fn split(corpus: &Path, strata: &Path, seed: u64, k: usize, out: &mut impl Write) -> Result<()> {
    let corpus = load_corpus(corpus)?;
    let labels = clean_core::split::parse_strata(&read_text(strata)?)
        .map_err(|(line, message)| CorpusError::Format { path: strata.to_path_buf(), line, message })?;
    let split = clean_core::split::stratified_split(&corpus, &labels, k, seed)?;
    out.write_all(split.to_manifest().as_bytes())?;
    for (i, set) in split.sets.iter().enumerate() {
        log::info!("set {i}: {} notes", set.len());
    }
    Ok(())
}

/// `id -> set` pairs from a split manifest.
fn parse_manifest(path: &Path) -> Result<BTreeMap<String, Vec<String>>> {
    let text = read_text(path)?;
    let mut sets: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((id, set)) = line.split_once('\t') else {
            return Err(CorpusError::Format { path: path.to_path_buf(), line: i + 1, message: "expected id<TAB>set".into() }
                .into());
        };
        sets.entry(set.trim().to_string()).or_default().push(id.to_string());
    }
    Ok(sets)
}

pub fn stats(corpus: &Path, query: Option<&str>, manifest: Option<&Path>, out: &mut impl Write) -> Result<()> {
    let mut corpus = load_corpus(corpus)?;
    if let Some(q) = query {
        corpus = corpus.select_by_query(q)?;
    }
    let mut rows = vec![("all".to_string(), corpus_stats(&corpus)?)];
    if let Some(path) = manifest {
        for (set, ids) in parse_manifest(path)? {
            let ids: HashSet<String> = ids.into_iter().collect();
            let subset = corpus.restrict(&ids);
            if subset.is_empty() {
                log::warn!("set {set}: no notes left after filtering");
                continue;
            }
            rows.push((set, corpus_stats(&subset)?));
        }
    }
    writeln!(out, "set\tnotes\ttotal_words\tmean_words\tsd_words")?;
    for (set, s) in rows {
        writeln!(
            out,
            "{set}\t{}\t{}\t{:.1}\t{:.1}",
            s.note_count, s.total_words, s.mean_words_per_note, s.stddev_words_per_note
        )?;
    }
    Ok(())
}

pub fn init(
    project: &Path,
    corpus: &Path,
    lexicon: Option<&Path>,
    negation: Option<&Path>,
    pre: Option<PathBuf>,
    force: bool,
    out: &mut impl Write,
) -> Result<()> {
    let corpus = load_corpus(corpus)?;
    let text = lexicon_text(lexicon)?;
    let source = match pre {
        Some(dir) if !dir.is_dir() => return Err(CliError::Input(format!("{} is not a directory", dir.display()))),
        Some(dir) => PreAnnotationSource::Directory(dir),
        None => PreAnnotationSource::Pipeline(negation_lexicon(negation)?),
    };
    let p = Project::init(project, &corpus, &text, &source, force)?;
    let listing = p.list_notes(None);
    let mentions: usize = listing.notes.iter().map(|s| s.annotation_count).sum();
    writeln!(out, "{}\t{} notes\t{} pre-annotations", project.display(), listing.total, mentions)?;
    Ok(())
}

fn resolve(host: &str, port: u16) -> Result<SocketAddr> {
    (host, port)
        .to_socket_addrs()
        .ok()
        .and_then(|mut a| a.next())
        .ok_or_else(|| CliError::Input(format!("cannot resolve {host}:{port}")))
}

pub fn serve(project: &Path, host: &str, port: u16) -> Result<()> {
    let addr = resolve(host, port)?;
    let project = Project::open(project)?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(clean_service::serve(project, addr))?;
    Ok(())
}
