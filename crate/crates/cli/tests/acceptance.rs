//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Runs against the library, the project store and the `clean`
//! binary; no UI is involved.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode, Stdio};
use std::time::{Duration, Instant};

use clean_core::activity::normalized_activity;
use clean_core::lexicon::shipped_lexicon_text;
use clean_core::mention::sort_mentions;
use clean_core::split::stratified_split;
use clean_core::standoff::{doc_to_mentions, mentions_to_doc};
use clean_core::{
    annotate_with, corpus_stats, ensemble_merge, ingest_note, note_level_score, parse_ann, sentence_level_score,
    serialize_ann, AnnotationSet, Assertion, Corpus, EnsembleConfig, Lexicon, Mention, Method, NegationLexicon,
    ToolOutput,
};
use clean_service::{NoteState, NoteStatus, PreAnnotationSource, Project, StoreError};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::gen::{metric_instance, mentions_on, tool_outputs, unicode_note, MetricInstance};
use support::oracle;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn core_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core")
}

fn clean(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_clean")).args(args).output().expect("run clean")
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

// ---- metrics ---------------------------------------------------------------

fn scores(i: &MetricInstance) -> [(f64, f64, f64); 2] {
    let n = note_level_score(&i.gold, &i.pred, &i.note, i.policy).unwrap();
    let s = sentence_level_score(&i.gold, &i.pred, &i.note, &i.sentences, i.policy).unwrap();
    [(n.precision, n.recall, n.f1), (s.precision, s.recall, s.f1)]
}

fn metric_oracle() -> Outcome {
    const N: u64 = 2000;
    let started = Instant::now();
    for seed in 0..N {
        let i = metric_instance(&mut ChaCha8Rng::seed_from_u64(seed));
        let [note, sentence] = scores(&i);
        ensure!(note == oracle::note_level(&i.gold, &i.pred, i.policy), "seed {seed}: note level differs");
        let (p, r, f, _) = oracle::sentence_level(&i.gold, &i.pred, &i.sentences, i.policy);
        ensure!(sentence == (p, r, f), "seed {seed}: sentence level differs");
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!("{N} instances identical to the enumeration oracle in {:.2}s", elapsed.as_secs_f64()))
}

fn binary_counting() -> Outcome {
    const N: u64 = 2000;
    for seed in 0..N {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xD0B1E);
        let i = metric_instance(&mut rng);
        let before = scores(&i);
        let mut dup = i.clone();
        for side in [&mut dup.gold, &mut dup.pred] {
            let copies: Vec<Mention> = side.iter().filter(|_| rng.random_bool(0.5)).cloned().collect();
            side.extend(copies);
            side.shuffle(&mut rng);
        }
        ensure!(scores(&dup) == before, "seed {seed}: duplicated mentions changed a score");
    }
    Ok(format!("{N} duplicated-mention cases score unchanged"))
}

// ---- ensemble --------------------------------------------------------------

fn keys(set: &AnnotationSet) -> HashSet<(String, usize, usize)> {
    set.mentions.iter().map(|m| (m.element_id.clone(), m.start, m.end)).collect()
}

fn merge(outputs: &[ToolOutput], method: Method) -> AnnotationSet {
    ensemble_merge(outputs, &EnsembleConfig { method, ..Default::default() }).unwrap()
}

fn ensemble_algebra() -> Outcome {
    const N: u64 = 1000;
    for seed in 0..N {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tools = rng.random_range(1..=5);
        let mut outputs = tool_outputs(&mut rng, tools, 60, 5);
        let union = merge(&outputs, Method::Union);
        let inter = keys(&merge(&outputs, Method::Intersection));
        for k in 1..=tools {
            let vote = keys(&merge(&outputs, Method::Vote(k)));
            ensure!(inter.is_subset(&vote), "seed {seed}: intersection not within vote:{k}");
            ensure!(vote.is_subset(&keys(&union)), "seed {seed}: vote:{k} not within union");
        }

        let gold: HashSet<String> = (0..5).filter(|_| rng.random_bool(0.5)).map(|e| format!("e{e}")).collect();
        let recall = |set: &AnnotationSet| {
            let found: HashSet<&str> = set.mentions.iter().map(|m| m.element_id.as_str()).collect();
            gold.iter().filter(|g| found.contains(g.as_str())).count()
        };
        let mut last = 0;
        for n in 1..=tools {
            let r = recall(&merge(&outputs[..n], Method::Union));
            ensure!(r >= last, "seed {seed}: union recall dropped when adding tool {n}");
            last = r;
        }

        outputs.shuffle(&mut rng);
        outputs.iter_mut().for_each(|o| o.mentions.shuffle(&mut rng));
        ensure!(merge(&outputs, Method::Union) == union, "seed {seed}: union depends on tool order");
    }
    Ok(format!("{N} random tool sets: intersection ⊆ vote(k) ⊆ union, monotone recall, order invariant"))
}

// ---- standoff --------------------------------------------------------------

fn standoff_round_trip() -> Outcome {
    let mut fixtures = 0;
    for entry in fs::read_dir(core_dir().join("tests/fixtures/ann")).map_err(|e| e.to_string())? {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        let doc = parse_ann(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        ensure!(serialize_ann(&doc) == text, "{} is not reproduced byte for byte", path.display());
        fixtures += 1;
    }
    ensure!(fixtures > 0, "no canonical fixtures found");

    let lexicon = Lexicon::parse("chf\tHeart Failure\tDx\nbnp\tBNP\tLab\nedema\tEdema\tFinding\n").unwrap();
    const N: u64 = 1000;
    let mut non_ascii = 0;
    for seed in 0..N {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let note = unicode_note(&mut rng, "n");
        let mut mentions = mentions_on(&mut rng, &note, &["chf", "bnp", "edema"], 12);
        mentions.iter_mut().for_each(|m| m.source = "t".into());
        if !note.text().is_ascii() {
            non_ascii += 1;
        }
        let doc = mentions_to_doc(&mentions);
        let parsed = parse_ann(&serialize_ann(&doc)).map_err(|e| format!("seed {seed}: {e}"))?;
        ensure!(parsed == doc, "seed {seed}: parsed document differs");
        let mut back = doc_to_mentions(&parsed, &note, &lexicon, "t").map_err(|e| format!("seed {seed}: {e}"))?;
        back.dedup();
        sort_mentions(&mut mentions);
        mentions.dedup();
        ensure!(back == mentions, "seed {seed}: mentions differ after the round trip");
    }
    Ok(format!("{fixtures} fixtures byte-identical; {N} generated docs ({non_ascii} non-ASCII) structurally identical"))
}

// ---- corpus arithmetic -----------------------------------------------------

fn table1_arithmetic() -> Outcome {
    // 61 notes of 1,110 words and 23 of 1,109: 93,217 words in all.
    let notes: Vec<_> = (0..84)
        .map(|i| {
            let words = if i < 61 { 1110 } else { 1109 };
            let text = vec!["word"; words].join(if i % 2 == 0 { " " } else { "\n" });
            ingest_note(text.as_bytes(), format!("n{i:02}")).unwrap()
        })
        .collect();
    let corpus = Corpus::new(notes).map_err(|e| e.to_string())?;
    let stats = corpus_stats(&corpus).map_err(|e| e.to_string())?;
    ensure!(stats.note_count == 84 && stats.total_words == 93_217, "counted {stats:?}");
    ensure!((stats.mean_words_per_note - 1110.0).abs() <= 0.5, "mean {}", stats.mean_words_per_note);

    let strata: HashMap<String, String> =
        corpus.notes().iter().enumerate().map(|(i, n)| (n.id().to_string(), if i < 52 { "a" } else { "b" }.to_string())).collect();
    const SEEDS: u64 = 500;
    for seed in 0..SEEDS {
        let split = stratified_split(&corpus, &strata, 2, seed).map_err(|e| e.to_string())?;
        for set in &split.sets {
            let a = set.iter().filter(|id| strata[*id] == "a").count();
            ensure!((a, set.len() - a) == (26, 16), "seed {seed}: set holds {a}+{}", set.len() - a);
        }
    }
    Ok(format!(
        "84 notes, {} words, mean {:.3}; 52+32 split into 26+16 twice for {SEEDS} seeds",
        stats.total_words, stats.mean_words_per_note
    ))
}

fn table_a2_arithmetic() -> Outcome {
    let first = normalized_activity(2629.5, 1553.0, 44_219).map_err(|e| e.to_string())?;
    let second = normalized_activity(2057.0, 1667.5, 48_998).map_err(|e| e.to_string())?;
    let (r1, r2) = (first.table_row(), second.table_row());
    ensure!(format!("{:.3}", r1.total_per_word) == "0.094", "first row total {:.3}", r1.total_per_word);
    ensure!(format!("{:.3}", r2.total_per_word) == "0.076", "second row total {:.3}", r2.total_per_word);
    for (row, exact) in [(r1, first), (r2, second)] {
        ensure!((row.total_per_word - exact.total_per_word).abs() < 1e-3, "rounded total drifts from exact");
    }
    let wpa = r2.words_per_action.ok_or("no actions")?;
    ensure!(format!("{wpa:.1}") == "13.2", "words per action {wpa:.1}");
    Ok(format!(
        "totals {:.3} and {:.3} actions/word; {wpa:.1} words/action",
        r1.total_per_word, r2.total_per_word
    ))
}

// ---- negation --------------------------------------------------------------

fn negation_suite() -> Outcome {
    let suite = fs::read_to_string(core_dir().join("tests/fixtures/negation_suite.tsv")).map_err(|e| e.to_string())?;
    let matchers = Lexicon::parse(&shipped_lexicon_text()).unwrap().compile_matchers().unwrap();
    let neg = NegationLexicon::shipped();
    let mut cases = 0;
    for line in suite.lines().filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let (text, spec) = line.split_once('\t').ok_or("malformed suite line")?;
        let expected: Vec<(String, Assertion)> = if spec == "-" {
            Vec::new()
        } else {
            spec.split(';')
                .map(|item| {
                    let (surface, flag) = item.rsplit_once('=').unwrap();
                    (surface.to_string(), if flag == "neg" { Assertion::Negated } else { Assertion::Affirmed })
                })
                .collect()
        };
        let note = ingest_note(text.as_bytes(), "case").unwrap();
        let got: Vec<_> = annotate_with(&note, &matchers, neg).mentions.into_iter().map(|m| (m.surface, m.assertion)).collect();
        ensure!(got == expected, "{text:?}: expected {spec}, got {got:?}");
        cases += 1;
    }
    ensure!(cases >= 20, "only {cases} curated sentences");
    Ok(format!("{cases} curated sentences classified as expected"))
}

// ---- service ---------------------------------------------------------------

const NOTES: &[(&str, &str)] = &[
    ("a", "History: 67M with congestive heart failure.\nBNP 900 pg/mL. No chest pain.\nEF 35%. On furosemide 40 mg b.i.d.\n"),
    ("b", "Kawasaki disease suspected. Fever for 5 days. No rash.\n"),
    ("c", "Follow-up visit. Denies shortness of breath. Pedal edema improved on Lasix.\n"),
];

fn write_corpus(root: &Path) -> PathBuf {
    let dir = root.join("notes");
    fs::create_dir_all(&dir).unwrap();
    for (id, text) in NOTES {
        fs::write(dir.join(format!("{id}.txt")), text).unwrap();
    }
    dir
}

fn snapshot(p: &Project) -> Vec<(NoteStatus, Vec<Mention>)> {
    p.note_ids().map(|id| (p.status(id).unwrap(), p.mentions(id).unwrap().as_ref().clone())).collect()
}

fn chf() -> Mention {
    Mention {
        element_id: "chf".into(),
        start: 18,
        end: 42,
        surface: "congestive heart failure".into(),
        assertion: Assertion::Affirmed,
        source: String::new(),
    }
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn connect(port: u16, deadline: Duration) -> Option<TcpStream> {
    let started = Instant::now();
    while started.elapsed() < deadline {
        if let Ok(stream) = TcpStream::connect(("127.0.0.1", port)) {
            return Some(stream);
        }
        std::thread::sleep(Duration::from_millis(50));
    }
    None
}

/// Sends one PUT and returns whatever came back before the connection closed.
fn put(port: u16, path: &str, body: &str) -> Result<String, String> {
    let mut stream = connect(port, Duration::from_secs(15)).ok_or("server never came up")?;
    stream.set_read_timeout(Some(Duration::from_secs(15))).unwrap();
    let request = format!(
        "PUT {path} HTTP/1.1\r\nHost: localhost\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    stream.write_all(request.as_bytes()).map_err(|e| e.to_string())?;
    let mut response = String::new();
    let _ = stream.read_to_string(&mut response);
    Ok(response)
}

struct Server(std::process::Child);

impl Server {
    fn spawn(project: &Path, port: u16, failpoint: Option<&str>) -> Server {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_clean"));
        cmd.args(["serve", "--project", s(project), "--port", &port.to_string()])
            .stdout(Stdio::null())
            .stderr(Stdio::null());
        if let Some(name) = failpoint {
            cmd.env(clean_service::fsutil::FAILPOINT_ENV, name);
        }
        Server(cmd.spawn().expect("spawn clean serve"))
    }

    fn wait_exit(&mut self, deadline: Duration) -> Option<std::process::ExitStatus> {
        let started = Instant::now();
        while started.elapsed() < deadline {
            if let Some(status) = self.0.try_wait().unwrap() {
                return Some(status);
            }
            std::thread::sleep(Duration::from_millis(20));
        }
        None
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn kill_during_save() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let notes = write_corpus(tmp.path());
    let project = tmp.path().join("project");
    let init = clean(&["init", "--project", s(&project), "--corpus", s(&notes)]);
    ensure!(init.status.success(), "init failed: {}", String::from_utf8_lossy(&init.stderr));

    let p = Project::open(&project).map_err(|e| e.to_string())?;
    p.save_annotations("a", vec![chf()], None, true, "rev").map_err(|e| e.to_string())?;
    let before = snapshot(&p);
    drop(p);
    let ann = project.join("ann/a.ann");
    let committed = fs::read(&ann).unwrap();

    // The server aborts once the replacement is fully written but not yet
    // renamed into place.
    let port = free_port();
    let mut server = Server::spawn(&project, port, Some("save-before-rename"));
    let body = r#"{"mentions": [], "mark_complete": false}"#;
    let response = put(port, "/api/notes/a/annotations", body)?;
    let status = server.wait_exit(Duration::from_secs(15)).ok_or("server survived the failpoint")?;
    ensure!(!status.success(), "server exited cleanly");
    ensure!(!response.starts_with("HTTP/1.1 200"), "save was acknowledged before the crash");

    ensure!(fs::read(&ann).unwrap() == committed, "committed .ann changed");
    let reopened = Project::open(&project).map_err(|e| e.to_string())?;
    ensure!(snapshot(&reopened) == before, "reopened project differs from the last committed revision");
    drop(reopened);

    // Same request without the failpoint goes through, so the crash above
    // really was mid-save.
    let port = free_port();
    let _server = Server::spawn(&project, port, None);
    let response = put(port, "/api/notes/a/annotations", body)?;
    ensure!(response.starts_with("HTTP/1.1 200"), "follow-up save failed: {response}");
    Ok(format!("aborted mid-save, revision {} intact; next save committed normally", before[0].0.revision))
}

const LEXICON: &str = "chf\tHeart Failure\tDiagnosis\t\tcongestive heart failure\nbnp\tBNP\tLab\n";

fn reopen_round_trip() -> Outcome {
    const SEQUENCES: u64 = 40;
    let mut ops_run = 0;
    for seed in 0..SEQUENCES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tmp = tempfile::tempdir().unwrap();
        let notes: Vec<_> = NOTES.iter().map(|(id, text)| ingest_note(text.as_bytes(), *id).unwrap()).collect();
        let corpus = Corpus::new(notes).unwrap();
        let source = PreAnnotationSource::Pipeline(NegationLexicon::default());
        let mut p = Project::init(tmp.path(), &corpus, LEXICON, &source, false).map_err(|e| e.to_string())?;
        for _ in 0..rng.random_range(1..20) {
            let id = NOTES[rng.random_range(0..NOTES.len())].0;
            match rng.random_range(0..4) {
                0 | 1 => {
                    let mentions = if id == "a" && rng.random_bool(0.5) { vec![chf()] } else { vec![] };
                    p.save_annotations(id, mentions, None, rng.random_bool(0.6), "u").map_err(|e| e.to_string())?;
                }
                2 => match p.recheck(id, "u") {
                    Ok(_) | Err(StoreError::NotComplete(_)) => {}
                    Err(e) => return Err(e.to_string()),
                },
                _ => {
                    let before = snapshot(&p);
                    p = Project::open(tmp.path()).map_err(|e| e.to_string())?;
                    ensure!(snapshot(&p) == before, "seed {seed}: reopen changed statuses or mentions");
                }
            }
            let listing = p.list_notes(None);
            let complete = p.note_ids().filter(|id| p.status(id).unwrap().state == NoteState::Complete).count();
            ensure!(listing.complete_count + listing.incomplete_count == listing.total, "seed {seed}: counts do not add up");
            ensure!(listing.complete_count == complete && listing.total == NOTES.len(), "seed {seed}: wrong counts");
            ops_run += 1;
        }
        let before = snapshot(&p);
        drop(p);
        ensure!(snapshot(&Project::open(tmp.path()).unwrap()) == before, "seed {seed}: final reopen differs");
    }
    Ok(format!("{SEQUENCES} random sessions ({ops_run} ops): reopen reproduces state, complete+incomplete=total"))
}

// ---- end to end ------------------------------------------------------------

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let path = e.unwrap().path();
            (path.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&path).unwrap())
        })
        .collect()
}

fn end_to_end() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let notes = write_corpus(tmp.path());
    let (first, second) = (tmp.path().join("run1"), tmp.path().join("run2"));
    for out in [&first, &second] {
        let o = clean(&["preannotate", "--corpus", s(&notes), "--out", s(out)]);
        ensure!(o.status.success(), "preannotate failed: {}", String::from_utf8_lossy(&o.stderr));
    }
    let (a, b) = (tree(&first), tree(&second));
    ensure!(a.len() == NOTES.len(), "expected {} .ann files, got {}", NOTES.len(), a.len());
    ensure!(a == b, "two runs produced different .ann trees");

    let o = clean(&["evaluate", "--gold", s(&first), "--pred", s(&second), "--corpus", s(&notes)]);
    ensure!(o.status.success(), "evaluate failed: {}", String::from_utf8_lossy(&o.stderr));
    let out = String::from_utf8_lossy(&o.stdout);
    for level in ["Note", "Sentence"] {
        let row = out.lines().find(|l| l.starts_with(&format!("{level}\t"))).ok_or(format!("no {level} row"))?;
        let f1 = row.split('\t').nth(3).unwrap_or("");
        ensure!(f1.starts_with("1.000 "), "{level} F1 is {f1}");
    }
    Ok(format!("{} .ann files byte-identical across runs; F1 1.000 at note and sentence level", a.len()))
}

fn main() -> ExitCode {
    let criteria: &[Criterion] = &[
        ("metric oracle equivalence", metric_oracle),
        ("binary counting", binary_counting),
        ("ensemble algebra", ensemble_algebra),
        ("standoff round trip", standoff_round_trip),
        ("corpus statistics and split arithmetic", table1_arithmetic),
        ("activity normalization arithmetic", table_a2_arithmetic),
        ("negation suite", negation_suite),
        ("service durability: kill during save", kill_during_save),
        ("service durability: reopen and counts", reopen_round_trip),
        ("end-to-end determinism", end_to_end),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
