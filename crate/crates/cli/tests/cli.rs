use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use clean_core::lexicon::shipped_lexicon_text;
use clean_core::standoff::doc_to_mentions;
use clean_core::{ensemble_merge, ingest_note, parse_ann, Corpus, EnsembleConfig, Lexicon, NegationLexicon, ToolOutput};

fn clean(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clean")).args(args).output().expect("run clean")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const NOTES: &[(&str, &str)] = &[
    ("a", "History: 67M with congestive heart failure.\nBNP 900 pg/mL. No chest pain.\nEF 35%. On furosemide 40 mg b.i.d.\n"),
    ("b", "Kawasaki disease suspected. Fever for 5 days. No rash.\n"),
    ("c", "Follow-up visit. Denies shortness of breath. Pedal edema improved on Lasix.\n"),
];

fn corpus_dir(root: &Path) -> PathBuf {
    let dir = root.join("notes");
    fs::create_dir_all(&dir).unwrap();
    for (id, text) in NOTES {
        fs::write(dir.join(format!("{id}.txt")), text).unwrap();
    }
    dir
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let path = e.unwrap().path();
            (path.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&path).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn preannotate_writes_one_file_per_note_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let notes = corpus_dir(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = clean(&["preannotate", "--corpus", p(&notes), "--out", p(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let first = files(&a);
    assert_eq!(first.iter().map(|f| f.0.as_str()).collect::<Vec<_>>(), ["a.ann", "b.ann", "c.ann"]);
    assert_eq!(first, files(&b));
    let c = String::from_utf8(first[2].1.clone()).unwrap();
    assert!(c.contains("dyspnea") && c.contains("A1\tNegated T"), "{c}");
}

#[test]
fn preannotate_merges_external_tools_like_the_library() {
    let tmp = tempfile::tempdir().unwrap();
    let notes = corpus_dir(tmp.path());
    let tools = tmp.path().join("tools");
    fs::create_dir_all(tools.join("ctakes")).unwrap();
    // "heart failure" sits inside the built-in "congestive heart failure" span;
    // "History" is an extra element the built-in extractor does not find.
    fs::write(tools.join("ctakes/a.ann"), "T1\tchf 29 42\theart failure\nT2\tfatigue 0 7\tHistory\n").unwrap();
    let out = tmp.path().join("out");
    let o = clean(&["preannotate", "--corpus", p(&notes), "--tools", p(&tools), "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let lexicon = Lexicon::parse(&shipped_lexicon_text()).unwrap();
    let note = ingest_note(NOTES[0].1.as_bytes(), "a").unwrap();
    let builtin = clean_core::annotate(&note, &lexicon, NegationLexicon::shipped()).unwrap();
    let (ext, _) = clean_core::import_tool_output(&fs::read_to_string(tools.join("ctakes/a.ann")).unwrap(), &note, "ctakes", &lexicon).unwrap();
    let expected = ensemble_merge(&[ToolOutput::new("rock", "a", builtin.mentions), ext], &EnsembleConfig::default()).unwrap();
    let got = doc_to_mentions(&parse_ann(&fs::read_to_string(out.join("a.ann")).unwrap()).unwrap(), &note, &lexicon, "").unwrap();
    let key = |m: &clean_core::Mention| (m.element_id.clone(), m.start, m.end, m.assertion);
    assert_eq!(got.iter().map(key).collect::<Vec<_>>(), expected.mentions.iter().map(key).collect::<Vec<_>>());
    assert!(got.iter().any(|m| m.element_id == "chf" && (m.start, m.end) == (18, 42)));
    assert!(got.iter().any(|m| m.element_id == "fatigue"));

    let i = clean(&["preannotate", "--corpus", p(&notes), "--tools", p(&tools), "--method", "intersection", "--out", p(&out)]);
    assert!(i.status.success());
    let a = fs::read_to_string(out.join("a.ann")).unwrap();
    assert_eq!(a, "T1\tchf 18 42\tcongestive heart failure\n");
}

#[test]
fn evaluate_reports_perfect_and_empty_predictions() {
    let tmp = tempfile::tempdir().unwrap();
    let notes = corpus_dir(tmp.path());
    let gold = tmp.path().join("gold");
    assert!(clean(&["preannotate", "--corpus", p(&notes), "--out", p(&gold)]).status.success());

    let o = clean(&["evaluate", "--gold", p(&gold), "--pred", p(&gold), "--corpus", p(&notes)]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("Note\t1.000 (1.000-1.000)\t1.000 (1.000-1.000)\t1.000 (1.000-1.000)"), "{text}");
    assert!(text.contains("Sentence\t1.000 (1.000-1.000)\t1.000 (1.000-1.000)\t1.000 (1.000-1.000)"), "{text}");

    let empty = tmp.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    let json = tmp.path().join("report.json");
    let o = clean(&["evaluate", "--gold", p(&gold), "--pred", p(&empty), "--corpus", p(&notes), "--level", "note", "--json", p(&json)]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("Note\t0.000 (0.000-0.000)\t0.000 (0.000-0.000)"));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no prediction"));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(&json).unwrap()).unwrap();
    assert_eq!(report[0]["recall"]["mean"], 0.0);
}

#[test]
fn evaluate_rejects_broken_annotations() {
    let tmp = tempfile::tempdir().unwrap();
    let notes = corpus_dir(tmp.path());
    let gold = tmp.path().join("gold");
    fs::create_dir_all(&gold).unwrap();
    fs::write(gold.join("a.ann"), "T1\tchf 18 42\twrong text\n").unwrap();
    let o = clean(&["evaluate", "--gold", p(&gold), "--pred", p(&gold), "--corpus", p(&notes)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("a.ann"));
    fs::write(gold.join("a.ann"), "R1\tRel Arg1:T1 Arg2:T2\n").unwrap();
    let o = clean(&["evaluate", "--gold", p(&gold), "--pred", p(&gold), "--corpus", p(&notes)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn split_and_stats() {
    let tmp = tempfile::tempdir().unwrap();
    let notes = tmp.path().join("notes");
    fs::create_dir_all(&notes).unwrap();
    let mut strata = String::new();
    for i in 0..84 {
        fs::write(notes.join(format!("n{i:02}.txt")), "word ".repeat(10 + i)).unwrap();
        strata.push_str(&format!("n{i:02}\t{}\n", if i < 52 { "a" } else { "b" }));
    }
    let strata_path = tmp.path().join("strata.tsv");
    fs::write(&strata_path, strata).unwrap();
    let run = |seed: &str| clean(&["split", "--corpus", p(&notes), "--strata", p(&strata_path), "--seed", seed]);
    let manifest = stdout(&run("42"));
    assert_eq!(manifest, stdout(&run("42")));
    assert!(manifest.starts_with("# seed=42 k=2\n"));
    let zeros = manifest.lines().filter(|l| l.ends_with("\t0")).count();
    assert_eq!(zeros, 42);

    let manifest_path = tmp.path().join("manifest.tsv");
    fs::write(&manifest_path, &manifest).unwrap();
    let o = clean(&["stats", "--corpus", p(&notes), "--manifest", p(&manifest_path)]);
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "set\tnotes\ttotal_words\tmean_words\tsd_words");
    assert!(lines[1].starts_with("all\t84\t4326\t51.5\t"), "{text}");
    assert!(lines[2].starts_with("0\t42\t") && lines[3].starts_with("1\t42\t"));

    let o = clean(&["split", "--corpus", p(&notes), "--strata", p(&notes.join("n00.txt"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn stats_with_query_filter() {
    let tmp = tempfile::tempdir().unwrap();
    let notes = corpus_dir(tmp.path());
    let o = clean(&["stats", "--corpus", p(&notes), "--query", "\"heart failure\" OR Kawasaki"]);
    assert!(stdout(&o).contains("all\t2\t"), "{}", stdout(&o));
    let bad = clean(&["stats", "--corpus", p(&notes), "--query", "(heart"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn init_and_serve_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let notes = corpus_dir(tmp.path());
    let project = tmp.path().join("project");
    let o = clean(&["init", "--project", p(&project), "--corpus", p(&notes)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("3 notes"));
    assert_eq!(clean(&["init", "--project", p(&project), "--corpus", p(&notes)]).status.code(), Some(2));
    assert!(clean(&["init", "--project", p(&project), "--corpus", p(&notes), "--force"]).status.success());

    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port().to_string();
    let o = clean(&["serve", "--project", p(&project), "--port", &port]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("already in use"));

    let o = clean(&["serve", "--project", p(&notes), "--port", &port]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn init_from_pre_annotation_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let notes = corpus_dir(tmp.path());
    let pre = tmp.path().join("pre");
    fs::create_dir_all(&pre).unwrap();
    fs::write(pre.join("b.ann"), "T1\tkawasaki_disease 0 16\tKawasaki disease\n").unwrap();
    let project = tmp.path().join("project");
    let o = clean(&["init", "--project", p(&project), "--corpus", p(&notes), "--pre", p(&pre)]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("1 pre-annotations"));
    let corpus = Corpus::load_dir(&project.join("notes")).unwrap();
    assert_eq!(corpus.len(), 3);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(clean(&["evaluate"]).status.code(), Some(2));
    assert_eq!(clean(&["preannotate", "--corpus", "/nonexistent", "--out", "/tmp/x"]).status.code(), Some(2));
    assert_eq!(clean(&["preannotate", "--corpus", ".", "--out", "/tmp/x", "--method", "vote:0"]).status.code(), Some(2));
}
