//! The `lingan` binary against small synthetic corpora.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lingan_fixtures::{write_corpus, Entry, Language};

const FAST: [&str; 6] = ["--epochs", "6", "--emit-window", "6", "--emit-stride", "2"];

fn lingan(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lingan")).env("LINGAN_ARTIFACT_ROOT", root).args(args).output().unwrap()
}

fn ok(out: &Output) -> PathBuf {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    PathBuf::from(String::from_utf8_lossy(&out.stdout).lines().last().expect("output directory").trim())
}

fn corpus(dir: &Path, langs: &[Language]) -> PathBuf {
    let entries: Vec<Entry> = langs.iter().map(|&language| Entry { language, size: 2500 }).collect();
    write_corpus(dir, &entries, 4, None).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn ingest_is_idempotent_and_complete() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = corpus(&tmp.path().join("c"), &Language::ALL);
    let root = tmp.path().join("store");
    let dir = ok(&lingan(&root, &["ingest", s(&manifest)]));
    for l in Language::ALL {
        let lang = dir.join(l.id());
        assert!(lang.join("tile_0.pgm").is_file() && lang.join("tile_3.csv").is_file(), "{}", l.id());
    }
    let before = std::fs::read(dir.join("manifest.json")).unwrap();
    assert_eq!(ok(&lingan(&root, &["ingest", s(&manifest)])), dir);
    assert_eq!(std::fs::read(dir.join("manifest.json")).unwrap(), before);
}

#[test]
fn corrupted_text_leaves_no_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = corpus(&tmp.path().join("c"), &[Language::English, Language::Spanish]);
    std::fs::write(tmp.path().join("c/texts/spanish.txt"), [0x66, 0xff, 0xfe, 0x20, 0x61]).unwrap();
    let root = tmp.path().join("store");
    let out = lingan(&root, &["ingest", s(&manifest)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("spanish"), "{}", String::from_utf8_lossy(&out.stderr));
    let leftovers = std::fs::read_dir(root.join("corpora")).map(|d| d.count()).unwrap_or(0);
    assert_eq!(leftovers, 0);
}

#[test]
fn compare_is_reproducible_and_replayable() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = corpus(&tmp.path().join("c"), &[Language::CyproMinoan, Language::Babylonian, Language::English]);
    let mut args = vec!["compare", s(&manifest), "--pair", "minoan", "babylonian", "--seed", "7"];
    args.extend(FAST);
    let first = ok(&lingan(&tmp.path().join("a"), &args));
    let second = ok(&lingan(&tmp.path().join("b"), &args));
    let csv = std::fs::read(first.join("matrix.csv")).unwrap();
    assert_eq!(csv, std::fs::read(second.join("matrix.csv")).unwrap());
    assert_eq!(String::from_utf8_lossy(&csv).lines().count(), 2);
    // the same store returns the existing run untouched
    assert_eq!(ok(&lingan(&tmp.path().join("a"), &args)), first);
    let out = tmp.path().join("replayed");
    ok(&lingan(&tmp.path().join("a"), &["replay", s(&first), "--out", s(&out)]));
    assert_eq!(csv, std::fs::read(out.join("matrix.csv")).unwrap());
}

#[test]
fn compare_rejects_self_comparison_and_missing_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = corpus(&tmp.path().join("c"), &[Language::English, Language::Spanish]);
    let root = tmp.path().join("store");
    let out = lingan(&root, &["compare", s(&manifest), "--pair", "english", "english", "--seed", "1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("is a test, not a run"));
    let out = lingan(&root, &["compare", s(&manifest), "--pair", "english", "spanish"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
    assert!(!root.join("runs").exists());
}

#[test]
fn all_pairs_then_report() {
    let tmp = tempfile::tempdir().unwrap();
    let langs = [Language::English, Language::Spanish, Language::Tagalog, Language::Hurrian];
    let manifest = corpus(&tmp.path().join("c"), &langs);
    let root = tmp.path().join("store");
    let ingested = ok(&lingan(&root, &["ingest", s(&manifest)]));
    let mut args = vec!["compare", s(&ingested), "--all", "--seed", "3", "--jobs", "4"];
    args.extend(FAST);
    let run = ok(&lingan(&root, &args));
    let csv = std::fs::read_to_string(run.join("matrix.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 6);
    let trials = std::fs::read_to_string(run.join("trials.csv")).unwrap();
    assert_eq!(trials.lines().count(), 1 + 12);

    // fingerprinting on the fly gives the same numbers as the ingested corpus
    let mut direct = vec!["compare", s(&manifest), "--all", "--seed", "3"];
    direct.extend(FAST);
    let direct = ok(&lingan(&tmp.path().join("other"), &direct));
    assert_eq!(csv, std::fs::read_to_string(direct.join("matrix.csv")).unwrap());

    let report = ok(&lingan(&root, &["report", s(&run.join("matrix.csv"))]));
    for l in &langs {
        for geometry in ["euclidean", "manhattan"] {
            let svg = std::fs::read_to_string(report.join(format!("radar/{}_{geometry}.svg", l.id()))).unwrap();
            assert!(svg.starts_with("<?xml") && svg.contains("<polygon"));
        }
    }
    for f in ["table_euclidean.md", "table_euclidean.csv", "table_manhattan.md", "table_manhattan.csv"] {
        assert!(report.join(f).is_file(), "{f}");
    }

    let partial = tmp.path().join("partial.csv");
    let mut lines: Vec<&str> = csv.lines().collect();
    lines.pop();
    std::fs::write(&partial, lines.join("\n")).unwrap();
    assert!(!lingan(&root, &["report", s(&partial)]).status.success());
}

#[test]
fn robustness_rejects_unknown_filter() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = corpus(&tmp.path().join("c"), &[Language::English, Language::Spanish]);
    let out = lingan(&tmp.path().join("store"), &["robustness", "filters", s(&manifest), "--seed", "1", "--filter", "median"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown filter"));
}

#[test]
fn explicit_output_directory_is_never_overwritten() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = corpus(&tmp.path().join("c"), &[Language::English, Language::Spanish]);
    let out = tmp.path().join("out");
    std::fs::create_dir_all(&out).unwrap();
    std::fs::write(out.join("keep.txt"), "x").unwrap();
    let mut args = vec!["compare", s(&manifest), "--pair", "english", "spanish", "--seed", "1", "--out", s(&out)];
    args.extend(FAST);
    let res = lingan(&tmp.path().join("store"), &args);
    assert!(!res.status.success());
    assert_eq!(std::fs::read_dir(&out).unwrap().count(), 1);
}
