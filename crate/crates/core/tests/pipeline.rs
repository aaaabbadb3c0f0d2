//! End-to-end runs on small synthetic corpora at a handful of epochs.

mod common;

use common::tiny_config;
use lingan::fingerprint::FingerprintSet;
use lingan::protocol::{all_pairs, compare_pair, self_comparison, CompareConfig, Metric};
use lingan::report::{matrix_csv, parse_matrix_csv};
use lingan::{fingerprints_from_manifest, Real};
use lingan_fixtures::{max_codepoint, write_corpus, Entry, Language};

fn entries(langs: &[Language]) -> Vec<Entry> {
    langs.iter().map(|&language| Entry { language, size: 3000 }).collect()
}

fn corpus(dir: &std::path::Path, langs: &[Language], divisor: Option<f64>) -> Vec<FingerprintSet<Real>> {
    let manifest = write_corpus(dir, &entries(langs), 11, divisor).unwrap();
    fingerprints_from_manifest(&manifest).unwrap().1
}

#[test]
fn self_comparison_is_exactly_zero() {
    let dir = tempfile::tempdir().unwrap();
    let fps = corpus(dir.path(), &[Language::English, Language::Luwian], None);
    for seed in 0..3 {
        let run = self_comparison("luwian", &fps, &CompareConfig::new(tiny_config(3, seed))).unwrap();
        let r = run.result;
        assert_eq!((r.xi, r.nu, r.d1, r.d2, r.d1_m, r.d2_m), (0.0, 0.0, 0.0, 0.0, 0.0, 0.0), "seed {seed}");
    }
}

#[test]
fn results_ignore_corpus_order_and_unrelated_languages() {
    let pinned = Some(max_codepoint() as f64);
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let base = corpus(d1.path(), &[Language::English, Language::Tagalog], pinned);
    let wider = corpus(d2.path(), &[Language::Hurrian, Language::Tagalog, Language::Babylonian, Language::English], pinned);
    let config = CompareConfig::new(tiny_config(4, 9));
    let a = compare_pair("english", "tagalog", &base, &config).unwrap().result;
    let b = compare_pair("english", "tagalog", &wider, &config).unwrap().result;
    let c = compare_pair("tagalog", "english", &wider, &config).unwrap().result;
    assert_eq!(a, b);
    assert_eq!(a, c.swapped());
}

#[test]
fn all_pairs_round_trips_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    let fps = corpus(dir.path(), &[Language::English, Language::Spanish, Language::CyproMinoan], None);
    let config = CompareConfig::new(tiny_config(2, 5));
    let serial = all_pairs(&fps, &config, 1, &|_| {}).unwrap();
    let parallel = all_pairs(&fps, &config, 3, &|_| {}).unwrap();
    assert!(serial.is_complete());
    assert_eq!(serial.matrix, parallel.matrix);
    assert_eq!(serial.matrix.entries.len(), 3);
    let text = matrix_csv(&serial.matrix, 5);
    let (parsed, seed) = parse_matrix_csv(&text).unwrap();
    assert_eq!((parsed, seed), (serial.matrix.clone(), 5));
    assert!(serial.matrix.max_distance(Metric::D1) > 0.0);
}

#[test]
fn single_precision_pipeline_runs() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_corpus(dir.path(), &entries(&[Language::English, Language::Hurrian]), 3, None).unwrap();
    let (_, fps) = fingerprints_from_manifest::<f32>(&manifest).unwrap();
    let run = compare_pair("english", "hurrian", &fps, &CompareConfig::new(tiny_config(3, 1))).unwrap();
    assert!(run.result.d1.is_finite() && run.result.d1 > 0.0);
}
