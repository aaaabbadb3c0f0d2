//! Corpus input for the training commands: either a manifest, fingerprinted
//! on the fly, or a directory written by `ingest`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lingan::corpus::{self, SchemeKind, SymbolSequence};
use lingan::fingerprint::build_corpus;
use lingan::FingerprintSet;
use serde::{Deserialize, Serialize};

pub const INGEST_RECORD: &str = "corpus.json";
pub const FINGERPRINTS: &str = "fingerprints.json";
pub const SEQUENCES: &str = "sequences.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageInfo {
    pub id: String,
    pub name: String,
    pub scheme: SchemeKind,
    pub source: String,
    /// Non-space glyphs.
    pub size_ns: usize,
    /// Glyphs including spaces.
    pub size_sp: usize,
    /// SHA-256 of the text.
    pub digest: String,
    pub symbols: usize,
    pub truncated: usize,
}

/// Everything `ingest` records about a corpus besides the tiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestRecord {
    pub tool_version: String,
    pub manifest: PathBuf,
    pub corpus_digest: String,
    /// Divisor fixed by the manifest, if any.
    pub pinned_divisor: Option<f64>,
    /// Divisor actually used.
    pub normalization_divisor: f64,
    pub languages: Vec<LanguageInfo>,
}

/// A corpus ready for training.
pub struct Loaded {
    pub record: IngestRecord,
    pub sequences: Vec<SymbolSequence>,
    pub fingerprints: Vec<FingerprintSet>,
}

impl Loaded {
    pub fn ids(&self) -> Vec<String> {
        self.fingerprints.iter().map(|f| f.language_id.clone()).collect()
    }

    /// Fingerprints of the corpus without `language`, rebuilt so that the
    /// shared divisor reflects only the remaining texts.
    pub fn without(&self, language: &str) -> Result<Vec<FingerprintSet>> {
        let seqs: Vec<SymbolSequence> = self.sequences.iter().filter(|s| s.language_id != language).cloned().collect();
        Ok(build_corpus(&seqs, self.record.pinned_divisor)?)
    }
}

/// Fingerprints a manifest in memory.
pub fn from_manifest(path: &Path) -> Result<Loaded> {
    let corpus = corpus::load_manifest(path).with_context(|| format!("loading corpus from {}", path.display()))?;
    let sequences = lingan::digitize_corpus(&corpus)?;
    let fingerprints: Vec<FingerprintSet> = build_corpus(&sequences, corpus.normalization_divisor)?;
    let languages = corpus
        .samples
        .iter()
        .zip(&sequences)
        .zip(&fingerprints)
        .map(|((s, q), f)| LanguageInfo {
            id: s.id.clone(),
            name: s.name.clone(),
            scheme: s.kind,
            source: s.source.clone(),
            size_ns: s.size_ns,
            size_sp: s.size_sp,
            digest: s.digest.clone(),
            symbols: q.len(),
            truncated: f.truncated,
        })
        .collect();
    let manifest = std::fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf());
    let record = IngestRecord {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        manifest,
        corpus_digest: corpus.digest(),
        pinned_divisor: corpus.normalization_divisor,
        normalization_divisor: fingerprints.first().map(|f| f.normalization_divisor).unwrap_or(f64::NAN),
        languages,
    };
    Ok(Loaded { record, sequences, fingerprints })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Reads a directory written by `ingest`.
pub fn from_ingested(dir: &Path) -> Result<Loaded> {
    let record: IngestRecord = read_json(&dir.join(INGEST_RECORD))?;
    let sequences: Vec<SymbolSequence> = read_json(&dir.join(SEQUENCES))?;
    let fingerprints: Vec<FingerprintSet> = read_json(&dir.join(FINGERPRINTS))?;
    if fingerprints.len() != record.languages.len() || sequences.len() != record.languages.len() {
        bail!("{} is inconsistent: language counts differ between files", dir.display());
    }
    Ok(Loaded { record, sequences, fingerprints })
}

/// A manifest file or an ingested directory.
pub fn load(path: &Path) -> Result<Loaded> {
    if path.is_dir() {
        from_ingested(path)
    } else {
        from_manifest(path)
    }
}
