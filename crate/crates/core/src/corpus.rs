//! Corpus ingestion: manifest parsing, sample loading and glyph digitization.
//!
//! A manifest is a TOML file with one `[[language]]` table per sample:
//!
//! ```toml
//! [[language]]
//! id = "english"
//! name = "English"
//! path = "english.txt"
//! scheme = "codepoint"        # or "sign-number"
//! source = "Draft manuscript"
//! ```
//!
//! Relative paths are resolved against the manifest's directory. An optional
//! top-level `normalization_divisor` pins the fingerprint scale.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Default ceiling on raw symbol values.
pub const DEFAULT_VALUE_CAP: u32 = 65_535;

/// Value assigned to a word divider by the sign-number scheme under the keep policy.
pub const SIGN_DIVIDER: u32 = 0;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid manifest: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("{path}: file is not valid UTF-8 (first bad byte at offset {offset})")]
    Undecodable { path: PathBuf, offset: usize },
    #[error("{path}: empty sample")]
    EmptySample { path: PathBuf },
    #[error("duplicate language id `{0}`")]
    DuplicateId(String),
    #[error("language `{language}`: glyph {glyph:?} has value {value} above cap {cap}")]
    AboveCap { language: String, glyph: String, value: u64, cap: u32 },
    #[error("language `{language}`: token {token:?} at line {line} is not a sign number")]
    BadToken { language: String, token: String, line: usize },
    #[error("language `{language}`: sign number 0 is reserved for word dividers under the keep policy (line {line})")]
    ReservedSign { language: String, line: usize },
    #[error("language `{language}` uses the {sample} scheme but {requested} was requested")]
    SchemeMismatch { language: String, sample: SchemeKind, requested: SchemeKind },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    /// Every character becomes its Unicode code point.
    Codepoint,
    /// Whitespace-separated words of `-`-joined non-negative sign numbers.
    SignNumber,
}

impl std::fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SchemeKind::Codepoint => "codepoint",
            SchemeKind::SignNumber => "sign-number",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpacePolicy {
    Keep,
    #[default]
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransliterationScheme {
    pub kind: SchemeKind,
    pub space_policy: SpacePolicy,
    pub value_cap: u32,
}

impl TransliterationScheme {
    pub fn new(kind: SchemeKind) -> Self {
        TransliterationScheme { kind, space_policy: SpacePolicy::Drop, value_cap: DEFAULT_VALUE_CAP }
    }

    pub fn with_space_policy(mut self, policy: SpacePolicy) -> Self {
        self.space_policy = policy;
        self
    }

    pub fn with_value_cap(mut self, cap: u32) -> Self {
        self.value_cap = cap;
        self
    }
}

/// One transliterated text together with its provenance and size counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageSample {
    pub id: String,
    pub name: String,
    pub raw_text: String,
    pub source: String,
    pub kind: SchemeKind,
    /// Non-space glyphs.
    pub size_ns: usize,
    /// Glyphs including spaces.
    pub size_sp: usize,
    /// SHA-256 of the file bytes, hex.
    pub digest: String,
}

impl LanguageSample {
    /// Builds a sample from in-memory text, computing the size counts.
    pub fn from_text(
        id: impl Into<String>,
        name: impl Into<String>,
        kind: SchemeKind,
        raw_text: impl Into<String>,
        source: impl Into<String>,
    ) -> Result<Self, CorpusError> {
        let id = id.into();
        let raw_text = raw_text.into();
        let glyphs = split_glyphs(&id, kind, &raw_text)?;
        if glyphs.iter().all(|g| matches!(g, Glyph::Space(_))) {
            return Err(CorpusError::EmptySample { path: PathBuf::from(&id) });
        }
        let size_sp = glyphs.len();
        let size_ns = glyphs.iter().filter(|g| !matches!(g, Glyph::Space(_))).count();
        let digest = hex::encode(Sha256::digest(raw_text.as_bytes()));
        Ok(LanguageSample { id, name: name.into(), raw_text, source: source.into(), kind, size_ns, size_sp, digest })
    }
}

/// The digitized form of a sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolSequence {
    pub language_id: String,
    pub values: Vec<u32>,
}

impl SymbolSequence {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestFile {
    #[serde(default)]
    normalization_divisor: Option<f64>,
    #[serde(default)]
    language: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub name: String,
    pub path: PathBuf,
    pub scheme: SchemeKind,
    #[serde(default)]
    pub source: String,
}

/// A loaded manifest: the samples in manifest order plus corpus-level settings.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub samples: Vec<LanguageSample>,
    pub normalization_divisor: Option<f64>,
}

impl Corpus {
    /// Combined digest over the per-file digests and ids, order-sensitive.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for s in &self.samples {
            h.update(s.id.as_bytes());
            h.update([0u8]);
            h.update(s.kind.to_string().as_bytes());
            h.update([0u8]);
            h.update(s.digest.as_bytes());
            h.update([0u8]);
        }
        if let Some(d) = self.normalization_divisor {
            h.update(d.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Reads a manifest and every file it references.
pub fn load_corpus(manifest_path: &Path) -> Result<Vec<LanguageSample>, CorpusError> {
    Ok(load_manifest(manifest_path)?.samples)
}

/// Like [`load_corpus`] but keeps corpus-level manifest settings.
pub fn load_manifest(manifest_path: &Path) -> Result<Corpus, CorpusError> {
    let text = std::fs::read_to_string(manifest_path)
        .map_err(|source| CorpusError::Io { path: manifest_path.to_path_buf(), source })?;
    let manifest: ManifestFile = toml::from_str(&text).map_err(|e| CorpusError::Manifest {
        path: manifest_path.to_path_buf(),
        message: e.to_string(),
    })?;
    if let Some(d) = manifest.normalization_divisor {
        if !(d.is_finite() && d > 0.0) {
            return Err(CorpusError::Manifest {
                path: manifest_path.to_path_buf(),
                message: format!("normalization_divisor must be positive, got {d}"),
            });
        }
    }
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut seen = HashSet::new();
    let mut samples = Vec::with_capacity(manifest.language.len());
    for entry in manifest.language {
        if !seen.insert(entry.id.clone()) {
            return Err(CorpusError::DuplicateId(entry.id));
        }
        samples.push(load_entry(base, &entry)?);
    }
    Ok(Corpus { samples, normalization_divisor: manifest.normalization_divisor })
}

fn load_entry(base: &Path, entry: &ManifestEntry) -> Result<LanguageSample, CorpusError> {
    let path = if entry.path.is_absolute() { entry.path.clone() } else { base.join(&entry.path) };
    let bytes = std::fs::read(&path).map_err(|source| CorpusError::Io { path: path.clone(), source })?;
    if bytes.is_empty() {
        return Err(CorpusError::EmptySample { path });
    }
    let text = String::from_utf8(bytes)
        .map_err(|e| CorpusError::Undecodable { path: path.clone(), offset: e.utf8_error().valid_up_to() })?;
    LanguageSample::from_text(entry.id.clone(), entry.name.clone(), entry.scheme, text, entry.source.clone())
        .map_err(|e| match e {
            CorpusError::EmptySample { .. } => CorpusError::EmptySample { path },
            other => other,
        })
}

#[derive(Debug, Clone, PartialEq)]
enum Glyph<'a> {
    Space(char),
    Char(char),
    Sign { token: &'a str, value: u64, line: usize },
}

fn split_glyphs<'a>(language: &str, kind: SchemeKind, text: &'a str) -> Result<Vec<Glyph<'a>>, CorpusError> {
    match kind {
        SchemeKind::Codepoint => Ok(text
            .chars()
            .map(|c| if c.is_whitespace() { Glyph::Space(c) } else { Glyph::Char(c) })
            .collect()),
        SchemeKind::SignNumber => {
            let mut out = Vec::new();
            for (lineno, line) in text.lines().enumerate() {
                for word in line.split_whitespace() {
                    if !out.is_empty() {
                        out.push(Glyph::Space(' '));
                    }
                    for token in word.split('-') {
                        let value = parse_sign(token).ok_or_else(|| CorpusError::BadToken {
                            language: language.to_string(),
                            token: token.to_string(),
                            line: lineno + 1,
                        })?;
                        out.push(Glyph::Sign { token, value, line: lineno + 1 });
                    }
                }
            }
            Ok(out)
        }
    }
}

fn parse_sign(token: &str) -> Option<u64> {
    if token.is_empty() || !token.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    token.parse().ok()
}

/// Maps a sample's glyphs to integers under `scheme`.
pub fn digitize(sample: &LanguageSample, scheme: &TransliterationScheme) -> Result<SymbolSequence, CorpusError> {
    if sample.kind != scheme.kind {
        return Err(CorpusError::SchemeMismatch {
            language: sample.id.clone(),
            sample: sample.kind,
            requested: scheme.kind,
        });
    }
    let keep = scheme.space_policy == SpacePolicy::Keep;
    let mut values = Vec::with_capacity(if keep { sample.size_sp } else { sample.size_ns });
    let above = |glyph: String, value: u64| CorpusError::AboveCap {
        language: sample.id.clone(),
        glyph,
        value,
        cap: scheme.value_cap,
    };
    for glyph in split_glyphs(&sample.id, sample.kind, &sample.raw_text)? {
        let value = match glyph {
            Glyph::Space(_) if !keep => continue,
            Glyph::Space(c) => match scheme.kind {
                SchemeKind::Codepoint => c as u64,
                SchemeKind::SignNumber => SIGN_DIVIDER as u64,
            },
            Glyph::Char(c) => c as u64,
            Glyph::Sign { value, line, .. } => {
                if keep && value == SIGN_DIVIDER as u64 {
                    return Err(CorpusError::ReservedSign { language: sample.id.clone(), line });
                }
                value
            }
        };
        if value > scheme.value_cap as u64 {
            let shown = match glyph {
                Glyph::Sign { token, .. } => token.to_string(),
                Glyph::Char(c) | Glyph::Space(c) => c.to_string(),
            };
            return Err(above(shown, value));
        }
        values.push(value as u32);
    }
    Ok(SymbolSequence { language_id: sample.id.clone(), values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn sample(kind: SchemeKind, text: &str) -> LanguageSample {
        LanguageSample::from_text("x", "X", kind, text, "test").unwrap()
    }

    #[test]
    fn codepoint_digitization() {
        let s = sample(SchemeKind::Codepoint, "ab");
        let seq = digitize(&s, &TransliterationScheme::new(SchemeKind::Codepoint)).unwrap();
        assert_eq!(seq.values, vec![97, 98]);
    }

    #[test]
    fn sign_number_digitization() {
        let s = sample(SchemeKind::SignNumber, "12 7 104");
        let seq = digitize(&s, &TransliterationScheme::new(SchemeKind::SignNumber)).unwrap();
        assert_eq!(seq.values, vec![12, 7, 104]);
        assert_eq!((s.size_ns, s.size_sp), (3, 5));
        let kept = digitize(
            &s,
            &TransliterationScheme::new(SchemeKind::SignNumber).with_space_policy(SpacePolicy::Keep),
        )
        .unwrap();
        assert_eq!(kept.values, vec![12, 0, 7, 0, 104]);
    }

    #[test]
    fn sign_words_join_with_hyphens() {
        let s = sample(SchemeKind::SignNumber, "102-023-005 044\n 8-9");
        assert_eq!(s.size_ns, 6);
        assert_eq!(s.size_sp, 8);
        let seq = digitize(&s, &TransliterationScheme::new(SchemeKind::SignNumber)).unwrap();
        assert_eq!(seq.values, vec![102, 23, 5, 44, 8, 9]);
    }

    #[test]
    fn keep_and_drop_differ_by_space_count() {
        let text = "una  casa\tgrande\n";
        let s = sample(SchemeKind::Codepoint, text);
        let drop = digitize(&s, &TransliterationScheme::new(SchemeKind::Codepoint)).unwrap();
        let keep = digitize(
            &s,
            &TransliterationScheme::new(SchemeKind::Codepoint).with_space_policy(SpacePolicy::Keep),
        )
        .unwrap();
        let spaces = text.chars().filter(|c| c.is_whitespace()).count();
        assert_eq!(keep.len() - drop.len(), spaces);
        assert_eq!(keep.len(), s.size_sp);
        assert_eq!(drop.len(), s.size_ns);
    }

    #[test]
    fn value_cap_and_bad_tokens() {
        let s = sample(SchemeKind::Codepoint, "aḫ");
        let err = digitize(&s, &TransliterationScheme::new(SchemeKind::Codepoint).with_value_cap(255)).unwrap_err();
        assert!(matches!(err, CorpusError::AboveCap { value: 0x1E2B, .. }));

        let bad = LanguageSample::from_text("cm", "CM", SchemeKind::SignNumber, "12 x7", "");
        assert!(matches!(bad, Err(CorpusError::BadToken { .. })));
        let dangling = LanguageSample::from_text("cm", "CM", SchemeKind::SignNumber, "12--7", "");
        assert!(matches!(dangling, Err(CorpusError::BadToken { .. })));

        let zero = sample(SchemeKind::SignNumber, "0 4");
        let keep = TransliterationScheme::new(SchemeKind::SignNumber).with_space_policy(SpacePolicy::Keep);
        assert!(matches!(digitize(&zero, &keep), Err(CorpusError::ReservedSign { .. })));
        assert_eq!(digitize(&zero, &TransliterationScheme::new(SchemeKind::SignNumber)).unwrap().values, vec![0, 4]);
    }

    #[test]
    fn scheme_mismatch_rejected() {
        let s = sample(SchemeKind::Codepoint, "12 7");
        assert!(matches!(
            digitize(&s, &TransliterationScheme::new(SchemeKind::SignNumber)),
            Err(CorpusError::SchemeMismatch { .. })
        ));
    }

    fn write(dir: &Path, name: &str, bytes: &[u8]) {
        std::fs::File::create(dir.join(name)).unwrap().write_all(bytes).unwrap();
    }

    #[test]
    fn manifest_loading_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "en.txt", b"the cat");
        write(dir.path(), "cm.txt", b"1-2 3");
        write(
            dir.path(),
            "m.toml",
            br#"
[[language]]
id = "en"
name = "English"
path = "en.txt"
scheme = "codepoint"
source = "draft"

[[language]]
id = "cm"
name = "Cypro-Minoan"
path = "cm.txt"
scheme = "sign-number"
"#,
        );
        let samples = load_corpus(&dir.path().join("m.toml")).unwrap();
        assert_eq!(samples.len(), 2);
        assert_eq!((samples[0].size_ns, samples[0].size_sp), (6, 7));
        assert_eq!((samples[1].size_ns, samples[1].size_sp), (3, 4));
        // reloading is deterministic
        assert_eq!(samples, load_corpus(&dir.path().join("m.toml")).unwrap());

        write(dir.path(), "empty.toml", b"");
        assert!(load_corpus(&dir.path().join("empty.toml")).unwrap().is_empty());

        write(dir.path(), "zero.txt", b"");
        write(dir.path(), "z.toml", b"[[language]]\nid='z'\nname='Z'\npath='zero.txt'\nscheme='codepoint'\n");
        let err = load_corpus(&dir.path().join("z.toml")).unwrap_err();
        assert!(err.to_string().contains("empty sample"), "{err}");

        write(
            dir.path(),
            "dup.toml",
            b"[[language]]\nid='en'\nname='A'\npath='en.txt'\nscheme='codepoint'\n[[language]]\nid='en'\nname='B'\npath='en.txt'\nscheme='codepoint'\n",
        );
        assert!(matches!(load_corpus(&dir.path().join("dup.toml")), Err(CorpusError::DuplicateId(_))));

        write(dir.path(), "bad.txt", &[0x61, 0xff, 0x62]);
        write(dir.path(), "b.toml", b"[[language]]\nid='b'\nname='B'\npath='bad.txt'\nscheme='codepoint'\n");
        assert!(matches!(
            load_corpus(&dir.path().join("b.toml")),
            Err(CorpusError::Undecodable { offset: 1, .. })
        ));

        write(dir.path(), "miss.toml", b"[[language]]\nid='m'\nname='M'\npath='nope.txt'\nscheme='codepoint'\n");
        assert!(matches!(load_corpus(&dir.path().join("miss.toml")), Err(CorpusError::Io { .. })));
    }
}
