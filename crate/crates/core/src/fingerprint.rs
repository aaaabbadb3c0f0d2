//! Fingerprints: sequences packed row-major into four normalized 64×64 tiles,
//! plus the smoothing filters used by the filter ablation.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::SymbolSequence;
use crate::scalar::Scalar;

pub const TILE_SIDE: usize = 64;
pub const TILE_CELLS: usize = TILE_SIDE * TILE_SIDE;
pub const TILES_PER_SET: usize = 4;
/// Longest sequence that fits a fingerprint without truncation.
pub const FINGERPRINT_CAPACITY: usize = TILES_PER_SET * TILE_CELLS;

#[derive(Debug, Error)]
pub enum FingerprintError {
    #[error("language `{0}`: empty symbol sequence")]
    EmptySequence(String),
    #[error("normalization divisor must be positive and finite, got {0}")]
    BadDivisor(f64),
    #[error("language `{language}`: value {value} exceeds normalization divisor {divisor}")]
    AboveDivisor { language: String, value: u32, divisor: f64 },
    #[error("tile has {0} cells, expected {TILE_CELLS}")]
    Shape(usize),
    #[error("tile value {value} at cell {cell} outside [0, 1]")]
    Range { cell: usize, value: f64 },
    #[error("tile cell {cell} beyond fill count {fill} is nonzero")]
    Padding { cell: usize, fill: usize },
    #[error("invalid filter: {0}")]
    Filter(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed grid: {message}")]
    Parse { path: PathBuf, message: String },
}

/// A 64×64 grid of values in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar + Serialize + serde::de::DeserializeOwned")]
pub struct Tile<S> {
    pub values: Vec<S>,
    /// Cells `0..fill_count` hold symbols; the rest are zero padding.
    pub fill_count: usize,
    pub language_id: String,
    pub tile_index: u8,
}

impl<S: Scalar> Tile<S> {
    /// Validates shape, range and zero padding.
    pub fn new(values: Vec<S>, fill_count: usize, language_id: impl Into<String>, tile_index: u8) -> Result<Self, FingerprintError> {
        let tile = Tile { values, fill_count, language_id: language_id.into(), tile_index };
        tile.validate()?;
        Ok(tile)
    }

    pub fn zeros(language_id: impl Into<String>, tile_index: u8) -> Self {
        Tile { values: vec![S::zero(); TILE_CELLS], fill_count: 0, language_id: language_id.into(), tile_index }
    }

    /// Builds a tile from generated values; every cell counts as filled.
    pub(crate) fn generated(values: Vec<S>, language_id: &str, tile_index: u8) -> Self {
        debug_assert_eq!(values.len(), TILE_CELLS);
        Tile { values, fill_count: TILE_CELLS, language_id: language_id.to_string(), tile_index }
    }

    pub fn validate(&self) -> Result<(), FingerprintError> {
        if self.values.len() != TILE_CELLS {
            return Err(FingerprintError::Shape(self.values.len()));
        }
        for (cell, &v) in self.values.iter().enumerate() {
            if !(v >= S::zero() && v <= S::one()) {
                return Err(FingerprintError::Range { cell, value: v.as_f64() });
            }
            if cell >= self.fill_count && v != S::zero() {
                return Err(FingerprintError::Padding { cell, fill: self.fill_count });
            }
        }
        Ok(())
    }

    pub fn get(&self, row: usize, col: usize) -> S {
        self.values[row * TILE_SIDE + col]
    }

    pub fn is_empty(&self) -> bool {
        self.fill_count == 0
    }

    pub fn sum(&self) -> S {
        self.values.iter().copied().sum()
    }

    pub fn cast<T: Scalar>(&self) -> Tile<T> {
        Tile {
            values: self.values.iter().map(|v| T::lit(v.as_f64())).collect(),
            fill_count: self.fill_count,
            language_id: self.language_id.clone(),
            tile_index: self.tile_index,
        }
    }

    /// Recomputes `fill_count` as one past the last nonzero cell.
    fn refit_fill(&mut self) {
        self.fill_count = self.values.iter().rposition(|v| *v != S::zero()).map_or(0, |p| p + 1);
    }
}

/// The four tiles of one language sharing a normalization divisor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar + Serialize + serde::de::DeserializeOwned")]
pub struct FingerprintSet<S> {
    pub language_id: String,
    pub tiles: Vec<Tile<S>>,
    pub normalization_divisor: f64,
    /// Symbols dropped because the sequence exceeded four tiles.
    pub truncated: usize,
}

impl<S: Scalar> FingerprintSet<S> {
    pub fn tile(&self, index: usize) -> Option<&Tile<S>> {
        self.tiles.get(index)
    }

    pub fn map_tiles(&self, f: impl Fn(&Tile<S>) -> Tile<S>) -> Self {
        FingerprintSet { tiles: self.tiles.iter().map(f).collect(), ..self.clone() }
    }
}

/// The corpus-wide divisor: the largest symbol value seen, at least 1.
pub fn corpus_divisor<'a>(seqs: impl IntoIterator<Item = &'a SymbolSequence>) -> f64 {
    seqs.into_iter().flat_map(|s| s.values.iter().copied()).max().unwrap_or(0).max(1) as f64
}

/// Packs a sequence row-major into four tiles, scaling by `divisor`.
///
/// Sequences longer than [`FINGERPRINT_CAPACITY`] are truncated with a warning.
pub fn build_fingerprint<S: Scalar>(seq: &SymbolSequence, divisor: f64) -> Result<FingerprintSet<S>, FingerprintError> {
    if seq.is_empty() {
        return Err(FingerprintError::EmptySequence(seq.language_id.clone()));
    }
    if !(divisor.is_finite() && divisor > 0.0) {
        return Err(FingerprintError::BadDivisor(divisor));
    }
    let truncated = seq.len().saturating_sub(FINGERPRINT_CAPACITY);
    if truncated > 0 {
        log::warn!(
            "language `{}`: {} symbols exceed the fingerprint capacity; dropping the last {}",
            seq.language_id,
            seq.len(),
            truncated
        );
    }
    let kept = &seq.values[..seq.len() - truncated];
    let mut tiles = Vec::with_capacity(TILES_PER_SET);
    for index in 0..TILES_PER_SET {
        let start = (index * TILE_CELLS).min(kept.len());
        let end = ((index + 1) * TILE_CELLS).min(kept.len());
        let mut values = vec![S::zero(); TILE_CELLS];
        for (cell, &v) in values.iter_mut().zip(&kept[start..end]) {
            if v as f64 > divisor {
                return Err(FingerprintError::AboveDivisor { language: seq.language_id.clone(), value: v, divisor });
            }
            *cell = S::lit(v as f64 / divisor);
        }
        tiles.push(Tile { values, fill_count: end - start, language_id: seq.language_id.clone(), tile_index: index as u8 });
    }
    Ok(FingerprintSet { language_id: seq.language_id.clone(), tiles, normalization_divisor: divisor, truncated })
}

/// Fingerprints every sequence with one shared divisor (pinned or corpus max).
pub fn build_corpus<S: Scalar>(seqs: &[SymbolSequence], pinned_divisor: Option<f64>) -> Result<Vec<FingerprintSet<S>>, FingerprintError> {
    let divisor = pinned_divisor.unwrap_or_else(|| corpus_divisor(seqs));
    seqs.iter().map(|s| build_fingerprint(s, divisor)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FilterKind {
    None,
    /// Low-pass in the 2-D frequency domain keeping `keep` of the coefficients.
    Fourier { keep: f64 },
    GaussH { sigma: f64 },
    GaussV { sigma: f64 },
    GaussHv { sigma: f64 },
}

impl FilterKind {
    pub fn validate(&self) -> Result<(), FingerprintError> {
        match *self {
            FilterKind::None => Ok(()),
            FilterKind::Fourier { keep } if keep > 0.0 && keep <= 1.0 => Ok(()),
            FilterKind::Fourier { keep } => Err(FingerprintError::Filter(format!("fourier keep {keep} not in (0, 1]"))),
            FilterKind::GaussH { sigma } | FilterKind::GaussV { sigma } | FilterKind::GaussHv { sigma } => {
                if sigma > 0.0 && sigma.is_finite() {
                    Ok(())
                } else {
                    Err(FingerprintError::Filter(format!("sigma {sigma} must be positive")))
                }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FilterKind::None => "none",
            FilterKind::Fourier { .. } => "fourier",
            FilterKind::GaussH { .. } => "gauss_h",
            FilterKind::GaussV { .. } => "gauss_v",
            FilterKind::GaussHv { .. } => "gauss_hv",
        }
    }
}

impl std::fmt::Display for FilterKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FilterKind::None => f.write_str("none"),
            FilterKind::Fourier { keep } => write!(f, "fourier:{keep}"),
            FilterKind::GaussH { sigma } | FilterKind::GaussV { sigma } | FilterKind::GaussHv { sigma } => {
                write!(f, "{}:{sigma}", self.name())
            }
        }
    }
}

impl std::str::FromStr for FilterKind {
    type Err = FingerprintError;

    /// Parses `none`, `fourier[:keep]`, `gauss_h[:sigma]`, `gauss_v[:sigma]`, `gauss_hv[:sigma]`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let num = |default: f64| -> Result<f64, FingerprintError> {
            arg.map_or(Ok(default), |a| a.parse().map_err(|_| FingerprintError::Filter(format!("bad parameter in {s:?}"))))
        };
        let filter = match name {
            "none" if arg.is_none() => FilterKind::None,
            "fourier" => FilterKind::Fourier { keep: num(0.25)? },
            "gauss_h" => FilterKind::GaussH { sigma: num(1.0)? },
            "gauss_v" => FilterKind::GaussV { sigma: num(1.0)? },
            "gauss_hv" => FilterKind::GaussHv { sigma: num(1.0)? },
            _ => return Err(FingerprintError::Filter(format!("unknown filter {s:?}"))),
        };
        filter.validate()?;
        Ok(filter)
    }
}

/// Applies `filter`; output stays in `[0, 1]` and `fill_count` is refit to the
/// last nonzero cell.
pub fn apply_filter<S: Scalar>(tile: &Tile<S>, filter: &FilterKind) -> Result<Tile<S>, FingerprintError> {
    filter.validate()?;
    let mut out = tile.clone();
    match *filter {
        FilterKind::None => return Ok(out),
        FilterKind::GaussH { sigma } => {
            let m = gaussian_operator::<S>(sigma, TILE_SIDE);
            smooth_rows(&mut out.values, &m);
        }
        FilterKind::GaussV { sigma } => {
            let m = gaussian_operator::<S>(sigma, TILE_SIDE);
            smooth_cols(&mut out.values, &m);
        }
        FilterKind::GaussHv { sigma } => {
            let m = gaussian_operator::<S>(sigma, TILE_SIDE);
            smooth_rows(&mut out.values, &m);
            smooth_cols(&mut out.values, &m);
        }
        FilterKind::Fourier { keep } => fourier_lowpass(&mut out.values, keep),
    }
    for v in out.values.iter_mut() {
        *v = v.max(S::zero()).min(S::one());
    }
    out.refit_fill();
    Ok(out)
}

/// Row-stochastic and symmetric smoothing matrix: a discrete Gaussian truncated
/// at 3σ, normalized, with half-sample symmetric reflection at both ends.
fn gaussian_operator<S: Scalar>(sigma: f64, n: usize) -> Vec<S> {
    let radius = (3.0 * sigma).ceil() as isize;
    let weights: Vec<f64> = (-radius..=radius).map(|j| (-(j * j) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = weights.iter().sum();
    let period = 2 * n as isize;
    let mut m = vec![0.0f64; n * n];
    for i in 0..n as isize {
        for (w, j) in weights.iter().zip(-radius..=radius) {
            let mut src = (i + j).rem_euclid(period);
            if src >= n as isize {
                src = period - 1 - src;
            }
            m[i as usize * n + src as usize] += w / total;
        }
    }
    m.into_iter().map(S::lit).collect()
}

fn smooth_rows<S: Scalar>(values: &mut [S], m: &[S]) {
    let mut row_out = vec![S::zero(); TILE_SIDE];
    for row in values.chunks_exact_mut(TILE_SIDE) {
        for (i, o) in row_out.iter_mut().enumerate() {
            *o = m[i * TILE_SIDE..(i + 1) * TILE_SIDE].iter().zip(row.iter()).map(|(&a, &b)| a * b).sum();
        }
        row.copy_from_slice(&row_out);
    }
}

fn smooth_cols<S: Scalar>(values: &mut [S], m: &[S]) {
    let mut col = vec![S::zero(); TILE_SIDE];
    for c in 0..TILE_SIDE {
        for (i, o) in col.iter_mut().enumerate() {
            let weights = &m[i * TILE_SIDE..(i + 1) * TILE_SIDE];
            *o = weights.iter().enumerate().map(|(r, &w)| w * values[r * TILE_SIDE + c]).sum();
        }
        for (r, v) in col.iter().enumerate() {
            values[r * TILE_SIDE + c] = *v;
        }
    }
}

/// Signed frequency of DFT bin `k` on an `n`-point axis.
fn signed_freq(k: usize, n: usize) -> isize {
    if k <= n / 2 {
        k as isize
    } else {
        k as isize - n as isize
    }
}

fn fourier_lowpass<S: Scalar>(values: &mut [S], keep: f64) {
    let n = TILE_SIDE;
    let mut planner = FftPlanner::<S>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex<S>> = values.iter().map(|&v| Complex::new(v, S::zero())).collect();
    fft2(&mut buf, fwd.as_ref());

    let keep_count = ((keep * TILE_CELLS as f64).round() as usize).clamp(1, TILE_CELLS);
    if keep_count < TILE_CELLS {
        let mut order: Vec<usize> = (0..TILE_CELLS).collect();
        let radius2 = |idx: usize| {
            let fy = signed_freq(idx / n, n);
            let fx = signed_freq(idx % n, n);
            fy * fy + fx * fx
        };
        order.sort_by_key(|&idx| (radius2(idx), idx));
        for &idx in &order[keep_count..] {
            buf[idx] = Complex::new(S::zero(), S::zero());
        }
    }

    fft2(&mut buf, inv.as_ref());
    let scale = S::lit(TILE_CELLS as f64);
    for (v, c) in values.iter_mut().zip(&buf) {
        *v = c.re / scale;
    }
}

fn fft2<S: Scalar>(buf: &mut [Complex<S>], fft: &dyn rustfft::Fft<S>) {
    let n = TILE_SIDE;
    for row in buf.chunks_exact_mut(n) {
        fft.process(row);
    }
    let mut col = vec![Complex::new(S::zero(), S::zero()); n];
    for c in 0..n {
        for r in 0..n {
            col[r] = buf[r * n + c];
        }
        fft.process(&mut col);
        for r in 0..n {
            buf[r * n + c] = col[r];
        }
    }
}

/// Writes `<path>.pgm` (8-bit binary, `round(255·v)`) and `<path>.csv` (full precision).
pub fn render_tile<S: Scalar>(tile: &Tile<S>, path: &Path) -> Result<(), FingerprintError> {
    let pgm = path.with_extension("pgm");
    let csv = path.with_extension("csv");
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |source| FingerprintError::Io { path: p, source }
    };
    let mut bytes = format!("P5\n{TILE_SIDE} {TILE_SIDE}\n255\n").into_bytes();
    bytes.extend(tile.values.iter().map(|v| (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8));
    std::fs::write(&pgm, bytes).map_err(io(&pgm))?;
    write_grid(&tile.values, &csv)
}

/// Writes a 64×64 comma-separated grid with round-trip float formatting.
pub fn write_grid<S: Scalar>(values: &[S], path: &Path) -> Result<(), FingerprintError> {
    let mut out = String::with_capacity(values.len() * 12);
    for row in values.chunks(TILE_SIDE) {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&format!("{v:?}"));
        }
        out.push('\n');
    }
    let mut f = std::fs::File::create(path).map_err(|source| FingerprintError::Io { path: path.to_path_buf(), source })?;
    f.write_all(out.as_bytes()).map_err(|source| FingerprintError::Io { path: path.to_path_buf(), source })
}

/// Reads a grid written by [`write_grid`].
pub fn read_grid<S: Scalar>(path: &Path) -> Result<Vec<S>, FingerprintError> {
    let file = std::fs::File::open(path).map_err(|source| FingerprintError::Io { path: path.to_path_buf(), source })?;
    let mut values = Vec::with_capacity(TILE_CELLS);
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| FingerprintError::Io { path: path.to_path_buf(), source })?;
        if line.is_empty() {
            continue;
        }
        for field in line.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| FingerprintError::Parse {
                path: path.to_path_buf(),
                message: format!("line {}: {field:?}", lineno + 1),
            })?;
            values.push(S::lit(v));
        }
    }
    if values.len() != TILE_CELLS {
        return Err(FingerprintError::Parse { path: path.to_path_buf(), message: format!("{} values", values.len()) });
    }
    Ok(values)
}

/// Reads an 8-bit binary PGM back to `[0, 1]` values.
pub fn read_pgm(path: &Path) -> Result<Vec<f64>, FingerprintError> {
    let bytes = std::fs::read(path).map_err(|source| FingerprintError::Io { path: path.to_path_buf(), source })?;
    let header = format!("P5\n{TILE_SIDE} {TILE_SIDE}\n255\n");
    let body = bytes
        .strip_prefix(header.as_bytes())
        .ok_or_else(|| FingerprintError::Parse { path: path.to_path_buf(), message: "unexpected PGM header".into() })?;
    if body.len() != TILE_CELLS {
        return Err(FingerprintError::Parse { path: path.to_path_buf(), message: format!("{} pixels", body.len()) });
    }
    Ok(body.iter().map(|&p| p as f64 / 255.0).collect())
}
