//! Pairwise comparison: two directed trials per language pair, the four
//! distances derived from them, all-pairs matrices and per-language rankings.

use num_traits::Float;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::fingerprint::{FingerprintSet, TILES_PER_SET};
use crate::gan::{self, FakeSeries, GanConfig, GanError, ModelParams, TrainingTrace};
use crate::metrics::{self, AffinityMeasure, Averaging, MetricError};
use crate::parallel::par_map;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("unknown language `{0}`")]
    UnknownLanguage(String),
    #[error("self-comparison of `{0}` is a test, not a run")]
    SelfComparison(String),
    #[error("tile index {0} out of range 0..{TILES_PER_SET}")]
    TileIndex(usize),
    #[error("tile `{language}`[{index}] is empty")]
    EmptyTile { language: String, index: usize },
    #[error("need at least two languages, got {0}")]
    TooFewLanguages(usize),
    #[error("distance matrix is missing the pair ({0}, {1})")]
    Incomplete(String, String),
    #[error(transparent)]
    Gan(#[from] GanError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// One directed run: train on one language's tile, test against another's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub train_language: String,
    pub test_language: String,
    pub train_tile_index: usize,
    pub test_tile_index: usize,
    pub gan_config: GanConfig,
}

impl TrialSpec {
    pub fn new(train: impl Into<String>, test: impl Into<String>, gan_config: GanConfig) -> Self {
        TrialSpec { train_language: train.into(), test_language: test.into(), train_tile_index: 0, test_tile_index: 0, gan_config }
    }
}

#[derive(Debug, Clone)]
pub struct TrialOutcome<S> {
    pub spec: TrialSpec,
    pub measure: AffinityMeasure<S>,
    pub fakes: FakeSeries<S>,
    pub trace: TrainingTrace,
    pub params: ModelParams<S>,
}

impl<S: Scalar> TrialOutcome<S> {
    /// Schedule-averaged ρ.
    pub fn rho_bar(&self) -> S {
        self.measure.rho
    }
}

/// Tile choices and pooling shared by every trial of a comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    /// Global seed; per-trial seeds are derived from it and the pair.
    pub gan: GanConfig,
    pub train_tile_index: usize,
    pub test_tile_index: usize,
    #[serde(default)]
    pub averaging: Averaging,
}

impl CompareConfig {
    pub fn new(gan: GanConfig) -> Self {
        CompareConfig { gan, train_tile_index: 0, test_tile_index: 0, averaging: Averaging::CValues }
    }
}

fn find<'a, S>(fingerprints: &'a [FingerprintSet<S>], id: &str) -> Result<&'a FingerprintSet<S>, ProtocolError> {
    fingerprints.iter().find(|f| f.language_id == id).ok_or_else(|| ProtocolError::UnknownLanguage(id.to_string()))
}

fn tile_of<'a, S: Scalar>(
    fingerprints: &'a [FingerprintSet<S>],
    id: &str,
    index: usize,
) -> Result<&'a crate::fingerprint::Tile<S>, ProtocolError> {
    if index >= TILES_PER_SET {
        return Err(ProtocolError::TileIndex(index));
    }
    let tile = find(fingerprints, id)?.tile(index).ok_or(ProtocolError::TileIndex(index))?;
    if tile.fill_count == 0 {
        return Err(ProtocolError::EmptyTile { language: id.to_string(), index });
    }
    Ok(tile)
}

/// Trains on the spec's train tile and averages ρ over the emitted fakes.
pub fn run_trial<S: Scalar>(spec: &TrialSpec, fingerprints: &[FingerprintSet<S>]) -> Result<TrialOutcome<S>, ProtocolError> {
    run_trial_with(spec, fingerprints, Averaging::CValues)
}

pub fn run_trial_with<S: Scalar>(
    spec: &TrialSpec,
    fingerprints: &[FingerprintSet<S>],
    averaging: Averaging,
) -> Result<TrialOutcome<S>, ProtocolError> {
    let train = tile_of(fingerprints, &spec.train_language, spec.train_tile_index)?;
    let test = tile_of(fingerprints, &spec.test_language, spec.test_tile_index)?;
    let out = gan::train(&spec.gan_config, train)?;
    let measure = metrics::schedule_average_with(&out.fakes, train, test, averaging)?;
    Ok(TrialOutcome { spec: spec.clone(), measure, fakes: out.fakes, trace: out.trace, params: out.params })
}

/// Seed for the trial of the unordered pair `{a, b}` that trains on `train`.
pub fn trial_seed(global: u64, a: &str, b: &str, train: &str) -> u64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    let mut h = Sha256::new();
    h.update(b"lingan/trial");
    h.update(global.to_le_bytes());
    for part in [lo, hi, train] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// The four distances of one pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distances<T> {
    pub d1: T,
    pub d2: T,
    pub d1_m: T,
    pub d2_m: T,
}

pub fn distances<T: Float>(xi: T, nu: T) -> Distances<T> {
    let two = T::one() + T::one();
    Distances {
        d1: ((xi * xi + nu * nu) / two).sqrt(),
        d2: (xi - nu).abs(),
        d1_m: xi.abs() + nu.abs(),
        d2_m: (xi.abs() - nu.abs()).abs(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    D1,
    D2,
    D1M,
    D2M,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::D1, Metric::D2, Metric::D1M, Metric::D2M];

    pub fn name(self) -> &'static str {
        match self {
            Metric::D1 => "d1",
            Metric::D2 => "d2",
            Metric::D1M => "d1_m",
            Metric::D2M => "d2_m",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub a: String,
    pub b: String,
    /// ρ̄ of the trial training on `a`.
    pub xi: f64,
    /// ρ̄ of the trial training on `b`.
    pub nu: f64,
    pub d1: f64,
    pub d2: f64,
    pub d1_m: f64,
    pub d2_m: f64,
    /// Seeds of the `a`-trained and `b`-trained trials.
    pub seeds: [u64; 2],
}

impl PairResult {
    pub fn from_trials(a: impl Into<String>, b: impl Into<String>, xi: f64, nu: f64, seeds: [u64; 2]) -> Self {
        let d = distances(xi, nu);
        PairResult { a: a.into(), b: b.into(), xi, nu, d1: d.d1, d2: d.d2, d1_m: d.d1_m, d2_m: d.d2_m, seeds }
    }

    /// The same result seen from the other side: ξ/ν and seeds swap.
    pub fn swapped(&self) -> Self {
        PairResult {
            a: self.b.clone(),
            b: self.a.clone(),
            xi: self.nu,
            nu: self.xi,
            seeds: [self.seeds[1], self.seeds[0]],
            ..self.clone()
        }
    }

    pub fn oriented(&self, a: &str) -> Self {
        if self.a == a {
            self.clone()
        } else {
            self.swapped()
        }
    }

    pub fn distance(&self, metric: Metric) -> f64 {
        match metric {
            Metric::D1 => self.d1,
            Metric::D2 => self.d2,
            Metric::D1M => self.d1_m,
            Metric::D2M => self.d2_m,
        }
    }

    pub fn involves(&self, id: &str) -> bool {
        self.a == id || self.b == id
    }
}

/// A pair result together with both trials that produced it.
#[derive(Debug, Clone)]
pub struct PairRun<S> {
    pub result: PairResult,
    pub trials: [TrialOutcome<S>; 2],
}

fn pair_trials<S: Scalar>(
    a: &str,
    b: &str,
    fingerprints: &[FingerprintSet<S>],
    config: &CompareConfig,
) -> Result<PairRun<S>, ProtocolError> {
    let global = config.gan.seed;
    let seeds = [trial_seed(global, a, b, a), trial_seed(global, a, b, b)];
    let spec = |train: &str, test: &str, seed: u64| TrialSpec {
        train_language: train.to_string(),
        test_language: test.to_string(),
        train_tile_index: config.train_tile_index,
        test_tile_index: config.test_tile_index,
        gan_config: config.gan.with_seed(seed),
    };
    let t1 = run_trial_with(&spec(a, b, seeds[0]), fingerprints, config.averaging)?;
    let t2 = run_trial_with(&spec(b, a, seeds[1]), fingerprints, config.averaging)?;
    let result = PairResult::from_trials(a, b, t1.rho_bar().as_f64(), t2.rho_bar().as_f64(), seeds);
    Ok(PairRun { result, trials: [t1, t2] })
}

/// Runs both trials of the pair `(a, b)`.
pub fn compare_pair<S: Scalar>(
    a: &str,
    b: &str,
    fingerprints: &[FingerprintSet<S>],
    config: &CompareConfig,
) -> Result<PairRun<S>, ProtocolError> {
    if a == b {
        return Err(ProtocolError::SelfComparison(a.to_string()));
    }
    find(fingerprints, a)?;
    find(fingerprints, b)?;
    pair_trials(a, b, fingerprints, config)
}

/// Both trials of a language against itself on the same tile; a control whose
/// distances must all be zero.
pub fn self_comparison<S: Scalar>(
    id: &str,
    fingerprints: &[FingerprintSet<S>],
    config: &CompareConfig,
) -> Result<PairRun<S>, ProtocolError> {
    let config = CompareConfig { test_tile_index: config.train_tile_index, ..config.clone() };
    pair_trials(id, id, fingerprints, &config)
}

/// All unordered pairs of `ids`, in order.
pub fn pair_list(ids: &[String]) -> Vec<(String, String)> {
    let mut out = Vec::with_capacity(ids.len() * ids.len().saturating_sub(1) / 2);
    for (i, a) in ids.iter().enumerate() {
        for b in &ids[i + 1..] {
            out.push((a.clone(), b.clone()));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub languages: Vec<String>,
    pub entries: Vec<PairResult>,
}

impl DistanceMatrix {
    /// Checks that every unordered pair of `languages` has exactly one entry.
    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.languages.len() < 2 {
            return Err(ProtocolError::TooFewLanguages(self.languages.len()));
        }
        for (a, b) in pair_list(&self.languages) {
            if self.get(&a, &b).is_none() {
                return Err(ProtocolError::Incomplete(a, b));
            }
        }
        Ok(())
    }

    /// The entry for `{a, b}` oriented so that `a` comes first.
    pub fn get(&self, a: &str, b: &str) -> Option<PairResult> {
        self.entries.iter().find(|e| (e.a == a && e.b == b) || (e.a == b && e.b == a)).map(|e| e.oriented(a))
    }

    pub fn distance(&self, a: &str, b: &str, metric: Metric) -> Option<f64> {
        self.get(a, b).map(|e| e.distance(metric))
    }

    /// Largest value of `metric` over the matrix, 0 when empty.
    pub fn max_distance(&self, metric: Metric) -> f64 {
        self.entries.iter().map(|e| e.distance(metric)).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFailure {
    pub a: String,
    pub b: String,
    pub error: String,
}

/// Outcome of an all-pairs run; `matrix` holds only the pairs that succeeded.
#[derive(Debug, Clone)]
pub struct AllPairs {
    pub matrix: DistanceMatrix,
    pub failures: Vec<PairFailure>,
}

impl AllPairs {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Compares every unordered pair using up to `jobs` worker threads.
///
/// `on_pair` sees each finished pair with its trials as it completes, so
/// callers can persist partial results.
pub fn all_pairs<S: Scalar>(
    fingerprints: &[FingerprintSet<S>],
    config: &CompareConfig,
    jobs: usize,
    on_pair: &(dyn Fn(&PairRun<S>) + Sync),
) -> Result<AllPairs, ProtocolError> {
    let ids: Vec<String> = fingerprints.iter().map(|f| f.language_id.clone()).collect();
    all_pairs_of(fingerprints, &ids, config, jobs, on_pair)
}

/// Like [`all_pairs`] over a chosen roster.
pub fn all_pairs_of<S: Scalar>(
    fingerprints: &[FingerprintSet<S>],
    ids: &[String],
    config: &CompareConfig,
    jobs: usize,
    on_pair: &(dyn Fn(&PairRun<S>) + Sync),
) -> Result<AllPairs, ProtocolError> {
    let ids = ids.to_vec();
    if ids.len() < 2 {
        return Err(ProtocolError::TooFewLanguages(ids.len()));
    }
    let pairs = pair_list(&ids);
    let results = par_map(&pairs, jobs, |(a, b)| {
        match compare_pair(a, b, fingerprints, config) {
            Ok(run) => {
                on_pair(&run);
                Ok(run.result)
            }
            Err(e) => {
                log::error!("pair ({a}, {b}) failed: {e}");
                Err(e.to_string())
            }
        }
    });
    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for ((a, b), res) in pairs.into_iter().zip(results) {
        match res {
            Ok(r) => entries.push(r),
            Err(error) => failures.push(PairFailure { a, b, error }),
        }
    }
    Ok(AllPairs { matrix: DistanceMatrix { languages: ids, entries }, failures })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranked {
    pub language: String,
    pub distance: f64,
    /// Shares its distance with a neighbour in the ordering.
    pub tied: bool,
}

/// Other languages sorted closest first under each distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinityOrdering {
    pub language: String,
    pub order_by_d1: Vec<Ranked>,
    pub order_by_d2: Vec<Ranked>,
    pub order_by_d1_m: Vec<Ranked>,
    pub order_by_d2_m: Vec<Ranked>,
    /// Positions where the d1 and d2 orderings name different languages.
    pub discrepancy_marks: Vec<usize>,
    /// Same for d1_m against d2_m.
    pub manhattan_discrepancy_marks: Vec<usize>,
}

impl AffinityOrdering {
    pub fn order(&self, metric: Metric) -> &[Ranked] {
        match metric {
            Metric::D1 => &self.order_by_d1,
            Metric::D2 => &self.order_by_d2,
            Metric::D1M => &self.order_by_d1_m,
            Metric::D2M => &self.order_by_d2_m,
        }
    }

    pub fn ids(&self, metric: Metric) -> Vec<&str> {
        self.order(metric).iter().map(|r| r.language.as_str()).collect()
    }
}

fn rank(language: &str, matrix: &DistanceMatrix, metric: Metric) -> Result<Vec<Ranked>, ProtocolError> {
    let mut rows = Vec::with_capacity(matrix.languages.len() - 1);
    for (pos, other) in matrix.languages.iter().enumerate() {
        if other == language {
            continue;
        }
        let d = matrix.distance(language, other, metric).ok_or_else(|| ProtocolError::Incomplete(language.into(), other.clone()))?;
        rows.push((d, pos, other.clone()));
    }
    // ties fall back to the matrix's language order
    rows.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    let n = rows.len();
    Ok((0..n)
        .map(|i| Ranked {
            language: rows[i].2.clone(),
            distance: rows[i].0,
            tied: (i > 0 && rows[i - 1].0 == rows[i].0) || (i + 1 < n && rows[i + 1].0 == rows[i].0),
        })
        .collect())
}

fn marks(x: &[Ranked], y: &[Ranked]) -> Vec<usize> {
    x.iter().zip(y).enumerate().filter(|(_, (p, q))| p.language != q.language).map(|(i, _)| i).collect()
}

/// Per-language orderings under all four distances.
pub fn rank_affinities(matrix: &DistanceMatrix) -> Result<Vec<AffinityOrdering>, ProtocolError> {
    matrix.validate()?;
    matrix
        .languages
        .iter()
        .map(|lang| {
            let d1 = rank(lang, matrix, Metric::D1)?;
            let d2 = rank(lang, matrix, Metric::D2)?;
            let d1_m = rank(lang, matrix, Metric::D1M)?;
            let d2_m = rank(lang, matrix, Metric::D2M)?;
            Ok(AffinityOrdering {
                language: lang.clone(),
                discrepancy_marks: marks(&d1, &d2),
                manhattan_discrepancy_marks: marks(&d1_m, &d2_m),
                order_by_d1: d1,
                order_by_d2: d2,
                order_by_d1_m: d1_m,
                order_by_d2_m: d2_m,
            })
        })
        .collect()
}
