//! Ablations around the baseline comparison and the two-stage secondary-fake
//! experiment.
//!
//! Every ablation reruns a pair set over several global seeds, once with the
//! baseline settings and once with a single setting changed, and compares
//! the mean |pearson| between emitted fakes and their training tiles.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::fingerprint::{apply_filter, FilterKind, FingerprintError, FingerprintSet, Tile};
use crate::gan::{self, discrimination_rate, init_params, FakeSeries, GanConfig, LossKind};
use crate::metrics::{pearson, MetricError};
use crate::parallel::par_map;
use crate::protocol::{self, pair_list, rank_affinities, AffinityOrdering, CompareConfig, DistanceMatrix, PairResult, ProtocolError, TrialOutcome};
use crate::scalar::Scalar;

/// Minimum mean |pearson| change for a verdict other than unchanged.
pub const VERDICT_THRESHOLD: f64 = 0.02;
/// Seeds required before a verdict can leave unchanged.
pub const MIN_VERDICT_SEEDS: usize = 3;
/// Epoch range accepted by the scaling ablation.
pub const EPOCH_RANGE: (usize, usize) = (400, 4800);
/// Moving-average width used to locate the loss optimum.
pub const LOSS_OPTIMUM_WINDOW: usize = 50;

#[derive(Debug, Error)]
pub enum RobustnessError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Fingerprint(#[from] FingerprintError),
    #[error(transparent)]
    Gan(#[from] gan::GanError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("invalid ablation: {0}")]
    Invalid(String),
}

/// Everything that can vary between a baseline and a variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub languages: Vec<String>,
    pub filter: FilterKind,
    pub compare: CompareConfig,
}

impl ExperimentConfig {
    pub fn new(languages: Vec<String>, compare: CompareConfig) -> Self {
        ExperimentConfig { languages, filter: FilterKind::None, compare }
    }

    pub fn gan(&self) -> &GanConfig {
        &self.compare.gan
    }

    fn with_gan(&self, f: impl FnOnce(&mut GanConfig)) -> Self {
        let mut out = self.clone();
        f(&mut out.compare.gan);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldChange {
    pub field: String,
    pub baseline: String,
    pub variant: String,
}

/// Leaf-level differences between two configurations. The filter and the
/// language roster count as one setting each.
pub fn config_diff(baseline: &ExperimentConfig, variant: &ExperimentConfig) -> Vec<FieldChange> {
    let mut a = BTreeMap::new();
    let mut b = BTreeMap::new();
    flatten("", &serde_json::to_value(baseline).expect("config serializes"), &mut a);
    flatten("", &serde_json::to_value(variant).expect("config serializes"), &mut b);
    let keys: std::collections::BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    keys.into_iter()
        .filter(|k| a.get(*k) != b.get(*k))
        .map(|k| FieldChange {
            field: k.clone(),
            baseline: a.get(k).cloned().unwrap_or_default(),
            variant: b.get(k).cloned().unwrap_or_default(),
        })
        .collect()
}

fn flatten(prefix: &str, v: &Value, out: &mut BTreeMap<String, String>) {
    match v {
        Value::Object(map) if prefix != "filter" => {
            for (k, child) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, child, out);
            }
        }
        other => {
            out.insert(prefix.to_string(), other.to_string());
        }
    }
}

/// Pair set, seeds and parallelism shared by the baseline and its variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationPlan {
    pub baseline: ExperimentConfig,
    /// Designated pairs; empty means every pair of the roster.
    pub pairs: Vec<(String, String)>,
    /// Global seeds; each replaces `baseline.compare.gan.seed` in turn.
    pub seeds: Vec<u64>,
    pub jobs: usize,
}

impl AblationPlan {
    fn pairs_for(&self, config: &ExperimentConfig) -> Vec<(String, String)> {
        if self.pairs.is_empty() {
            pair_list(&config.languages)
        } else {
            self.pairs.clone()
        }
    }

    fn validate(&self) -> Result<(), RobustnessError> {
        if self.seeds.is_empty() {
            return Err(RobustnessError::Invalid("at least one seed is required".into()));
        }
        if self.baseline.languages.len() < 2 && self.pairs.is_empty() {
            return Err(RobustnessError::Invalid("the baseline needs at least two languages".into()));
        }
        self.baseline.compare.gan.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub train: String,
    pub test: String,
    pub seed: u64,
    pub c_train_fake: f64,
    pub c_test_fake: f64,
    pub rho: f64,
    pub skipped_epochs: usize,
    /// Mean |pearson| of the emitted fakes against the training tile; `None`
    /// when every correlation was undefined.
    pub mean_abs_pearson: Option<f64>,
    pub undefined_pearson: usize,
    pub discrimination: f64,
    pub window_std: f64,
    pub mode_collapse: bool,
    pub loss_optimum: Option<usize>,
    pub final_gen_loss: f64,
}

/// Mean |pearson| of each fake against `tile`, skipping undefined values.
pub fn mean_abs_pearson<S: Scalar>(fakes: &FakeSeries<S>, tile: &Tile<S>) -> (Option<f64>, usize) {
    let mut sum = 0.0;
    let mut n = 0usize;
    let mut undefined = 0usize;
    for f in &fakes.fakes {
        match pearson(&f.tile.values, &tile.values) {
            Ok(r) => {
                sum += r.as_f64().abs();
                n += 1;
            }
            Err(_) => undefined += 1,
        }
    }
    ((n > 0).then(|| sum / n as f64), undefined)
}

fn summarize<S: Scalar>(t: &TrialOutcome<S>, train_tile: &Tile<S>) -> Result<TrialSummary, RobustnessError> {
    let (mean_abs_pearson, undefined_pearson) = mean_abs_pearson(&t.fakes, train_tile);
    Ok(TrialSummary {
        train: t.spec.train_language.clone(),
        test: t.spec.test_language.clone(),
        seed: t.spec.gan_config.seed,
        c_train_fake: t.measure.c_train_fake.as_f64(),
        c_test_fake: t.measure.c_test_fake.as_f64(),
        rho: t.measure.rho.as_f64(),
        skipped_epochs: t.measure.skipped_epochs,
        mean_abs_pearson,
        undefined_pearson,
        discrimination: discrimination_rate(&t.params, &t.fakes)?,
        window_std: t.trace.window_std,
        mode_collapse: t.trace.mode_collapse_flag,
        loss_optimum: t.trace.loss_optimum(LOSS_OPTIMUM_WINDOW),
        final_gen_loss: t.trace.gen_loss.last().copied().unwrap_or(f64::NAN),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// Global seed of this run.
    pub seed: u64,
    pub result: PairResult,
    pub trials: [TrialSummary; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantMetrics {
    pub runs: Vec<RunSummary>,
    /// Mean |pearson| per global seed, aligned with the plan's seeds.
    pub per_seed_pearson: Vec<Option<f64>>,
    pub mean_abs_pearson: Option<f64>,
    pub undefined_pearson: usize,
    pub per_seed_discrimination: Vec<f64>,
    pub mean_discrimination: f64,
    pub mode_collapses: usize,
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (s, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

impl VariantMetrics {
    fn from_runs(runs: Vec<RunSummary>, seeds: &[u64]) -> Self {
        let trials = || runs.iter().flat_map(|r| r.trials.iter());
        let per_seed_pearson: Vec<Option<f64>> = seeds
            .iter()
            .map(|s| mean(runs.iter().filter(|r| r.seed == *s).flat_map(|r| r.trials.iter().filter_map(|t| t.mean_abs_pearson))))
            .collect();
        let per_seed_discrimination: Vec<f64> = seeds
            .iter()
            .map(|s| mean(runs.iter().filter(|r| r.seed == *s).flat_map(|r| r.trials.iter().map(|t| t.discrimination))).unwrap_or(f64::NAN))
            .collect();
        VariantMetrics {
            mean_abs_pearson: mean(per_seed_pearson.iter().flatten().copied()),
            undefined_pearson: trials().map(|t| t.undefined_pearson).sum(),
            mean_discrimination: mean(per_seed_discrimination.iter().copied()).unwrap_or(f64::NAN),
            mode_collapses: trials().filter(|t| t.mode_collapse).count(),
            per_seed_pearson,
            per_seed_discrimination,
            runs,
        }
    }

    pub fn results(&self) -> impl Iterator<Item = &PairResult> {
        self.runs.iter().map(|r| &r.result)
    }
}

/// Fingerprints with the configuration's filter applied to every tile.
fn prepared<S: Scalar>(fingerprints: &[FingerprintSet<S>], filter: &FilterKind) -> Result<Vec<FingerprintSet<S>>, RobustnessError> {
    filter.validate()?;
    if *filter == FilterKind::None {
        return Ok(fingerprints.to_vec());
    }
    fingerprints
        .iter()
        .map(|set| {
            let tiles = set.tiles.iter().map(|t| apply_filter(t, filter)).collect::<Result<Vec<_>, _>>()?;
            Ok(FingerprintSet { tiles, ..set.clone() })
        })
        .collect()
}

/// Runs `pairs` under `config` for every seed.
fn run_pairs<S: Scalar>(
    fingerprints: &[FingerprintSet<S>],
    config: &ExperimentConfig,
    pairs: &[(String, String)],
    seeds: &[u64],
    jobs: usize,
) -> Result<Vec<RunSummary>, RobustnessError> {
    config.compare.gan.validate()?;
    let fps = prepared(fingerprints, &config.filter)?;
    let work: Vec<(u64, &(String, String))> = seeds.iter().flat_map(|s| pairs.iter().map(move |p| (*s, p))).collect();
    par_map(&work, jobs, |(seed, (a, b))| -> Result<RunSummary, RobustnessError> {
        let compare = CompareConfig { gan: config.compare.gan.with_seed(*seed), ..config.compare.clone() };
        let run = protocol::compare_pair(a, b, &fps, &compare)?;
        let tile = |id: &str| fps.iter().find(|f| f.language_id == id).and_then(|f| f.tile(compare.train_tile_index)).expect("checked by compare_pair");
        let [t1, t2] = &run.trials;
        Ok(RunSummary { seed: *seed, trials: [summarize(t1, tile(a))?, summarize(t2, tile(b))?], result: run.result })
    })
    .into_iter()
    .collect()
}

fn evaluate<S: Scalar>(
    fingerprints: &[FingerprintSet<S>],
    plan: &AblationPlan,
    config: &ExperimentConfig,
) -> Result<VariantMetrics, RobustnessError> {
    let runs = run_pairs(fingerprints, config, &plan.pairs_for(config), &plan.seeds, plan.jobs)?;
    Ok(VariantMetrics::from_runs(runs, &plan.seeds))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Improved,
    Unchanged,
    Degraded,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Improved => "improved",
            Verdict::Unchanged => "unchanged",
            Verdict::Degraded => "degraded",
        })
    }
}

/// Mean change in |pearson| over seeds where both sides are defined, with the
/// verdict it implies.
pub fn verdict(baseline: &[Option<f64>], variant: &[Option<f64>]) -> (Option<f64>, Vec<f64>, Verdict) {
    let deltas: Vec<f64> = baseline.iter().zip(variant).filter_map(|(b, v)| Some((*v)? - (*b)?)).collect();
    let Some(delta) = mean(deltas.iter().copied()) else {
        return (None, deltas, Verdict::Unchanged);
    };
    let agree = |positive: bool| deltas.iter().all(|d| if positive { *d > 0.0 } else { *d < 0.0 });
    let v = if deltas.len() < MIN_VERDICT_SEEDS {
        Verdict::Unchanged
    } else if delta > VERDICT_THRESHOLD && agree(true) {
        Verdict::Improved
    } else if delta < -VERDICT_THRESHOLD && agree(false) {
        Verdict::Degraded
    } else {
        Verdict::Unchanged
    };
    (Some(delta), deltas, v)
}

/// Two-sided Welch t-test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchTest {
    pub mean_a: f64,
    pub mean_b: f64,
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

pub fn welch_t_test(a: &[f64], b: &[f64]) -> Option<WelchTest> {
    if a.len() < 2 || b.len() < 2 {
        return None;
    }
    let stats = |x: &[f64]| {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
        (m, var, n)
    };
    let (ma, va, na) = stats(a);
    let (mb, vb, nb) = stats(b);
    let se2 = va / na + vb / nb;
    if se2 == 0.0 {
        // both samples constant: the means either coincide or differ surely
        let p = if ma == mb { 1.0 } else { 0.0 };
        let t = if ma == mb { 0.0 } else { f64::INFINITY.copysign(ma - mb) };
        return Some(WelchTest { mean_a: ma, mean_b: mb, t, df: na + nb - 2.0, p_value: p });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).ok()?;
    let p_value = (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0);
    Some(WelchTest { mean_a: ma, mean_b: mb, t, df, p_value })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AddLanguageDetail {
    pub new_language: String,
    /// Baseline pair results came out bit-identical in the extended corpus.
    pub existing_unchanged: bool,
    pub changed_pairs: Vec<(String, String)>,
    pub baseline_divisor: f64,
    pub extended_divisor: f64,
    pub new_pairs: Vec<PairResult>,
    /// The new language's ordering for the first seed.
    pub ordering: AffinityOrdering,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub variant: String,
    pub diff: Vec<FieldChange>,
    pub seeds: Vec<u64>,
    pub baseline_config: ExperimentConfig,
    pub variant_config: ExperimentConfig,
    pub baseline_metrics: VariantMetrics,
    pub variant_metrics: VariantMetrics,
    pub pearson_delta: Option<f64>,
    pub per_seed_delta: Vec<f64>,
    pub threshold: f64,
    pub verdict: Verdict,
    /// Discrimination rate, baseline against variant, across seeds.
    pub discrimination_test: Option<WelchTest>,
    pub add_language: Option<AddLanguageDetail>,
    pub notes: Vec<String>,
}

impl AblationReport {
    fn build(variant: String, plan: &AblationPlan, config: ExperimentConfig, baseline: &VariantMetrics, metrics: VariantMetrics) -> Self {
        let diff = config_diff(&plan.baseline, &config);
        let (pearson_delta, per_seed_delta, verdict) = verdict(&baseline.per_seed_pearson, &metrics.per_seed_pearson);
        let mut notes = Vec::new();
        if metrics.undefined_pearson > 0 {
            notes.push(format!("{} fake correlations undefined (constant tiles)", metrics.undefined_pearson));
        }
        if metrics.mean_abs_pearson.is_none() {
            notes.push("no defined fake correlation; verdict forced to unchanged".into());
        }
        if metrics.mode_collapses > 0 {
            notes.push(format!("{} trials flagged mode collapse", metrics.mode_collapses));
        }
        if plan.seeds.len() < MIN_VERDICT_SEEDS {
            notes.push(format!("fewer than {MIN_VERDICT_SEEDS} seeds; verdict forced to unchanged"));
        }
        AblationReport {
            variant,
            diff,
            seeds: plan.seeds.clone(),
            baseline_config: plan.baseline.clone(),
            variant_config: config,
            baseline_metrics: baseline.clone(),
            discrimination_test: None,
            add_language: None,
            variant_metrics: metrics,
            pearson_delta,
            per_seed_delta,
            threshold: VERDICT_THRESHOLD,
            verdict,
            notes,
        }
    }

    /// True when the variant changes at most one setting (none for an identity rerun).
    pub fn single_field(&self) -> bool {
        self.diff.len() <= 1
    }
}

/// Baseline metrics for a plan; pass them to several ablations to avoid reruns.
pub fn baseline<S: Scalar>(fingerprints: &[FingerprintSet<S>], plan: &AblationPlan) -> Result<VariantMetrics, RobustnessError> {
    plan.validate()?;
    evaluate(fingerprints, plan, &plan.baseline)
}

fn variant_report<S: Scalar>(
    fingerprints: &[FingerprintSet<S>],
    plan: &AblationPlan,
    base: &VariantMetrics,
    name: String,
    config: ExperimentConfig,
) -> Result<AblationReport, RobustnessError> {
    let metrics = if config == plan.baseline { base.clone() } else { evaluate(fingerprints, plan, &config)? };
    Ok(AblationReport::build(name, plan, config, base, metrics))
}

/// Reruns the pair set with each filter applied to every tile.
pub fn filter_ablation<S: Scalar>(
    fingerprints: &[FingerprintSet<S>],
    plan: &AblationPlan,
    base: &VariantMetrics,
    filters: &[FilterKind],
) -> Result<Vec<AblationReport>, RobustnessError> {
    plan.validate()?;
    filters
        .iter()
        .map(|f| {
            let config = ExperimentConfig { filter: f.clone(), ..plan.baseline.clone() };
            variant_report(fingerprints, plan, base, format!("filter {f}"), config)
        })
        .collect()
}

/// Reruns with a learnable critic and tests the change in discrimination.
pub fn critic_learnable_ablation<S: Scalar>(
    fingerprints: &[FingerprintSet<S>],
    plan: &AblationPlan,
    base: &VariantMetrics,
) -> Result<AblationReport, RobustnessError> {
    plan.validate()?;
    if plan.baseline.gan().critic_learnable {
        return Err(RobustnessError::Invalid("the baseline critic must be frozen".into()));
    }
    let config = plan.baseline.with_gan(|g| g.critic_learnable = true);
    let mut report = variant_report(fingerprints, plan, base, "critic learnable".into(), config)?;
    report.discrimination_test = welch_t_test(&base.per_seed_discrimination, &report.variant_metrics.per_seed_discrimination);
    if plan.seeds.len() < 5 {
        report.notes.push("discrimination test uses fewer than 5 seeds".into());
    }
    Ok(report)
}

/// Checks that frozen-critic training left the critic at its initialization.
pub fn frozen_critic_intact<S: Scalar>(trial: &TrialOutcome<S>) -> Result<bool, RobustnessError> {
    let init: gan::ModelParams<S> = init_params(&trial.spec.gan_config)?;
    Ok(trial.params.critic == init.critic)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossAblation {
    /// One report per loss switched to mean squared error.
    pub reports: Vec<AblationReport>,
    /// Both losses switched; two settings differ, so this is a smoke run only.
    pub both_mse: VariantMetrics,
}

pub fn loss_ablation<S: Scalar>(
    fingerprints: &[FingerprintSet<S>],
    plan: &AblationPlan,
    base: &VariantMetrics,
) -> Result<LossAblation, RobustnessError> {
    plan.validate()?;
    let g = plan.baseline.gan();
    if g.gen_loss != LossKind::BinaryCrossEntropy || g.critic_loss != LossKind::BinaryCrossEntropy {
        return Err(RobustnessError::Invalid("the baseline must use binary cross-entropy for both losses".into()));
    }
    let gen_mse = plan.baseline.with_gan(|g| g.gen_loss = LossKind::MeanSquaredError);
    let critic_mse = plan.baseline.with_gan(|g| g.critic_loss = LossKind::MeanSquaredError);
    let both = plan.baseline.with_gan(|g| {
        g.gen_loss = LossKind::MeanSquaredError;
        g.critic_loss = LossKind::MeanSquaredError;
    });
    let reports = vec![
        variant_report(fingerprints, plan, base, "generator loss mse".into(), gen_mse)?,
        variant_report(fingerprints, plan, base, "critic loss mse".into(), critic_mse)?,
    ];
    let smoke_plan = AblationPlan { seeds: plan.seeds[..1].to_vec(), ..plan.clone() };
    let both_mse = evaluate(fingerprints, &smoke_plan, &both)?;
    Ok(LossAblation { reports, both_mse })
}

/// One report per epoch count in `grid`.
pub fn epoch_scaling<S: Scalar>(
    fingerprints: &[FingerprintSet<S>],
    plan: &AblationPlan,
    base: &VariantMetrics,
    grid: &[usize],
) -> Result<Vec<AblationReport>, RobustnessError> {
    plan.validate()?;
    if let Some(bad) = grid.iter().find(|e| !(EPOCH_RANGE.0..=EPOCH_RANGE.1).contains(*e)) {
        return Err(RobustnessError::Invalid(format!("epoch count {bad} outside [{}, {}]", EPOCH_RANGE.0, EPOCH_RANGE.1)));
    }
    grid.iter()
        .map(|&epochs| {
            let config = plan.baseline.with_gan(|g| g.epochs = epochs);
            let mut report = variant_report(fingerprints, plan, base, format!("epochs {epochs}"), config)?;
            if epochs < plan.baseline.gan().emit_window {
                report.notes.push(format!("emit window truncated to {epochs} epochs"));
            }
            Ok(report)
        })
        .collect()
}

/// Adds `new_language` to the roster: computes its pairs, and checks that the
/// baseline pairs are unchanged in the extended corpus.
///
/// `extended` holds the fingerprints rebuilt with the new language present;
/// the baseline pairs stay bit-identical only if that leaves the shared
/// normalization divisor unchanged.
pub fn add_language<S: Scalar>(
    baseline_fps: &[FingerprintSet<S>],
    extended: &[FingerprintSet<S>],
    plan: &AblationPlan,
    base: &VariantMetrics,
    new_language: &str,
) -> Result<AblationReport, RobustnessError> {
    plan.validate()?;
    if plan.baseline.languages.iter().any(|l| l == new_language) {
        return Err(RobustnessError::Invalid(format!("`{new_language}` is already in the baseline roster")));
    }
    if !extended.iter().any(|f| f.language_id == new_language) {
        return Err(ProtocolError::UnknownLanguage(new_language.to_string()).into());
    }
    let mut config = plan.baseline.clone();
    config.languages.push(new_language.to_string());

    let existing = plan.pairs_for(&plan.baseline);
    let new_pairs: Vec<(String, String)> = plan.baseline.languages.iter().map(|l| (l.clone(), new_language.to_string())).collect();

    // only the new pairs need training when the old tiles did not move
    let same_tiles = plan.baseline.languages.iter().all(|l| {
        let pick = |fps: &[FingerprintSet<S>]| fps.iter().find(|f| &f.language_id == l).cloned();
        pick(baseline_fps) == pick(extended)
    });
    let recomputed = if same_tiles {
        run_pairs(extended, &config, &existing, &plan.seeds[..1], plan.jobs)?
    } else {
        run_pairs(extended, &config, &existing, &plan.seeds, plan.jobs)?
    };
    let changed_pairs: Vec<(String, String)> = recomputed
        .iter()
        .filter(|r| base.runs.iter().find(|b| b.seed == r.seed && b.result.a == r.result.a && b.result.b == r.result.b) != Some(*r))
        .map(|r| (r.result.a.clone(), r.result.b.clone()))
        .collect();
    let existing_runs = if same_tiles { base.runs.clone() } else { recomputed };
    let added = run_pairs(extended, &config, &new_pairs, &plan.seeds, plan.jobs)?;

    let first = plan.seeds[0];
    let matrix = DistanceMatrix {
        languages: config.languages.clone(),
        entries: existing_runs.iter().chain(&added).filter(|r| r.seed == first).map(|r| r.result.clone()).collect(),
    };
    let ordering = rank_affinities(&matrix)?.into_iter().find(|o| o.language == new_language).expect("new language is in the roster");
    let divisor = |fps: &[FingerprintSet<S>]| fps.first().map(|f| f.normalization_divisor).unwrap_or(f64::NAN);
    let detail = AddLanguageDetail {
        new_language: new_language.to_string(),
        existing_unchanged: changed_pairs.is_empty(),
        changed_pairs,
        baseline_divisor: divisor(baseline_fps),
        extended_divisor: divisor(extended),
        new_pairs: added.iter().filter(|r| r.seed == first).map(|r| r.result.clone()).collect(),
        ordering,
    };
    let metrics = VariantMetrics::from_runs(existing_runs.into_iter().chain(added).collect(), &plan.seeds);
    let mut report = AblationReport::build(format!("add language {new_language}"), plan, config, base, metrics);
    if !detail.existing_unchanged {
        report.notes.push(format!(
            "{} baseline pairs changed; normalization divisor {} -> {}",
            detail.changed_pairs.len(),
            detail.baseline_divisor,
            detail.extended_divisor
        ));
    }
    report.add_language = Some(detail);
    Ok(report)
}

/// One direction of the two-stage experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JackknifeResult {
    /// Language whose primary fake trained the second stage.
    pub source: String,
    pub other: String,
    pub seed: u64,
    /// Mean pearson of secondary fakes against the source's primary fakes.
    pub corr_vs_source: f64,
    /// Mean pearson of secondary fakes against the other language's primary fakes.
    pub corr_vs_other: f64,
    /// Same against the real tiles.
    pub corr_vs_source_raw: f64,
    pub corr_vs_other_raw: f64,
    /// Mean pearson of secondary fakes against their own training tile.
    pub secondary_vs_training: f64,
    /// Mean |pearson| of the source's primary fakes against its real tile.
    pub primary_vs_real: f64,
    /// Fraction of secondary fakes the stage-two critic calls fake.
    pub discrimination: f64,
}

impl JackknifeResult {
    pub fn direction(&self) -> String {
        format!("{}->{}", self.source, self.other)
    }
}

/// Per-direction means over seeds, laid out as a 2×2 table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JackknifeTable {
    pub a: String,
    pub b: String,
    /// `[[a→b vs a, a→b vs b], [b→a vs a, b→a vs b]]`
    pub primary: [[f64; 2]; 2],
    pub raw: [[f64; 2]; 2],
    pub discrimination: [f64; 2],
    pub secondary_vs_training: f64,
    pub primary_vs_real: f64,
}

impl JackknifeTable {
    pub fn from_results(a: &str, b: &str, results: &[JackknifeResult]) -> Self {
        let avg = |src: &str, f: &dyn Fn(&JackknifeResult) -> f64| mean(results.iter().filter(|r| r.source == src).map(f)).unwrap_or(f64::NAN);
        JackknifeTable {
            a: a.to_string(),
            b: b.to_string(),
            primary: [[avg(a, &|r| r.corr_vs_source), avg(a, &|r| r.corr_vs_other)], [avg(b, &|r| r.corr_vs_other), avg(b, &|r| r.corr_vs_source)]],
            raw: [
                [avg(a, &|r| r.corr_vs_source_raw), avg(a, &|r| r.corr_vs_other_raw)],
                [avg(b, &|r| r.corr_vs_other_raw), avg(b, &|r| r.corr_vs_source_raw)],
            ],
            discrimination: [avg(a, &|r| r.discrimination), avg(b, &|r| r.discrimination)],
            secondary_vs_training: mean(results.iter().map(|r| r.secondary_vs_training)).unwrap_or(f64::NAN),
            primary_vs_real: mean(results.iter().map(|r| r.primary_vs_real)).unwrap_or(f64::NAN),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JackknifeReport {
    pub config: CompareConfig,
    pub results: Vec<JackknifeResult>,
    pub table: JackknifeTable,
}

fn stage_two_seed(stage_one: u64) -> u64 {
    let digest = Sha256::new().chain_update(b"lingan/stage2").chain_update(stage_one.to_le_bytes()).finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

fn mean_pearson<S: Scalar>(xs: &[&Tile<S>], ys: &[&Tile<S>]) -> f64 {
    mean(xs.iter().flat_map(|x| ys.iter().filter_map(move |y| pearson(&x.values, &y.values).ok().map(|r| r.as_f64())))).unwrap_or(f64::NAN)
}

/// Stage one compares `a` and `b` as usual; stage two trains a fresh GAN with
/// a learnable critic on the last primary fake of each direction and
/// correlates the secondary fakes with both languages' primary fakes.
pub fn secondary_fake_bootstrap<S: Scalar>(
    a: &str,
    b: &str,
    fingerprints: &[FingerprintSet<S>],
    config: &CompareConfig,
    seeds: &[u64],
    jobs: usize,
) -> Result<JackknifeReport, RobustnessError> {
    if seeds.is_empty() {
        return Err(RobustnessError::Invalid("at least one seed is required".into()));
    }
    let per_seed = par_map(seeds, jobs, |&seed| -> Result<Vec<JackknifeResult>, RobustnessError> {
        let compare = CompareConfig { gan: config.gan.with_seed(seed), ..config.clone() };
        let run = protocol::compare_pair(a, b, fingerprints, &compare)?;
        let real = |id: &str| fingerprints.iter().find(|f| f.language_id == id).and_then(|f| f.tile(compare.train_tile_index)).expect("checked by compare_pair");
        let primaries: Vec<Vec<&Tile<S>>> = run.trials.iter().map(|t| t.fakes.fakes.iter().map(|f| &f.tile).collect()).collect();
        let mut out = Vec::with_capacity(2);
        for (i, (src, other)) in [(a, b), (b, a)].into_iter().enumerate() {
            let stage_one = &run.trials[i];
            let training = stage_one.fakes.last().ok_or(gan::GanError::NoFakes)?;
            let mut cfg = compare.gan.clone();
            cfg.critic_learnable = true;
            cfg.seed = stage_two_seed(stage_one.spec.gan_config.seed);
            let stage_two = gan::train(&cfg, training)?;
            let secondary: Vec<&Tile<S>> = stage_two.fakes.fakes.iter().map(|f| &f.tile).collect();
            let (primary_vs_real, _) = mean_abs_pearson(&stage_one.fakes, real(src));
            out.push(JackknifeResult {
                source: src.to_string(),
                other: other.to_string(),
                seed,
                corr_vs_source: mean_pearson(&secondary, &primaries[i]),
                corr_vs_other: mean_pearson(&secondary, &primaries[1 - i]),
                corr_vs_source_raw: mean_pearson(&secondary, &[real(src)]),
                corr_vs_other_raw: mean_pearson(&secondary, &[real(other)]),
                secondary_vs_training: mean_pearson(&secondary, &[training]),
                primary_vs_real: primary_vs_real.unwrap_or(f64::NAN),
                discrimination: discrimination_rate(&stage_two.params, &stage_two.fakes)?,
            });
        }
        Ok(out)
    });
    let mut results = Vec::with_capacity(2 * seeds.len());
    for r in per_seed {
        results.extend(r?);
    }
    let table = JackknifeTable::from_results(a, b, &results);
    Ok(JackknifeReport { config: config.clone(), results, table })
}
