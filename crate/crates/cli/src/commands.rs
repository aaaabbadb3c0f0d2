//! Command implementations. Every command resolves its input, derives a
//! store key from the input digest and the full invocation, and writes its
//! outputs plus a `manifest.json` that is enough to replay it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use lingan::fingerprint::{render_tile, FilterKind};
use lingan::gan::{Architecture, GanConfig};
use lingan::protocol::{all_pairs_of, compare_pair, pair_list, rank_affinities, trial_seed, CompareConfig, DistanceMatrix, Metric, PairRun, ProtocolError};
use lingan::report;
use lingan::robustness::{self, AblationPlan, AblationReport, ExperimentConfig, JackknifeReport, VariantMetrics};
use lingan::Real;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::loaded::{self, Loaded};
use crate::store::{self, Staging, Target};
use crate::{CompareArgs, Outcome, ReportArgs, RobustnessCommand};

pub const MANIFEST: &str = "manifest.json";
pub const FAILURES: &str = "failures.json";
/// Exit status when some pairs of an all-pairs run failed.

const DEFAULT_FILTERS: [&str; 4] = ["gauss_h", "gauss_v", "gauss_hv", "fourier"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Experiment {
    Filters { filters: Vec<FilterKind> },
    Critic,
    Loss,
    Epochs { grid: Vec<usize> },
    AddLanguage { language: String },
    Jackknife { a: String, b: String },
}

/// A command with every setting that can influence its numeric output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Invocation {
    Ingest,
    Compare {
        /// `None` runs every pair of the corpus.
        pair: Option<(String, String)>,
        config: CompareConfig,
        save_trials: bool,
    },
    Report {
        radar: bool,
        tables: bool,
    },
    Robustness {
        experiment: Experiment,
        /// Baseline roster.
        languages: Vec<String>,
        /// Designated pairs; empty means every pair of the roster.
        pairs: Vec<(String, String)>,
        seeds: Vec<u64>,
        config: CompareConfig,
    },
}

impl Invocation {
    fn store_kind(&self) -> &'static str {
        match self {
            Invocation::Ingest => "corpora",
            Invocation::Compare { .. } => "runs",
            Invocation::Report { .. } => "reports",
            Invocation::Robustness { .. } => "robustness",
        }
    }

    fn config(&self) -> Option<&CompareConfig> {
        match self {
            Invocation::Compare { config, .. } | Invocation::Robustness { config, .. } => Some(config),
            _ => None,
        }
    }
}

/// The file a command read: a manifest, an ingested corpus or a matrix CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRef {
    pub path: PathBuf,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusFile {
    pub id: String,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSeeds {
    pub global_seed: u64,
    pub a: String,
    pub b: String,
    /// Seeds of the trial training on `a` and of the one training on `b`.
    pub trial_seeds: [u64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairStamp {
    pub a: String,
    pub b: String,
    pub finished_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub invocation: Invocation,
    pub input: InputRef,
    pub corpus_files: Vec<CorpusFile>,
    pub normalization_divisor: Option<f64>,
    pub global_seed: Option<u64>,
    pub gan_config: Option<GanConfig>,
    pub train_tile_index: Option<usize>,
    pub test_tile_index: Option<usize>,
    pub parameter_count: Option<usize>,
    pub pair_seeds: Vec<PairSeeds>,
    pub started_at: String,
    pub finished_at: String,
    pub pair_finished_at: Vec<PairStamp>,
    /// SHA-256 of every other file in the directory, by relative path.
    pub outputs: BTreeMap<String, String>,
}

enum Input {
    Corpus(Loaded),
    Matrix(String),
}

#[derive(Default)]
struct Executed {
    pair_seeds: Vec<PairSeeds>,
    stamps: Vec<PairStamp>,
    failures: usize,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn canonical(path: &Path) -> PathBuf {
    std::fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_input(invocation: &Invocation, path: &Path) -> Result<(Input, InputRef)> {
    let (input, digest) = match invocation {
        Invocation::Ingest => {
            let l = loaded::from_manifest(path)?;
            let d = l.record.corpus_digest.clone();
            (Input::Corpus(l), d)
        }
        Invocation::Compare { .. } | Invocation::Robustness { .. } => {
            let l = loaded::load(path)?;
            let d = l.record.corpus_digest.clone();
            (Input::Corpus(l), d)
        }
        Invocation::Report { .. } => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let d = hex::encode(Sha256::digest(text.as_bytes()));
            (Input::Matrix(text), d)
        }
    };
    Ok((input, InputRef { path: canonical(path), digest }))
}

fn corpus(input: &Input) -> &Loaded {
    match input {
        Input::Corpus(l) => l,
        Input::Matrix(_) => unreachable!("corpus commands load a corpus"),
    }
}

/// SHA-256 of every file below `dir`, keyed by `/`-separated relative path.
fn hash_tree(dir: &Path) -> Result<BTreeMap<String, String>> {
    fn walk(base: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> Result<()> {
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_dir() {
                walk(base, &path, out)?;
            } else {
                let rel = path.strip_prefix(base)?.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
                out.insert(rel, hex::encode(Sha256::digest(std::fs::read(&path)?)));
            }
        }
        Ok(())
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out)?;
    out.remove(MANIFEST);
    Ok(out)
}

/// Runs `invocation` into the store (or `out`); returns the directory and
/// whether some pairs failed.
fn run_invocation(
    root: &Path,
    invocation: Invocation,
    input: Input,
    input_ref: InputRef,
    out: Option<&Path>,
    jobs: usize,
) -> Result<(PathBuf, bool)> {
    let key = store::content_hash(&(&invocation, &input_ref.digest))?;
    let staging = match store::target(root, invocation.store_kind(), &key, out, MANIFEST)? {
        Target::Existing(dir) => {
            log::info!("unchanged inputs; reusing {}", dir.display());
            let partial = dir.join(FAILURES).exists();
            return Ok((dir, partial));
        }
        Target::Fresh(s) => s,
    };
    let started_at = now();
    let done = execute(&invocation, &input, &staging, jobs.max(1))?;
    let (corpus_files, normalization_divisor) = match &input {
        Input::Corpus(l) => (
            l.record.languages.iter().map(|x| CorpusFile { id: x.id.clone(), digest: x.digest.clone() }).collect(),
            Some(l.record.normalization_divisor),
        ),
        Input::Matrix(_) => (Vec::new(), None),
    };
    let config = invocation.config();
    let manifest = RunManifest {
        tool: "lingan".into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        corpus_files,
        normalization_divisor,
        global_seed: config.map(|c| c.gan.seed),
        gan_config: config.map(|c| c.gan.clone()),
        train_tile_index: config.map(|c| c.train_tile_index),
        test_tile_index: config.map(|c| c.test_tile_index),
        parameter_count: config.map(|c| Architecture::reference(c.gan.latent_dim).param_count()),
        pair_seeds: done.pair_seeds,
        started_at,
        finished_at: now(),
        pair_finished_at: done.stamps,
        outputs: hash_tree(staging.path())?,
        invocation,
        input: input_ref,
    };
    staging.write_json(MANIFEST, &manifest)?;
    let dest = staging.commit()?;
    Ok((dest, done.failures > 0))
}

fn finish((dir, partial): (PathBuf, bool)) -> Outcome {
    let failures = partial.then(|| dir.join(FAILURES));
    Outcome { dir, failures }
}

fn execute(invocation: &Invocation, input: &Input, staging: &Staging, jobs: usize) -> Result<Executed> {
    match invocation {
        Invocation::Ingest => execute_ingest(corpus(input), staging),
        Invocation::Compare { pair, config, save_trials } => execute_compare(corpus(input), pair.as_ref(), config, *save_trials, staging, jobs),
        Invocation::Report { radar, tables } => match input {
            Input::Matrix(text) => execute_report(text, *radar, *tables, staging),
            Input::Corpus(_) => unreachable!("report reads a matrix"),
        },
        Invocation::Robustness { experiment, languages, pairs, seeds, config } => {
            let plan = AblationPlan {
                baseline: ExperimentConfig::new(languages.clone(), config.clone()),
                pairs: pairs.clone(),
                seeds: seeds.clone(),
                jobs,
            };
            execute_robustness(corpus(input), experiment, &plan, staging)
        }
    }
}

pub fn ingest(root: &Path, manifest: &Path) -> Result<Outcome> {
    let (input, input_ref) = load_input(&Invocation::Ingest, manifest)?;
    Ok(finish(run_invocation(root, Invocation::Ingest, input, input_ref, None, 1)?))
}

fn execute_ingest(loaded: &Loaded, staging: &Staging) -> Result<Executed> {
    staging.write_json(loaded::INGEST_RECORD, &loaded.record)?;
    staging.write_json(loaded::SEQUENCES, &loaded.sequences)?;
    staging.write_json(loaded::FINGERPRINTS, &loaded.fingerprints)?;
    for set in &loaded.fingerprints {
        let dir = staging.path().join(&set.language_id);
        std::fs::create_dir_all(&dir)?;
        for tile in &set.tiles {
            render_tile(tile, &dir.join(format!("tile_{}", tile.tile_index)))?;
        }
        log::info!("{}: {} tiles", set.language_id, set.tiles.len());
    }
    Ok(Executed::default())
}

fn check_language(loaded: &Loaded, id: &str) -> Result<()> {
    if loaded.fingerprints.iter().any(|f| f.language_id == id) {
        Ok(())
    } else {
        bail!(ProtocolError::UnknownLanguage(id.to_string()))
    }
}

fn check_pair(loaded: &Loaded, a: &str, b: &str) -> Result<()> {
    if a == b {
        bail!(ProtocolError::SelfComparison(a.to_string()));
    }
    check_language(loaded, a)?;
    check_language(loaded, b)
}

pub fn compare(root: &Path, args: CompareArgs) -> Result<Outcome> {
    let config = args.run.compare_config();
    config.gan.validate()?;
    let pair = args.pair.map(|p| (p[0].clone(), p[1].clone()));
    if let Some((a, b)) = &pair {
        if a == b {
            bail!(ProtocolError::SelfComparison(a.clone()));
        }
    }
    let invocation = Invocation::Compare { pair, config, save_trials: args.save_trials };
    let (input, input_ref) = load_input(&invocation, &args.corpus)?;
    if let Invocation::Compare { pair: Some((a, b)), .. } = &invocation {
        check_pair(corpus(&input), a, b)?;
    }
    Ok(finish(run_invocation(root, invocation, input, input_ref, args.run.out.as_deref(), args.run.jobs)?))
}

const TRIALS_HEADER: &str =
    "language_a,language_b,train,test,trial_seed,c_train_fake,c_test_fake,rho,rho_linearized,skipped_epochs,window_std,mode_collapse,final_gen_loss";

fn trial_rows(run: &PairRun<Real>) -> String {
    let mut out = String::new();
    for t in &run.trials {
        let m = &t.measure;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:?},{:?},{:?},{:?},{},{:?},{},{:?}",
            run.result.a,
            run.result.b,
            t.spec.train_language,
            t.spec.test_language,
            t.spec.gan_config.seed,
            m.c_train_fake,
            m.c_test_fake,
            m.rho,
            m.rho_linearized,
            m.skipped_epochs,
            t.trace.window_std,
            t.trace.mode_collapse_flag,
            t.trace.gen_loss.last().copied().unwrap_or(f64::NAN),
        );
    }
    out
}

/// Weights, loss trace and every emitted fake of both trials.
fn save_trials(staging: &Staging, run: &PairRun<Real>) -> Result<()> {
    for t in &run.trials {
        let rel = PathBuf::from("trials").join(format!("{}__{}", t.spec.train_language, t.spec.test_language));
        staging.write(rel.join("trace.csv"), t.trace.to_csv())?;
        staging.write(rel.join("weights.bin"), t.params.to_bytes())?;
        let fakes = staging.path().join(&rel).join("fakes");
        std::fs::create_dir_all(&fakes)?;
        for f in &t.fakes.fakes {
            let base = fakes.join(format!("epoch_{:05}", f.epoch));
            render_tile(&f.tile, &base)?;
        }
    }
    Ok(())
}

fn execute_compare(
    loaded: &Loaded,
    pair: Option<&(String, String)>,
    config: &CompareConfig,
    keep_trials: bool,
    staging: &Staging,
    jobs: usize,
) -> Result<Executed> {
    let fps = &loaded.fingerprints;
    let rows: Mutex<BTreeMap<(String, String), String>> = Mutex::new(BTreeMap::new());
    let stamps: Mutex<Vec<PairStamp>> = Mutex::new(Vec::new());
    let save_error: Mutex<Option<anyhow::Error>> = Mutex::new(None);
    let on_pair = |run: &PairRun<Real>| {
        let (a, b) = (run.result.a.clone(), run.result.b.clone());
        log::info!("{a} vs {b}: xi {:.6} nu {:.6} d1 {:.6}", run.result.xi, run.result.nu, run.result.d1);
        if keep_trials {
            if let Err(e) = save_trials(staging, run) {
                save_error.lock().expect("no panics while locked").get_or_insert(e);
            }
        }
        stamps.lock().expect("no panics while locked").push(PairStamp { a: a.clone(), b: b.clone(), finished_at: now() });
        rows.lock().expect("no panics while locked").insert((a, b), trial_rows(run));
    };
    let (pairs, matrix, failures) = match pair {
        Some((a, b)) => {
            let run = compare_pair(a, b, fps, config)?;
            on_pair(&run);
            let matrix = DistanceMatrix { languages: vec![a.clone(), b.clone()], entries: vec![run.result] };
            (vec![(a.clone(), b.clone())], matrix, Vec::new())
        }
        None => {
            let ids = loaded.ids();
            let all = all_pairs_of(fps, &ids, config, jobs, &on_pair)?;
            (pair_list(&ids), all.matrix, all.failures)
        }
    };
    if let Some(e) = save_error.into_inner().expect("no panics while locked") {
        return Err(e);
    }
    let seed = config.gan.seed;
    staging.write("matrix.csv", report::matrix_csv(&matrix, seed))?;
    let rows = rows.into_inner().expect("no panics while locked");
    let mut trials = format!("{TRIALS_HEADER}\n");
    for p in &pairs {
        if let Some(r) = rows.get(p) {
            trials.push_str(r);
        }
    }
    staging.write("trials.csv", trials)?;
    if !failures.is_empty() {
        staging.write_json(FAILURES, &failures)?;
    }
    let mut stamps = stamps.into_inner().expect("no panics while locked");
    stamps.sort_by_key(|s| pairs.iter().position(|(a, b)| *a == s.a && *b == s.b));
    Ok(Executed { pair_seeds: seeds_for(&pairs, &[seed]), stamps, failures: failures.len() })
}

fn seeds_for(pairs: &[(String, String)], seeds: &[u64]) -> Vec<PairSeeds> {
    seeds
        .iter()
        .flat_map(|&s| {
            pairs.iter().map(move |(a, b)| PairSeeds {
                global_seed: s,
                a: a.clone(),
                b: b.clone(),
                trial_seeds: [trial_seed(s, a, b, a), trial_seed(s, a, b, b)],
            })
        })
        .collect()
}

pub fn report(root: &Path, args: ReportArgs) -> Result<Outcome> {
    let (radar, tables) = if args.radar || args.tables { (args.radar, args.tables) } else { (true, true) };
    let invocation = Invocation::Report { radar, tables };
    let (input, input_ref) = load_input(&invocation, &args.matrix)?;
    Ok(finish(run_invocation(root, invocation, input, input_ref, args.out.as_deref(), 1)?))
}

fn execute_report(text: &str, radar: bool, tables: bool, staging: &Staging) -> Result<Executed> {
    let (matrix, _) = report::parse_matrix_csv(text)?;
    matrix.validate().context("reports need a complete distance matrix")?;
    let geometries = [("euclidean", [Metric::D1, Metric::D2]), ("manhattan", [Metric::D1M, Metric::D2M])];
    if radar {
        for (name, metrics) in geometries {
            let scale = matrix.max_distance(metrics[0]).max(matrix.max_distance(metrics[1]));
            for language in &matrix.languages {
                staging.write(format!("radar/{language}_{name}.svg"), report::radar_svg(&matrix, language, metrics, scale))?;
            }
        }
    }
    if tables {
        let orderings = rank_affinities(&matrix)?;
        for (name, _) in geometries {
            let (md, csv) = report::affinity_tables(&matrix, &orderings, name == "manhattan");
            staging.write(format!("table_{name}.md"), md)?;
            staging.write(format!("table_{name}.csv"), csv)?;
        }
    }
    Ok(Executed::default())
}

pub fn robustness(root: &Path, which: RobustnessCommand) -> Result<Outcome> {
    let (common, experiment) = match which {
        RobustnessCommand::Filters { common, filters } => {
            let filters = if filters.is_empty() {
                DEFAULT_FILTERS.iter().map(|s| s.parse()).collect::<Result<_, _>>()?
            } else {
                filters
            };
            (common, Experiment::Filters { filters })
        }
        RobustnessCommand::Critic { common } => (common, Experiment::Critic),
        RobustnessCommand::Loss { common } => (common, Experiment::Loss),
        RobustnessCommand::Epochs { common, grid } => (common, Experiment::Epochs { grid }),
        RobustnessCommand::AddLanguage { common, language } => (common, Experiment::AddLanguage { language }),
        RobustnessCommand::Jackknife { common, a, b } => (common, Experiment::Jackknife { a, b }),
    };
    let count = common.seeds.unwrap_or(if experiment == Experiment::Critic { 5 } else { 3 });
    if count == 0 {
        bail!("--seeds must be at least 1");
    }
    let seeds: Vec<u64> = (0..count as u64).map(|k| common.run.seed.wrapping_add(k)).collect();
    let config = common.run.compare_config();
    config.gan.validate()?;
    let probe = Invocation::Robustness { experiment: experiment.clone(), languages: Vec::new(), pairs: Vec::new(), seeds: Vec::new(), config: config.clone() };
    let (input, input_ref) = load_input(&probe, &common.corpus)?;
    let loaded = corpus(&input);
    let mut languages = loaded.ids();
    match &experiment {
        Experiment::AddLanguage { language } => {
            check_language(loaded, language)?;
            languages.retain(|l| l != language);
        }
        Experiment::Jackknife { a, b } => check_pair(loaded, a, b)?,
        _ => {}
    }
    let pairs: Vec<(String, String)> = common.pair.map(|p| vec![(p[0].clone(), p[1].clone())]).unwrap_or_default();
    for (a, b) in &pairs {
        check_pair(loaded, a, b)?;
        if !languages.contains(a) || !languages.contains(b) {
            bail!("pair ({a}, {b}) is not within the baseline roster");
        }
    }
    let invocation = Invocation::Robustness { experiment, languages, pairs, seeds, config };
    Ok(finish(run_invocation(root, invocation, input, input_ref, common.run.out.as_deref(), common.run.jobs)?))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

const ABLATION_HEADER: &str = "variant,changed_fields,baseline_mean_abs_pearson,variant_mean_abs_pearson,pearson_delta,verdict,baseline_discrimination,variant_discrimination,discrimination_p_value,mode_collapses";

fn ablation_row(out: &mut String, variant: &str, fields: &[String], base: &VariantMetrics, var: &VariantMetrics, delta: Option<f64>, verdict: &str, p: Option<f64>) {
    let _ = writeln!(
        out,
        "{variant},{},{},{},{},{verdict},{:?},{:?},{},{}",
        fields.join(";"),
        opt(base.mean_abs_pearson),
        opt(var.mean_abs_pearson),
        opt(delta),
        base.mean_discrimination,
        var.mean_discrimination,
        opt(p),
        var.mode_collapses
    );
}

fn ablation_csv(reports: &[AblationReport]) -> String {
    let mut out = format!("{ABLATION_HEADER}\n");
    for r in reports {
        let fields: Vec<String> = r.diff.iter().map(|d| d.field.clone()).collect();
        let p = r.discrimination_test.as_ref().map(|t| t.p_value);
        ablation_row(&mut out, &r.variant, &fields, &r.baseline_metrics, &r.variant_metrics, r.pearson_delta, &r.verdict.to_string(), p);
    }
    out
}

fn announce(reports: &[AblationReport]) {
    for r in reports {
        let changed: Vec<&str> = r.diff.iter().map(|d| d.field.as_str()).collect();
        log::info!("{}: {} (delta {}, changed {})", r.variant, r.verdict, opt(r.pearson_delta), changed.join(", "));
        if !r.single_field() {
            log::warn!("{} changes more than one setting", r.variant);
        }
    }
}

fn write_reports(staging: &Staging, reports: &[AblationReport]) -> Result<()> {
    announce(reports);
    staging.write_json("report.json", &reports)?;
    staging.write("report.csv", ablation_csv(reports))
}

fn jackknife_tables(r: &JackknifeReport) -> (String, String) {
    let t = &r.table;
    let (a, b) = (&t.a, &t.b);
    let mut csv = format!("secondary_fakes,vs_{a}_primary,vs_{b}_primary,vs_{a}_real,vs_{b}_real,discrimination\n");
    for (i, (src, dst)) in [(a, b), (b, a)].into_iter().enumerate() {
        let _ = writeln!(
            csv,
            "{src}->{dst},{:?},{:?},{:?},{:?},{:?}",
            t.primary[i][0], t.primary[i][1], t.raw[i][0], t.raw[i][1], t.discrimination[i]
        );
    }
    let mut md = format!("| secondary fakes | vs {a} primary | vs {b} primary |\n|---|---|---|\n");
    for (i, (src, dst)) in [(a, b), (b, a)].into_iter().enumerate() {
        let _ = writeln!(md, "| {src} → {dst} | {:.4} | {:.4} |", t.primary[i][0], t.primary[i][1]);
    }
    let _ = writeln!(
        md,
        "\nSecondary fakes vs their training fake: {:.4}. Primary fakes vs real tile: {:.4}.",
        t.secondary_vs_training, t.primary_vs_real
    );
    (md, csv)
}

fn execute_robustness(loaded: &Loaded, experiment: &Experiment, plan: &AblationPlan, staging: &Staging) -> Result<Executed> {
    let fps = &loaded.fingerprints;
    let mut pairs = if plan.pairs.is_empty() { pair_list(&plan.baseline.languages) } else { plan.pairs.clone() };
    match experiment {
        Experiment::Filters { filters } => {
            let base = robustness::baseline(fps, plan)?;
            write_reports(staging, &robustness::filter_ablation(fps, plan, &base, filters)?)?;
        }
        Experiment::Critic => {
            let base = robustness::baseline(fps, plan)?;
            write_reports(staging, &[robustness::critic_learnable_ablation(fps, plan, &base)?])?;
        }
        Experiment::Loss => {
            let base = robustness::baseline(fps, plan)?;
            let loss = robustness::loss_ablation(fps, plan, &base)?;
            announce(&loss.reports);
            let mut csv = ablation_csv(&loss.reports);
            let both = ["compare.gan.critic_loss".to_string(), "compare.gan.gen_loss".to_string()];
            ablation_row(&mut csv, "both losses mse (smoke)", &both, &base, &loss.both_mse, None, "not_assessed", None);
            staging.write_json("report.json", &loss)?;
            staging.write("report.csv", csv)?;
        }
        Experiment::Epochs { grid } => {
            let base = robustness::baseline(fps, plan)?;
            write_reports(staging, &robustness::epoch_scaling(fps, plan, &base, grid)?)?;
        }
        Experiment::AddLanguage { language } => {
            let baseline_fps = loaded.without(language)?;
            let base = robustness::baseline(&baseline_fps, plan)?;
            let report = robustness::add_language(&baseline_fps, fps, plan, &base, language)?;
            if let Some(d) = &report.add_language {
                let order: Vec<&str> = d.ordering.ids(Metric::D1);
                log::info!("{language}: nearest by d1 {}; existing pairs unchanged: {}", order.join(", "), d.existing_unchanged);
            }
            write_reports(staging, std::slice::from_ref(&report))?;
            pairs.extend(plan.baseline.languages.iter().map(|l| (l.clone(), language.clone())));
        }
        Experiment::Jackknife { a, b } => {
            let report = robustness::secondary_fake_bootstrap(a, b, fps, &plan.baseline.compare, &plan.seeds, plan.jobs)?;
            let (md, csv) = jackknife_tables(&report);
            log::info!("{}", md.trim_end());
            staging.write_json("report.json", &report)?;
            staging.write("report.csv", csv)?;
            staging.write("report.md", md)?;
            pairs = vec![(a.clone(), b.clone())];
        }
    }
    Ok(Executed { pair_seeds: seeds_for(&pairs, &plan.seeds), ..Executed::default() })
}

pub fn replay(root: &Path, run: &Path, corpus_override: Option<&Path>, jobs: usize, out: &Path) -> Result<Outcome> {
    let manifest_path = if run.is_dir() { run.join(MANIFEST) } else { run.to_path_buf() };
    let recorded: RunManifest = read_json(&manifest_path)?;
    let path = corpus_override.map(Path::to_path_buf).unwrap_or_else(|| recorded.input.path.clone());
    let (input, input_ref) = load_input(&recorded.invocation, &path)?;
    if input_ref.digest != recorded.input.digest {
        bail!("{} has digest {} but the recorded run read {}", path.display(), input_ref.digest, recorded.input.digest);
    }
    let (dir, _) = run_invocation(root, recorded.invocation.clone(), input, input_ref, Some(out), jobs)?;
    let fresh: RunManifest = read_json(&dir.join(MANIFEST))?;
    let keys: std::collections::BTreeSet<&String> = recorded.outputs.keys().chain(fresh.outputs.keys()).collect();
    let differing: Vec<&String> = keys.into_iter().filter(|k| recorded.outputs.get(*k) != fresh.outputs.get(*k)).collect();
    if !differing.is_empty() {
        let list: Vec<&str> = differing.iter().map(|s| s.as_str()).collect();
        bail!("replay differs from the recorded run in: {}", list.join(", "));
    }
    log::info!("replay reproduced all {} files", fresh.outputs.len());
    Ok(Outcome { dir, failures: None })
}
