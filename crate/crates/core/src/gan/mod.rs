//! Convolutional generator/critic pair trained on a single tile.
//!
//! Everything is deterministic given `(seed, config, tile)`: initialization
//! and latent noise come from seeded ChaCha streams and the linear algebra is
//! single-threaded.

mod adam;
mod gradcheck;
pub mod network;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fingerprint::{Tile, TILE_CELLS, TILE_SIDE};
use crate::scalar::Scalar;

pub use gradcheck::{gradient_check, GradCheck, GradCheckReport, NetworkId};
pub use network::{Activation, LayerKind, LayerSpec, NetworkSpec, Shape};
pub use train::{emit_schedule, train, train_with_init, TrainOutcome};

/// Inclusive bounds on the total parameter count of a model.
pub const PARAM_BUDGET: (usize, usize) = (200_000, 600_000);

const INIT_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

#[derive(Debug, Error)]
pub enum GanError {
    #[error("invalid GAN configuration: {0}")]
    InvalidConfig(String),
    #[error("model has {count} parameters, outside the budget [{}, {}]", PARAM_BUDGET.0, PARAM_BUDGET.1)]
    ParamBudget { count: usize },
    #[error("training tile `{language}`[{index}] is empty")]
    EmptyTrainingTile { language: String, index: u8 },
    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize, trace: Box<TrainingTrace> },
    #[error("latent vector has {got} components, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("no fakes to evaluate")]
    NoFakes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    BinaryCrossEntropy,
    MeanSquaredError,
}

impl LossKind {
    /// Loss on a critic logit for target label `target` (1 = real).
    pub fn value<S: Scalar>(self, logit: S, target: S) -> S {
        match self {
            LossKind::BinaryCrossEntropy => logit.max(S::zero()) - logit * target + (S::one() + (-logit.abs()).exp()).ln(),
            LossKind::MeanSquaredError => {
                let p = network::sigmoid(logit);
                (p - target) * (p - target)
            }
        }
    }

    /// Derivative of [`LossKind::value`] with respect to the logit.
    pub fn grad<S: Scalar>(self, logit: S, target: S) -> S {
        let p = network::sigmoid(logit);
        match self {
            LossKind::BinaryCrossEntropy => p - target,
            LossKind::MeanSquaredError => S::lit(2.0) * (p - target) * p * (S::one() - p),
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossKind::BinaryCrossEntropy => "bce",
            LossKind::MeanSquaredError => "mse",
        })
    }
}

impl std::str::FromStr for LossKind {
    type Err = GanError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bce" | "binary-cross-entropy" => Ok(LossKind::BinaryCrossEntropy),
            "mse" | "mean-squared-error" => Ok(LossKind::MeanSquaredError),
            other => Err(GanError::InvalidConfig(format!("unknown loss {other:?}"))),
        }
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanConfig {
    pub epochs: usize,
    pub latent_dim: usize,
    pub gen_lr: f64,
    pub critic_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub gen_loss: LossKind,
    pub critic_loss: LossKind,
    /// When false the critic keeps its initial weights for the whole run.
    pub critic_learnable: bool,
    pub emit_stride: usize,
    pub emit_window: usize,
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig {
            epochs: 1600,
            latent_dim: 64,
            gen_lr: 2e-4,
            critic_lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            gen_loss: LossKind::BinaryCrossEntropy,
            critic_loss: LossKind::BinaryCrossEntropy,
            critic_learnable: false,
            emit_stride: 16,
            emit_window: 400,
            seed: 0,
        }
    }
}

impl GanConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        GanConfig { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), GanError> {
        let bad = |m: String| Err(GanError::InvalidConfig(m));
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if self.latent_dim == 0 {
            return bad("latent_dim must be positive".into());
        }
        for (name, lr) in [("gen_lr", self.gen_lr), ("critic_lr", self.critic_lr)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(format!("{name} must be positive, got {lr}"));
            }
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {b}"));
            }
        }
        if self.emit_stride == 0 || self.emit_window == 0 {
            return bad("emit_stride and emit_window must be positive".into());
        }
        if self.emit_stride > self.emit_window {
            return bad(format!("emit_stride {} exceeds emit_window {}", self.emit_stride, self.emit_window));
        }
        Ok(())
    }
}

/// The two network descriptors plus the latent size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub latent_dim: usize,
    pub generator: NetworkSpec,
    pub critic: NetworkSpec,
}

impl Architecture {
    /// Generator: dense to 128×4×4, four transposed convolutions
    /// 128→64→32→16→1 with a sigmoid output. Critic: four convolutions
    /// 1→16→32→64→64 with leaky ramps, then a dense logit.
    pub fn reference(latent_dim: usize) -> Self {
        use Activation::*;
        let seed_shape = Shape::new(128, 4, 4);
        let g0 = LayerSpec::dense(Shape::flat(latent_dim), seed_shape, Relu);
        let g1 = LayerSpec::conv_transpose(g0.output, 64, Relu);
        let g2 = LayerSpec::conv_transpose(g1.output, 32, Relu);
        let g3 = LayerSpec::conv_transpose(g2.output, 16, Relu);
        let g4 = LayerSpec::conv_transpose(g3.output, 1, Sigmoid);
        let c0 = LayerSpec::conv(Shape::new(1, TILE_SIDE, TILE_SIDE), 16, LeakyRelu);
        let c1 = LayerSpec::conv(c0.output, 32, LeakyRelu);
        let c2 = LayerSpec::conv(c1.output, 64, LeakyRelu);
        let c3 = LayerSpec::conv(c2.output, 64, LeakyRelu);
        let c4 = LayerSpec::dense(c3.output, Shape::flat(1), Identity);
        Architecture {
            latent_dim,
            generator: NetworkSpec { layers: vec![g0, g1, g2, g3, g4] },
            critic: NetworkSpec { layers: vec![c0, c1, c2, c3, c4] },
        }
    }

    pub fn param_count(&self) -> usize {
        self.generator.param_count() + self.critic.param_count()
    }

    fn check(&self) -> Result<(), GanError> {
        let count = self.param_count();
        if count < PARAM_BUDGET.0 || count > PARAM_BUDGET.1 {
            return Err(GanError::ParamBudget { count });
        }
        if self.generator.output().len() != TILE_CELLS || self.critic.input().len() != TILE_CELLS {
            return Err(GanError::InvalidConfig("networks must map to and from 64×64 tiles".into()));
        }
        if self.generator.input().len() != self.latent_dim || self.critic.output().len() != 1 {
            return Err(GanError::InvalidConfig("latent or logit width mismatch".into()));
        }
        Ok(())
    }
}

/// Flat weights for both networks.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<S> {
    pub architecture: Architecture,
    pub generator: Vec<S>,
    pub critic: Vec<S>,
}

impl<S: Scalar> ModelParams<S> {
    pub fn param_count_total(&self) -> usize {
        self.generator.len() + self.critic.len()
    }

    pub fn all_finite(&self) -> bool {
        self.generator.iter().chain(&self.critic).all(|v| v.is_finite())
    }

    /// Little-endian dump: generator weights then critic weights.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.param_count_total() * S::BYTES);
        for &v in self.generator.iter().chain(&self.critic) {
            v.to_le_bytes_vec(&mut out);
        }
        out
    }

    pub fn from_bytes(architecture: Architecture, bytes: &[u8]) -> Result<Self, GanError> {
        let g = architecture.generator.param_count();
        let c = architecture.critic.param_count();
        if bytes.len() != (g + c) * S::BYTES {
            return Err(GanError::InvalidConfig(format!("weight dump has {} bytes, expected {}", bytes.len(), (g + c) * S::BYTES)));
        }
        let mut values = bytes.chunks_exact(S::BYTES).map(S::from_le_slice);
        let generator = values.by_ref().take(g).collect();
        let critic = values.collect();
        Ok(ModelParams { architecture, generator, critic })
    }

    /// Critic probability that `tile` is real.
    pub fn critic_score(&self, tile: &Tile<S>) -> S {
        let cache = self.architecture.critic.forward(&self.critic, &tile.values);
        network::sigmoid(cache.output()[0])
    }
}

/// Deterministic uniform `±1/√fan_in` initialization for both networks.
pub fn init_params<S: Scalar>(config: &GanConfig) -> Result<ModelParams<S>, GanError> {
    init_with_architecture(Architecture::reference(config.latent_dim), config.seed)
}

pub fn init_with_architecture<S: Scalar>(architecture: Architecture, seed: u64) -> Result<ModelParams<S>, GanError> {
    architecture.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(INIT_STREAM);
    let mut fill = |spec: &NetworkSpec| -> Vec<S> {
        let mut out = Vec::with_capacity(spec.param_count());
        for layer in &spec.layers {
            let bound = 1.0 / (layer.fan_in() as f64).sqrt();
            for _ in 0..layer.param_count() {
                out.push(S::lit(rng.random_range(-bound..bound)));
            }
        }
        out
    };
    let generator = fill(&architecture.generator);
    let critic = fill(&architecture.critic);
    Ok(ModelParams { architecture, generator, critic })
}

pub(crate) fn noise_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(NOISE_STREAM);
    rng
}

pub(crate) fn sample_noise<S: Scalar>(rng: &mut ChaCha8Rng, dim: usize) -> Vec<S> {
    use rand_distr::{Distribution, StandardNormal};
    (0..dim)
        .map(|_| {
            let v: f64 = StandardNormal.sample(rng);
            S::lit(v)
        })
        .collect()
}

/// Forward pass of the generator on one latent vector.
pub fn generate<S: Scalar>(params: &ModelParams<S>, noise: &[S]) -> Result<Tile<S>, GanError> {
    let expected = params.architecture.latent_dim;
    if noise.len() != expected {
        return Err(GanError::Dimension { expected, got: noise.len() });
    }
    let cache = params.architecture.generator.forward(&params.generator, noise);
    Ok(Tile::generated(cache.output().to_vec(), "generated", 0))
}

/// One fake captured by the emit schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar + Serialize + serde::de::DeserializeOwned")]
pub struct EmittedFake<S> {
    pub epoch: usize,
    pub tile: Tile<S>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar + Serialize + serde::de::DeserializeOwned")]
pub struct FakeSeries<S> {
    pub fakes: Vec<EmittedFake<S>>,
    /// Epochs selected by the emit schedule.
    pub schedule: Vec<usize>,
}

impl<S: Scalar> FakeSeries<S> {
    pub fn last(&self) -> Option<&Tile<S>> {
        self.fakes.last().map(|f| &f.tile)
    }
}

/// Per-epoch losses and critic accuracy.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub gen_loss: Vec<f64>,
    pub critic_loss: Vec<f64>,
    /// Fraction of the epoch's real/fake pair the critic labelled correctly.
    pub critic_accuracy: Vec<f64>,
    /// Mean over cells of the standard deviation across the final window's fakes.
    pub window_std: f64,
    pub mode_collapse_flag: bool,
}

impl TrainingTrace {
    pub fn len(&self) -> usize {
        self.gen_loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gen_loss.is_empty()
    }

    /// CSV with header `epoch,gen_loss,critic_loss,critic_accuracy`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,gen_loss,critic_loss,critic_accuracy\n");
        for i in 0..self.len() {
            out.push_str(&format!("{},{:?},{:?},{:?}\n", i + 1, self.gen_loss[i], self.critic_loss[i], self.critic_accuracy[i]));
        }
        out
    }

    /// 1-based epoch of the smallest centered moving average of the generator loss.
    pub fn loss_optimum(&self, window: usize) -> Option<usize> {
        let n = self.len();
        if n == 0 {
            return None;
        }
        let half = window / 2;
        (0..n)
            .map(|i| {
                let lo = i.saturating_sub(half);
                let hi = (i + half + 1).min(n);
                let m = self.gen_loss[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
                (i + 1, m)
            })
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
            .map(|(e, _)| e)
    }
}

/// Fraction of `fakes` the critic scores below 0.5 (i.e. calls fake).
pub fn discrimination_rate<S: Scalar>(params: &ModelParams<S>, fakes: &FakeSeries<S>) -> Result<f64, GanError> {
    if fakes.fakes.is_empty() {
        return Err(GanError::NoFakes);
    }
    let caught = fakes.fakes.iter().filter(|f| params.critic_score(&f.tile) < S::lit(0.5)).count();
    Ok(caught as f64 / fakes.fakes.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Parameter count summed by hand from the layer dimensions.
    const REFERENCE_PARAMS_LATENT_64: usize = {
        let dense = 64 * 2048 + 2048;
        let t1 = 128 * 64 * 16 + 64;
        let t2 = 64 * 32 * 16 + 32;
        let t3 = 32 * 16 * 16 + 16;
        let t4 = 16 * 16 + 1;
        let c1 = 16 * 16 + 16;
        let c2 = 16 * 32 * 16 + 32;
        let c3 = 32 * 64 * 16 + 64;
        let c4 = 64 * 64 * 16 + 64;
        let head = 1024 + 1;
        dense + t1 + t2 + t3 + t4 + c1 + c2 + c3 + c4 + head
    };

    #[test]
    fn reference_param_count() {
        let p: ModelParams<f64> = init_params(&GanConfig::default()).unwrap();
        assert_eq!(p.param_count_total(), REFERENCE_PARAMS_LATENT_64);
        assert_eq!(REFERENCE_PARAMS_LATENT_64, 413_474);
        let target = 350_000.0;
        assert!((p.param_count_total() as f64 - target).abs() <= 0.2 * target);
    }

    #[test]
    fn budget_violation_is_an_error() {
        let cfg = GanConfig { latent_dim: 200, ..GanConfig::default() };
        assert!(matches!(init_params::<f64>(&cfg), Err(GanError::ParamBudget { .. })));
    }

    #[test]
    fn init_is_deterministic() {
        let cfg = GanConfig::default().with_seed(11);
        let a: ModelParams<f64> = init_params(&cfg).unwrap();
        let b: ModelParams<f64> = init_params(&cfg).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        let c: ModelParams<f64> = init_params(&cfg.with_seed(12)).unwrap();
        assert_ne!(a.generator, c.generator);
        assert!(a.all_finite());
        let back = ModelParams::<f64>::from_bytes(a.architecture.clone(), &a.to_bytes()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn generate_contract() {
        let p: ModelParams<f64> = init_params(&GanConfig::default()).unwrap();
        let z = vec![0.3; 64];
        let a = generate(&p, &z).unwrap();
        assert_eq!(a, generate(&p, &z).unwrap());
        assert_eq!(a.values.len(), TILE_CELLS);
        let zero = generate(&p, &vec![0.0; 64]).unwrap();
        assert!(zero.values.iter().all(|v| (0.0..=1.0).contains(v)));
        zero.validate().unwrap();
        assert!(matches!(generate(&p, &[0.0; 3]), Err(GanError::Dimension { expected: 64, got: 3 })));
    }

    #[test]
    fn losses_and_gradients() {
        for kind in [LossKind::BinaryCrossEntropy, LossKind::MeanSquaredError] {
            for &(l, t) in &[(0.7f64, 1.0f64), (-2.0, 0.0), (5.0, 0.0), (-30.0, 1.0)] {
                let h = 1e-6;
                let fd = (kind.value(l + h, t) - kind.value(l - h, t)) / (2.0 * h);
                assert!((fd - kind.grad(l, t)).abs() < 1e-6, "{kind} {l} {t}");
            }
        }
        let bce = LossKind::BinaryCrossEntropy.value(0.0f64, 1.0);
        assert!((bce - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(LossKind::BinaryCrossEntropy.value(-800.0f64, 1.0).is_finite());
    }

    fn series_of(tiles: Vec<Tile<f64>>) -> FakeSeries<f64> {
        FakeSeries { schedule: (1..=tiles.len()).collect(), fakes: tiles.into_iter().enumerate().map(|(i, tile)| EmittedFake { epoch: i + 1, tile }).collect() }
    }

    #[test]
    fn discrimination_rate_endpoints() {
        let mut p: ModelParams<f64> = init_params(&GanConfig::default()).unwrap();
        let fakes = series_of(vec![generate(&p, &vec![0.1; 64]).unwrap(), generate(&p, &vec![-0.4; 64]).unwrap()]);
        // all-zero critic outputs exactly 0.5: strict threshold counts nothing as fake
        p.critic.iter_mut().for_each(|w| *w = 0.0);
        assert_eq!(discrimination_rate(&p, &fakes).unwrap(), 0.0);
        // bias of the logit layer drives every score to ~0
        *p.critic.last_mut().unwrap() = -50.0;
        assert_eq!(discrimination_rate(&p, &fakes).unwrap(), 1.0);
        assert!(matches!(discrimination_rate(&p, &series_of(vec![])), Err(GanError::NoFakes)));
    }

    #[test]
    fn config_validation() {
        assert!(GanConfig::default().validate().is_ok());
        assert!(GanConfig { emit_stride: 500, ..GanConfig::default() }.validate().is_err());
        assert!(GanConfig { beta1: 1.0, ..GanConfig::default() }.validate().is_err());
        assert!(GanConfig { gen_lr: 0.0, ..GanConfig::default() }.validate().is_err());
        assert_eq!("mse".parse::<LossKind>().unwrap(), LossKind::MeanSquaredError);
    }
}
