use crate::fingerprint::{Tile, TILE_CELLS};
use crate::scalar::Scalar;

use super::adam::Adam;
use super::network::ForwardCache;
use super::{init_params, noise_rng, sample_noise, EmittedFake, FakeSeries, GanConfig, GanError, ModelParams, TrainingTrace};

/// Mean per-cell standard deviation below which the final window counts as collapsed.
pub const MODE_COLLAPSE_STD: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct TrainOutcome<S> {
    pub params: ModelParams<S>,
    pub fakes: FakeSeries<S>,
    pub trace: TrainingTrace,
}

/// Epochs (1-based) at which fakes are captured: every `emit_stride`-th epoch
/// of the last `emit_window`, ending at the final epoch. The window is
/// truncated to `epochs` when it would reach before the first epoch.
pub fn emit_schedule(config: &GanConfig) -> Vec<usize> {
    let count = effective_window(config) / config.emit_stride;
    (0..count).rev().map(|k| config.epochs - k * config.emit_stride).collect()
}

fn effective_window(config: &GanConfig) -> usize {
    config.emit_window.min(config.epochs)
}

/// Trains from a fresh seeded initialization.
pub fn train<S: Scalar>(config: &GanConfig, train_tile: &Tile<S>) -> Result<TrainOutcome<S>, GanError> {
    config.validate()?;
    let params = init_params(config)?;
    train_with_init(config, train_tile, params)
}

/// Trains starting from `params`.
pub fn train_with_init<S: Scalar>(config: &GanConfig, train_tile: &Tile<S>, mut params: ModelParams<S>) -> Result<TrainOutcome<S>, GanError> {
    config.validate()?;
    if train_tile.fill_count == 0 {
        return Err(GanError::EmptyTrainingTile { language: train_tile.language_id.clone(), index: train_tile.tile_index });
    }
    if params.architecture.latent_dim != config.latent_dim {
        return Err(GanError::Dimension { expected: config.latent_dim, got: params.architecture.latent_dim });
    }
    if config.emit_window > config.epochs {
        log::warn!("emit window {} exceeds {} epochs; truncating to the available epochs", config.emit_window, config.epochs);
    }
    let schedule = emit_schedule(config);
    let window_start = config.epochs - effective_window(config);

    let arch = params.architecture.clone();
    let (gen_spec, critic_spec) = (&arch.generator, &arch.critic);
    let mut gen_opt = Adam::new(params.generator.len(), config.gen_lr, config.beta1, config.beta2);
    let mut critic_opt = Adam::new(params.critic.len(), config.critic_lr, config.beta1, config.beta2);
    let mut gen_grad = vec![S::zero(); params.generator.len()];
    let mut critic_grad = vec![S::zero(); params.critic.len()];
    let mut rng = noise_rng(config.seed);

    let (one, zero) = (S::one(), S::zero());
    let mut trace = TrainingTrace::default();
    let mut fakes = Vec::with_capacity(schedule.len());
    let mut next_emit = schedule.iter().copied().peekable();
    let mut window = WindowStats::new();

    for epoch in 1..=config.epochs {
        let z: Vec<S> = sample_noise(&mut rng, config.latent_dim);
        let gen_cache = gen_spec.forward(&params.generator, &z);
        let fake = gen_cache.output().to_vec();

        let real_cache = critic_spec.forward(&params.critic, &train_tile.values);
        let fake_cache = critic_spec.forward(&params.critic, &fake);
        let real_logit = real_cache.output()[0];
        let fake_logit = fake_cache.output()[0];
        let critic_loss = config.critic_loss.value(real_logit, one) + config.critic_loss.value(fake_logit, zero);
        let correct = usize::from(real_logit >= zero) + usize::from(fake_logit < zero);

        let gen_view: ForwardCache<S> = if config.critic_learnable {
            critic_grad.iter_mut().for_each(|g| *g = zero);
            let gr = [config.critic_loss.grad(real_logit, one)];
            critic_spec.backward(&params.critic, &real_cache, &gr, Some(&mut critic_grad), false);
            let gf = [config.critic_loss.grad(fake_logit, zero)];
            critic_spec.backward(&params.critic, &fake_cache, &gf, Some(&mut critic_grad), false);
            critic_opt.step(&mut params.critic, &critic_grad);
            critic_spec.forward(&params.critic, &fake)
        } else {
            fake_cache
        };

        let logit = gen_view.output()[0];
        let gen_loss = config.gen_loss.value(logit, one);
        let d_fake = critic_spec.backward(&params.critic, &gen_view, &[config.gen_loss.grad(logit, one)], None, true);
        gen_grad.iter_mut().for_each(|g| *g = zero);
        gen_spec.backward(&params.generator, &gen_cache, &d_fake, Some(&mut gen_grad), false);
        gen_opt.step(&mut params.generator, &gen_grad);

        trace.gen_loss.push(gen_loss.as_f64());
        trace.critic_loss.push(critic_loss.as_f64());
        trace.critic_accuracy.push(correct as f64 / 2.0);
        if !(gen_loss.is_finite() && critic_loss.is_finite()) {
            return Err(GanError::Diverged { epoch, trace: Box::new(trace) });
        }

        if epoch > window_start {
            window.push(&fake);
        }
        if next_emit.peek() == Some(&epoch) {
            next_emit.next();
            fakes.push(EmittedFake { epoch, tile: Tile::generated(fake, &train_tile.language_id, train_tile.tile_index) });
        }
    }

    trace.window_std = window.mean_std();
    trace.mode_collapse_flag = trace.window_std < MODE_COLLAPSE_STD;
    Ok(TrainOutcome { params, fakes: FakeSeries { fakes, schedule }, trace })
}

/// Running per-cell mean and variance (Welford).
struct WindowStats {
    count: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl WindowStats {
    fn new() -> Self {
        WindowStats { count: 0.0, mean: vec![0.0; TILE_CELLS], m2: vec![0.0; TILE_CELLS] }
    }

    fn push<S: Scalar>(&mut self, values: &[S]) {
        self.count += 1.0;
        for ((m, m2), v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(values) {
            let x = v.as_f64();
            let d = x - *m;
            *m += d / self.count;
            *m2 += d * (x - *m);
        }
    }

    fn mean_std(&self) -> f64 {
        if self.count < 2.0 {
            return 0.0;
        }
        self.m2.iter().map(|m2| (m2 / (self.count - 1.0)).sqrt()).sum::<f64>() / TILE_CELLS as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fingerprint::Tile;

    fn small_config() -> GanConfig {
        GanConfig { epochs: 40, emit_window: 20, emit_stride: 4, seed: 5, ..GanConfig::default() }
    }

    fn text_tile() -> Tile<f64> {
        let values: Vec<f64> = (0..TILE_CELLS).map(|i| if i < 3000 { ((i * 31) % 26 + 97) as f64 / 122.0 } else { 0.0 }).collect();
        Tile::new(values, 3000, "t", 0).unwrap()
    }

    #[test]
    fn schedule_shape() {
        let cfg = GanConfig::default();
        let s = emit_schedule(&cfg);
        assert_eq!(s.len(), 25);
        assert_eq!((s[0], *s.last().unwrap()), (1216, 1600));
        let twentieth = GanConfig { emit_stride: 20, ..cfg.clone() };
        assert_eq!(emit_schedule(&twentieth).len(), 20);
        let short = GanConfig { epochs: 300, ..cfg };
        let s = emit_schedule(&short);
        assert_eq!(s.len(), 18);
        assert_eq!(*s.last().unwrap(), 300);
    }

    #[test]
    fn training_is_deterministic_and_shaped() {
        let cfg = small_config();
        let a = train(&cfg, &text_tile()).unwrap();
        let b = train(&cfg, &text_tile()).unwrap();
        assert_eq!(a.fakes, b.fakes);
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.params, b.params);
        assert_eq!(a.fakes.fakes.len(), 5);
        assert_eq!(a.trace.len(), 40);
        assert!(a.trace.critic_accuracy.iter().all(|v| (0.0..=1.0).contains(v)));
        for f in &a.fakes.fakes {
            f.tile.validate().unwrap();
        }
    }

    #[test]
    fn frozen_critic_keeps_initial_weights() {
        let cfg = small_config();
        let init: ModelParams<f64> = init_params(&cfg).unwrap();
        let out = train(&cfg, &text_tile()).unwrap();
        assert_eq!(out.params.critic, init.critic);
        assert_ne!(out.params.generator, init.generator);

        let learn = GanConfig { critic_learnable: true, ..cfg };
        let out = train(&learn, &text_tile()).unwrap();
        assert_ne!(out.params.critic, init.critic);
    }

    #[test]
    fn empty_tile_rejected() {
        let empty = Tile::<f64>::zeros("e", 2);
        assert!(matches!(train(&small_config(), &empty), Err(GanError::EmptyTrainingTile { index: 2, .. })));
    }

    #[test]
    fn loss_settings_change_trace_not_schedule() {
        let base = small_config();
        let mse = GanConfig { gen_loss: super::super::LossKind::MeanSquaredError, critic_learnable: true, ..base.clone() };
        let a = train(&GanConfig { critic_learnable: true, ..base }, &text_tile()).unwrap();
        let b = train(&mse, &text_tile()).unwrap();
        assert_ne!(a.trace.gen_loss, b.trace.gen_loss);
        assert_eq!(a.fakes.schedule, b.fakes.schedule);
        assert_eq!(a.fakes.fakes.len(), b.fakes.fakes.len());
    }

    #[test]
    fn divergence_is_reported() {
        let cfg = GanConfig { gen_lr: 1e150, critic_lr: 1e150, critic_learnable: true, ..small_config() };
        match train(&cfg, &text_tile()) {
            Err(GanError::Diverged { epoch, trace }) => assert_eq!(trace.len(), epoch),
            other => panic!("expected divergence, got {:?}", other.map(|o| o.trace.gen_loss.len())),
        }
    }
}
