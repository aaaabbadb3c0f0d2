//! Finite-difference verification of the hand-written backward passes.
//!
//! Perturbed forward passes reuse the activation slopes of the unperturbed
//! pass, so a ±h step that crosses a ramp kink does not pollute the central
//! difference. Crossings are still counted and reported.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fingerprint::Tile;
use crate::scalar::Scalar;

use super::network::NetworkSpec;
use super::{noise_rng, sample_noise, LossKind, ModelParams};

/// Floor on the relative-error denominator.
const ABS_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkId {
    Generator,
    Critic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub gen_loss: LossKind,
    pub critic_loss: LossKind,
    /// Total sampled weights, spread evenly over all layers of both networks.
    pub samples: usize,
    pub step: f64,
    pub seed: u64,
    /// Negates the analytic gradient of one layer; a mutation control.
    pub corrupt: Option<(NetworkId, usize)>,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            gen_loss: LossKind::BinaryCrossEntropy,
            critic_loss: LossKind::BinaryCrossEntropy,
            samples: 120,
            step: 1e-4,
            seed: 0,
            corrupt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub samples_checked: usize,
    pub kink_crossings: usize,
    /// Location of the worst sample: network, layer, flat parameter index.
    pub worst: Option<(NetworkId, usize, usize)>,
}

/// Compares analytic gradients of the generator loss (w.r.t. generator
/// weights) and the critic loss (w.r.t. critic weights) with central
/// differences on a stratified sample of weights.
pub fn gradient_check<S: Scalar>(params: &ModelParams<S>, tile: &Tile<S>, check: &GradCheck) -> GradCheckReport {
    let arch = &params.architecture;
    let (g_spec, c_spec) = (&arch.generator, &arch.critic);
    let z: Vec<S> = sample_noise(&mut noise_rng(check.seed), arch.latent_dim);
    let (one, zero) = (S::one(), S::zero());

    // analytic gradients at the base point
    let g_cache = g_spec.forward(&params.generator, &z);
    let fake = g_cache.output().to_vec();
    let real_cache = c_spec.forward(&params.critic, &tile.values);
    let fake_cache = c_spec.forward(&params.critic, &fake);

    let mut g_grad = vec![S::zero(); params.generator.len()];
    let logit = fake_cache.output()[0];
    let d_fake = c_spec.backward(&params.critic, &fake_cache, &[check.gen_loss.grad(logit, one)], None, true);
    g_spec.backward(&params.generator, &g_cache, &d_fake, Some(&mut g_grad), false);

    let mut c_grad = vec![S::zero(); params.critic.len()];
    let real_logit = real_cache.output()[0];
    c_spec.backward(&params.critic, &real_cache, &[check.critic_loss.grad(real_logit, one)], Some(&mut c_grad), false);
    c_spec.backward(&params.critic, &fake_cache, &[check.critic_loss.grad(logit, zero)], Some(&mut c_grad), false);

    if let Some((net, layer)) = check.corrupt {
        let (spec, grad) = match net {
            NetworkId::Generator => (g_spec, &mut g_grad),
            NetworkId::Critic => (c_spec, &mut c_grad),
        };
        let off = spec.offsets();
        grad[off[layer]..off[layer + 1]].iter_mut().for_each(|g| *g = -*g);
    }

    let gen_loss_at = |gp: &[S]| -> (S, usize) {
        let gc = g_spec.forward_masked(gp, &z, Some(&g_cache));
        let cc = c_spec.forward_masked(&params.critic, gc.output(), Some(&fake_cache));
        let crossings = gc.kink_crossings(&g_cache, g_spec) + cc.kink_crossings(&fake_cache, c_spec);
        (check.gen_loss.value(cc.output()[0], one), crossings)
    };
    let critic_loss_at = |cp: &[S]| -> (S, usize) {
        let rc = c_spec.forward_masked(cp, &tile.values, Some(&real_cache));
        let fc = c_spec.forward_masked(cp, &fake, Some(&fake_cache));
        let crossings = rc.kink_crossings(&real_cache, c_spec) + fc.kink_crossings(&fake_cache, c_spec);
        (check.critic_loss.value(rc.output()[0], one) + check.critic_loss.value(fc.output()[0], zero), crossings)
    };

    let total_layers = g_spec.layers.len() + c_spec.layers.len();
    let per_layer = check.samples.div_ceil(total_layers).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(check.seed ^ 0x9e37_79b9_7f4a_7c15);
    let h = S::lit(check.step);
    let mut report = GradCheckReport { max_relative_error: 0.0, samples_checked: 0, kink_crossings: 0, worst: None };

    let mut run = |net: NetworkId, spec: &NetworkSpec, base: &[S], grad: &[S], loss_at: &dyn Fn(&[S]) -> (S, usize)| {
        let offsets = spec.offsets();
        let mut work = base.to_vec();
        for layer in 0..spec.layers.len() {
            for _ in 0..per_layer {
                let idx = rng.random_range(offsets[layer]..offsets[layer + 1]);
                let orig = work[idx];
                work[idx] = orig + h;
                let (plus, k1) = loss_at(&work);
                work[idx] = orig - h;
                let (minus, k2) = loss_at(&work);
                work[idx] = orig;
                let numeric = (plus.as_f64() - minus.as_f64()) / (2.0 * check.step);
                let analytic = grad[idx].as_f64();
                let denom = analytic.abs().max(numeric.abs()).max(ABS_FLOOR);
                let rel = (analytic - numeric).abs() / denom;
                report.samples_checked += 1;
                report.kink_crossings += k1 + k2;
                if rel > report.max_relative_error || report.worst.is_none() {
                    report.max_relative_error = report.max_relative_error.max(rel);
                    report.worst = Some((net, layer, idx));
                }
            }
        }
    };
    run(NetworkId::Generator, g_spec, &params.generator, &g_grad, &gen_loss_at);
    run(NetworkId::Critic, c_spec, &params.critic, &c_grad, &critic_loss_at);
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fingerprint::TILE_CELLS;
    use crate::gan::{init_params, GanConfig};

    fn tile() -> Tile<f64> {
        let values: Vec<f64> = (0..TILE_CELLS).map(|i| ((i * 7) % 26) as f64 / 40.0).collect();
        Tile::new(values, TILE_CELLS, "g", 0).unwrap()
    }

    #[test]
    fn zero_layer_gives_finite_error() {
        let mut p = init_params::<f64>(&GanConfig::default()).unwrap();
        let off = p.architecture.critic.offsets();
        p.critic[off[2]..off[3]].iter_mut().for_each(|w| *w = 0.0);
        let r = gradient_check(&p, &tile(), &GradCheck { samples: 30, ..GradCheck::default() });
        assert!(r.max_relative_error.is_finite());
        assert!(r.samples_checked >= 30);
    }
}
