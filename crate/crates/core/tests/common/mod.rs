#![allow(dead_code)]

use lingan::fingerprint::{FingerprintSet, Tile, TILE_CELLS};
use lingan::gan::GanConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A fully filled tile of uniform values in `[0, 1)`.
pub fn random_tile(id: &str, seed: u64) -> Tile<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..TILE_CELLS).map(|_| rng.random::<f64>()).collect();
    Tile::new(values, TILE_CELLS, id, 0).unwrap()
}

pub fn single_tile_set(tile: Tile<f64>) -> FingerprintSet<f64> {
    FingerprintSet { language_id: tile.language_id.clone(), tiles: vec![tile], normalization_divisor: 1.0, truncated: 0 }
}

/// A few epochs with a dense emit schedule, for tests that only need the plumbing.
pub fn tiny_config(epochs: usize, seed: u64) -> GanConfig {
    GanConfig { epochs, emit_window: epochs, emit_stride: 1, seed, ..GanConfig::default() }
}
