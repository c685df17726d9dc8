//! Counter-based randomness: every draw site is keyed by
//! (master seed, cell, trial), so trials are independent, order-insensitive,
//! and reproducible regardless of how work is partitioned across threads.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A fresh generator for the (seed, cell, trial) key.
pub fn derive_rng(master: u64, cell: u64, trial: u64) -> ChaCha8Rng {
    let mut state = master;
    let a = splitmix64(&mut state);
    state ^= cell.wrapping_mul(0xA076_1D64_78BD_642F);
    let b = splitmix64(&mut state);
    state ^= trial.wrapping_mul(0xE703_7ED1_A0B4_28DB);
    let c = splitmix64(&mut state);
    let d = splitmix64(&mut state);
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&a.to_le_bytes());
    seed[8..16].copy_from_slice(&b.to_le_bytes());
    seed[16..24].copy_from_slice(&c.to_le_bytes());
    seed[24..].copy_from_slice(&d.to_le_bytes());
    ChaCha8Rng::from_seed(seed)
}

/// A derived sub-seed (for nesting keyed generators).
pub fn derive_seed(master: u64, cell: u64, trial: u64) -> u64 {
    let mut state = master ^ cell.rotate_left(24) ^ trial.rotate_left(48);
    splitmix64(&mut state)
}

pub fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// rows×cols matrix with i.i.d. N(0, variance) entries, drawn row-major.
pub fn gaussian_matrix<R: Rng>(rows: usize, cols: usize, variance: f64, rng: &mut R) -> DMatrix<f64> {
    let std = variance.sqrt();
    DMatrix::from_fn(rows, cols, |_, _| std * standard_normal(rng))
}

/// A point drawn uniformly from the radius-`radius` sphere in R^n.
pub fn sphere_point<R: Rng>(n: usize, radius: f64, rng: &mut R) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| standard_normal(rng));
        let norm = v.norm();
        if norm > 1e-12 {
            return v * (radius / norm);
        }
    }
}

/// k distinct indices from {0..m}, uniform without replacement, sorted.
pub fn sample_support<R: Rng>(m: usize, k: usize, rng: &mut R) -> Vec<usize> {
    assert!(k <= m, "cannot sample {k} of {m} indices");
    // partial Fisher-Yates over an index pool
    let mut pool: Vec<usize> = (0..m).collect();
    for i in 0..k {
        let j = rng.gen_range(i..m);
        pool.swap(i, j);
    }
    let mut chosen = pool[..k].to_vec();
    chosen.sort_unstable();
    chosen
}
