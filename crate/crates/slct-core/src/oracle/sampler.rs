//! Deterministic parallel sampling passes for the Monte-Carlo oracle.
//!
//! Work is split into fixed-size chunks, each driven by its own RNG whose
//! seed is a 64-bit mix of the master seed and the chunk index. Chunk results
//! are merged in chunk order, so the tallies are bit-identical for any number
//! of worker threads.

use crate::kfn::KEvaluator;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Samples per RNG substream.
pub(crate) const CHUNK: u64 = 1 << 16;

/// Bootstrap resamples used for the stderr estimate.
pub const BOOTSTRAP_RESAMPLES: usize = 50;

/// SplitMix64 finalizer over the master seed and chunk index.
fn substream_seed(master: u64, chunk: u64) -> u64 {
    let mut z = master.wrapping_add((chunk + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One Poisson(1) draw (Knuth's product-of-uniforms method); `l` = e^{−1}.
fn poisson_unit(rng: &mut ChaCha8Rng, l: f64) -> u64 {
    let mut k = 0u64;
    let mut p = 1.0f64;
    loop {
        p *= rng.gen::<f64>();
        if p <= l {
            return k;
        }
        k += 1;
    }
}

/// Draws the next uniform point of the box [center − ρ, center + ρ]^d.
fn draw_point(rng: &mut ChaCha8Rng, center: &[f64], radius: f64, w: &mut [f64]) {
    for (wi, ci) in w.iter_mut().zip(center) {
        let u: f64 = rng.gen();
        *wi = ci + radius * (2.0 * u - 1.0);
    }
}

/// Histogram over "first sublevel bin" indices: `first_bin[i]` counts samples
/// whose K lands in (ε_{i−1}, ε_i]; index `grid.len()` counts misses.
/// Cumulative sums over i ≤ j give the hit counts per grid point.
pub(crate) struct VolumeTally {
    pub first_bin: Vec<u64>,
    pub boot_first_bin: Vec<Vec<u64>>,
}

impl VolumeTally {
    fn zeros(bins: usize) -> VolumeTally {
        VolumeTally {
            first_bin: vec![0; bins],
            boot_first_bin: vec![vec![0; bins]; BOOTSTRAP_RESAMPLES],
        }
    }

    fn absorb(&mut self, other: &VolumeTally) {
        for (a, b) in self.first_bin.iter_mut().zip(&other.first_bin) {
            *a += b;
        }
        for (ra, rb) in self.boot_first_bin.iter_mut().zip(&other.boot_first_bin) {
            for (a, b) in ra.iter_mut().zip(rb) {
                *a += b;
            }
        }
    }

    /// Hit counts per grid point for the main pass.
    pub fn hits(&self) -> Vec<u64> {
        cumulative(&self.first_bin)
    }

    /// Hit counts per grid point for bootstrap resample `b`.
    pub fn boot_hits(&self, b: usize) -> Vec<u64> {
        cumulative(&self.boot_first_bin[b])
    }
}

fn cumulative(first_bin: &[u64]) -> Vec<u64> {
    let bins = first_bin.len() - 1;
    let mut out = Vec::with_capacity(bins);
    let mut acc = 0u64;
    for &c in &first_bin[..bins] {
        acc += c;
        out.push(acc);
    }
    out
}

fn volume_chunk(k: &KEvaluator, radius: f64, grid: &[f64], count: u64, seed: u64) -> VolumeTally {
    let mut tally = VolumeTally::zeros(grid.len() + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = (-1.0f64).exp();
    let mut w = vec![0.0; k.dimension()];
    for _ in 0..count {
        draw_point(&mut rng, k.center(), radius, &mut w);
        let value = k.evaluate(&w);
        let idx = grid.partition_point(|&e| e < value);
        tally.first_bin[idx] += 1;
        if idx < grid.len() {
            // Poisson bootstrap weight per resample; misses skip the draws
            // (their weight would multiply an all-zero contribution).
            for boot in tally.boot_first_bin.iter_mut() {
                let m = poisson_unit(&mut rng, l);
                boot[idx] += m;
            }
        }
    }
    tally
}

/// Runs the volume pass over `samples` draws. Deterministic in
/// (K, radius, grid, samples, seed) for any worker count.
pub(crate) fn volume_tally(
    k: &KEvaluator,
    radius: f64,
    grid: &[f64],
    samples: u64,
    seed: u64,
) -> VolumeTally {
    let chunks = samples.div_ceil(CHUNK);
    let partials: Vec<VolumeTally> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let count = CHUNK.min(samples - c * CHUNK);
            volume_chunk(k, radius, grid, count, substream_seed(seed, c))
        })
        .collect();
    let mut total = VolumeTally::zeros(grid.len() + 1);
    for p in &partials {
        total.absorb(p);
    }
    total
}

/// Accumulated Boltzmann sums per inverse temperature: Σ e^{−nK},
/// Σ e^{−2nK}, and bootstrap-weighted sums per resample.
pub(crate) struct LaplaceTally {
    pub sum: Vec<f64>,
    pub sum_sq: Vec<f64>,
    pub boot_sum: Vec<Vec<f64>>,
}

impl LaplaceTally {
    fn zeros(points: usize) -> LaplaceTally {
        LaplaceTally {
            sum: vec![0.0; points],
            sum_sq: vec![0.0; points],
            boot_sum: vec![vec![0.0; points]; BOOTSTRAP_RESAMPLES],
        }
    }

    /// Merge must happen in chunk order: floating-point addition is not
    /// associative and determinism across worker counts depends on it.
    fn absorb(&mut self, other: &LaplaceTally) {
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            *a += b;
        }
        for (ra, rb) in self.boot_sum.iter_mut().zip(&other.boot_sum) {
            for (a, b) in ra.iter_mut().zip(rb) {
                *a += b;
            }
        }
    }
}

fn laplace_chunk(k: &KEvaluator, radius: f64, grid: &[f64], count: u64, seed: u64) -> LaplaceTally {
    let points = grid.len();
    let mut tally = LaplaceTally::zeros(points);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = (-1.0f64).exp();
    let mut w = vec![0.0; k.dimension()];
    let mut e = vec![0.0; points];
    let mut weights = vec![0u64; BOOTSTRAP_RESAMPLES];
    for _ in 0..count {
        draw_point(&mut rng, k.center(), radius, &mut w);
        let value = k.evaluate(&w);
        for (ej, &n) in e.iter_mut().zip(grid) {
            *ej = (-n * value).exp();
        }
        for m in weights.iter_mut() {
            *m = poisson_unit(&mut rng, l);
        }
        for ((s, sq), &ej) in tally.sum.iter_mut().zip(tally.sum_sq.iter_mut()).zip(&e) {
            *s += ej;
            *sq += ej * ej;
        }
        for (b, &m) in weights.iter().enumerate() {
            if m == 0 {
                continue;
            }
            let mf = m as f64;
            let row = &mut tally.boot_sum[b];
            for j in 0..points {
                row[j] += mf * e[j];
            }
        }
    }
    tally
}

/// Runs the Laplace pass over `samples` draws; same determinism contract as
/// the volume pass.
pub(crate) fn laplace_tally(
    k: &KEvaluator,
    radius: f64,
    grid: &[f64],
    samples: u64,
    seed: u64,
) -> LaplaceTally {
    let chunks = samples.div_ceil(CHUNK);
    let partials: Vec<LaplaceTally> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let count = CHUNK.min(samples - c * CHUNK);
            laplace_chunk(k, radius, grid, count, substream_seed(seed, c))
        })
        .collect();
    let mut total = LaplaceTally::zeros(grid.len());
    for p in &partials {
        total.absorb(p);
    }
    total
}
