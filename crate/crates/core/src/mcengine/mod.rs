//! Seeded parallel Monte Carlo driver, empirical CDFs and rate fitting.
//!
//! Every batch draws from its own ChaCha stream keyed by `(seed, batch)`,
//! so output depends on the seed and the batch count but never on how many
//! worker threads execute the batches.

mod ecdf;
mod rate;

pub use ecdf::{dkw_alpha, dkw_band, two_sample_ks, EmpiricalCdf, KsDistance};
pub use rate::{fit_rate, ExcludedPoint, RateFit};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::paircore::{PairModel, PairSample};

pub type McRng = ChaCha8Rng;

/// Default number of batches for batch-means standard errors.
pub const DEFAULT_BATCHES: usize = 16;

/// RNG for `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> McRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer; derives sub-seeds for independent experiment parts.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Pairwise (tree) summation.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if v.len() <= BLOCK {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(v) / v.len() as f64
}

/// Mean and standard error from contiguous batch means.
pub fn batch_mean_se(v: &[f64], batches: usize) -> (f64, f64) {
    let m = mean(v);
    let batches = batches.min(v.len()).max(1);
    if batches < 2 {
        return (m, f64::NAN);
    }
    let size = v.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| {
            let end = if b == batches - 1 { v.len() } else { (b + 1) * size };
            mean(&v[b * size..end])
        })
        .collect();
    let bm = mean(&means);
    let dev: Vec<f64> = means.iter().map(|x| (x - bm) * (x - bm)).collect();
    let var = pairwise_sum(&dev) / (batches - 1) as f64;
    (m, (var / batches as f64).sqrt())
}

/// Parallel layout of a Monte Carlo run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct McLayout {
    pub batches: usize,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl Default for McLayout {
    fn default() -> Self {
        Self {
            batches: DEFAULT_BATCHES,
            workers: None,
        }
    }
}

impl McLayout {
    pub fn with_workers(workers: usize) -> Self {
        Self {
            workers: Some(workers),
            ..Self::default()
        }
    }
}

/// Runs `n_total` replicates split evenly over `layout.batches` batches.
///
/// `work(batch, count, rng)` produces the batch's outputs; results are
/// concatenated in batch order.
pub fn par_batches<T, F>(n_total: usize, layout: McLayout, seed: u64, work: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, usize, &mut McRng) -> Result<Vec<T>> + Sync,
{
    let batches = layout.batches;
    if batches == 0 || !n_total.is_multiple_of(batches) {
        return Err(Error::invalid(format!(
            "replicate count {n_total} is not divisible by {batches} batches"
        )));
    }
    let per = n_total / batches;
    let run = || -> Result<Vec<T>> {
        let parts: Vec<Result<Vec<T>>> = (0..batches)
            .into_par_iter()
            .map(|b| {
                let mut rng = stream_rng(seed, b as u64);
                work(b, per, &mut rng).map_err(|e| Error::Batch {
                    batch: b,
                    source: Box::new(e),
                })
            })
            .collect();
        let mut out = Vec::with_capacity(n_total);
        for p in parts {
            out.extend(p?);
        }
        Ok(out)
    };
    match layout.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    }
}

/// Draws `n_total` states with one coupled draw and the conditional moments
/// of each; the raw material of bound-term estimates and error profiles.
pub fn run_batches<M: PairModel>(model: &M, n_total: usize, layout: McLayout, seed: u64) -> Result<Vec<PairSample>> {
    par_batches(n_total, layout, seed, |_, count, rng| {
        (0..count).map(|_| model.draw_sample(rng)).collect()
    })
}
