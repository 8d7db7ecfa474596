use serde::{Deserialize, Serialize};

use super::PairModel;
use crate::error::{Error, Result};
use crate::mcengine::{batch_mean_se, par_batches, two_sample_ks, McLayout, DEFAULT_BATCHES};

/// Level of the two-sample Kolmogorov band used to flag asymmetry.
const KS_ALPHA: f64 = 1e-3;

/// Symmetry statistics of `(W, W′)` draws. Each mean is zero for an
/// exchangeable pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub n: usize,
    pub mean_delta: f64,
    pub se_delta: f64,
    /// Mean of `Δ (W + W′) = W² − W′²`.
    pub mean_delta_sum: f64,
    pub se_delta_sum: f64,
    /// Mean of `Δ|Δ|`.
    pub mean_delta_abs: f64,
    pub se_delta_abs: f64,
    /// Kolmogorov distance between the `W` and `W′` samples.
    pub ks: f64,
    pub ks_band: f64,
    pub flagged: bool,
}

fn beyond(mean: f64, se: f64) -> bool {
    mean.abs() > 4.0 * se + 1e-12
}

/// Builds a report from paired draws listed in batch order.
pub fn symmetry_from_pairs(pairs: &[(f64, f64)], batches: usize) -> SymmetryReport {
    let n = pairs.len();
    let (w, wp): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    let d: Vec<f64> = pairs.iter().map(|(a, b)| a - b).collect();
    let ds: Vec<f64> = pairs.iter().map(|(a, b)| (a - b) * (a + b)).collect();
    let da: Vec<f64> = d.iter().map(|x| x * x.abs()).collect();
    let (mean_delta, se_delta) = batch_mean_se(&d, batches);
    let (mean_delta_sum, se_delta_sum) = batch_mean_se(&ds, batches);
    let (mean_delta_abs, se_delta_abs) = batch_mean_se(&da, batches);
    // Lattice-valued statistics reach the same atom through different
    // rounding paths; snapping merges atoms split by a few ulps.
    let snap = |v: &[f64]| -> Vec<f64> { v.iter().map(|x| (x * 1e9).round() / 1e9).collect() };
    let ks = two_sample_ks(&snap(&w), &snap(&wp));
    let ks_band = ((2.0 / KS_ALPHA).ln() / n.max(1) as f64).sqrt();
    let flagged = beyond(mean_delta, se_delta)
        || beyond(mean_delta_sum, se_delta_sum)
        || beyond(mean_delta_abs, se_delta_abs)
        || ks > ks_band;
    SymmetryReport {
        n,
        mean_delta,
        se_delta,
        mean_delta_sum,
        se_delta_sum,
        mean_delta_abs,
        se_delta_abs,
        ks,
        ks_band,
        flagged,
    }
}

/// Draws `n` independent pairs and reports symmetry statistics.
pub fn exchangeability_check<M: PairModel>(model: &M, n: usize, seed: u64) -> Result<SymmetryReport> {
    if n < 10_000 {
        return Err(Error::invalid(format!("need at least 10^4 pairs, got {n}")));
    }
    let n = n - n % DEFAULT_BATCHES;
    let pairs = par_batches(n, McLayout::default(), seed, |_, count, rng| {
        (0..count).map(|_| model.draw_pair(rng)).collect()
    })?;
    Ok(symmetry_from_pairs(&pairs, DEFAULT_BATCHES))
}
