use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PairModel;
use crate::error::{Error, Result};
use crate::limitdist::LimitDistribution;
use crate::mcengine::{derive_seed, dkw_band, fit_rate, par_batches, EmpiricalCdf, KsDistance, McLayout, RateFit};

/// Fixed points at which per-`z` decay is tracked.
pub const PER_Z_POINTS: [f64; 3] = [0.0, 1.0, 2.5];

/// Error of the empirical CDF at one point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointError {
    pub z: f64,
    pub f_hat: f64,
    pub f: f64,
    pub raw: f64,
    pub weighted_g: f64,
    pub weighted_z2: f64,
    /// `sqrt(F(1 − F)/N)`, the sampling standard error of `F̂(z)`.
    pub se: f64,
}

/// Discrepancy between an empirical CDF and a limit CDF on a grid, raw and
/// weighted by `1 + |g(z)|` and `(1 + |z|)²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorProfile {
    pub z_grid: Vec<f64>,
    pub f_hat: Vec<f64>,
    pub f: Vec<f64>,
    pub raw_err: Vec<f64>,
    pub weighted_err: Vec<f64>,
    pub weight2_err: Vec<f64>,
    pub dkw_band: f64,
    pub alpha: f64,
    pub n_samples: usize,
    /// Exact `sup_z |F̂ − F|` over the real line.
    pub ks: KsDistance,
    pub points: Vec<PointError>,
}

fn point_error(ecdf: &EmpiricalCdf, dist: &LimitDistribution, z: f64) -> PointError {
    let f_hat = ecdf.eval(z);
    let f = dist.cdf(z);
    let raw = (f_hat - f).abs();
    PointError {
        z,
        f_hat,
        f,
        raw,
        weighted_g: raw * (1.0 + dist.g().eval(z).abs()),
        weighted_z2: raw * (1.0 + z.abs()).powi(2),
        se: (f * (1.0 - f) / ecdf.len() as f64).sqrt(),
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

impl ErrorProfile {
    pub fn sup_raw(&self) -> f64 {
        sup(&self.raw_err)
    }

    pub fn sup_weighted(&self) -> f64 {
        sup(&self.weighted_err)
    }

    pub fn sup_weight2(&self) -> f64 {
        sup(&self.weight2_err)
    }

    pub fn point(&self, z: f64) -> Option<&PointError> {
        self.points.iter().find(|p| p.z == z)
    }

    /// Writes `z, F_hat, F, raw_err, weighted_g_err, weighted_z2_err, dkw`
    /// with round-trip precision.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "z,F_hat,F,raw_err,weighted_g_err,weighted_z2_err,dkw")?;
        for i in 0..self.z_grid.len() {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.z_grid[i],
                self.f_hat[i],
                self.f[i],
                self.raw_err[i],
                self.weighted_err[i],
                self.weight2_err[i],
                self.dkw_band
            )?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Builds the error profile of `w_samples` against `dist` on `z_grid`.
pub fn empirical_error_profile(
    w_samples: &[f64],
    dist: &LimitDistribution,
    z_grid: &[f64],
    alpha: f64,
) -> Result<ErrorProfile> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let ecdf = EmpiricalCdf::new(w_samples.to_vec())?;
    let pts: Vec<PointError> = z_grid.iter().map(|&z| point_error(&ecdf, dist, z)).collect();
    Ok(ErrorProfile {
        z_grid: z_grid.to_vec(),
        f_hat: pts.iter().map(|p| p.f_hat).collect(),
        f: pts.iter().map(|p| p.f).collect(),
        raw_err: pts.iter().map(|p| p.raw).collect(),
        weighted_err: pts.iter().map(|p| p.weighted_g).collect(),
        weight2_err: pts.iter().map(|p| p.weighted_z2).collect(),
        dkw_band: dkw_band(ecdf.len(), alpha),
        alpha,
        n_samples: ecdf.len(),
        ks: ecdf.ks_distance(|z| dist.cdf(z)),
        points: PER_Z_POINTS.iter().map(|&z| point_error(&ecdf, dist, z)).collect(),
    })
}

/// Decay of one error metric across sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRate {
    pub errors: Vec<f64>,
    pub noise_floors: Vec<f64>,
    /// Fit after dropping points below twice their noise floor.
    pub fit: Option<RateFit>,
    /// Fit over every point.
    pub fit_all: Option<RateFit>,
    /// Why `fit` is missing, if it is.
    pub note: Option<String>,
}

impl MetricRate {
    pub fn new(sizes: &[f64], errors: Vec<f64>, noise_floors: Vec<f64>) -> Self {
        let (fit, note) = match fit_rate(sizes, &errors, &noise_floors) {
            Ok(f) => (Some(f), None),
            Err(e) => (None, Some(e.to_string())),
        };
        let fit_all = fit_rate(sizes, &errors, &[]).ok();
        Self {
            errors,
            noise_floors,
            fit,
            fit_all,
            note,
        }
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.errors.windows(2).all(|w| w[1] < w[0])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerZRate {
    pub z: f64,
    /// `(1 + |z|)²`-weighted error at `z`.
    pub weighted_z2: MetricRate,
}

/// Log-log decay fits of the error profiles across model sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    pub sizes: Vec<f64>,
    /// Kolmogorov distance; noise floor is the DKW band.
    pub ks: MetricRate,
    pub weighted_g: MetricRate,
    pub weighted_z2: MetricRate,
    pub per_z: Vec<PerZRate>,
}

/// Fits decay rates to profiles computed at `sizes`.
pub fn rate_summary_from_profiles(sizes: &[f64], profiles: &[ErrorProfile]) -> Result<RateSummary> {
    if sizes.len() != profiles.len() {
        return Err(Error::Dimension {
            expected: sizes.len(),
            got: profiles.len(),
        });
    }
    let dkw: Vec<f64> = profiles.iter().map(|p| p.dkw_band).collect();
    let metric = |f: &dyn Fn(&ErrorProfile) -> f64| -> MetricRate {
        MetricRate::new(sizes, profiles.iter().map(f).collect(), dkw.clone())
    };
    let per_z = PER_Z_POINTS
        .iter()
        .map(|&z| {
            let pts: Vec<&PointError> = profiles.iter().filter_map(|p| p.point(z)).collect();
            let errors = pts.iter().map(|p| p.weighted_z2).collect();
            let floors = pts.iter().map(|p| p.se * (1.0 + z.abs()).powi(2)).collect();
            PerZRate {
                z,
                weighted_z2: MetricRate::new(sizes, errors, floors),
            }
        })
        .collect();
    Ok(RateSummary {
        sizes: sizes.to_vec(),
        ks: metric(&|p| p.ks.distance),
        weighted_g: metric(&|p| p.sup_weighted()),
        weighted_z2: metric(&|p| p.sup_weight2()),
        per_z,
    })
}

/// Samples `W` from the model at each size and fits decay rates of the
/// profile against the matching limit law.
pub fn rate_summary<M, F>(
    sizes: &[usize],
    make: F,
    n_mc: usize,
    z_grid: &[f64],
    alpha: f64,
    seed: u64,
) -> Result<RateSummary>
where
    M: PairModel,
    F: Fn(usize) -> Result<(M, LimitDistribution)>,
{
    let mut profiles = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let (model, dist) = make(n)?;
        let w = par_batches(
            n_mc,
            McLayout::default(),
            derive_seed(seed, n as u64),
            |_, count, rng| {
                (0..count)
                    .map(|_| model.sample_state(rng).map(|s| model.statistic(&s)))
                    .collect()
            },
        )?;
        profiles.push(empirical_error_profile(&w, &dist, z_grid, alpha)?);
    }
    let sizes: Vec<f64> = sizes.iter().map(|&n| n as f64).collect();
    rate_summary_from_profiles(&sizes, &profiles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcengine::stream_rng;

    fn phi(z: f64) -> f64 {
        LimitDistribution::standard_normal().cdf(z)
    }

    #[test]
    fn point_mass_at_zero() {
        let dist = LimitDistribution::standard_normal();
        let p = empirical_error_profile(&[0.0; 5], &dist, &[-1.0, 0.0, 1.0], 0.05).unwrap();
        assert_eq!(p.f_hat, vec![0.0, 1.0, 1.0]);
        assert!((p.raw_err[0] - phi(-1.0)).abs() < 1e-12);
        assert!((p.raw_err[1] - 0.5).abs() < 1e-12);
        assert!((p.raw_err[2] - (1.0 - phi(1.0))).abs() < 1e-12);
        assert!((p.weighted_err[2] - 2.0 * (1.0 - phi(1.0))).abs() < 1e-12);
        assert!((p.weight2_err[2] - 4.0 * (1.0 - phi(1.0))).abs() < 1e-12);
    }

    #[test]
    fn empty_grid() {
        let dist = LimitDistribution::standard_normal();
        let p = empirical_error_profile(&[0.3, -0.2], &dist, &[], 0.05).unwrap();
        assert!(p.z_grid.is_empty() && p.raw_err.is_empty());
        assert_eq!(p.sup_raw(), 0.0);
    }

    #[test]
    fn samples_from_limit_stay_in_band() {
        let dist = LimitDistribution::standard_normal();
        let mut rng = stream_rng(11, 0);
        let w: Vec<f64> = (0..100_000).map(|_| dist.sample(&mut rng)).collect();
        let grid: Vec<f64> = (0..=80).map(|i| -4.0 + 0.1 * i as f64).collect();
        let p = empirical_error_profile(&w, &dist, &grid, 0.01).unwrap();
        assert!(p.ks.distance <= p.dkw_band);
        assert!(p.sup_raw() <= p.ks.distance + 1e-15);
    }

    #[test]
    fn noise_floor_refuses_fit() {
        let dist = LimitDistribution::standard_normal();
        let sizes = [1000.0, 2000.0, 4000.0];
        let profiles: Vec<ErrorProfile> = sizes
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                let mut rng = stream_rng(5, i as u64);
                let w: Vec<f64> = (0..n as usize).map(|_| dist.sample(&mut rng)).collect();
                empirical_error_profile(&w, &dist, &[0.0], 0.05).unwrap()
            })
            .collect();
        let s = rate_summary_from_profiles(&sizes, &profiles).unwrap();
        assert!(s.ks.fit.is_none());
        assert!(s.ks.note.is_some());
    }
}
