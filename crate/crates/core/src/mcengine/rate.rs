use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcludedPoint {
    pub size: f64,
    pub error: f64,
    pub noise_floor: f64,
}

/// Least-squares fit of `ln error = intercept + slope · ln size`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Sizes and errors of the points used in the fit.
    pub sizes: Vec<f64>,
    pub errors: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub slope_se: f64,
    pub excluded_points: Vec<ExcludedPoint>,
}

impl RateFit {
    pub fn predict(&self, size: f64) -> f64 {
        (self.intercept + self.slope * size.ln()).exp()
    }
}

/// Fits a power law to `(size, error)` after dropping points whose error is
/// below twice their noise floor. Pass an empty `noise_floors` to keep all
/// points.
pub fn fit_rate(sizes: &[f64], errors: &[f64], noise_floors: &[f64]) -> Result<RateFit> {
    if sizes.len() != errors.len() || (!noise_floors.is_empty() && noise_floors.len() != sizes.len()) {
        return Err(Error::invalid("sizes, errors and noise floors must have equal length"));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut used_sizes = Vec::new();
    let mut used_errors = Vec::new();
    let mut excluded = Vec::new();
    for (i, (&s, &e)) in sizes.iter().zip(errors).enumerate() {
        let floor = noise_floors.get(i).copied().unwrap_or(0.0);
        if !(e > 0.0) || !(s > 0.0) || e < 2.0 * floor || !e.is_finite() {
            excluded.push(ExcludedPoint {
                size: s,
                error: e,
                noise_floor: floor,
            });
            continue;
        }
        xs.push(s.ln());
        ys.push(e.ln());
        used_sizes.push(s);
        used_errors.push(e);
    }
    if xs.len() < 3 {
        return Err(Error::TooFewPoints { usable: xs.len() });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("rate fit needs at least two distinct sizes"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - intercept - slope * x;
            r * r
        })
        .sum();
    let r_squared = if syy > 0.0 {
        (1.0 - sse / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let slope_se = (sse / (n - 2.0) / sxx).sqrt();
    Ok(RateFit {
        sizes: used_sizes,
        errors: used_errors,
        slope,
        intercept,
        r_squared,
        slope_se,
        excluded_points: excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let sizes = [64.0, 128.0, 256.0, 512.0];
        let errors: Vec<f64> = sizes.iter().map(|s: &f64| 0.4 * s.powf(-0.5)).collect();
        let f = fit_rate(&sizes, &errors, &[]).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!((f.predict(1024.0) - 0.4 / 32.0).abs() < 1e-12);
    }

    #[test]
    fn constant_errors() {
        let f = fit_rate(&[1.0, 2.0, 4.0], &[0.3, 0.3, 0.3], &[]).unwrap();
        assert!(f.slope.abs() < 1e-12);
        assert_eq!(f.r_squared, 1.0);
    }

    #[test]
    fn noise_floor_exclusion() {
        let f = fit_rate(&[1.0, 2.0, 4.0, 8.0], &[1.0, 0.5, 0.25, 0.01], &[0.01; 4]).unwrap();
        assert_eq!(f.excluded_points.len(), 1);
        assert_eq!(f.excluded_points[0].size, 8.0);
        assert!((f.slope + 1.0).abs() < 1e-12);
        let err = fit_rate(&[1.0, 2.0, 4.0], &[1.0, 0.5, 0.01], &[0.01; 3]).unwrap_err();
        assert!(matches!(err, Error::TooFewPoints { usable: 2 }));
    }
}
