use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Right-continuous empirical CDF: `F̂(z) = #{x ≤ z} / n`.
#[derive(Clone, Debug)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsDistance {
    pub distance: f64,
    /// Sample point at which the supremum is attained.
    pub at: f64,
}

impl EmpiricalCdf {
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("empirical CDF needs at least one sample"));
        }
        if samples.iter().any(|x| x.is_nan()) {
            return Err(Error::invalid("NaN sample"));
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self { sorted: samples })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    pub fn eval(&self, z: f64) -> f64 {
        self.sorted.partition_point(|&x| x <= z) as f64 / self.len() as f64
    }

    /// `sup_z |F̂(z) − F(z)|` over all real `z`, using both sides of every
    /// jump. `cdf` is called once per distinct sample value.
    pub fn ks_distance<F: FnMut(f64) -> f64>(&self, mut cdf: F) -> KsDistance {
        let n = self.len() as f64;
        let mut best = KsDistance {
            distance: 0.0,
            at: self.sorted[0],
        };
        let mut i = 0;
        while i < self.sorted.len() {
            let v = self.sorted[i];
            let mut j = i;
            while j < self.sorted.len() && self.sorted[j] == v {
                j += 1;
            }
            let f = cdf(v);
            let d = (j as f64 / n - f).abs().max((f - i as f64 / n).abs());
            if d > best.distance {
                best = KsDistance { distance: d, at: v };
            }
            i = j;
        }
        best
    }
}

/// DKW band half-width `sqrt(ln(2/α) / (2n))`.
pub fn dkw_band(n: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

/// Level `α = 2 exp(−2 n ε²)` whose DKW band is `ε`.
pub fn dkw_alpha(n: usize, eps: f64) -> f64 {
    2.0 * (-2.0 * n as f64 * eps * eps).exp()
}

/// Two-sample Kolmogorov statistic.
pub fn two_sample_ks(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::NAN;
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dkw_examples() {
        assert!((dkw_band(1_000_000, 0.05) - 0.001358).abs() < 1e-6);
        assert!((dkw_band(1, 0.5) - (4f64.ln() / 2.0).sqrt()).abs() < 1e-15);
        assert!((dkw_band(1, 0.5) - 0.8326).abs() < 1e-4);
        let eps = dkw_band(5000, 0.01);
        assert!((dkw_alpha(5000, eps) - 0.01).abs() < 1e-14);
    }

    #[test]
    fn ties_are_right_continuous() {
        let e = EmpiricalCdf::new(vec![0.0, 0.0, 1.0, 2.0]).unwrap();
        assert_eq!(e.eval(-0.1), 0.0);
        assert_eq!(e.eval(0.0), 0.5);
        assert_eq!(e.eval(1.5), 0.75);
        assert_eq!(e.eval(2.0), 1.0);
    }

    #[test]
    fn ks_uses_both_sides_of_jumps() {
        // Point mass at 0 against the uniform(-1, 1) CDF: jump from 0 to 1 at F = 1/2.
        let e = EmpiricalCdf::new(vec![0.0; 10]).unwrap();
        let d = e.ks_distance(|z| ((z + 1.0) / 2.0).clamp(0.0, 1.0));
        assert_eq!(d.distance, 0.5);
        assert_eq!(d.at, 0.0);
    }

    #[test]
    fn two_sample_basics() {
        assert_eq!(two_sample_ks(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 0.0);
        assert_eq!(two_sample_ks(&[1.0, 2.0], &[3.0, 4.0]), 1.0);
        assert!(EmpiricalCdf::new(vec![]).is_err());
    }
}
