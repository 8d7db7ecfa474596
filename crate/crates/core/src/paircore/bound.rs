use serde::{Deserialize, Serialize};

use super::{PairModel, PairSample};
use crate::error::{Error, Result};
use crate::mcengine::{batch_mean_se, run_batches, McLayout, DEFAULT_BATCHES};

/// Largest tolerated fraction of rejected inner draws.
pub const INNER_FAILURE_LIMIT: f64 = 1e-3;

/// Monte Carlo estimates of the three bound terms with batch-means standard
/// errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundEstimate {
    /// `sqrt(E(1 − E(Δ²|X)/2λ)²)`
    pub t1: f64,
    /// `(1/λ) sqrt(E E(ΔΔ*|X)²)`
    pub t2: f64,
    /// `E|R|`
    pub t3: f64,
    pub se_t1: f64,
    pub se_t2: f64,
    pub se_t3: f64,
    pub n_samples: usize,
    /// `t1 + t2 + t3`, the bracketed sum of the bound.
    pub certificate: f64,
    /// Whether inner-MC bias was subtracted from the squared terms.
    pub bias_corrected: bool,
    pub inner_failure_rate: f64,
    /// Mean of `E(ΔΔ*|X)`, which is zero for an exchangeable pair.
    pub mean_dds: f64,
    pub se_mean_dds: f64,
    /// States where `dds² ≤ d2·E(Δ*²|X)` failed.
    pub cauchy_schwarz_violations: usize,
}

fn sqrt_with_se(mean: f64, se: f64) -> (f64, f64) {
    let t = mean.max(0.0).sqrt();
    let se_t = if t > 0.0 { se / (2.0 * t) } else { se.sqrt() };
    (t, se_t)
}

/// Reduces replicate samples (in batch order) to bound-term estimates.
pub fn bound_estimate_from_samples(samples: &[PairSample], lambda: f64, batches: usize) -> Result<BoundEstimate> {
    if samples.is_empty() {
        return Err(Error::invalid("no samples"));
    }
    if !(lambda > 0.0) {
        return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
    }
    let mut a = Vec::with_capacity(samples.len());
    let mut b = Vec::with_capacity(samples.len());
    let mut r = Vec::with_capacity(samples.len());
    let mut dds = Vec::with_capacity(samples.len());
    let mut bias_corrected = false;
    let (mut failures, mut inner_draws) = (0usize, 0usize);
    let mut cs = 0;
    for s in samples {
        let m = &s.moments;
        let one_minus = 1.0 - m.d2 / (2.0 * lambda);
        let mut ai = one_minus * one_minus;
        let mut bi = m.dds * m.dds;
        if let Some(inner) = m.inner {
            // E[x̂²] = x² + Var(x̂); Var(x̂) estimated by the inner variance over m.
            let mf = inner.m as f64;
            ai -= inner.var_d2 / (mf * 4.0 * lambda * lambda);
            bi -= inner.var_dds / mf;
            bias_corrected = true;
            failures += inner.failures;
            inner_draws += inner.m;
        }
        if !m.cauchy_schwarz_holds() {
            cs += 1;
        }
        a.push(ai);
        b.push(bi);
        r.push(s.residual.abs());
        dds.push(m.dds);
    }
    let inner_failure_rate = if inner_draws > 0 {
        failures as f64 / (inner_draws + failures) as f64
    } else {
        0.0
    };
    if inner_failure_rate > INNER_FAILURE_LIMIT {
        return Err(Error::InnerFailures {
            rate: inner_failure_rate,
            limit: INNER_FAILURE_LIMIT,
        });
    }
    let (ma, sa) = batch_mean_se(&a, batches);
    let (mb, sb) = batch_mean_se(&b, batches);
    let (t3, se_t3) = batch_mean_se(&r, batches);
    let (mean_dds, se_mean_dds) = batch_mean_se(&dds, batches);
    let (t1, se_t1) = sqrt_with_se(ma, sa);
    let (rb, se_rb) = sqrt_with_se(mb, sb);
    let (t2, se_t2) = (rb / lambda, se_rb / lambda);
    Ok(BoundEstimate {
        t1,
        t2,
        t3,
        se_t1,
        se_t2,
        se_t3,
        n_samples: samples.len(),
        certificate: t1 + t2 + t3,
        bias_corrected,
        inner_failure_rate,
        mean_dds,
        se_mean_dds,
        cauchy_schwarz_violations: cs,
    })
}

/// Estimates the bound terms from `n` independent states.
pub fn estimate_bound_terms<M: PairModel>(model: &M, n: usize, seed: u64) -> Result<BoundEstimate> {
    if n < 100 {
        return Err(Error::invalid(format!("need at least 100 states, got {n}")));
    }
    let layout = McLayout::default();
    let samples = run_batches(model, n, layout, seed)?;
    bound_estimate_from_samples(&samples, model.lambda(), DEFAULT_BATCHES)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limitdist::GFunction;
    use crate::paircore::doubles::Shifted;
    use crate::paircore::{CondMoments, InnerStats, MomentMethod};

    #[test]
    fn identity_coupling() {
        let model = Shifted {
            shift: 0.0,
            g: GFunction::standard_normal(),
        };
        let est = estimate_bound_terms(&model, 1600, 3).unwrap();
        assert_eq!(est.t1, 1.0);
        assert_eq!(est.t2, 0.0);
        // R = -g(W) = -W, so t3 estimates E|Z| = sqrt(2/π).
        let expect = (2.0 / std::f64::consts::PI).sqrt();
        assert!((est.t3 - expect).abs() < 5.0 * est.se_t3, "{} vs {expect}", est.t3);
    }

    #[test]
    fn bias_correction_and_clamp() {
        let mk = |d2: f64, var_d2: f64| PairSample {
            w: 0.0,
            w_prime: 0.0,
            moments: CondMoments {
                d1: 0.0,
                d2,
                dds: 0.1,
                method: MomentMethod::NestedMc { m: 100 },
                se: None,
                d2star: None,
                residual: Some(0.0),
                inner: Some(InnerStats {
                    m: 100,
                    var_d2,
                    var_dds: 1.0,
                    failures: 0,
                }),
            },
            residual: 0.0,
        };
        let samples: Vec<_> = (0..32).map(|_| mk(1.0, 4.0)).collect();
        // λ = 1: raw (1 - 1/2)² = 0.25, bias 4/(100·4) = 0.01.
        let est = bound_estimate_from_samples(&samples, 1.0, 16).unwrap();
        assert!((est.t1 - 0.24f64.sqrt()).abs() < 1e-15);
        // 0.01 - 1/100 = 0 after correction
        assert!(est.t2.abs() < 1e-8);
        assert!(est.bias_corrected);
        assert_eq!(est.t3, 0.0);
    }

    #[test]
    fn failure_rate_aborts() {
        let mut s = PairSample {
            w: 0.0,
            w_prime: 0.0,
            moments: CondMoments::exact(0.0, 0.0, 0.0),
            residual: 0.0,
        };
        s.moments.inner = Some(InnerStats {
            m: 100,
            var_d2: 0.0,
            var_dds: 0.0,
            failures: 1,
        });
        let err = bound_estimate_from_samples(&[s; 16], 1.0, 16).unwrap_err();
        assert!(matches!(err, Error::InnerFailures { .. }));
    }
}
