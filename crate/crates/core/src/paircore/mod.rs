//! Exchangeable-pair models and Monte Carlo estimators of the terms of the
//! non-uniform bound
//!
//! ```text
//! |P(W ≤ z) − F(z)| (1 + |g(z)|) ≤ C ( sqrt(E(1 − E(Δ²|X)/2λ)²)
//!                                     + (1/λ) sqrt(E E(ΔΔ*|X)²) + E|R| )
//! ```
//!
//! where `E(Δ|X) = λ(g(W) + R)`.

mod bound;
mod profile;
mod symmetry;

pub use bound::{bound_estimate_from_samples, estimate_bound_terms, BoundEstimate, INNER_FAILURE_LIMIT};
pub use profile::{
    empirical_error_profile, rate_summary, rate_summary_from_profiles, ErrorProfile, MetricRate, RateSummary,
    PER_Z_POINTS,
};
pub use symmetry::{exchangeability_check, symmetry_from_pairs, SymmetryReport};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::limitdist::GFunction;
use crate::mcengine::McRng;

/// Choice of the symmetric majorant `Δ*`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaStarPolicy {
    /// `Δ* = |Δ|`.
    #[default]
    AbsDelta,
    Custom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MomentMethod {
    Exact,
    Quadrature,
    NestedMc { m: usize },
}

/// Per-state statistics of an inner Monte Carlo estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerStats {
    pub m: usize,
    /// Sample variance of the inner draws of `Δ²`.
    pub var_d2: f64,
    /// Sample variance of the inner draws of `ΔΔ*`.
    pub var_dds: f64,
    /// Inner draws that had to be rejected and redrawn.
    pub failures: usize,
}

/// Conditional moments of `Δ = W − W′` given the full state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CondMoments {
    /// `E(Δ | X)`
    pub d1: f64,
    /// `E(Δ² | X)`
    pub d2: f64,
    /// `E(ΔΔ* | X)`
    pub dds: f64,
    pub method: MomentMethod,
    /// Standard error of the inner estimate of `d2`, if estimated.
    pub se: Option<f64>,
    /// `E(Δ*² | X)` when known.
    pub d2star: Option<f64>,
    /// `R` when the model knows it in closed form; otherwise it is recovered
    /// as `d1/λ − g(W)`.
    pub residual: Option<f64>,
    pub inner: Option<InnerStats>,
}

impl CondMoments {
    pub fn exact(d1: f64, d2: f64, dds: f64) -> Self {
        Self {
            d1,
            d2,
            dds,
            method: MomentMethod::Exact,
            se: None,
            d2star: Some(d2),
            residual: None,
            inner: None,
        }
    }

    pub fn with_residual(mut self, r: f64) -> Self {
        self.residual = Some(r);
        self
    }

    /// `dds² ≤ d2 · d2star` up to rounding, when `d2star` is known.
    pub fn cauchy_schwarz_holds(&self) -> bool {
        match self.d2star {
            Some(s) => self.dds * self.dds <= self.d2 * s * (1.0 + 1e-12) + 1e-300,
            None => true,
        }
    }
}

/// One replicate: a state's statistic, one coupled draw and the state's
/// conditional moments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairSample {
    pub w: f64,
    pub w_prime: f64,
    pub moments: CondMoments,
    /// `R = d1/λ − g(W)` (or the model's closed form).
    pub residual: f64,
}

impl PairSample {
    pub fn delta(&self) -> f64 {
        self.w - self.w_prime
    }
}

/// An exchangeable pair `(W, W′)` built on a random state `X`.
pub trait PairModel: Sync {
    type State: Send;

    fn sample_state(&self, rng: &mut McRng) -> Result<Self::State>;

    fn statistic(&self, state: &Self::State) -> f64;

    /// Draws `W′` from the coupling kernel given the state.
    fn sample_coupled(&self, state: &Self::State, rng: &mut McRng) -> Result<f64>;

    fn lambda(&self) -> f64;

    fn g(&self) -> &GFunction;

    fn cond_moments(&self, state: &Self::State, rng: &mut McRng) -> Result<CondMoments>;

    fn delta_star_policy(&self) -> DeltaStarPolicy {
        DeltaStarPolicy::AbsDelta
    }

    /// Draws `(W, W′)`.
    fn draw_pair(&self, rng: &mut McRng) -> Result<(f64, f64)> {
        let state = self.sample_state(rng)?;
        let w = self.statistic(&state);
        Ok((w, self.sample_coupled(&state, rng)?))
    }

    fn draw_sample(&self, rng: &mut McRng) -> Result<PairSample> {
        let state = self.sample_state(rng)?;
        let w = self.statistic(&state);
        let w_prime = self.sample_coupled(&state, rng)?;
        let moments = self.cond_moments(&state, rng)?;
        let residual = moments
            .residual
            .unwrap_or_else(|| moments.d1 / self.lambda() - self.g().eval(w));
        Ok(PairSample {
            w,
            w_prime,
            moments,
            residual,
        })
    }
}
