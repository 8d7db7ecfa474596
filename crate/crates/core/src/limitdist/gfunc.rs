use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Serializable description of a built-in drift.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "g_kind", content = "params", rename_all = "snake_case")]
pub enum GSpec {
    /// `g(x) = slope * x`.
    Linear { slope: f64 },
    /// `g(x) = coef * sgn(x) * |x|^power`.
    OddPower { coef: f64, power: f64 },
    /// User-supplied drift without a closed-form description.
    Custom,
}

/// A drift function `g` together with its antiderivative `G(x) = ∫₀ˣ g`.
///
/// Derivatives are optional; condition checks fall back to central
/// differences when they are absent.
pub trait Drift: Send + Sync {
    fn eval(&self, x: f64) -> f64;
    fn antideriv(&self, x: f64) -> f64;
    fn deriv1(&self, _x: f64) -> Option<f64> {
        None
    }
    fn deriv2(&self, _x: f64) -> Option<f64> {
        None
    }
    fn spec(&self) -> GSpec {
        GSpec::Custom
    }
}

#[derive(Clone, Copy, Debug)]
struct Linear {
    slope: f64,
}

impl Drift for Linear {
    fn eval(&self, x: f64) -> f64 {
        self.slope * x
    }
    fn antideriv(&self, x: f64) -> f64 {
        0.5 * self.slope * x * x
    }
    fn deriv1(&self, _x: f64) -> Option<f64> {
        Some(self.slope)
    }
    fn deriv2(&self, _x: f64) -> Option<f64> {
        Some(0.0)
    }
    fn spec(&self) -> GSpec {
        GSpec::Linear { slope: self.slope }
    }
}

#[derive(Clone, Copy, Debug)]
struct OddPower {
    coef: f64,
    power: f64,
}

impl Drift for OddPower {
    fn eval(&self, x: f64) -> f64 {
        self.coef * x.signum() * x.abs().powf(self.power)
    }
    fn antideriv(&self, x: f64) -> f64 {
        self.coef * x.abs().powf(self.power + 1.0) / (self.power + 1.0)
    }
    fn deriv1(&self, x: f64) -> Option<f64> {
        if self.power == 1.0 {
            return Some(self.coef);
        }
        Some(self.coef * self.power * x.abs().powf(self.power - 1.0))
    }
    fn deriv2(&self, x: f64) -> Option<f64> {
        if self.power == 1.0 {
            return Some(0.0);
        }
        if x == 0.0 && self.power < 2.0 {
            return None;
        }
        Some(self.coef * self.power * (self.power - 1.0) * x.signum() * x.abs().powf(self.power - 2.0))
    }
    fn spec(&self) -> GSpec {
        GSpec::OddPower {
            coef: self.coef,
            power: self.power,
        }
    }
}

struct ClosureDrift<G, A> {
    g: G,
    antideriv: A,
}

impl<G, A> Drift for ClosureDrift<G, A>
where
    G: Fn(f64) -> f64 + Send + Sync,
    A: Fn(f64) -> f64 + Send + Sync,
{
    fn eval(&self, x: f64) -> f64 {
        (self.g)(x)
    }
    fn antideriv(&self, x: f64) -> f64 {
        (self.antideriv)(x)
    }
}

/// Drift `g` with the `(τ, K_τ)` pair of the growth-ratio condition.
#[derive(Clone)]
pub struct GFunction {
    drift: Arc<dyn Drift>,
    tau: f64,
    k_tau: f64,
}

impl fmt::Debug for GFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GFunction")
            .field("spec", &self.drift.spec())
            .field("tau", &self.tau)
            .field("k_tau", &self.k_tau)
            .finish()
    }
}

pub const DEFAULT_TAU: f64 = 0.5;

impl GFunction {
    pub fn linear(slope: f64) -> Self {
        let k_tau = 1.0 / DEFAULT_TAU;
        Self {
            drift: Arc::new(Linear { slope }),
            tau: DEFAULT_TAU,
            k_tau,
        }
    }

    /// The standard normal drift `g(x) = x`.
    pub fn standard_normal() -> Self {
        Self::linear(1.0)
    }

    pub fn odd_power(coef: f64, power: f64) -> Result<Self> {
        if !(power >= 1.0 && power.is_finite()) {
            return Err(Error::invalid(format!("odd power must be >= 1, got {power}")));
        }
        Ok(Self {
            drift: Arc::new(OddPower { coef, power }),
            tau: DEFAULT_TAU,
            k_tau: DEFAULT_TAU.powf(-power),
        })
    }

    /// Builds a drift from closures. `k_tau` must be supplied since no
    /// closed form is known.
    pub fn custom<G, A>(g: G, antideriv: A, tau: f64, k_tau: f64) -> Result<Self>
    where
        G: Fn(f64) -> f64 + Send + Sync + 'static,
        A: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::from_drift(Arc::new(ClosureDrift { g, antideriv }), tau, k_tau)
    }

    pub fn from_drift(drift: Arc<dyn Drift>, tau: f64, k_tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::invalid(format!("tau must lie in (0,1), got {tau}")));
        }
        if !(k_tau > 0.0) {
            return Err(Error::invalid(format!("K_tau must be positive, got {k_tau}")));
        }
        Ok(Self { drift, tau, k_tau })
    }

    pub fn from_spec(spec: &GSpec) -> Result<Self> {
        match *spec {
            GSpec::Linear { slope } => Ok(Self::linear(slope)),
            GSpec::OddPower { coef, power } => Self::odd_power(coef, power),
            GSpec::Custom => Err(Error::invalid("custom drifts cannot be rebuilt from a spec")),
        }
    }

    /// Replaces `τ`; `K_τ` is recomputed for built-in drifts.
    pub fn with_tau(mut self, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::invalid(format!("tau must lie in (0,1), got {tau}")));
        }
        self.k_tau = match self.drift.spec() {
            GSpec::Linear { .. } => 1.0 / tau,
            GSpec::OddPower { power, .. } => tau.powf(-power),
            GSpec::Custom => self.k_tau,
        };
        self.tau = tau;
        Ok(self)
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.drift.eval(x)
    }

    #[inline]
    pub fn antideriv(&self, x: f64) -> f64 {
        self.drift.antideriv(x)
    }

    /// `g′(x)`, closed form when available, else a central difference.
    pub fn deriv1(&self, x: f64) -> f64 {
        self.drift.deriv1(x).unwrap_or_else(|| {
            let h = fd_step(x);
            (self.eval(x + h) - self.eval(x - h)) / (2.0 * h)
        })
    }

    /// `g″(x)`, closed form when available, else a central difference.
    pub fn deriv2(&self, x: f64) -> f64 {
        self.drift.deriv2(x).unwrap_or_else(|| {
            let h = fd_step(x);
            (self.eval(x + h) - 2.0 * self.eval(x) + self.eval(x - h)) / (h * h)
        })
    }

    pub fn has_closed_form_derivatives(&self) -> bool {
        self.drift.deriv1(1.0).is_some() && self.drift.deriv2(1.0).is_some()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn k_tau(&self) -> f64 {
        self.k_tau
    }

    pub fn spec(&self) -> GSpec {
        self.drift.spec()
    }
}

/// Finite-difference step `1e-5 (1 + |x|)`.
pub fn fd_step(x: f64) -> f64 {
    1e-5 * (1.0 + x.abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn odd_power_matches_definition() {
        let g = GFunction::odd_power(1.0 / 3.0, 3.0).unwrap();
        assert_eq!(g.eval(3.0), 9.0);
        assert_eq!(g.eval(-3.0), -9.0);
        assert_eq!(g.eval(0.0), 0.0);
        assert!((g.antideriv(2.0) - 16.0 / 12.0).abs() < 1e-15);
        assert!((g.deriv1(2.0) - 4.0).abs() < 1e-15);
        assert!((g.deriv2(-2.0) + 4.0).abs() < 1e-15);
        assert_eq!(g.k_tau(), 8.0);
    }

    #[test]
    fn custom_falls_back_to_differences() {
        let g = GFunction::custom(|x| x * x * x, |x| x.powi(4) / 4.0, 0.5, 8.0).unwrap();
        assert!(!g.has_closed_form_derivatives());
        assert!((g.deriv1(1.5) - 6.75).abs() < 1e-6);
        assert!((g.deriv2(1.5) - 9.0).abs() < 1e-3);
        assert_eq!(g.spec(), GSpec::Custom);
    }

    #[test]
    fn spec_round_trip() {
        let g = GFunction::odd_power(2.0, 3.0).unwrap();
        let s = serde_json::to_string(&g.spec()).unwrap();
        assert_eq!(s, r#"{"g_kind":"odd_power","params":{"coef":2.0,"power":3.0}}"#);
        let back: GSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(GFunction::from_spec(&back).unwrap().spec(), g.spec());
    }

    #[test]
    fn rejects_bad_tau() {
        assert!(GFunction::linear(1.0).with_tau(1.0).is_err());
        assert!(GFunction::odd_power(1.0, 0.5).is_err());
    }
}
