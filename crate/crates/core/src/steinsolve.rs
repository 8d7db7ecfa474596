//! Closed-form solution of the Stein equation
//! `f′(x) − g(x) f(x) = I(x ≤ z) − F(z)` for half-line indicators.
//!
//! ```text
//! f_z(x) = F(x)(1 − F(z)) / p(x)   x ≤ z
//!        = F(z)(1 − F(x)) / p(x)   x > z
//! ```
//!
//! Every value is assembled in log space; beyond `|x| > x_max/2` the ratio
//! `F/p` is read off the Mills-type integral so that underflow of `p` never
//! produces `0/0`.

use serde::{Deserialize, Serialize};

use crate::limitdist::LimitDistribution;

/// `f_z` for one limit law and threshold `z`, with `F(z)` cached.
#[derive(Clone, Debug)]
pub struct SteinSolution<'a> {
    dist: &'a LimitDistribution,
    z: f64,
    f_z: f64,
    ln_f_z: f64,
    ln_s_z: f64,
}

impl<'a> SteinSolution<'a> {
    pub fn new(dist: &'a LimitDistribution, z: f64) -> Self {
        Self {
            dist,
            z,
            f_z: dist.cdf(z),
            ln_f_z: dist.ln_cdf(z),
            ln_s_z: dist.ln_sf(z),
        }
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn dist(&self) -> &LimitDistribution {
        self.dist
    }

    /// `ln(F(x)/p(x))`
    fn ln_left_ratio(&self, x: f64) -> f64 {
        if x <= -0.5 * self.dist.x_max() {
            self.dist.mills_left(x).ln()
        } else {
            self.dist.ln_cdf(x) - self.dist.ln_pdf(x)
        }
    }

    /// `ln((1 − F(x))/p(x))`
    fn ln_right_ratio(&self, x: f64) -> f64 {
        if x >= 0.5 * self.dist.x_max() {
            self.dist.mills_right(x).ln()
        } else {
            self.dist.ln_sf(x) - self.dist.ln_pdf(x)
        }
    }

    /// `f_z(x)`; the left branch is used at `x = z`.
    pub fn f(&self, x: f64) -> f64 {
        if x <= self.z {
            (self.ln_left_ratio(x) + self.ln_s_z).exp()
        } else {
            (self.ln_f_z + self.ln_right_ratio(x)).exp()
        }
    }

    /// `g(x) f_z(x)`
    pub fn g_f(&self, x: f64) -> f64 {
        let g = self.dist.g().eval(x);
        if g == 0.0 {
            0.0
        } else {
            g * self.f(x)
        }
    }

    /// `f′_z(x) = g(x) f_z(x) + I(x ≤ z) − F(z)`
    pub fn fprime(&self, x: f64) -> f64 {
        let ind = if x <= self.z { 1.0 } else { 0.0 };
        self.g_f(x) + ind - self.f_z
    }

    /// `‖f_z‖ ≤ min(1/c₁, 1/|g(z)|)`.
    pub fn bound(&self) -> f64 {
        stein_bound_fz(self.dist, self.z)
    }

    /// Worst margins of the four solution properties on `grid` (sorted).
    /// A non-negative margin means the property held at every point.
    pub fn property_margins(&self, grid: &[f64]) -> PropertyMargins {
        let inv_c1 = 1.0 / self.dist.c1();
        let mut m = PropertyMargins {
            b1: f64::INFINITY,
            b2: f64::INFINITY,
            b3: f64::INFINITY,
            b4: f64::INFINITY,
        };
        let mut prev: Option<f64> = None;
        for &x in grid {
            let f = self.f(x);
            let gf = self.g_f(x);
            let fp = self.fprime(x);
            m.b1 = m.b1.min(f).min(inv_c1 - f);
            m.b2 = m.b2.min(1.0 - fp.abs());
            m.b3 = m.b3.min(gf - (self.f_z - 1.0)).min(self.f_z - gf);
            if let Some(p) = prev {
                m.b4 = m.b4.min(gf - p);
            }
            prev = Some(gf);
        }
        m
    }
}

/// Smallest slack of each property over a grid: `0 ≤ f ≤ 1/c₁`,
/// `|f′| ≤ 1`, `F(z) − 1 ≤ g f ≤ F(z)` and monotonicity of `g f`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyMargins {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub b4: f64,
}

impl PropertyMargins {
    pub fn min(&self) -> f64 {
        self.b1.min(self.b2).min(self.b3).min(self.b4)
    }
}

pub fn stein_f(dist: &LimitDistribution, z: f64, x: f64) -> f64 {
    SteinSolution::new(dist, z).f(x)
}

pub fn stein_fprime(dist: &LimitDistribution, z: f64, x: f64) -> f64 {
    SteinSolution::new(dist, z).fprime(x)
}

/// `min(1/c₁, 1/|g(z)|)`, with `1/c₁` where `g(z) = 0`.
pub fn stein_bound_fz(dist: &LimitDistribution, z: f64) -> f64 {
    let inv_c1 = 1.0 / dist.c1();
    let g = dist.g().eval(z).abs();
    if g == 0.0 {
        inv_c1
    } else {
        inv_c1.min(1.0 / g)
    }
}
