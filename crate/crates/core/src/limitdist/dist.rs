use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gfunc::{GFunction, GSpec};
use super::quad::{adaptive_simpson, gauss_legendre, gauss_legendre_integrate};
use crate::error::{Error, Result};

/// Density cutoff used to pick `x_max`: smallest `x` with `G(±x) ≥ 60`.
pub const LOG_DENSITY_CUTOFF: f64 = 60.0;
pub const DEFAULT_QUAD_TOL: f64 = 1e-10;
const PANELS: usize = 512;
const SEARCH_LIMIT: f64 = 1e6;
// Order of the rule used on partial panels.
const PARTIAL_ORDER: usize = 16;

/// JSON form of a limit distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistSpec {
    #[serde(flatten)]
    pub g: GSpec,
    pub c1: f64,
    pub x_max: f64,
    pub quad_tol: f64,
}

/// Distribution with density `p(x) = c1 exp(-G(x))`.
///
/// The central range `[-x_max, x_max]` is split into panels whose masses
/// are integrated once; `F` and `1 - F` are then assembled from cumulative
/// panel sums plus one partial-panel integral, from whichever side keeps the
/// result accurate. Far tails are handled through the Mills-type integrals
/// `∫ exp(G(x) - G(y)) dy`, which never underflow.
#[derive(Clone, Debug)]
pub struct LimitDistribution {
    g: GFunction,
    c1: f64,
    ln_c1: f64,
    x_max: f64,
    quad_tol: f64,
    width: f64,
    // cum_left[i] = ∫_{-x_max}^{node_i} e^{-G}, cum_right[i] = ∫_{node_i}^{x_max} e^{-G}
    cum_left: Vec<f64>,
    cum_right: Vec<f64>,
    tail_left: f64,
    tail_right: f64,
    panel_tol: f64,
    gl_nodes: Vec<f64>,
    gl_weights: Vec<f64>,
}

/// Smallest `x` with `min(G(x), G(-x)) ≥ cutoff`, by doubling then bisection.
pub fn default_x_max(g: &GFunction) -> Result<f64> {
    let reached = |x: f64| g.antideriv(x).min(g.antideriv(-x)) >= LOG_DENSITY_CUTOFF;
    let mut hi = 1.0;
    while !reached(hi) {
        hi *= 2.0;
        if hi > SEARCH_LIMIT || !hi.is_finite() {
            return Err(Error::NotNormalizable {
                target: LOG_DENSITY_CUTOFF,
                limit: SEARCH_LIMIT,
            });
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if reached(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Normalizes `exp(-G)` for the given drift.
///
/// `x_max = None` selects [`default_x_max`]. Mass beyond `±x_max` is taken
/// from the majorant `e^{-G(x_max)} / |g(x_max)|`.
pub fn normalize(g: GFunction, x_max: Option<f64>, tol: f64) -> Result<LimitDistribution> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!(
            "quadrature tolerance must be positive, got {tol}"
        )));
    }
    let x_max = match x_max {
        Some(x) if x > 0.0 && x.is_finite() => x,
        Some(x) => return Err(Error::invalid(format!("x_max must be positive, got {x}"))),
        None => default_x_max(&g)?,
    };
    let g_hi = g.eval(x_max);
    if !(g_hi > 0.0) {
        return Err(Error::TailBound { x: x_max, value: g_hi });
    }
    let g_lo = g.eval(-x_max);
    if !(g_lo < 0.0) {
        return Err(Error::TailBound {
            x: -x_max,
            value: -g_lo,
        });
    }

    let width = 2.0 * x_max / PANELS as f64;
    let node = |i: usize| -x_max + width * i as f64;
    let dens = |x: f64| (-g.antideriv(x)).exp();

    // Coarse estimate of the total mass to scale the absolute tolerance.
    let coarse: f64 = (0..=PANELS).map(|i| dens(node(i))).sum::<f64>() * width;
    if !(coarse > 0.0 && coarse.is_finite()) {
        return Err(Error::Quadrature { lo: -x_max, hi: x_max });
    }
    let panel_tol = tol * coarse * 1e-3 / PANELS as f64;

    let mut masses = Vec::with_capacity(PANELS);
    for i in 0..PANELS {
        masses.push(adaptive_simpson(&dens, node(i), node(i + 1), panel_tol)?);
    }
    let mut cum_left = vec![0.0; PANELS + 1];
    for i in 0..PANELS {
        cum_left[i + 1] = cum_left[i] + masses[i];
    }
    let mut cum_right = vec![0.0; PANELS + 1];
    for i in (0..PANELS).rev() {
        cum_right[i] = cum_right[i + 1] + masses[i];
    }

    let tail_right = (-g.antideriv(x_max)).exp() / g_hi;
    let tail_left = (-g.antideriv(-x_max)).exp() / (-g_lo);
    let total = cum_left[PANELS] + tail_left + tail_right;
    let c1 = 1.0 / total;
    let (gl_nodes, gl_weights) = gauss_legendre(PARTIAL_ORDER);

    Ok(LimitDistribution {
        g,
        c1,
        ln_c1: c1.ln(),
        x_max,
        quad_tol: tol,
        width,
        cum_left,
        cum_right,
        tail_left,
        tail_right,
        panel_tol,
        gl_nodes,
        gl_weights,
    })
}

impl LimitDistribution {
    /// `N(0, 1)`.
    pub fn standard_normal() -> Self {
        normalize(GFunction::standard_normal(), None, DEFAULT_QUAD_TOL).expect("standard normal normalizes")
    }

    /// `N(0, 1/slope)` via `g(x) = slope * x`.
    pub fn normal_with_precision(slope: f64) -> Result<Self> {
        normalize(GFunction::linear(slope), None, DEFAULT_QUAD_TOL)
    }

    pub fn from_spec(spec: &DistSpec) -> Result<Self> {
        normalize(GFunction::from_spec(&spec.g)?, Some(spec.x_max), spec.quad_tol)
    }

    pub fn spec(&self) -> DistSpec {
        DistSpec {
            g: self.g.spec(),
            c1: self.c1,
            x_max: self.x_max,
            quad_tol: self.quad_tol,
        }
    }

    pub fn g(&self) -> &GFunction {
        &self.g
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn quad_tol(&self) -> f64 {
        self.quad_tol
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        self.ln_c1 - self.g.antideriv(x)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    fn dens(&self, x: f64) -> f64 {
        (-self.g.antideriv(x)).exp()
    }

    fn panel_of(&self, z: f64) -> usize {
        (((z + self.x_max) / self.width).floor() as usize).min(PANELS - 1)
    }

    fn node(&self, i: usize) -> f64 {
        -self.x_max + self.width * i as f64
    }

    // Panels are narrow enough that a fixed high-order rule on a partial
    // panel is far more accurate than the panel tolerance.
    fn partial(&self, a: f64, b: f64) -> f64 {
        gauss_legendre_integrate(|x| self.dens(x), a, b, &self.gl_nodes, &self.gl_weights)
    }

    /// `F(z)`.
    pub fn cdf(&self, z: f64) -> f64 {
        if z.is_nan() {
            return f64::NAN;
        }
        if z <= -self.x_max {
            return self.ln_cdf(z).exp();
        }
        if z >= self.x_max {
            return -self.ln_sf(z).exp_m1();
        }
        let i = self.panel_of(z);
        let v = self.c1 * (self.tail_left + self.cum_left[i] + self.partial(self.node(i), z));
        v.clamp(0.0, 1.0)
    }

    /// `1 - F(z)`.
    pub fn sf(&self, z: f64) -> f64 {
        if z.is_nan() {
            return f64::NAN;
        }
        if z >= self.x_max {
            return self.ln_sf(z).exp();
        }
        if z <= -self.x_max {
            return -self.ln_cdf(z).exp_m1();
        }
        let i = self.panel_of(z);
        let v = self.c1 * (self.tail_right + self.cum_right[i + 1] + self.partial(z, self.node(i + 1)));
        v.clamp(0.0, 1.0)
    }

    /// `ln F(z)`, accurate deep into the left tail.
    pub fn ln_cdf(&self, z: f64) -> f64 {
        if z <= -0.5 * self.x_max {
            self.ln_pdf(z) + self.mills_left(z).ln()
        } else if z >= 0.5 * self.x_max {
            (-self.sf(z)).ln_1p()
        } else {
            self.cdf(z).ln()
        }
    }

    /// `ln(1 - F(z))`, accurate deep into the right tail.
    pub fn ln_sf(&self, z: f64) -> f64 {
        if z >= 0.5 * self.x_max {
            self.ln_pdf(z) + self.mills_right(z).ln()
        } else if z <= -0.5 * self.x_max {
            (-self.cdf(z)).ln_1p()
        } else {
            self.sf(z).ln()
        }
    }

    /// `(1 - F(x)) / p(x) = ∫_x^∞ exp(G(x) - G(y)) dy` for `x > 0`.
    pub fn mills_right(&self, x: f64) -> f64 {
        mills(&self.g, x, 1.0)
    }

    /// `F(x) / p(x) = ∫_{-∞}^x exp(G(x) - G(y)) dy` for `x < 0`.
    pub fn mills_left(&self, x: f64) -> f64 {
        mills(&self.g, x, -1.0)
    }

    /// Quantile by safeguarded Newton iteration on `F`.
    pub fn quantile(&self, u: f64) -> f64 {
        if !(0.0..=1.0).contains(&u) {
            return f64::NAN;
        }
        let (mut lo, mut hi) = (-self.x_max, self.x_max);
        // Mass beyond ±x_max is below e^{-60}; such u map to the cutoff.
        if u <= self.c1 * self.tail_left {
            return lo;
        }
        if 1.0 - u <= self.c1 * self.tail_right {
            return hi;
        }
        let mut x = 0.0;
        for _ in 0..200 {
            let f = self.cdf(x) - u;
            if f.abs() < 1e-15 {
                break;
            }
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let step = f / self.pdf(x);
            let mut next = x - step;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() < 1e-14 * (1.0 + x.abs()) {
                x = next;
                break;
            }
            x = next;
        }
        x
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }

    /// Second moment `∫ x² p(x) dx` by panel quadrature.
    pub fn second_moment(&self) -> Result<f64> {
        let f = |x: f64| x * x * self.dens(x);
        let mut acc = 0.0;
        for i in 0..PANELS {
            acc += adaptive_simpson(
                &f,
                self.node(i),
                self.node(i + 1),
                self.panel_tol * self.x_max * self.x_max,
            )?;
        }
        Ok(self.c1 * acc)
    }

    /// Unnormalized mass inside `[-x_max, x_max]` plus the tail majorants.
    pub fn total_mass(&self) -> f64 {
        self.c1 * (self.cum_left[PANELS] + self.tail_left + self.tail_right)
    }

    /// Majorant of the mass outside `[-x_max, x_max]`.
    pub fn tail_majorant(&self) -> f64 {
        self.c1 * (self.tail_left + self.tail_right)
    }
}

fn mills(g: &GFunction, x: f64, dir: f64) -> f64 {
    let g0 = g.antideriv(x);
    let slope = (dir * g.eval(x)).max(0.0);
    let mut span = if slope > 0.0 {
        (LOG_DENSITY_CUTOFF / slope).min(1.0)
    } else {
        1.0
    };
    while g.antideriv(x + dir * span) - g0 < LOG_DENSITY_CUTOFF {
        span *= 2.0;
        if span > SEARCH_LIMIT {
            return f64::INFINITY;
        }
    }
    let end = x + dir * span;
    let f = |y: f64| (g0 - g.antideriv(y)).exp();
    let body = adaptive_simpson(&f, x.min(end), x.max(end), 1e-14 * span.min(1.0)).unwrap_or(f64::NAN);
    let tail = (g0 - g.antideriv(end)).exp() / (dir * g.eval(end));
    body + tail
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_normal_c1() {
        let d = normalize(GFunction::standard_normal(), Some(12.0), 1e-10).unwrap();
        assert!((d.c1() - 0.398_942_280_401_432_7).abs() < 1e-8);
        let auto = LimitDistribution::standard_normal();
        assert!((auto.x_max() - 120f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn scaled_normal_c1() {
        let d = LimitDistribution::normal_with_precision(0.5).unwrap();
        let expect = 1.0 / (2.0 * std::f64::consts::PI * 2.0).sqrt();
        assert!((d.c1() - expect).abs() < 1e-10);
    }

    #[test]
    fn errors_on_bad_drift() {
        assert!(matches!(
            normalize(GFunction::linear(-1.0), Some(5.0), 1e-10),
            Err(Error::TailBound { .. })
        ));
        assert!(matches!(
            normalize(GFunction::linear(0.0), None, 1e-10),
            Err(Error::NotNormalizable { .. })
        ));
    }

    #[test]
    fn cdf_and_sf_agree() {
        let d = LimitDistribution::standard_normal();
        for &z in &[-12.0, -9.0, -3.0, -0.5, 0.0, 0.7, 4.0, 8.0, 15.0] {
            let s = d.cdf(z) + d.sf(z);
            assert!((s - 1.0).abs() < 1e-12, "z={z} sum={s}");
        }
        assert!((d.cdf(0.0) - 0.5).abs() < 1e-13);
    }

    #[test]
    fn quantile_inverts_cdf() {
        let d = normalize(GFunction::odd_power(1.0 / 3.0, 3.0).unwrap(), None, 1e-10).unwrap();
        for &u in &[1e-9, 0.01, 0.3, 0.5, 0.77, 0.999] {
            let x = d.quantile(u);
            assert!((d.cdf(x) - u).abs() < 1e-12, "u={u}");
        }
    }

    #[test]
    fn spec_round_trip() {
        let d = normalize(GFunction::odd_power(1.0 / 3.0, 3.0).unwrap(), None, 1e-10).unwrap();
        let json = serde_json::to_string(&d.spec()).unwrap();
        assert!(json.contains(r#""g_kind":"odd_power""#));
        let back: DistSpec = serde_json::from_str(&json).unwrap();
        let d2 = LimitDistribution::from_spec(&back).unwrap();
        assert_eq!(d2.c1(), d.c1());
    }
}
