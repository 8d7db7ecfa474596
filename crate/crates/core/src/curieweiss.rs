//! General Curie-Weiss model
//! `dP(x) ∝ exp(β (x₁ + … + x_n)² / 2n) Π dL(x_i)` over a finite-support
//! base law, with the heat-bath exchangeable pair.
//!
//! Exact draws use the Gaussian linearization
//! `exp(βS²/2n) = E exp(T S sqrt(β/n))`, `T ~ N(0, 1)`: the mixing variable
//! has log-density `−t²/2 + n ln M(t sqrt(β/n))`, and given `T = t` the
//! spins are i.i.d. from the tilted law `∝ e^{t sqrt(β/n) x} dL(x)`.
//!
//! Since `W` and every conditional moment depend on the spins only through
//! the count of sites at each support point, states are stored as counts.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::limitdist::{
    build_cw_limit, classify_type, cw_c2, cw_drift, BaseLaw, GFunction, LimitDistribution, MAX_MOMENT, TYPE_TOL,
};
use crate::mcengine::McRng;
use crate::paircore::{CondMoments, PairModel};

/// Points in the table of the mixing-variable density.
pub const T_GRID_POINTS: usize = 4096;
/// The table covers the region where the log-density is within this of its
/// maximum (about twelve standard deviations for a Gaussian shape).
pub const T_LOG_RANGE: f64 = 72.0;
const MGF_GRID_LIMIT: f64 = 50.0;
const MGF_GRID_STEP: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// `W = S/√n` (β < 1).
    SqrtN,
    /// `W = S/n^{1−1/2k}` (β = 1).
    NPow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Sampler {
    Exact,
    /// Heat-bath chain from an i.i.d. start, `sweeps · n` site updates.
    Glauber {
        sweeps: usize,
    },
}

/// Tabulated inverse CDF of the mixing variable.
#[derive(Clone, Debug)]
struct TTable {
    t: Vec<f64>,
    cdf: Vec<f64>,
}

impl TTable {
    fn build(log_density: impl Fn(f64) -> f64) -> Result<Self> {
        // Bracket the mass: expand until the log-density has dropped far
        // below its running maximum on both sides.
        let mut peak = log_density(0.0);
        let mut reach = [1.0f64, 1.0];
        for (side, sign) in [(0, 1.0), (1, -1.0)] {
            loop {
                let v = log_density(sign * reach[side]);
                if !v.is_finite() && v != f64::NEG_INFINITY {
                    return Err(Error::invalid("mixing density is not finite"));
                }
                peak = peak.max(v);
                if v < peak - 2.0 * T_LOG_RANGE {
                    break;
                }
                reach[side] *= 2.0;
                if reach[side] > 1e9 {
                    return Err(Error::invalid("mixing density does not decay"));
                }
            }
        }
        let coarse = |lo: f64, hi: f64| -> (Vec<f64>, Vec<f64>) {
            let step = (hi - lo) / (T_GRID_POINTS - 1) as f64;
            let t: Vec<f64> = (0..T_GRID_POINTS).map(|i| lo + step * i as f64).collect();
            let h = t.iter().map(|&x| log_density(x)).collect();
            (t, h)
        };
        let (t, h) = coarse(-reach[1], reach[0]);
        let max = h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let first = h.iter().position(|&v| v >= max - T_LOG_RANGE).unwrap_or(0);
        let last = h
            .iter()
            .rposition(|&v| v >= max - T_LOG_RANGE)
            .unwrap_or(T_GRID_POINTS - 1);
        let lo = t[first.saturating_sub(1)];
        let hi = t[(last + 1).min(T_GRID_POINTS - 1)];
        let (t, h) = coarse(lo, hi);
        let max = h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let dens: Vec<f64> = h.iter().map(|v| (v - max).exp()).collect();
        let mut cdf = vec![0.0; T_GRID_POINTS];
        for i in 1..T_GRID_POINTS {
            cdf[i] = cdf[i - 1] + 0.5 * (dens[i] + dens[i - 1]) * (t[i] - t[i - 1]);
        }
        let total = cdf[T_GRID_POINTS - 1];
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::invalid("mixing density table is empty"));
        }
        for c in &mut cdf {
            *c /= total;
        }
        Ok(Self { t, cdf })
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u = rng.random::<f64>();
        let i = self.cdf.partition_point(|&c| c <= u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        self.t[i - 1] + frac * (self.t[i] - self.t[i - 1])
    }
}

/// Spin counts at each support point with their sum.
#[derive(Clone, Debug, PartialEq)]
pub struct CwState {
    pub counts: Vec<u64>,
    pub s: f64,
}

/// Result of one heat-bath coupling step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CwPair {
    pub w: f64,
    pub w_prime: f64,
    pub delta: f64,
    /// Support indices of the old and new value at the chosen site.
    pub from: usize,
    pub to: usize,
}

/// Outcome of a numerical moment-generating-function dominance check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MgfCheck {
    pub pass: bool,
    /// β < 1: the largest `b` with `ln E e^{tξ} ≤ t²/2b` on the grid.
    pub b: Option<f64>,
    /// β = 1: split point and constants of the two-regime bound.
    pub b0: Option<f64>,
    pub b1: Option<f64>,
    pub b2: Option<f64>,
    pub grid_points: usize,
}

#[derive(Clone, Debug)]
pub struct CurieWeissModel {
    n: usize,
    beta: f64,
    law: BaseLaw,
    points: Vec<f64>,
    probs: Vec<f64>,
    k: Option<usize>,
    scaling: Scaling,
    scale: f64,
    lambda: f64,
    g: GFunction,
    table: Option<TTable>,
    sampler: Sampler,
}

impl CurieWeissModel {
    /// Builds the model for `0 < β ≤ 1`. At `β = 1` the type of the law is
    /// classified and fixes the scaling.
    pub fn new(n: usize, beta: f64, law: BaseLaw) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("n must be positive"));
        }
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::invalid(format!("beta must lie in (0, 1], got {beta}")));
        }
        let (points, probs) = law
            .support()
            .map(|(p, q)| (p.to_vec(), q.to_vec()))
            .ok_or_else(|| Error::invalid("Curie-Weiss sampling needs a finite-support law"))?;
        let nf = n as f64;
        let (k, scaling, scale, lambda, g) = if beta < 1.0 {
            (None, Scaling::SqrtN, nf.sqrt(), 1.0 / nf, GFunction::linear(1.0 - beta))
        } else {
            let k = classify_type(&law, MAX_MOMENT / 2, TYPE_TOL)?.k;
            let kf = k as f64;
            let g = cw_drift(&law, k)?;
            (
                Some(k),
                Scaling::NPow,
                nf.powf(1.0 - 0.5 / kf),
                nf.powf(-2.0 + 1.0 / kf),
                g,
            )
        };
        let table = if n > 1 {
            let theta = (beta / nf).sqrt();
            Some(TTable::build(|t| -0.5 * t * t + nf * law.ln_mgf(t * theta))?)
        } else {
            None
        };
        Ok(Self {
            n,
            beta,
            law,
            points,
            probs,
            k,
            scaling,
            scale,
            lambda,
            g,
            table,
            sampler: Sampler::Exact,
        })
    }

    pub fn with_sampler(mut self, sampler: Sampler) -> Self {
        self.sampler = sampler;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn k(&self) -> Option<usize> {
        self.k
    }

    pub fn scaling(&self) -> Scaling {
        self.scaling
    }

    /// Divisor taking `S` to `W`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn law(&self) -> &BaseLaw {
        &self.law
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// `N(0, 1/(1−β))` for β < 1, otherwise the type-`k` limit.
    pub fn limit_distribution(&self) -> Result<LimitDistribution> {
        match self.k {
            None => LimitDistribution::normal_with_precision(1.0 - self.beta),
            Some(k) => build_cw_limit(&self.law, k),
        }
    }

    pub fn c2(&self) -> Option<f64> {
        self.k.and_then(|k| cw_c2(&self.law, k).ok())
    }

    pub fn state_from_counts(&self, counts: Vec<u64>) -> Result<CwState> {
        if counts.len() != self.points.len() {
            return Err(Error::Dimension {
                expected: self.points.len(),
                got: counts.len(),
            });
        }
        if counts.iter().sum::<u64>() != self.n as u64 {
            return Err(Error::invalid("counts must sum to n"));
        }
        let s = counts.iter().zip(&self.points).map(|(&c, &x)| c as f64 * x).sum();
        Ok(CwState { counts, s })
    }

    /// State of the spin vector `x`; every entry must be a support point.
    pub fn state_from_spins(&self, x: &[f64]) -> Result<CwState> {
        if x.len() != self.n {
            return Err(Error::Dimension {
                expected: self.n,
                got: x.len(),
            });
        }
        let mut counts = vec![0; self.points.len()];
        for &v in x {
            let j = self
                .points
                .iter()
                .position(|&p| p == v)
                .ok_or_else(|| Error::invalid(format!("{v} is not a support point")))?;
            counts[j] += 1;
        }
        self.state_from_counts(counts)
    }

    fn multinomial<R: Rng + ?Sized>(&self, probs: &[f64], rng: &mut R) -> Vec<u64> {
        let mut counts = vec![0; probs.len()];
        let mut left = self.n as u64;
        let mut mass = 1.0;
        for (j, &p) in probs.iter().enumerate() {
            if left == 0 {
                break;
            }
            if j == probs.len() - 1 || mass <= 0.0 {
                counts[j] = left;
                break;
            }
            let q = (p / mass).clamp(0.0, 1.0);
            let c = Binomial::new(left, q).expect("valid binomial").sample(rng);
            counts[j] = c;
            left -= c;
            mass -= p;
        }
        counts
    }

    /// Exact draw from the Gibbs measure.
    pub fn sample_exact<R: Rng + ?Sized>(&self, rng: &mut R) -> CwState {
        let counts = match &self.table {
            Some(table) => {
                let t = table.sample(rng);
                let probs = self.law.tilted_probs(t * (self.beta / self.n as f64).sqrt());
                self.multinomial(&probs, rng)
            }
            None => {
                // n = 1: weights p_j e^{β x_j²/2}
                let w: Vec<f64> = self
                    .points
                    .iter()
                    .zip(&self.probs)
                    .map(|(x, p)| p * (0.5 * self.beta * x * x).exp())
                    .collect();
                let u = rng.random::<f64>() * w.iter().sum::<f64>();
                let mut acc = 0.0;
                let mut j = w.len() - 1;
                for (i, wi) in w.iter().enumerate() {
                    acc += wi;
                    if u < acc {
                        j = i;
                        break;
                    }
                }
                let mut counts = vec![0; w.len()];
                counts[j] = 1;
                counts
            }
        };
        self.state_from_counts(counts).expect("counts sum to n")
    }

    /// Exact draw of the full spin vector (sites i.i.d. given the mixing
    /// variable, so a uniformly shuffled count vector is an exact draw).
    pub fn sample_spins<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let state = self.sample_exact(rng);
        let mut x: Vec<f64> = state
            .counts
            .iter()
            .zip(&self.points)
            .flat_map(|(&c, &p)| std::iter::repeat_n(p, c as usize))
            .collect();
        for i in (1..x.len()).rev() {
            let j = rng.random_range(0..=i);
            x.swap(i, j);
        }
        x
    }

    /// Conditional law of one site holding support point `from`, given the
    /// rest: `∝ p_y exp(β y S₋/n + β y²/2n)`.
    pub fn site_conditional(&self, s: f64, from: usize) -> Vec<f64> {
        let nf = self.n as f64;
        let rest = s - self.points[from];
        let logs: Vec<f64> = self
            .points
            .iter()
            .zip(&self.probs)
            .map(|(&y, &p)| p.ln() + self.beta * y * rest / nf + self.beta * y * y / (2.0 * nf))
            .collect();
        let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|v| v / total).collect()
    }

    fn pick<R: Rng + ?Sized>(weights: &[f64], total: f64, rng: &mut R) -> usize {
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        for (i, &w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
    }

    /// Heat-bath coupling: a uniform site is redrawn from its conditional.
    pub fn sample_pair<R: Rng + ?Sized>(&self, st: &CwState, rng: &mut R) -> CwPair {
        let counts: Vec<f64> = st.counts.iter().map(|&c| c as f64).collect();
        let from = Self::pick(&counts, self.n as f64, rng);
        let q = self.site_conditional(st.s, from);
        let to = Self::pick(&q, 1.0, rng);
        let delta = (self.points[from] - self.points[to]) / self.scale;
        let w = st.s / self.scale;
        CwPair {
            w,
            w_prime: w - delta,
            delta,
            from,
            to,
        }
    }

    pub fn apply_pair(&self, st: &mut CwState, pair: &CwPair) {
        st.counts[pair.from] -= 1;
        st.counts[pair.to] += 1;
        st.s += self.points[pair.to] - self.points[pair.from];
    }

    fn sample_glauber<R: Rng + ?Sized>(&self, sweeps: usize, rng: &mut R) -> CwState {
        let counts = self.multinomial(&self.probs, rng);
        let mut st = self.state_from_counts(counts).expect("counts sum to n");
        for _ in 0..sweeps * self.n {
            let p = self.sample_pair(&st, rng);
            self.apply_pair(&mut st, &p);
        }
        // keep S exact against drift from repeated additions
        self.state_from_counts(st.counts).expect("counts sum to n")
    }

    /// Conditional moments of `Δ` by exact summation over the support.
    pub fn cond_moments_of(&self, st: &CwState) -> CondMoments {
        let (mut d1, mut d2, mut dds) = (0.0, 0.0, 0.0);
        for (v, &c) in st.counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let q = self.site_conditional(st.s, v);
            let (mut e1, mut e2, mut e3) = (0.0, 0.0, 0.0);
            for (y, &qy) in q.iter().enumerate() {
                let d = self.points[v] - self.points[y];
                e1 += qy * d;
                e2 += qy * d * d;
                e3 += qy * d * d.abs();
            }
            let c = c as f64;
            d1 += c * e1;
            d2 += c * e2;
            dds += c * e3;
        }
        let nf = self.n as f64;
        let s2 = self.scale * self.scale;
        CondMoments::exact(d1 / (nf * self.scale), d2 / (nf * s2), dds / (nf * s2))
    }

    /// Exact law of `S` by enumerating count vectors; returns `(S, P)` pairs
    /// sorted by `S`. Intended for small `n`.
    pub fn exact_sum_law(&self) -> Result<Vec<(f64, f64)>> {
        let r = self.points.len();
        let compositions = binomial_f64(self.n + r - 1, r - 1);
        if compositions > 5e6 {
            return Err(Error::invalid("too many configurations to enumerate"));
        }
        let ln_fact: Vec<f64> = (0..=self.n)
            .scan(0.0, |acc, i| {
                if i > 0 {
                    *acc += (i as f64).ln();
                }
                Some(*acc)
            })
            .collect();
        let mut out: Vec<(f64, f64)> = Vec::new();
        let mut counts = vec![0u64; r];
        let nf = self.n as f64;
        let mut visit = |counts: &[u64]| {
            let s: f64 = counts.iter().zip(&self.points).map(|(&c, &x)| c as f64 * x).sum();
            let mut lw = ln_fact[self.n] + self.beta * s * s / (2.0 * nf);
            for (j, &c) in counts.iter().enumerate() {
                lw += c as f64 * self.probs[j].ln() - ln_fact[c as usize];
            }
            if lw.is_finite() {
                out.push((s, lw));
            }
        };
        enumerate_counts(&mut counts, 0, self.n as u64, &mut visit);
        let m = out.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let mut merged: Vec<(f64, f64)> = Vec::new();
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (s, lw) in out {
            let p = (lw - m).exp();
            match merged.last_mut() {
                Some(last) if (last.0 - s).abs() <= 1e-12 * (1.0 + s.abs()) => last.1 += p,
                _ => merged.push((s, p)),
            }
        }
        let total: f64 = merged.iter().map(|p| p.1).sum();
        for p in &mut merged {
            p.1 /= total;
        }
        Ok(merged)
    }

    /// Checks the mgf dominance assumed by the limit theorems on the grid
    /// `t ∈ [−50, 50]`. Reported, not proven.
    pub fn mgf_check(&self) -> MgfCheck {
        mgf_check(&self.law, self.beta, self.k.unwrap_or(2))
    }
}

fn binomial_f64(n: usize, k: usize) -> f64 {
    (0..k).map(|i| (n - i) as f64 / (i + 1) as f64).product()
}

fn enumerate_counts(counts: &mut [u64], j: usize, left: u64, visit: &mut impl FnMut(&[u64])) {
    if j == counts.len() - 1 {
        counts[j] = left;
        visit(counts);
        return;
    }
    for c in 0..=left {
        counts[j] = c;
        enumerate_counts(counts, j + 1, left - c, visit);
    }
}

fn mgf_grid() -> Vec<f64> {
    let steps = (MGF_GRID_LIMIT / MGF_GRID_STEP).round() as i64;
    (-steps..=steps)
        .filter(|&i| i != 0)
        .map(|i| i as f64 * MGF_GRID_STEP)
        .collect()
}

/// Numerical check of `ln E e^{tξ} ≤ t²/2b` for some `b > β` (β < 1) or of
/// the two-regime bound with `b₀, b₁ > 0`, `b₂ > 1` (β = 1, type `k`).
pub fn mgf_check(law: &BaseLaw, beta: f64, k: usize) -> MgfCheck {
    const SLACK: f64 = 1e-12;
    let grid = mgf_grid();
    let lm: Vec<f64> = grid.iter().map(|&t| law.ln_mgf(t)).collect();
    if beta < 1.0 {
        let holds = |b: f64| {
            grid.iter()
                .zip(&lm)
                .all(|(&t, &l)| l <= t * t / (2.0 * b) + SLACK * (1.0 + l.abs()))
        };
        let (mut lo, mut hi) = (beta, 1.0);
        if holds(hi) {
            lo = hi;
        } else {
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if holds(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        }
        let pass = lo > beta && holds(lo);
        return MgfCheck {
            pass,
            b: pass.then_some(lo),
            b0: None,
            b1: None,
            b2: None,
            grid_points: grid.len(),
        };
    }
    let p = 2 * k as i32;
    let mut best: Option<(f64, f64, f64)> = None;
    for &b0 in &[0.25, 0.5, 1.0, 2.0, 4.0] {
        let b1 = grid
            .iter()
            .zip(&lm)
            .filter(|(t, _)| t.abs() <= b0)
            .map(|(&t, &l)| (0.5 * t * t - l) / t.powi(p))
            .fold(f64::INFINITY, f64::min);
        let b2 = grid
            .iter()
            .zip(&lm)
            .filter(|(t, _)| t.abs() > b0)
            .map(|(&t, &l)| if l > 0.0 { t * t / (2.0 * l) } else { f64::INFINITY })
            .fold(f64::INFINITY, f64::min);
        if b1 > 0.0 && b2 > 1.0 {
            best = Some((b0, b1, b2));
            break;
        }
    }
    MgfCheck {
        pass: best.is_some(),
        b: None,
        b0: best.map(|b| b.0),
        b1: best.map(|b| b.1),
        b2: best.map(|b| b.2),
        grid_points: grid.len(),
    }
}

impl PairModel for CurieWeissModel {
    type State = CwState;

    fn sample_state(&self, rng: &mut McRng) -> Result<CwState> {
        Ok(match self.sampler {
            Sampler::Exact => self.sample_exact(rng),
            Sampler::Glauber { sweeps } => self.sample_glauber(sweeps, rng),
        })
    }

    fn statistic(&self, st: &CwState) -> f64 {
        st.s / self.scale
    }

    fn sample_coupled(&self, st: &CwState, rng: &mut McRng) -> Result<f64> {
        Ok(self.sample_pair(st, rng).w_prime)
    }

    fn lambda(&self) -> f64 {
        self.lambda
    }

    fn g(&self) -> &GFunction {
        &self.g
    }

    fn cond_moments(&self, st: &CwState, _: &mut McRng) -> Result<CondMoments> {
        Ok(self.cond_moments_of(st))
    }
}

pub fn cw_sample_exact<R: Rng + ?Sized>(model: &CurieWeissModel, rng: &mut R) -> Vec<f64> {
    model.sample_spins(rng)
}

pub fn cw_sample_pair<R: Rng + ?Sized>(model: &CurieWeissModel, x: &[f64], rng: &mut R) -> Result<CwPair> {
    Ok(model.sample_pair(&model.state_from_spins(x)?, rng))
}

pub fn cw_cond_moments(model: &CurieWeissModel, x: &[f64]) -> Result<CondMoments> {
    Ok(model.cond_moments_of(&model.state_from_spins(x)?))
}
