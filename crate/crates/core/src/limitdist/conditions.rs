use serde::{Deserialize, Serialize};

use super::dist::LimitDistribution;
use super::gfunc::GFunction;

/// Outcome of one sampled-grid condition check. `margin` is the worst slack
/// on the grid: non-negative means the condition held everywhere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub pass: bool,
    pub margin: f64,
    pub worst_x: f64,
}

impl ConditionCheck {
    fn from_worst(margin: f64, worst_x: f64, slack: f64) -> Self {
        Self {
            pass: margin >= -slack,
            margin,
            worst_x,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthRatioCheck {
    #[serde(flatten)]
    pub check: ConditionCheck,
    pub tau: f64,
    pub k_tau: f64,
    pub realized_ratio: f64,
}

/// Condition report for a drift on a sampled grid.
///
/// `a3` only inspects `g·p` at the grid extremes, so it is a necessary-
/// condition check rather than a proof of decay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub a1: ConditionCheck,
    pub a2: ConditionCheck,
    /// `None` when no normalized distribution was supplied.
    pub a3: Option<ConditionCheck>,
    pub a4: GrowthRatioCheck,
    pub antideriv_zero_at_origin: bool,
    pub antideriv_convex: ConditionCheck,
    pub closed_form_derivatives: bool,
    pub grid_points: usize,
}

impl ConditionReport {
    pub fn all_pass(&self) -> bool {
        self.a1.pass && self.a2.pass && self.a3.as_ref().is_some_and(|c| c.pass) && self.a4.check.pass
    }
}

fn worst<I: Iterator<Item = (f64, f64)>>(it: I) -> (f64, f64) {
    it.fold(
        (f64::INFINITY, f64::NAN),
        |(m, wx), (v, x)| if v < m { (v, x) } else { (m, wx) },
    )
}

/// Checks the drift conditions on `grid` (sorted ascending).
pub fn check_conditions(g: &GFunction, dist: Option<&LimitDistribution>, grid: &[f64]) -> ConditionReport {
    const SLACK: f64 = 1e-12;
    let vals: Vec<f64> = grid.iter().map(|&x| g.eval(x)).collect();

    // A1: monotone and x g(x) ≥ 0.
    let mono = worst(grid.windows(2).zip(vals.windows(2)).map(|(x, v)| (v[1] - v[0], x[1])));
    let sign = worst(grid.iter().zip(&vals).map(|(&x, &v)| (x * v, x)));
    let (m1, x1) = if sign.0 <= mono.0 { sign } else { mono };
    let a1 = ConditionCheck::from_worst(m1, x1, SLACK);

    // A2: 2 g'^2 - g g'' ≥ 0.
    let (m2, x2) = worst(grid.iter().zip(&vals).map(|(&x, &v)| {
        let d1 = g.deriv1(x);
        (2.0 * d1 * d1 - v * g.deriv2(x), x)
    }));
    let a2_slack = if g.has_closed_form_derivatives() { SLACK } else { 1e-6 };
    let a2 = ConditionCheck::from_worst(m2, x2, a2_slack);

    // A3: g p vanishes at the grid extremes.
    let a3 = match (dist, grid.first(), grid.last()) {
        (Some(dist), Some(&lo), Some(&hi)) => {
            let at_lo = (g.eval(lo) * dist.pdf(lo)).abs();
            let at_hi = (g.eval(hi) * dist.pdf(hi)).abs();
            let (v, x) = if at_lo >= at_hi { (at_lo, lo) } else { (at_hi, hi) };
            Some(ConditionCheck::from_worst(dist.quad_tol() - v, x, 0.0))
        }
        _ => None,
    };

    // A4: g(x)/g(τx) ≤ K_τ wherever g(τx) ≠ 0.
    let tau = g.tau();
    let k_tau = g.k_tau();
    let (neg_ratio, x4) = worst(grid.iter().filter_map(|&x| {
        let den = g.eval(tau * x);
        (den != 0.0).then(|| (-(g.eval(x) / den), x))
    }));
    let realized = -neg_ratio;
    let a4 = GrowthRatioCheck {
        check: ConditionCheck::from_worst(k_tau - realized, x4, SLACK * k_tau.max(1.0)),
        tau,
        k_tau,
        realized_ratio: realized,
    };

    let big_g: Vec<f64> = grid.iter().map(|&x| g.antideriv(x)).collect();
    let (mc, xc) = worst(grid.windows(3).zip(big_g.windows(3)).map(|(x, v)| {
        // second divided difference, valid on non-uniform grids
        let left = (v[1] - v[0]) / (x[1] - x[0]);
        let right = (v[2] - v[1]) / (x[2] - x[1]);
        ((right - left) / (x[2] - x[0]) * 2.0, x[1])
    }));

    ConditionReport {
        a1,
        a2,
        a3,
        a4,
        antideriv_zero_at_origin: g.antideriv(0.0) == 0.0,
        antideriv_convex: ConditionCheck::from_worst(mc, xc, 1e-9),
        closed_form_derivatives: g.has_closed_form_derivatives(),
        grid_points: grid.len(),
    }
}

/// `n` evenly spaced points on `[lo, hi]`.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![lo];
    }
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + step * i as f64 })
        .collect()
}
