//! Limit laws with density `c1 exp(-G)`, base laws and their cumulants.

mod conditions;
mod dist;
mod gfunc;
mod law;
pub mod quad;

pub use conditions::{check_conditions, uniform_grid, ConditionCheck, ConditionReport, GrowthRatioCheck};
pub use dist::{default_x_max, normalize, DistSpec, LimitDistribution, DEFAULT_QUAD_TOL, LOG_DENSITY_CUTOFF};
pub use gfunc::{fd_step, Drift, GFunction, GSpec, DEFAULT_TAU};
pub use law::{
    classify_type, cumulants_from_moments, cumulants_from_moments_exact, cw_c2, moments_from_cumulants, normal_moment,
    normal_moment_exact, BaseLaw, LawKind, LawSpec, TypeClassification, MAX_MOMENT,
};

use crate::error::{Error, Result};

/// Tolerance for moment comparisons on laws without exact moments.
pub const TYPE_TOL: f64 = 1e-9;

/// Drift `g(x) = 2k c₂ x^{2k−1}` of the critical Curie-Weiss limit for a
/// type-`k` law.
pub fn cw_drift(law: &BaseLaw, k: usize) -> Result<GFunction> {
    let c2 = cw_c2(law, k)?;
    if !(c2 > 0.0) {
        return Err(Error::NonPositiveC2 { c2 });
    }
    GFunction::odd_power(2.0 * k as f64 * c2, 2.0 * k as f64 - 1.0)
}

/// Limit law `p_k(y) = c₁ exp(−c₂ y^{2k})` for a type-`k` base law.
pub fn build_cw_limit(law: &BaseLaw, k: usize) -> Result<LimitDistribution> {
    let t = classify_type(law, (MAX_MOMENT / 2).max(k), TYPE_TOL)?;
    if t.k != k {
        return Err(Error::invalid(format!("law is of type {}, not {k}", t.k)));
    }
    normalize(cw_drift(law, k)?, None, DEFAULT_QUAD_TOL)
}
