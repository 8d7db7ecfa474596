use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest raw moment order stored on every law.
pub const MAX_MOMENT: usize = 16;

const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Clone, Debug, PartialEq)]
pub enum LawKind {
    Rademacher,
    FiniteSupport,
    StandardNormal,
    /// Uniform on `[-√3, √3]`.
    Uniform,
}

/// How a law is written in config and law files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LawSpec {
    Named(String),
    Finite { points: Vec<f64>, probs: Vec<f64> },
}

/// A mean-zero, unit-variance base law.
#[derive(Clone, Debug)]
pub struct BaseLaw {
    kind: LawKind,
    points: Vec<f64>,
    probs: Vec<f64>,
    cum_probs: Vec<f64>,
    // moments[j] = E ξ^j, j = 0..=MAX_MOMENT
    moments: Vec<f64>,
    exact_moments: Option<Vec<BigRational>>,
}

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn rat_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

impl BaseLaw {
    pub fn rademacher() -> Self {
        let mut law = Self::finite_rational(vec![rat(-1, 1), rat(1, 1)], vec![rat(1, 2), rat(1, 2)])
            .expect("Rademacher is a valid law");
        law.kind = LawKind::Rademacher;
        law
    }

    pub fn standard_normal() -> Self {
        let moments = (0..=MAX_MOMENT).map(normal_moment).collect();
        Self {
            kind: LawKind::StandardNormal,
            points: Vec::new(),
            probs: Vec::new(),
            cum_probs: Vec::new(),
            moments,
            exact_moments: None,
        }
    }

    /// Uniform on `[-√3, √3]`; `E ξ^{2j} = 3^j / (2j + 1)`.
    pub fn uniform() -> Self {
        let moments = (0..=MAX_MOMENT)
            .map(|j| {
                if j % 2 == 1 {
                    0.0
                } else {
                    3f64.powi(j as i32 / 2) / (j as f64 + 1.0)
                }
            })
            .collect();
        Self {
            kind: LawKind::Uniform,
            points: Vec::new(),
            probs: Vec::new(),
            cum_probs: Vec::new(),
            moments,
            exact_moments: None,
        }
    }

    /// Finite-support law with floating probabilities; moments by summation.
    pub fn finite(points: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        validate_support(&points, &probs)?;
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
        }
        let moments: Vec<f64> = (0..=MAX_MOMENT)
            .map(|j| {
                crate::mcengine::pairwise_sum(
                    &points
                        .iter()
                        .zip(&probs)
                        .map(|(x, p)| p * x.powi(j as i32))
                        .collect::<Vec<_>>(),
                )
            })
            .collect();
        check_standardized(moments[1], moments[2], 1e-9)?;
        Ok(Self::assemble(LawKind::FiniteSupport, points, probs, moments, None))
    }

    /// Finite-support law with exact rational points and probabilities.
    pub fn finite_rational(points: Vec<BigRational>, probs: Vec<BigRational>) -> Result<Self> {
        if points.len() != probs.len() || points.is_empty() {
            return Err(Error::invalid(
                "points and probabilities must be non-empty and equal length",
            ));
        }
        if probs.iter().any(|p| p.is_negative()) {
            return Err(Error::invalid("negative probability"));
        }
        let total = probs.iter().fold(BigRational::zero(), |a, p| a + p);
        if !total.is_one() {
            return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
        }
        let exact: Vec<BigRational> = (0..=MAX_MOMENT)
            .map(|j| {
                points.iter().zip(&probs).fold(BigRational::zero(), |acc, (x, p)| {
                    acc + p * num_traits::pow(x.clone(), j)
                })
            })
            .collect();
        if !exact[1].is_zero() || !exact[2].is_one() {
            return Err(Error::invalid(format!(
                "law must have mean 0 and variance 1 (got {} and {})",
                exact[1], exact[2]
            )));
        }
        let pf: Vec<f64> = points.iter().map(rat_to_f64).collect();
        let qf: Vec<f64> = probs.iter().map(rat_to_f64).collect();
        validate_support(&pf, &qf)?;
        let moments = exact.iter().map(rat_to_f64).collect();
        Ok(Self::assemble(LawKind::FiniteSupport, pf, qf, moments, Some(exact)))
    }

    fn assemble(
        kind: LawKind,
        points: Vec<f64>,
        probs: Vec<f64>,
        moments: Vec<f64>,
        exact_moments: Option<Vec<BigRational>>,
    ) -> Self {
        let mut cum = 0.0;
        let cum_probs = probs
            .iter()
            .map(|p| {
                cum += p;
                cum
            })
            .collect();
        Self {
            kind,
            points,
            probs,
            cum_probs,
            moments,
            exact_moments,
        }
    }

    pub fn from_spec(spec: &LawSpec) -> Result<Self> {
        match spec {
            LawSpec::Named(name) => match name.to_ascii_lowercase().as_str() {
                "rademacher" => Ok(Self::rademacher()),
                "normal" | "standard_normal" | "gaussian" => Ok(Self::standard_normal()),
                "uniform" => Ok(Self::uniform()),
                other => Err(Error::invalid(format!("unknown law `{other}`"))),
            },
            LawSpec::Finite { points, probs } => Self::finite(points.clone(), probs.clone()),
        }
    }

    pub fn spec(&self) -> LawSpec {
        match self.kind {
            LawKind::Rademacher => LawSpec::Named("rademacher".into()),
            LawKind::StandardNormal => LawSpec::Named("normal".into()),
            LawKind::Uniform => LawSpec::Named("uniform".into()),
            LawKind::FiniteSupport => LawSpec::Finite {
                points: self.points.clone(),
                probs: self.probs.clone(),
            },
        }
    }

    pub fn kind(&self) -> &LawKind {
        &self.kind
    }

    /// `(points, probabilities)` for finite-support laws.
    pub fn support(&self) -> Option<(&[f64], &[f64])> {
        if self.points.is_empty() {
            None
        } else {
            Some((&self.points, &self.probs))
        }
    }

    pub fn is_finite_support(&self) -> bool {
        !self.points.is_empty()
    }

    /// `E ξ^j` for `j ≤ MAX_MOMENT`.
    pub fn moment(&self, j: usize) -> f64 {
        self.moments[j]
    }

    pub fn moments(&self) -> &[f64] {
        &self.moments
    }

    pub fn exact_moment(&self, j: usize) -> Option<&BigRational> {
        self.exact_moments.as_ref().map(|m| &m[j])
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            LawKind::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            LawKind::StandardNormal => rng.sample(StandardNormal),
            LawKind::Uniform => SQRT3 * (2.0 * rng.random::<f64>() - 1.0),
            LawKind::FiniteSupport => {
                let u = rng.random::<f64>();
                let i = self.cum_probs.partition_point(|&c| c <= u);
                self.points[i.min(self.points.len() - 1)]
            }
        }
    }

    /// `ln E e^{tξ}`.
    pub fn ln_mgf(&self, t: f64) -> f64 {
        match self.kind {
            LawKind::StandardNormal => 0.5 * t * t,
            LawKind::Uniform => {
                let a = (SQRT3 * t).abs();
                if a < 1e-4 {
                    a * a / 6.0 - a.powi(4) / 180.0
                } else {
                    a - (2.0 * a).ln() + (-(-2.0 * a).exp()).ln_1p()
                }
            }
            _ => log_sum_exp(self.points.iter().zip(&self.probs).map(|(x, p)| p.ln() + t * x)),
        }
    }

    /// Probabilities of the tilted law `∝ p_j e^{θ x_j}` (finite support).
    pub fn tilted_probs(&self, theta: f64) -> Vec<f64> {
        let logs: Vec<f64> = self
            .points
            .iter()
            .zip(&self.probs)
            .map(|(x, p)| p.ln() + theta * x)
            .collect();
        let lse = log_sum_exp(logs.iter().copied());
        logs.into_iter().map(|l| (l - lse).exp()).collect()
    }
}

fn validate_support(points: &[f64], probs: &[f64]) -> Result<()> {
    if points.len() != probs.len() || points.is_empty() {
        return Err(Error::invalid(
            "points and probabilities must be non-empty and equal length",
        ));
    }
    if points.iter().chain(probs).any(|v| !v.is_finite()) {
        return Err(Error::invalid("support and probabilities must be finite"));
    }
    if probs.iter().any(|&p| p < 0.0) {
        return Err(Error::invalid("negative probability"));
    }
    for (i, a) in points.iter().enumerate() {
        if points[i + 1..].contains(a) {
            return Err(Error::invalid(format!("duplicate support point {a}")));
        }
    }
    Ok(())
}

fn check_standardized(mean: f64, var: f64, tol: f64) -> Result<()> {
    if mean.abs() > tol || (var - 1.0).abs() > tol {
        return Err(Error::invalid(format!(
            "law must have mean 0 and variance 1 (got {mean} and {var})"
        )));
    }
    Ok(())
}

pub(crate) fn log_sum_exp<I: Iterator<Item = f64>>(it: I) -> f64 {
    let v: Vec<f64> = it.collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `E Z^j` for standard normal `Z`: `0` for odd `j`, `(j-1)!!` for even `j`.
pub fn normal_moment(j: usize) -> f64 {
    rat_to_f64(&normal_moment_exact(j))
}

pub fn normal_moment_exact(j: usize) -> BigRational {
    if j % 2 == 1 {
        return BigRational::zero();
    }
    let mut acc = BigInt::one();
    let mut k = 1i64;
    while (k as usize) < j {
        acc *= k;
        k += 2;
    }
    BigRational::from_integer(acc)
}

fn binomial(n: usize, k: usize) -> u128 {
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

fn cumulant_recursion<T, F>(moments: &[T], from_int: F) -> Vec<T>
where
    T: Clone + std::ops::Sub<Output = T> + std::ops::Mul<Output = T> + std::ops::Add<Output = T> + Zero,
    F: Fn(u128) -> T,
{
    let m = moments.len();
    let mut kappa: Vec<T> = Vec::with_capacity(m);
    for order in 1..=m {
        let mut acc = T::zero();
        for j in 1..order {
            let c = from_int(binomial(order - 1, j - 1));
            acc = acc + c * kappa[j - 1].clone() * moments[order - j - 1].clone();
        }
        kappa.push(moments[order - 1].clone() - acc);
    }
    kappa
}

/// Cumulants `κ₁..κ_m` from raw moments `μ₁..μ_m` by
/// `κ_m = μ_m − Σ_{j<m} C(m−1, j−1) κ_j μ_{m−j}`.
pub fn cumulants_from_moments(moments: &[f64]) -> Result<Vec<f64>> {
    if moments.is_empty() {
        return Err(Error::invalid("moment list is empty"));
    }
    if moments.iter().any(|m| !m.is_finite()) {
        return Err(Error::invalid("moments must be finite"));
    }
    Ok(cumulant_recursion(moments, |c| c as f64))
}

/// Exact version of [`cumulants_from_moments`].
pub fn cumulants_from_moments_exact(moments: &[BigRational]) -> Result<Vec<BigRational>> {
    if moments.is_empty() {
        return Err(Error::invalid("moment list is empty"));
    }
    Ok(cumulant_recursion(moments, |c| {
        BigRational::from_integer(BigInt::from(c))
    }))
}

/// Inverse of [`cumulants_from_moments`].
pub fn moments_from_cumulants(cumulants: &[f64]) -> Result<Vec<f64>> {
    if cumulants.is_empty() {
        return Err(Error::invalid("cumulant list is empty"));
    }
    let m = cumulants.len();
    // mu[0] = 1 here; shifted on return.
    let mut mu = vec![1.0];
    for order in 1..=m {
        let mut acc = 0.0;
        for j in 1..=order {
            acc += binomial(order - 1, j - 1) as f64 * cumulants[j - 1] * mu[order - j];
        }
        mu.push(acc);
    }
    Ok(mu[1..].to_vec())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeClassification {
    pub k: usize,
    pub lambda_rho: f64,
    pub matched_orders: Vec<usize>,
    /// True when the comparison ran on exact rational moments.
    pub exact: bool,
}

/// Finds the type `k` of a standardized law: moments agree with the normal
/// through order `2k − 1` and first differ at order `2k`.
pub fn classify_type(law: &BaseLaw, k_max: usize, tol: f64) -> Result<TypeClassification> {
    if k_max == 0 || 2 * k_max > MAX_MOMENT {
        return Err(Error::invalid(format!("k_max must lie in 1..={}", MAX_MOMENT / 2)));
    }
    check_standardized(law.moment(1), law.moment(2), tol.max(1e-12))?;
    let exact = law.exact_moments.is_some();
    let mut matched = Vec::new();
    for j in 1..=2 * k_max {
        let (diff, differs) = match law.exact_moment(j) {
            Some(m) => {
                let d = normal_moment_exact(j) - m;
                let differs = !d.is_zero();
                (rat_to_f64(&d), differs)
            }
            None => {
                let d = normal_moment(j) - law.moment(j);
                (d, d.abs() > tol)
            }
        };
        if !differs {
            matched.push(j);
            continue;
        }
        if j % 2 == 1 {
            return Err(Error::NoType {
                k_max,
                reason: format!("odd moment of order {j} differs from the normal by {diff}"),
            });
        }
        return Ok(TypeClassification {
            k: j / 2,
            lambda_rho: diff,
            matched_orders: matched,
            exact,
        });
    }
    Err(Error::NoType {
        k_max,
        reason: format!("moments match the normal through order {}", 2 * k_max),
    })
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// `c₂ = −κ_{2k} / (2k)!`, the leading Taylor coefficient of
/// `H(s) = s²/2 − ln E e^{sξ}` for a type-`k` law.
pub fn cw_c2(law: &BaseLaw, k: usize) -> Result<f64> {
    let order = 2 * k;
    if order > MAX_MOMENT || k < 2 {
        return Err(Error::invalid(format!("type k must lie in 2..={}", MAX_MOMENT / 2)));
    }
    let kappa = match &law.exact_moments {
        Some(exact) => rat_to_f64(&cumulants_from_moments_exact(&exact[1..=order])?[order - 1]),
        None => cumulants_from_moments(&law.moments[1..=order])?[order - 1],
    };
    Ok(-kappa / factorial(order))
}
