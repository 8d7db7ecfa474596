//! Sum-of-squared-correlations statistic
//! `W = c_{n,p} (Σ_{i<j} r_ij² − p(p−1)/2(n−1))` for `p` variables observed
//! `n` times, with the pair obtained by replacing one variable's row by a
//! fresh independent row.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::limitdist::{BaseLaw, GFunction, LawKind, LimitDistribution};
use crate::mcengine::McRng;
use crate::paircore::{CondMoments, InnerStats, MomentMethod, PairModel};

pub const DEFAULT_INNER: usize = 200;
/// Consecutive degenerate rows tolerated before giving up.
const MAX_REDRAWS: usize = 1000;

/// Centered, unit-norm version of a row, or `None` if the row is constant.
pub fn normalize_row(x: &[f64]) -> Option<Vec<f64>> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let ss: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    if !(ss > 0.0) || !ss.is_finite() {
        return None;
    }
    let inv = 1.0 / ss.sqrt();
    Some(x.iter().map(|v| (v - mean) * inv).collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Debug)]
pub struct IndepModel {
    n: usize,
    p: usize,
    law: BaseLaw,
    c_np: f64,
    center: f64,
    inner: usize,
    g: GFunction,
}

/// Data rows, their normalized residuals and cached row sums of `r_ij²`.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrState {
    pub x: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    /// `Σ_{j≠i} r_ij²` for each row `i`.
    pub r2sums: Vec<f64>,
    pub t: f64,
    pub w: f64,
    /// Degenerate rows redrawn while building the state.
    pub redraws: usize,
}

/// One coupled draw.
#[derive(Clone, Debug, PartialEq)]
pub struct ItPair {
    pub w: f64,
    pub w_star: f64,
    pub delta: f64,
    pub theta: usize,
    pub row: Vec<f64>,
    pub u_row: Vec<f64>,
    /// `Σ_{j≠θ} r_{θ*j}²`
    pub new_sum: f64,
    pub redraws: usize,
}

impl IndepModel {
    pub fn new(n: usize, p: usize, law: BaseLaw) -> Result<Self> {
        if n < 4 {
            return Err(Error::invalid(format!("n must be at least 4, got {n}")));
        }
        if p < 2 {
            return Err(Error::invalid(format!("p must be at least 2, got {p}")));
        }
        if let Some((pts, _)) = law.support() {
            if pts.len() < 3 {
                return Err(Error::invalid("entry law needs at least 3 support points"));
            }
        }
        if !law.moment(6).is_finite() {
            return Err(Error::invalid("entry law needs a finite sixth moment"));
        }
        let (nf, pf) = (n as f64, p as f64);
        Ok(Self {
            n,
            p,
            law,
            c_np: nf * (nf + 2.0).sqrt() / (pf * (pf - 1.0) * (nf - 1.0)).sqrt(),
            center: pf * (pf - 1.0) / (2.0 * (nf - 1.0)),
            inner: DEFAULT_INNER,
            g: GFunction::standard_normal(),
        })
    }

    /// Default entry law: uniform on `[−√3, √3]`.
    pub fn uniform(n: usize, p: usize) -> Result<Self> {
        Self::new(n, p, BaseLaw::uniform())
    }

    pub fn with_inner(mut self, m: usize) -> Result<Self> {
        if m < 100 {
            return Err(Error::invalid(format!(
                "inner sample size must be at least 100, got {m}"
            )));
        }
        self.inner = m;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn c_np(&self) -> f64 {
        self.c_np
    }

    /// `p(p−1)/2(n−1)`, the mean of `t`.
    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn inner(&self) -> usize {
        self.inner
    }

    pub fn law(&self) -> &BaseLaw {
        &self.law
    }

    pub fn statistic_of_t(&self, t: f64) -> f64 {
        self.c_np * (t - self.center)
    }

    /// Draws a non-constant row, counting redraws.
    pub fn sample_row<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>, usize)> {
        for redraws in 0..MAX_REDRAWS {
            let x: Vec<f64> = (0..self.n).map(|_| self.law.sample(rng)).collect();
            if let Some(u) = normalize_row(&x) {
                return Ok((x, u, redraws));
            }
        }
        Err(Error::Degenerate(format!("{MAX_REDRAWS} constant rows in a row")))
    }

    /// Builds the state for `p` rows of length `n`.
    pub fn state(&self, x: Vec<Vec<f64>>) -> Result<CorrState> {
        if x.len() != self.p {
            return Err(Error::Dimension {
                expected: self.p,
                got: x.len(),
            });
        }
        let mut u = Vec::with_capacity(self.p);
        for (i, row) in x.iter().enumerate() {
            if row.len() != self.n {
                return Err(Error::Dimension {
                    expected: self.n,
                    got: row.len(),
                });
            }
            u.push(normalize_row(row).ok_or_else(|| Error::Degenerate(format!("row {i} has zero variance")))?);
        }
        Ok(self.state_from_parts(x, u, 0))
    }

    fn state_from_parts(&self, x: Vec<Vec<f64>>, u: Vec<Vec<f64>>, redraws: usize) -> CorrState {
        let mut r2sums = vec![0.0; self.p];
        for i in 0..self.p {
            for j in 0..i {
                let r = dot(&u[i], &u[j]);
                r2sums[i] += r * r;
                r2sums[j] += r * r;
            }
        }
        let t = 0.5 * r2sums.iter().sum::<f64>();
        CorrState {
            x,
            u,
            r2sums,
            t,
            w: self.statistic_of_t(t),
            redraws,
        }
    }

    /// `r_ij` of a state.
    pub fn r(&self, st: &CorrState, i: usize, j: usize) -> f64 {
        dot(&st.u[i], &st.u[j])
    }

    fn new_row_sum(&self, st: &CorrState, theta: usize, u_row: &[f64]) -> f64 {
        (0..self.p)
            .filter(|&j| j != theta)
            .map(|j| {
                let r = dot(u_row, &st.u[j]);
                r * r
            })
            .sum()
    }

    /// Coupled statistic for a chosen row and normalized replacement.
    pub fn pair_at(&self, st: &CorrState, theta: usize, row: Vec<f64>, u_row: Vec<f64>) -> ItPair {
        let new_sum = self.new_row_sum(st, theta, &u_row);
        let delta = self.c_np * (st.r2sums[theta] - new_sum);
        ItPair {
            w: st.w,
            w_star: st.w - delta,
            delta,
            theta,
            row,
            u_row,
            new_sum,
            redraws: 0,
        }
    }

    pub fn sample_pair<R: Rng + ?Sized>(&self, st: &CorrState, rng: &mut R) -> Result<ItPair> {
        let theta = rng.random_range(0..self.p);
        let (row, u_row, redraws) = self.sample_row(rng)?;
        let mut pair = self.pair_at(st, theta, row, u_row);
        pair.redraws = redraws;
        Ok(pair)
    }

    /// Replaces row `θ` in `O(np)`.
    pub fn apply_pair(&self, st: &mut CorrState, pair: ItPair) {
        let theta = pair.theta;
        for j in 0..self.p {
            if j == theta {
                continue;
            }
            let old = dot(&st.u[theta], &st.u[j]);
            let new = dot(&pair.u_row, &st.u[j]);
            st.r2sums[j] += new * new - old * old;
        }
        st.t += pair.new_sum - st.r2sums[theta];
        st.r2sums[theta] = pair.new_sum;
        st.w = self.statistic_of_t(st.t);
        st.x[theta] = pair.row;
        st.u[theta] = pair.u_row;
    }

    /// `d1 = (2/p) W` exactly; `d2` and `dds` from `m` inner draws of
    /// `(θ, X*)`, with the inner variances kept for bias correction.
    pub fn cond_moments_with<R: Rng + ?Sized>(&self, st: &CorrState, m: usize, rng: &mut R) -> Result<CondMoments> {
        let mut sq = Vec::with_capacity(m);
        let mut sa = Vec::with_capacity(m);
        let mut failures = 0;
        for _ in 0..m {
            let theta = rng.random_range(0..self.p);
            let (_, u_row, redraws) = self.sample_row(rng)?;
            failures += redraws;
            let d = self.c_np * (st.r2sums[theta] - self.new_row_sum(st, theta, &u_row));
            sq.push(d * d);
            sa.push(d * d.abs());
        }
        let mf = m as f64;
        let mean = |v: &[f64]| crate::mcengine::pairwise_sum(v) / mf;
        let var = |v: &[f64], mu: f64| {
            let dev: Vec<f64> = v.iter().map(|x| (x - mu) * (x - mu)).collect();
            crate::mcengine::pairwise_sum(&dev) / (mf - 1.0)
        };
        let d2 = mean(&sq);
        let dds = mean(&sa);
        let var_d2 = var(&sq, d2);
        let var_dds = var(&sa, dds);
        Ok(CondMoments {
            d1: 2.0 / self.p as f64 * st.w,
            d2,
            dds,
            method: MomentMethod::NestedMc { m },
            se: Some((var_d2 / mf).sqrt()),
            d2star: Some(d2),
            residual: Some(0.0),
            inner: Some(InnerStats {
                m,
                var_d2,
                var_dds,
                failures,
            }),
        })
    }
}

impl PairModel for IndepModel {
    type State = CorrState;

    fn sample_state(&self, rng: &mut McRng) -> Result<CorrState> {
        let mut x = Vec::with_capacity(self.p);
        let mut u = Vec::with_capacity(self.p);
        let mut redraws = 0;
        for _ in 0..self.p {
            let (row, ur, r) = self.sample_row(rng)?;
            x.push(row);
            u.push(ur);
            redraws += r;
        }
        Ok(self.state_from_parts(x, u, redraws))
    }

    fn statistic(&self, st: &CorrState) -> f64 {
        st.w
    }

    fn sample_coupled(&self, st: &CorrState, rng: &mut McRng) -> Result<f64> {
        Ok(self.sample_pair(st, rng)?.w_star)
    }

    fn lambda(&self) -> f64 {
        2.0 / self.p as f64
    }

    fn g(&self) -> &GFunction {
        &self.g
    }

    fn cond_moments(&self, st: &CorrState, rng: &mut McRng) -> Result<CondMoments> {
        self.cond_moments_with(st, self.inner, rng)
    }
}

pub fn it_statistic(model: &IndepModel, x: Vec<Vec<f64>>) -> Result<CorrState> {
    model.state(x)
}

pub fn it_sample_pair<R: Rng + ?Sized>(model: &IndepModel, st: &CorrState, rng: &mut R) -> Result<ItPair> {
    model.sample_pair(st, rng)
}

pub fn it_cond_moments<R: Rng + ?Sized>(
    model: &IndepModel,
    st: &CorrState,
    rng: &mut R,
    m: usize,
) -> Result<CondMoments> {
    if m < 100 {
        return Err(Error::invalid(format!(
            "inner sample size must be at least 100, got {m}"
        )));
    }
    model.cond_moments_with(st, m, rng)
}

/// The statistic on a user data matrix with its normal upper-tail
/// probability `1 − Φ(W)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub n: usize,
    pub p: usize,
    pub t: f64,
    pub w: f64,
    pub tail_probability: f64,
}

/// Reads a CSV with one variable per row and one observation per column.
pub fn read_data_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        rows.push(
            rec?.iter()
                .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}"))))
                .collect::<Result<Vec<f64>>>()?,
        );
    }
    Ok(rows)
}

pub fn data_summary(rows: Vec<Vec<f64>>) -> Result<DataSummary> {
    let p = rows.len();
    let n = rows.first().map_or(0, Vec::len);
    let model = IndepModel::new(n, p, BaseLaw::uniform())?;
    let st = model.state(rows)?;
    Ok(DataSummary {
        n,
        p,
        t: st.t,
        w: st.w,
        tail_probability: LimitDistribution::standard_normal().sf(st.w),
    })
}

/// Whether the law is the continuous default (no degenerate rows).
pub fn is_continuous(law: &BaseLaw) -> bool {
    matches!(law.kind(), LawKind::Uniform | LawKind::StandardNormal)
}
