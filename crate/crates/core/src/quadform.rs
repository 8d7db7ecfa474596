//! Quadratic forms `W = (1/σ) Σ_{i≠j} a_ij X_i X_j` with the exchangeable
//! pair obtained by redrawing one coordinate.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::limitdist::quad::{gauss_legendre, gauss_legendre_integrate};
use crate::limitdist::{BaseLaw, GFunction, LawKind};
use crate::mcengine::McRng;
use crate::paircore::{CondMoments, MomentMethod, PairModel};

/// Full recomputation interval for incrementally updated states.
pub const RECOMPUTE_EVERY: usize = 1024;
const GL_ORDER: usize = 64;
const NORMAL_RANGE: f64 = 12.0;
const TAIL_MASS_LIMIT: f64 = 1e-8;

/// Symmetric zero-diagonal matrix stored by rows.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SymMatrix {
    pub fn from_dense(a: &[Vec<f64>]) -> Result<Self> {
        let n = a.len();
        let mut rows = vec![Vec::new(); n];
        for (i, row) in a.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::invalid(format!("non-finite entry at ({i}, {j})")));
                }
                let t = a[j][i];
                if (v - t).abs() > 1e-12 * v.abs().max(t.abs()).max(1.0) {
                    return Err(Error::invalid(format!("matrix is not symmetric at ({i}, {j})")));
                }
                if i == j && v != 0.0 {
                    return Err(Error::invalid(format!("diagonal entry ({i}, {i}) is {v}, must be 0")));
                }
                if v != 0.0 {
                    rows[i].push((j, v));
                }
            }
        }
        Ok(Self { n, rows })
    }

    /// Builds from `(i, j, value)` entries. An entry may be given for one
    /// triangle only; if both are given they must agree.
    pub fn from_triplets(n: usize, entries: &[(usize, usize, f64)]) -> Result<Self> {
        let mut map: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for &(i, j, v) in entries {
            if i >= n || j >= n {
                return Err(Error::invalid(format!("index ({i}, {j}) out of range for n = {n}")));
            }
            if !v.is_finite() {
                return Err(Error::invalid(format!("non-finite entry at ({i}, {j})")));
            }
            if i == j {
                if v != 0.0 {
                    return Err(Error::invalid(format!("diagonal entry ({i}, {i}) is {v}, must be 0")));
                }
                continue;
            }
            let key = (i.min(j), i.max(j));
            if let Some(&old) = map.get(&key) {
                if old != v {
                    return Err(Error::invalid(format!("entries ({i}, {j}) and ({j}, {i}) disagree")));
                }
            }
            map.insert(key, v);
        }
        let mut rows = vec![Vec::new(); n];
        for (&(i, j), &v) in &map {
            if v != 0.0 {
                rows[i].push((j, v));
                rows[j].push((i, v));
            }
        }
        for r in &mut rows {
            r.sort_by_key(|e| e.0);
        }
        Ok(Self { n, rows })
    }

    /// `a_{i,i+1} = a_{i+1,i} = 1`.
    pub fn tridiagonal(n: usize) -> Result<Self> {
        let entries: Vec<_> = (0..n.saturating_sub(1)).map(|i| (i, i + 1, 1.0)).collect();
        Self::from_triplets(n, &entries)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            n: self.n,
            rows: self
                .rows
                .iter()
                .map(|r| r.iter().map(|&(j, v)| (j, c * v)).collect())
                .collect(),
        }
    }

    /// `Σ_{i,j} a_ij²`
    pub fn frobenius_sq(&self) -> f64 {
        self.rows.iter().flatten().map(|(_, v)| v * v).sum()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|&(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; self.n]; self.n];
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, v) in r {
                a[i][j] = v;
            }
        }
        a
    }
}

/// Reads a dense comma-separated matrix, one row per line.
pub fn read_dense_csv(path: &Path) -> Result<SymMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    SymMatrix::from_dense(&rows)
}

/// Reads `i j value` lines (0-based, whitespace or comma separated; `#`
/// starts a comment). An optional `n <size>` line fixes the dimension,
/// otherwise it is one more than the largest index.
pub fn read_triplets(path: &Path) -> Result<SymMatrix> {
    parse_triplets(&std::fs::read_to_string(path)?)
}

pub fn parse_triplets(text: &str) -> Result<SymMatrix> {
    let mut n: Option<usize> = None;
    let mut entries: Vec<(usize, usize, f64)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        let bad = |msg: &str| Error::Parse(format!("line {}: {msg}", lineno + 1));
        match fields.as_slice() {
            ["n", size] => n = Some(size.parse().map_err(|_| bad("bad size"))?),
            [i, j, v] => entries.push((
                i.parse().map_err(|_| bad("bad row index"))?,
                j.parse().map_err(|_| bad("bad column index"))?,
                v.parse().map_err(|_| bad("bad value"))?,
            )),
            _ => return Err(bad("expected `i j value`")),
        }
    }
    let inferred = entries.iter().map(|&(i, j, _)| i.max(j) + 1).max().unwrap_or(0);
    SymMatrix::from_triplets(n.unwrap_or(inferred), &entries)
}

/// Loads a matrix: `.csv` files are dense, anything else is a triplet list.
pub fn load_matrix(path: &Path) -> Result<SymMatrix> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("csv") => read_dense_csv(path),
        _ => read_triplets(path),
    }
}

/// How `E[(x − X′)|x − X′|]` is evaluated for one coordinate value.
#[derive(Clone, Debug)]
enum SignedSquare {
    /// Values at each support point.
    Table { points: Vec<f64>, values: Vec<f64> },
    /// Gauss-Legendre on `[lo, x]` and `[x, hi]` against a density.
    Quadrature {
        lo: f64,
        hi: f64,
        nodes: Vec<f64>,
        weights: Vec<f64>,
    },
}

/// Quadratic form model over i.i.d. coordinates from `law`.
#[derive(Clone, Debug)]
pub struct QuadFormModel {
    a: SymMatrix,
    sigma: f64,
    law: BaseLaw,
    g: GFunction,
    signed: SignedSquare,
}

/// Coordinates, cached `b = A x` and the statistic.
#[derive(Clone, Debug, PartialEq)]
pub struct QfState {
    pub x: Vec<f64>,
    pub b: Vec<f64>,
    pub w: f64,
    moves: usize,
}

/// One coupled draw.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QfPair {
    pub w: f64,
    pub w_prime: f64,
    pub delta: f64,
    pub theta: usize,
    pub x_new: f64,
}

fn law_density(law: &BaseLaw, x: f64) -> f64 {
    match law.kind() {
        LawKind::StandardNormal => (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt(),
        LawKind::Uniform => {
            let a = 3f64.sqrt();
            if x.abs() <= a {
                0.5 / a
            } else {
                0.0
            }
        }
        _ => f64::NAN,
    }
}

impl QuadFormModel {
    pub fn new(a: SymMatrix, law: BaseLaw) -> Result<Self> {
        let fro = a.frobenius_sq();
        if !(fro > 0.0) {
            return Err(Error::Degenerate("A = 0 gives sigma_n = 0".into()));
        }
        let sigma = (2.0 * fro).sqrt();
        let signed = match (law.support(), law.kind()) {
            (Some((pts, probs)), _) => {
                let values = pts
                    .iter()
                    .map(|&x| pts.iter().zip(probs).map(|(&y, &p)| p * (x - y) * (x - y).abs()).sum())
                    .collect();
                SignedSquare::Table {
                    points: pts.to_vec(),
                    values,
                }
            }
            (None, LawKind::Uniform) => {
                let s = 3f64.sqrt();
                let (nodes, weights) = gauss_legendre(GL_ORDER);
                SignedSquare::Quadrature {
                    lo: -s,
                    hi: s,
                    nodes,
                    weights,
                }
            }
            (None, LawKind::StandardNormal) => {
                let (nodes, weights) = gauss_legendre(GL_ORDER);
                let r = NORMAL_RANGE;
                // Mass beyond ±12 is about 4e-33.
                let tail = 2.0 * crate::limitdist::LimitDistribution::standard_normal().sf(r);
                if tail > TAIL_MASS_LIMIT {
                    return Err(Error::invalid("quadrature range misses too much tail mass"));
                }
                SignedSquare::Quadrature {
                    lo: -r,
                    hi: r,
                    nodes,
                    weights,
                }
            }
            _ => return Err(Error::invalid("unsupported law for quadratic forms")),
        };
        Ok(Self {
            a,
            sigma,
            law,
            g: GFunction::standard_normal(),
            signed,
        })
    }

    pub fn tridiagonal(n: usize, law: BaseLaw) -> Result<Self> {
        Self::new(SymMatrix::tridiagonal(n)?, law)
    }

    pub fn n(&self) -> usize {
        self.a.n()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.a
    }

    pub fn law(&self) -> &BaseLaw {
        &self.law
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::Dimension {
                expected: self.n(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Builds the state for coordinates `x`.
    pub fn state(&self, x: Vec<f64>) -> Result<QfState> {
        self.check_len(&x)?;
        let b = self.a.mul_vec(&x);
        let w = x.iter().zip(&b).map(|(xi, bi)| xi * bi).sum::<f64>() / self.sigma;
        Ok(QfState { x, b, w, moves: 0 })
    }

    /// `E[(x − X′)|x − X′|]` for `X′` from the coordinate law.
    pub fn signed_square_mean(&self, x: f64) -> f64 {
        match &self.signed {
            SignedSquare::Table { points, values } => match points.iter().position(|&p| p == x) {
                Some(k) => values[k],
                None => self.law.support().map_or(f64::NAN, |(pts, probs)| {
                    pts.iter().zip(probs).map(|(&y, &p)| p * (x - y) * (x - y).abs()).sum()
                }),
            },
            SignedSquare::Quadrature { lo, hi, nodes, weights } => {
                let f = |y: f64| (x - y) * (x - y).abs() * law_density(&self.law, y);
                let mid = x.clamp(*lo, *hi);
                gauss_legendre_integrate(f, *lo, mid, nodes, weights)
                    + gauss_legendre_integrate(f, mid, *hi, nodes, weights)
            }
        }
    }

    /// Draws `θ` and a fresh coordinate and returns the coupled statistic.
    pub fn sample_pair(&self, s: &QfState, rng: &mut McRng) -> QfPair {
        let theta = rng.random_range(0..self.n());
        let x_new = self.law.sample(rng);
        self.pair_at(s, theta, x_new)
    }

    /// The coupled statistic for a given `θ` and replacement value.
    pub fn pair_at(&self, s: &QfState, theta: usize, x_new: f64) -> QfPair {
        let delta = 2.0 / self.sigma * s.b[theta] * (s.x[theta] - x_new);
        QfPair {
            w: s.w,
            w_prime: s.w - delta,
            delta,
            theta,
            x_new,
        }
    }

    /// Replaces coordinate `θ`, updating `b` and `W` in `O(row)`; every
    /// [`RECOMPUTE_EVERY`] moves the state is rebuilt from scratch.
    pub fn apply_move(&self, s: &mut QfState, theta: usize, x_new: f64) {
        let diff = x_new - s.x[theta];
        s.w += 2.0 / self.sigma * s.b[theta] * diff;
        for &(j, v) in self.a.row(theta) {
            s.b[j] += v * diff;
        }
        s.x[theta] = x_new;
        s.moves += 1;
        if s.moves.is_multiple_of(RECOMPUTE_EVERY) {
            let moves = s.moves;
            *s = self.state(std::mem::take(&mut s.x)).expect("length unchanged");
            s.moves = moves;
        }
    }

    /// Exact conditional moments: `d1 = (2/n) W`, `d2` in closed form,
    /// `dds` by support enumeration or quadrature.
    pub fn cond_moments_of(&self, s: &QfState) -> CondMoments {
        let n = self.n() as f64;
        let c = 2.0 / self.sigma;
        let m2 = self.law.moment(2);
        let mut d2 = 0.0;
        let mut dds = 0.0;
        for i in 0..self.n() {
            let b = s.b[i];
            if b == 0.0 {
                continue;
            }
            d2 += b * b * (s.x[i] * s.x[i] + m2);
            dds += b * b.abs() * self.signed_square_mean(s.x[i]);
        }
        d2 *= c * c / n;
        dds *= c * c / n;
        let mut m = CondMoments::exact(2.0 * s.w / n, d2, dds).with_residual(0.0);
        if matches!(self.signed, SignedSquare::Quadrature { .. }) {
            m.method = MomentMethod::Quadrature;
        }
        m
    }

    /// `(E X⁴/σ²)(sqrt(Σ_i(Σ_j a_ij²)²) + sqrt(Σ_{i,j} Σ_k (a_ik a_jk)²))`.
    pub fn theoretical_rhs(&self) -> f64 {
        let row_sq: Vec<f64> = (0..self.n())
            .map(|i| self.a.row(i).iter().map(|(_, v)| v * v).sum())
            .collect();
        let first: f64 = row_sq.iter().map(|r| r * r).sum();
        // Σ_{i,j} Σ_k a_ik² a_jk² = Σ_k (Σ_i a_ik²)², and columns equal rows.
        let second = first;
        self.law.moment(4) / (self.sigma * self.sigma) * (first.sqrt() + second.sqrt())
    }
}

impl PairModel for QuadFormModel {
    type State = QfState;

    fn sample_state(&self, rng: &mut McRng) -> Result<QfState> {
        let x = (0..self.n()).map(|_| self.law.sample(rng)).collect();
        self.state(x)
    }

    fn statistic(&self, s: &QfState) -> f64 {
        s.w
    }

    fn sample_coupled(&self, s: &QfState, rng: &mut McRng) -> Result<f64> {
        Ok(self.sample_pair(s, rng).w_prime)
    }

    fn lambda(&self) -> f64 {
        2.0 / self.n() as f64
    }

    fn g(&self) -> &GFunction {
        &self.g
    }

    fn cond_moments(&self, s: &QfState, _: &mut McRng) -> Result<CondMoments> {
        Ok(self.cond_moments_of(s))
    }
}

pub fn qf_statistic(model: &QuadFormModel, x: &[f64]) -> Result<f64> {
    Ok(model.state(x.to_vec())?.w)
}

pub fn qf_sample_pair(model: &QuadFormModel, x: &[f64], rng: &mut McRng) -> Result<QfPair> {
    Ok(model.sample_pair(&model.state(x.to_vec())?, rng))
}

pub fn qf_cond_moments(model: &QuadFormModel, x: &[f64]) -> Result<CondMoments> {
    Ok(model.cond_moments_of(&model.state(x.to_vec())?))
}

pub fn qf_theoretical_rhs(model: &QuadFormModel) -> f64 {
    model.theoretical_rhs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcengine::stream_rng;

    fn one_pair() -> QuadFormModel {
        let a = SymMatrix::from_triplets(3, &[(0, 1, 1.0)]).unwrap();
        QuadFormModel::new(a, BaseLaw::rademacher()).unwrap()
    }

    #[test]
    fn statistic_examples() {
        let m = one_pair();
        assert_eq!(m.sigma(), 2.0);
        assert_eq!(qf_statistic(&m, &[1.0, 1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(qf_statistic(&m, &[0.0; 3]).unwrap(), 0.0);
        assert!(matches!(qf_statistic(&m, &[1.0; 2]), Err(Error::Dimension { .. })));
        let zero = SymMatrix::from_triplets(3, &[]).unwrap();
        assert!(QuadFormModel::new(zero, BaseLaw::rademacher()).is_err());
    }

    #[test]
    fn pair_examples() {
        let m = one_pair();
        let s = m.state(vec![1.0, 1.0, 1.0]).unwrap();
        let p = m.pair_at(&s, 0, -1.0);
        assert_eq!(p.delta, 2.0);
        // row 3 is empty
        assert_eq!(m.pair_at(&s, 2, -1.0).delta, 0.0);
    }

    #[test]
    fn rhs_examples() {
        let m = one_pair();
        assert!((m.theoretical_rhs() - 0.5 * 2f64.sqrt()).abs() < 1e-15);
        let t = QuadFormModel::tridiagonal(4, BaseLaw::rademacher()).unwrap();
        assert!((t.sigma() * t.sigma() - 12.0).abs() < 1e-12);
        assert!((t.theoretical_rhs() - 2.0 * 10f64.sqrt() / 12.0).abs() < 1e-15);
        for c in [0.5, 3.0] {
            let scaled = QuadFormModel::new(t.matrix().scaled(c), BaseLaw::rademacher()).unwrap();
            assert!((scaled.theoretical_rhs() - t.theoretical_rhs()).abs() < 1e-14);
        }
    }

    #[test]
    fn incremental_matches_recompute() {
        let m = QuadFormModel::new(
            SymMatrix::from_dense(&[
                vec![0.0, 0.3, -1.2, 0.0],
                vec![0.3, 0.0, 0.5, 2.0],
                vec![-1.2, 0.5, 0.0, 0.7],
                vec![0.0, 2.0, 0.7, 0.0],
            ])
            .unwrap(),
            BaseLaw::standard_normal(),
        )
        .unwrap();
        let mut rng = stream_rng(1, 0);
        let mut s = m.sample_state(&mut rng).unwrap();
        for _ in 0..3000 {
            let p = m.sample_pair(&s, &mut rng);
            m.apply_move(&mut s, p.theta, p.x_new);
            let fresh = m.state(s.x.clone()).unwrap();
            assert!((fresh.w - p.w_prime).abs() < 1e-10);
            assert!((fresh.w - s.w).abs() < 1e-10);
        }
    }

    #[test]
    fn signed_square_closed_forms() {
        // Y = x − X′ with X′ ~ N(0,1): E Y|Y| = (x² + 1)(2Φ(x) − 1) + 2xφ(x)
        let m = QuadFormModel::tridiagonal(4, BaseLaw::standard_normal()).unwrap();
        let phi = crate::limitdist::LimitDistribution::standard_normal();
        for x in [-2.5, -0.3, 0.0, 1.1, 3.0] {
            let expect = (x * x + 1.0) * (2.0 * phi.cdf(x) - 1.0) + 2.0 * x * phi.pdf(x);
            assert!((m.signed_square_mean(x) - expect).abs() < 1e-12, "x={x}");
        }
        // uniform on [-√3, √3]: (1/2√3)[y²|y|/3] between x − √3 and x + √3
        let u = QuadFormModel::tridiagonal(4, BaseLaw::uniform()).unwrap();
        let s = 3f64.sqrt();
        let anti = |y: f64| y * y * y.abs() / 3.0;
        for x in [-1.7, -0.2, 0.0, 0.9] {
            let expect = (anti(x + s) - anti(x - s)) / (2.0 * s);
            assert!((u.signed_square_mean(x) - expect).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn file_formats() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("a.csv");
        std::fs::write(&csv, "0,1,0\n1,0,2\n0,2,0\n").unwrap();
        let tri = dir.path().join("a.txt");
        std::fs::write(&tri, "# upper triangle\n0 1 1\n1 2 2\n").unwrap();
        assert_eq!(load_matrix(&csv).unwrap(), load_matrix(&tri).unwrap());
        assert_eq!(parse_triplets("n 5\n0 1 1").unwrap().n(), 5);
        assert!(parse_triplets("0 0 1").is_err());
        assert!(parse_triplets("0 1 1\n1 0 2").is_err());
        assert!(SymMatrix::from_dense(&[vec![0.0, 1.0], vec![2.0, 0.0]]).is_err());
    }
}
