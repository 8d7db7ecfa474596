//! Python bindings: limit laws, Stein solutions, the three pair models and
//! the experiment driver. Structured results come back as dicts.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use steinpair_core::curieweiss::CurieWeissModel;
use steinpair_core::experiment::{acceptance_checks, run_experiment, ExperimentConfig, RunOptions};
use steinpair_core::indeptest::{data_summary, IndepModel};
use steinpair_core::limitdist::{self, BaseLaw, GFunction, LawSpec};
use steinpair_core::mcengine::{self, stream_rng};
use steinpair_core::paircore::{estimate_bound_terms, exchangeability_check, PairModel};
use steinpair_core::quadform::{QuadFormModel, SymMatrix};
use steinpair_core::steinsolve::SteinSolution;

fn err(e: steinpair_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn law(name: &str) -> PyResult<BaseLaw> {
    BaseLaw::from_spec(&LawSpec::Named(name.to_string())).map_err(err)
}

/// Distribution with density `c1 exp(-G)`.
#[pyclass(name = "LimitDistribution", frozen)]
struct PyLimit {
    inner: limitdist::LimitDistribution,
}

#[pymethods]
impl PyLimit {
    #[staticmethod]
    fn standard_normal() -> Self {
        Self {
            inner: limitdist::LimitDistribution::standard_normal(),
        }
    }

    /// `g(x) = coef · sgn(x)|x|^power`
    #[staticmethod]
    fn odd_power(coef: f64, power: f64) -> PyResult<Self> {
        let g = GFunction::odd_power(coef, power).map_err(err)?;
        let inner = limitdist::normalize(g, None, limitdist::DEFAULT_QUAD_TOL).map_err(err)?;
        Ok(Self { inner })
    }

    /// Critical Curie-Weiss limit of a named base law of type `k`.
    #[staticmethod]
    fn curie_weiss(law_name: &str, k: usize) -> PyResult<Self> {
        let inner = limitdist::build_cw_limit(&law(law_name)?, k).map_err(err)?;
        Ok(Self { inner })
    }

    fn cdf(&self, z: f64) -> f64 {
        self.inner.cdf(z)
    }

    fn pdf(&self, x: f64) -> f64 {
        self.inner.pdf(x)
    }

    fn quantile(&self, u: f64) -> f64 {
        self.inner.quantile(u)
    }

    fn second_moment(&self) -> PyResult<f64> {
        self.inner.second_moment().map_err(err)
    }

    #[getter]
    fn c1(&self) -> f64 {
        self.inner.c1()
    }

    fn spec<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.spec())
    }

    /// `(f_z(x), f_z'(x))`
    fn stein(&self, z: f64, x: f64) -> (f64, f64) {
        let s = SteinSolution::new(&self.inner, z);
        (s.f(x), s.fprime(x))
    }

    fn stein_bound(&self, z: f64) -> f64 {
        SteinSolution::new(&self.inner, z).bound()
    }
}

#[pyclass(name = "QuadForm", frozen)]
struct PyQuadForm {
    inner: QuadFormModel,
}

#[pymethods]
impl PyQuadForm {
    /// Dense symmetric matrix with zero diagonal.
    #[new]
    #[pyo3(signature = (matrix, law_name = "rademacher"))]
    fn new(matrix: Vec<Vec<f64>>, law_name: &str) -> PyResult<Self> {
        let a = SymMatrix::from_dense(&matrix).map_err(err)?;
        Ok(Self {
            inner: QuadFormModel::new(a, law(law_name)?).map_err(err)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (n, law_name = "rademacher"))]
    fn tridiagonal(n: usize, law_name: &str) -> PyResult<Self> {
        Ok(Self {
            inner: QuadFormModel::tridiagonal(n, law(law_name)?).map_err(err)?,
        })
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma()
    }

    fn statistic(&self, x: Vec<f64>) -> PyResult<f64> {
        Ok(self.inner.state(x).map_err(err)?.w)
    }

    fn cond_moments<'py>(&self, py: Python<'py>, x: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
        let s = self.inner.state(x).map_err(err)?;
        to_py(py, &self.inner.cond_moments_of(&s))
    }

    fn theoretical_rhs(&self) -> f64 {
        self.inner.theoretical_rhs()
    }

    fn bound_terms<'py>(&self, py: Python<'py>, n: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &estimate_bound_terms(&self.inner, n, seed).map_err(err)?)
    }
}

#[pyclass(name = "CurieWeiss", frozen)]
struct PyCurieWeiss {
    inner: CurieWeissModel,
}

#[pymethods]
impl PyCurieWeiss {
    #[new]
    #[pyo3(signature = (n, beta, law_name = "rademacher"))]
    fn new(n: usize, beta: f64, law_name: &str) -> PyResult<Self> {
        Ok(Self {
            inner: CurieWeissModel::new(n, beta, law(law_name)?).map_err(err)?,
        })
    }

    #[getter]
    fn k(&self) -> Option<usize> {
        self.inner.k()
    }

    #[getter]
    fn lambda_(&self) -> f64 {
        self.inner.lambda()
    }

    /// `count` exact draws of `W`.
    fn sample_w(&self, count: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream_rng(seed, 0);
        (0..count)
            .map(|_| self.inner.sample_exact(&mut rng).s / self.inner.scale())
            .collect()
    }

    /// Exact law of `S` as `(S, P)` pairs.
    fn exact_sum_law(&self) -> PyResult<Vec<(f64, f64)>> {
        self.inner.exact_sum_law().map_err(err)
    }

    fn limit_distribution(&self) -> PyResult<PyLimit> {
        Ok(PyLimit {
            inner: self.inner.limit_distribution().map_err(err)?,
        })
    }

    fn bound_terms<'py>(&self, py: Python<'py>, n: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &estimate_bound_terms(&self.inner, n, seed).map_err(err)?)
    }

    fn exchangeability<'py>(&self, py: Python<'py>, n: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &exchangeability_check(&self.inner, n, seed).map_err(err)?)
    }
}

#[pyclass(name = "IndepTest", frozen)]
struct PyIndepTest {
    inner: IndepModel,
}

#[pymethods]
impl PyIndepTest {
    #[new]
    #[pyo3(signature = (n, p, law_name = "uniform", inner = 200))]
    fn new(n: usize, p: usize, law_name: &str, inner: usize) -> PyResult<Self> {
        let m = IndepModel::new(n, p, law(law_name)?).map_err(err)?;
        Ok(Self {
            inner: m.with_inner(inner).map_err(err)?,
        })
    }

    /// `W` for `p` rows of `n` observations.
    fn statistic(&self, rows: Vec<Vec<f64>>) -> PyResult<f64> {
        Ok(self.inner.state(rows).map_err(err)?.w)
    }

    fn bound_terms<'py>(&self, py: Python<'py>, n: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &estimate_bound_terms(&self.inner, n, seed).map_err(err)?)
    }
}

/// `W` and its normal upper-tail probability for a data matrix.
#[pyfunction]
fn indep_data_summary<'py>(py: Python<'py>, rows: Vec<Vec<f64>>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &data_summary(rows).map_err(err)?)
}

/// Config dict of a named preset.
#[pyfunction]
fn preset<'py>(py: Python<'py>, name: &str) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &ExperimentConfig::preset(name).map_err(err)?)
}

/// Runs an experiment from a config dict (no files are written) and returns
/// the report with the acceptance checks under `"checks"`.
#[pyfunction]
#[pyo3(signature = (config, workers = None))]
fn run<'py>(py: Python<'py>, config: &Bound<'py, PyDict>, workers: Option<usize>) -> PyResult<Bound<'py, PyAny>> {
    let text: String = py.import("json")?.call_method1("dumps", (config,))?.extract()?;
    let cfg = ExperimentConfig::from_json(&text).map_err(err)?;
    let report = py
        .allow_threads(|| run_experiment(&cfg, &RunOptions { workers }))
        .map_err(err)?;
    let out = to_py(py, &report)?;
    out.set_item("checks", to_py(py, &acceptance_checks(&report))?)?;
    Ok(out)
}

#[pyfunction]
fn dkw_band(n: usize, alpha: f64) -> f64 {
    mcengine::dkw_band(n, alpha)
}

#[pyfunction]
#[pyo3(signature = (sizes, errors, noise_floors = Vec::new()))]
fn fit_rate<'py>(
    py: Python<'py>,
    sizes: Vec<f64>,
    errors: Vec<f64>,
    noise_floors: Vec<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &mcengine::fit_rate(&sizes, &errors, &noise_floors).map_err(err)?)
}

#[pymodule]
fn steinpair(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLimit>()?;
    m.add_class::<PyQuadForm>()?;
    m.add_class::<PyCurieWeiss>()?;
    m.add_class::<PyIndepTest>()?;
    m.add_function(wrap_pyfunction!(indep_data_summary, m)?)?;
    m.add_function(wrap_pyfunction!(preset, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(dkw_band, m)?)?;
    m.add_function(wrap_pyfunction!(fit_rate, m)?)?;
    Ok(())
}
