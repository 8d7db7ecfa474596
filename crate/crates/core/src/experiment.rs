//! Experiment configuration, orchestration across sizes, reports and plot
//! data.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::curieweiss::{CurieWeissModel, Sampler};
use crate::error::{Error, Result};
use crate::indeptest::{IndepModel, DEFAULT_INNER};
use crate::limitdist::{check_conditions, BaseLaw, ConditionReport, DistSpec, LawSpec, LimitDistribution};
use crate::mcengine::{batch_mean_se, derive_seed, run_batches, McLayout, DEFAULT_BATCHES};
use crate::paircore::{
    bound_estimate_from_samples, empirical_error_profile, rate_summary_from_profiles, symmetry_from_pairs,
    BoundEstimate, ErrorProfile, MetricRate, PairModel, PairSample, RateSummary, SymmetryReport,
};
use crate::quadform::{load_matrix, QuadFormModel, SymMatrix};

pub const SCHEMA_VERSION: &str = "1";
pub const MIN_MC: usize = 1000;
pub const PRESETS: [&str; 4] = ["thm4.1", "cw-beta05", "cw-beta1", "thm4.4"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Application {
    Quadform {
        /// `"tridiagonal"` or a matrix file path in which `{n}` is replaced by
        /// the size.
        matrix: String,
        #[serde(default = "rademacher")]
        law: LawSpec,
    },
    Curieweiss {
        beta: f64,
        #[serde(default = "rademacher")]
        law: LawSpec,
        /// Expected type of the law at `β = 1`; checked against the
        /// classification when given.
        #[serde(default)]
        k: Option<usize>,
        #[serde(default = "exact_sampler")]
        sampler: Sampler,
    },
    Indeptest {
        #[serde(default = "uniform")]
        law: LawSpec,
        /// Number of variables; equal to the size `n` when absent.
        #[serde(default)]
        p: Option<usize>,
        #[serde(default = "default_inner")]
        inner: usize,
    },
}

fn rademacher() -> LawSpec {
    LawSpec::Named("rademacher".into())
}

fn uniform() -> LawSpec {
    LawSpec::Named("uniform".into())
}

fn exact_sampler() -> Sampler {
    Sampler::Exact
}

fn default_inner() -> usize {
    DEFAULT_INNER
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZGrid {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Default for ZGrid {
    fn default() -> Self {
        Self {
            min: -4.0,
            max: 4.0,
            step: 0.01,
        }
    }
}

impl ZGrid {
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| self.min + i as f64 * self.step).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub application: Application,
    pub sizes: Vec<usize>,
    pub mc: usize,
    pub seed: u64,
    #[serde(default)]
    pub z_grid: ZGrid,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_batches")]
    pub batches: usize,
    pub output_dir: PathBuf,
}

fn default_alpha() -> f64 {
    0.05
}

fn default_batches() -> usize {
    DEFAULT_BATCHES
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config("<root>", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn preset(name: &str) -> Result<Self> {
        let (application, sizes, mc): (Application, Vec<usize>, usize) = match name {
            "thm4.1" => (
                Application::Quadform {
                    matrix: "tridiagonal".into(),
                    law: rademacher(),
                },
                vec![64, 128, 256, 512],
                400_000,
            ),
            "cw-beta05" | "cw-beta1" => (
                Application::Curieweiss {
                    beta: if name == "cw-beta1" { 1.0 } else { 0.5 },
                    law: rademacher(),
                    k: (name == "cw-beta1").then_some(2),
                    sampler: Sampler::Exact,
                },
                vec![64, 256, 1024],
                200_000,
            ),
            "thm4.4" => (
                Application::Indeptest {
                    law: uniform(),
                    p: None,
                    inner: DEFAULT_INNER,
                },
                vec![20, 40, 80],
                20_000,
            ),
            other => {
                return Err(Error::config(
                    "preset",
                    format!("unknown preset `{other}`; expected one of {}", PRESETS.join(", ")),
                ))
            }
        };
        Ok(Self {
            application,
            sizes,
            mc,
            seed: 20_240_601,
            z_grid: ZGrid::default(),
            alpha: default_alpha(),
            batches: DEFAULT_BATCHES,
            output_dir: PathBuf::from("out").join(name),
        })
    }

    /// Checks every field; errors carry the offending field path.
    pub fn validate(&self) -> Result<()> {
        if self.sizes.len() < 3 {
            return Err(Error::config("sizes", "need at least 3 sizes for a rate fit"));
        }
        for (i, w) in self.sizes.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(Error::config(
                    format!("sizes[{}]", i + 1),
                    "sizes must be strictly increasing",
                ));
            }
        }
        if self.mc < MIN_MC {
            return Err(Error::config(
                "mc",
                format!("must be at least {MIN_MC}, got {}", self.mc),
            ));
        }
        if self.batches < 2 {
            return Err(Error::config("batches", "need at least 2 batches"));
        }
        if !self.mc.is_multiple_of(self.batches) {
            return Err(Error::config(
                "mc",
                format!("{} is not divisible by {} batches", self.mc, self.batches),
            ));
        }
        let zg = &self.z_grid;
        if !(zg.step > 0.0 && zg.step.is_finite()) {
            return Err(Error::config("z_grid.step", "must be positive"));
        }
        if !(zg.min <= -4.0) {
            return Err(Error::config("z_grid.min", "grid must reach -4"));
        }
        if !(zg.max >= 4.0 && zg.max.is_finite()) {
            return Err(Error::config("z_grid.max", "grid must reach 4"));
        }
        if (zg.max - zg.min) / zg.step > 1e6 {
            return Err(Error::config("z_grid.step", "more than 10^6 grid points"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config("alpha", "must lie in (0, 1)"));
        }
        match &self.application {
            Application::Quadform { matrix, law } => {
                law_of(law, "application.law")?;
                if matrix != "tridiagonal" {
                    for &n in &self.sizes {
                        let path = matrix_path(matrix, n);
                        if !path.is_file() {
                            return Err(Error::config(
                                "application.matrix",
                                format!("{} does not exist", path.display()),
                            ));
                        }
                    }
                }
            }
            Application::Curieweiss { beta, law, k, sampler } => {
                if !(*beta > 0.0 && *beta <= 1.0) {
                    return Err(Error::config("application.beta", "must lie in (0, 1]"));
                }
                let law = law_of(law, "application.law")?;
                if !law.is_finite_support() {
                    return Err(Error::config("application.law", "must have finite support"));
                }
                if let Some(k) = k {
                    if *beta < 1.0 {
                        return Err(Error::config("application.k", "only meaningful at beta = 1"));
                    }
                    let m = CurieWeissModel::new(self.sizes[0], *beta, law)
                        .map_err(|e| Error::config("application.law", e.to_string()))?;
                    if m.k() != Some(*k) {
                        return Err(Error::config(
                            "application.k",
                            format!("law is of type {:?}, not {k}", m.k()),
                        ));
                    }
                }
                if let Sampler::Glauber { sweeps: 0 } = sampler {
                    return Err(Error::config("application.sampler.sweeps", "must be positive"));
                }
            }
            Application::Indeptest { law, p, inner } => {
                let law = law_of(law, "application.law")?;
                if *inner < 100 {
                    return Err(Error::config("application.inner", "must be at least 100"));
                }
                if self.sizes[0] < 4 {
                    return Err(Error::config("sizes[0]", "indeptest needs n >= 4"));
                }
                if let Some(p) = p {
                    if *p < 2 {
                        return Err(Error::config("application.p", "must be at least 2"));
                    }
                }
                IndepModel::new(self.sizes[0], p.unwrap_or(self.sizes[0]).max(2), law)
                    .map_err(|e| Error::config("application.law", e.to_string()))?;
            }
        }
        Ok(())
    }

    pub fn application_name(&self) -> &'static str {
        match self.application {
            Application::Quadform { .. } => "quadform",
            Application::Curieweiss { .. } => "curieweiss",
            Application::Indeptest { .. } => "indeptest",
        }
    }
}

fn law_of(spec: &LawSpec, field: &str) -> Result<BaseLaw> {
    BaseLaw::from_spec(spec).map_err(|e| Error::config(field, e.to_string()))
}

fn matrix_path(template: &str, n: usize) -> PathBuf {
    PathBuf::from(template.replace("{n}", &n.to_string()))
}

/// Moments of the sampled statistic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WMoments {
    pub mean: f64,
    pub se_mean: f64,
    pub variance: f64,
    pub se_variance: f64,
    /// `E W⁴`
    pub fourth: f64,
    pub se_fourth: f64,
}

impl WMoments {
    pub fn from_samples(w: &[f64], batches: usize) -> Self {
        let (mean, se_mean) = batch_mean_se(w, batches);
        let dev2: Vec<f64> = w.iter().map(|x| (x - mean) * (x - mean)).collect();
        let (variance, se_variance) = batch_mean_se(&dev2, batches);
        let w4: Vec<f64> = w.iter().map(|x| x.powi(4)).collect();
        let (fourth, se_fourth) = batch_mean_se(&w4, batches);
        Self {
            mean,
            se_mean,
            variance,
            se_variance,
            fourth,
            se_fourth,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeReport {
    pub size: usize,
    /// Model dimensions, e.g. `{"n": 80, "p": 80}`.
    pub dims: serde_json::Map<String, serde_json::Value>,
    pub lambda: f64,
    pub limit: DistSpec,
    pub bound: BoundEstimate,
    pub profile: ErrorProfile,
    pub w_moments: WMoments,
    pub symmetry: SymmetryReport,
    /// Closed-form right-hand side of the quadratic-form bound.
    pub theoretical_rhs: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureStats {
    /// Largest inner rejection rate over sizes.
    pub max_inner_failure_rate: f64,
    pub cauchy_schwarz_violations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: String,
    pub application: String,
    pub config: ExperimentConfig,
    pub sizes: Vec<SizeReport>,
    pub rates: RateSummary,
    /// Decay of `t1 + t2 + t3` across sizes.
    pub certificate_rate: MetricRate,
    pub rhs_rate: Option<MetricRate>,
    /// Drift conditions of the limit law at the largest size.
    pub conditions: ConditionReport,
    pub failures: FailureStats,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Theoretical decay exponent of the error in the size variable.
    pub fn theoretical_exponent(&self) -> f64 {
        match &self.config.application {
            Application::Curieweiss { beta, .. } if *beta >= 1.0 => {
                let k = self.sizes[0].dims.get("k").and_then(|v| v.as_u64()).unwrap_or(2);
                -1.0 / (2.0 * k as f64)
            }
            _ => -0.5,
        }
    }
}

/// Runtime options that never affect results.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

struct Built<M> {
    model: M,
    dist: LimitDistribution,
    dims: serde_json::Map<String, serde_json::Value>,
    rhs: Option<f64>,
}

fn dims(pairs: &[(&str, serde_json::Value)]) -> serde_json::Map<String, serde_json::Value> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn measure<M: PairModel>(
    cfg: &ExperimentConfig,
    opts: &RunOptions,
    size: usize,
    grid: &[f64],
    b: Built<M>,
) -> Result<SizeReport> {
    let layout = McLayout {
        batches: cfg.batches,
        workers: opts.workers,
    };
    let samples: Vec<PairSample> = run_batches(&b.model, cfg.mc, layout, derive_seed(cfg.seed, size as u64))?;
    let w: Vec<f64> = samples.iter().map(|s| s.w).collect();
    let pairs: Vec<(f64, f64)> = samples.iter().map(|s| (s.w, s.w_prime)).collect();
    let bound = bound_estimate_from_samples(&samples, b.model.lambda(), cfg.batches)?;
    Ok(SizeReport {
        size,
        dims: b.dims,
        lambda: b.model.lambda(),
        limit: b.dist.spec(),
        bound,
        profile: empirical_error_profile(&w, &b.dist, grid, cfg.alpha)?,
        w_moments: WMoments::from_samples(&w, cfg.batches),
        symmetry: symmetry_from_pairs(&pairs, cfg.batches),
        theoretical_rhs: b.rhs,
    })
}

fn run_size(
    cfg: &ExperimentConfig,
    opts: &RunOptions,
    size: usize,
    grid: &[f64],
) -> Result<(SizeReport, LimitDistribution)> {
    match &cfg.application {
        Application::Quadform { matrix, law } => {
            let law = BaseLaw::from_spec(law)?;
            let a = if matrix == "tridiagonal" {
                SymMatrix::tridiagonal(size)?
            } else {
                load_matrix(&matrix_path(matrix, size))?
            };
            let model = QuadFormModel::new(a, law)?;
            let dist = LimitDistribution::standard_normal();
            let rhs = Some(model.theoretical_rhs());
            let d = dims(&[("n", model.n().into()), ("sigma", model.sigma().into())]);
            let b = Built {
                model,
                dist: dist.clone(),
                dims: d,
                rhs,
            };
            Ok((measure(cfg, opts, size, grid, b)?, dist))
        }
        Application::Curieweiss { beta, law, sampler, .. } => {
            let law = BaseLaw::from_spec(law)?;
            let model = CurieWeissModel::new(size, *beta, law)?.with_sampler(*sampler);
            let dist = model.limit_distribution()?;
            let mut d = dims(&[("n", size.into()), ("beta", (*beta).into())]);
            if let Some(k) = model.k() {
                d.insert("k".into(), k.into());
            }
            if let Some(c2) = model.c2() {
                d.insert("c2".into(), c2.into());
            }
            let b = Built {
                model,
                dist: dist.clone(),
                dims: d,
                rhs: None,
            };
            Ok((measure(cfg, opts, size, grid, b)?, dist))
        }
        Application::Indeptest { law, p, inner } => {
            let law = BaseLaw::from_spec(law)?;
            let p = p.unwrap_or(size);
            let model = IndepModel::new(size, p, law)?.with_inner(*inner)?;
            let dist = LimitDistribution::standard_normal();
            let d = dims(&[("n", size.into()), ("p", p.into()), ("inner", (*inner).into())]);
            let b = Built {
                model,
                dist: dist.clone(),
                dims: d,
                rhs: None,
            };
            Ok((measure(cfg, opts, size, grid, b)?, dist))
        }
    }
}

/// Runs the experiment, calling `on_size` after each completed size.
pub fn run_experiment_with<F>(cfg: &ExperimentConfig, opts: &RunOptions, mut on_size: F) -> Result<Report>
where
    F: FnMut(&SizeReport) -> Result<()>,
{
    cfg.validate()?;
    let grid = cfg.z_grid.points();
    let mut sizes = Vec::with_capacity(cfg.sizes.len());
    let mut last_dist = None;
    for &n in &cfg.sizes {
        let (rep, dist) = run_size(cfg, opts, n, &grid)?;
        on_size(&rep)?;
        sizes.push(rep);
        last_dist = Some(dist);
    }
    let dist = last_dist.expect("at least one size");
    let size_f: Vec<f64> = cfg.sizes.iter().map(|&n| n as f64).collect();
    let profiles: Vec<ErrorProfile> = sizes.iter().map(|s| s.profile.clone()).collect();
    let rates = rate_summary_from_profiles(&size_f, &profiles)?;
    let certificate_rate = MetricRate::new(&size_f, sizes.iter().map(|s| s.bound.certificate).collect(), Vec::new());
    let rhs_rate = sizes
        .iter()
        .map(|s| s.theoretical_rhs)
        .collect::<Option<Vec<f64>>>()
        .map(|e| MetricRate::new(&size_f, e, Vec::new()));
    let conditions = check_conditions(dist.g(), Some(&dist), &grid);
    let failures = FailureStats {
        max_inner_failure_rate: sizes.iter().map(|s| s.bound.inner_failure_rate).fold(0.0, f64::max),
        cauchy_schwarz_violations: sizes.iter().map(|s| s.bound.cauchy_schwarz_violations).sum(),
    };
    Ok(Report {
        schema_version: SCHEMA_VERSION.into(),
        application: cfg.application_name().into(),
        config: cfg.clone(),
        sizes,
        rates,
        certificate_rate,
        rhs_rate,
        conditions,
        failures,
    })
}

pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Report> {
    run_experiment_with(cfg, opts, |_| Ok(()))
}

fn write_csv_line(out: &mut impl Write, vals: &[f64]) -> Result<()> {
    let line: Vec<String> = vals.iter().map(|v| format!("{v:.16e}")).collect();
    writeln!(out, "{}", line.join(","))?;
    Ok(())
}

pub fn profile_file_name(size: usize) -> String {
    format!("profile_n{size}.csv")
}

/// Writes one profile CSV per size and `summary.csv`; returns the file names.
pub fn emit_plot_data(report: &Report, dir: &Path) -> Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for s in &report.sizes {
        let name = profile_file_name(s.size);
        s.profile.write_csv(&dir.join(&name))?;
        files.push(name);
    }
    let mut out = std::io::BufWriter::new(fs::File::create(dir.join("summary.csv"))?);
    writeln!(out, "size,sup_err,weighted_sup,rate_certificate")?;
    for s in &report.sizes {
        write_csv_line(
            &mut out,
            &[
                s.size as f64,
                s.profile.ks.distance,
                s.profile.sup_weighted(),
                s.bound.certificate,
            ],
        )?;
    }
    out.flush()?;
    files.push("summary.csv".into());
    Ok(files)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: String,
    pub application: String,
    pub files: Vec<String>,
    pub wall_clock_seconds: f64,
    pub workers: Option<usize>,
    pub complete: bool,
}

/// Runs, then writes `report.json`, plot data and `manifest.json` under the
/// configured output directory. If a size fails, the finished sizes are
/// flushed to `partial_report.json` before the error is returned.
pub fn execute(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Report> {
    cfg.validate()?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    let start = Instant::now();
    let mut done: Vec<SizeReport> = Vec::new();
    let result = run_experiment_with(cfg, opts, |s| {
        s.profile.write_csv(&dir.join(profile_file_name(s.size)))?;
        done.push(s.clone());
        Ok(())
    });
    let report = match result {
        Ok(r) => r,
        Err(e) => {
            let partial = serde_json::json!({
                "schema_version": SCHEMA_VERSION,
                "application": cfg.application_name(),
                "config": cfg,
                "sizes": done,
                "error": e.to_string(),
            });
            fs::write(dir.join("partial_report.json"), serde_json::to_string_pretty(&partial)?)?;
            let manifest = Manifest {
                schema_version: SCHEMA_VERSION.into(),
                application: cfg.application_name().into(),
                files: vec!["partial_report.json".into()],
                wall_clock_seconds: start.elapsed().as_secs_f64(),
                workers: opts.workers,
                complete: false,
            };
            fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
            return Err(e);
        }
    };
    fs::write(dir.join("report.json"), report.to_json()?)?;
    let mut files = vec!["report.json".to_string()];
    files.extend(emit_plot_data(&report, dir)?);
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION.into(),
        application: report.application.clone(),
        files,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        workers: opts.workers,
        complete: true,
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(report)
}

/// Outcome of one acceptance threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &str, pass: bool, detail: String) -> Check {
    Check {
        name: name.into(),
        pass,
        detail,
    }
}

fn slope_of(m: &MetricRate, all: bool) -> Option<f64> {
    if all { m.fit_all.as_ref() } else { m.fit.as_ref() }.map(|f| f.slope)
}

fn slope_check(name: &str, m: &MetricRate, all: bool, lo: f64, hi: f64) -> Check {
    let (slope, how) = match slope_of(m, all) {
        Some(s) => (Some(s), ""),
        None => (slope_of(m, true), ", all points: too few above the noise floor"),
    };
    match slope {
        Some(s) => check(
            name,
            s >= lo && s <= hi,
            format!("slope {s:.4}{how} (want [{lo:.2}, {hi:.2}])"),
        ),
        None => check(name, false, m.note.clone().unwrap_or_else(|| "no fit".into())),
    }
}

/// Acceptance thresholds for the theorem behind the report's application.
///
/// Two-sided slope windows use the fit after noise-floor exclusion, or every
/// point when fewer than 3 survive it; one-sided upper limits use every
/// point, since dropping the noisiest (largest) sizes could only make the
/// slope look steeper.
pub fn acceptance_checks(report: &Report) -> Vec<Check> {
    let r = &report.rates;
    let expo = report.theoretical_exponent();
    let mut out = Vec::new();
    match &report.config.application {
        Application::Quadform { .. } => {
            out.push(slope_check("ks_slope", &r.ks, false, -0.7, -0.3));
            if let Some(p) = r.per_z.iter().find(|p| p.z == 2.5) {
                out.push(slope_check(
                    "weighted_z2.5_slope",
                    &p.weighted_z2,
                    true,
                    f64::NEG_INFINITY,
                    -0.3,
                ));
            }
            if let Some(rhs) = &report.rhs_rate {
                out.push(slope_check("rhs_slope", rhs, true, -0.55, -0.45));
            }
        }
        Application::Curieweiss { beta, .. } if *beta < 1.0 => {
            out.push(slope_check("ks_slope", &r.ks, true, f64::NEG_INFINITY, -0.3));
            let last = report.sizes.last().expect("sizes");
            let target = 1.0 / (1.0 - beta);
            let v = last.w_moments.variance;
            out.push(check(
                "variance",
                ((v - target) / target).abs() <= 0.05,
                format!("Var(W) = {v:.5} at n = {} (want {target} ± 5%)", last.size),
            ));
        }
        Application::Curieweiss { .. } => {
            out.push(check(
                "ks_decreasing",
                r.ks.strictly_decreasing(),
                format!("ks = {:?}", r.ks.errors),
            ));
            out.push(slope_check("ks_slope", &r.ks, false, -0.45, -0.1));
        }
        Application::Indeptest { .. } => {
            out.push(check(
                "ks_decreasing",
                r.ks.strictly_decreasing(),
                format!("ks = {:?}", r.ks.errors),
            ));
            out.push(slope_check("ks_slope", &r.ks, true, f64::NEG_INFINITY, -0.3));
            let t3: Vec<f64> = report.sizes.iter().map(|s| s.bound.t3).collect();
            out.push(check("t3_zero", t3.iter().all(|&t| t == 0.0), format!("t3 = {t3:?}")));
            let ok = report.sizes.windows(2).all(|w| {
                let (a, b) = (&w[0].w_moments, &w[1].w_moments);
                b.fourth <= a.fourth + 4.0 * (a.se_fourth.powi(2) + b.se_fourth.powi(2)).sqrt()
            });
            let m4: Vec<f64> = report.sizes.iter().map(|s| s.w_moments.fourth).collect();
            out.push(check("fourth_moment_bounded", ok, format!("E W^4 = {m4:?}")));
        }
    }
    out.push(slope_check(
        "certificate_slope",
        &report.certificate_rate,
        true,
        expo - 0.2,
        expo + 0.2,
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(app: Application, sizes: Vec<usize>) -> ExperimentConfig {
        ExperimentConfig {
            application: app,
            sizes,
            mc: 1600,
            seed: 5,
            z_grid: ZGrid {
                min: -4.0,
                max: 4.0,
                step: 0.5,
            },
            alpha: 0.05,
            batches: 16,
            output_dir: PathBuf::from("unused"),
        }
    }

    #[test]
    fn presets_validate_and_round_trip() {
        for name in PRESETS {
            let c = ExperimentConfig::preset(name).unwrap();
            c.validate().unwrap();
            assert_eq!(ExperimentConfig::from_json(&c.to_json().unwrap()).unwrap(), c);
        }
        assert!(ExperimentConfig::preset("nope").is_err());
    }

    #[test]
    fn validation_reports_field_paths() {
        let mut c = ExperimentConfig::preset("thm4.1").unwrap();
        c.mc = 100;
        assert!(matches!(c.validate(), Err(Error::Config { field, .. }) if field == "mc"));
        let mut c = ExperimentConfig::preset("thm4.1").unwrap();
        c.sizes = vec![64, 32, 128];
        assert!(matches!(c.validate(), Err(Error::Config { field, .. }) if field == "sizes[1]"));
        let mut c = ExperimentConfig::preset("thm4.1").unwrap();
        c.z_grid.max = 3.0;
        assert!(matches!(c.validate(), Err(Error::Config { field, .. }) if field == "z_grid.max"));
        let mut c = ExperimentConfig::preset("cw-beta1").unwrap();
        c.application = Application::Curieweiss {
            beta: 1.0,
            law: rademacher(),
            k: Some(3),
            sampler: Sampler::Exact,
        };
        assert!(matches!(c.validate(), Err(Error::Config { field, .. }) if field == "application.k"));
    }

    #[test]
    fn grid_points() {
        let g = ZGrid::default().points();
        assert_eq!(g.len(), 801);
        assert_eq!(g[0], -4.0);
        assert!((g[800] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn small_quadform_run() {
        let c = small(
            Application::Quadform {
                matrix: "tridiagonal".into(),
                law: rademacher(),
            },
            vec![8, 16, 32],
        );
        let r = run_experiment(&c, &RunOptions::default()).unwrap();
        assert_eq!(r.sizes.len(), 3);
        assert!(r.rates.ks.fit_all.is_some());
        assert!(r.rhs_rate.is_some());
        let again = run_experiment(&c, &RunOptions { workers: Some(3) }).unwrap();
        assert_eq!(r.to_json().unwrap(), again.to_json().unwrap());
    }

    #[test]
    fn critical_cw_records_cubic_drift() {
        let c = small(
            Application::Curieweiss {
                beta: 1.0,
                law: rademacher(),
                k: Some(2),
                sampler: Sampler::Exact,
            },
            vec![16, 32, 64],
        );
        let r = run_experiment(&c, &RunOptions::default()).unwrap();
        let spec = serde_json::to_value(&r.sizes[0].limit).unwrap();
        assert_eq!(spec["g_kind"], "odd_power");
        assert!((spec["params"]["coef"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(spec["params"]["power"], 3.0);
        assert_eq!(r.theoretical_exponent(), -0.25);
    }
}
