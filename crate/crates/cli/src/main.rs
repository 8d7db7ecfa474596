use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use steinpair_core::curieweiss::Sampler;
use steinpair_core::experiment::{
    acceptance_checks, execute, Application, ExperimentConfig, Report, RunOptions, ZGrid,
};
use steinpair_core::indeptest::{data_summary, read_data_csv};
use steinpair_core::limitdist::{
    build_cw_limit, check_conditions, classify_type, normalize, uniform_grid, BaseLaw, GFunction, LawSpec,
    LimitDistribution, DEFAULT_QUAD_TOL, MAX_MOMENT, TYPE_TOL,
};
use steinpair_core::steinsolve::SteinSolution;
use steinpair_core::Error;

const EXIT_VALIDATION: u8 = 2;
const EXIT_CHECK: u8 = 3;

#[derive(Parser)]
#[command(
    name = "steinpair",
    version,
    about = "Exchangeable-pair Stein bounds and their Monte Carlo verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Limit distributions with density c1 exp(-G)
    Limitdist {
        #[command(subcommand)]
        command: LimitdistCommand,
    },
    /// Stein equation solutions
    Stein {
        #[command(subcommand)]
        command: SteinCommand,
    },
    /// Quadratic forms W = Σ a_ij X_i X_j / σ
    Quadform {
        #[command(subcommand)]
        command: QuadformCommand,
    },
    /// General Curie-Weiss model
    Curieweiss {
        #[command(subcommand)]
        command: CurieweissCommand,
    },
    /// Sum of squared sample correlations
    Indeptest {
        #[command(subcommand)]
        command: IndeptestCommand,
    },
    /// Run an experiment from a config file or preset
    Run(RunArgs),
}

#[derive(Args)]
struct DriftArgs {
    /// `linear[:slope]`, `cubic` (x³/3) or `odd-power:coef:power`
    #[arg(long, default_value = "linear")]
    g: String,
    /// Build the critical Curie-Weiss limit of this law instead of `--g`
    #[arg(long)]
    cw_law: Option<String>,
}

#[derive(Subcommand)]
enum LimitdistCommand {
    /// Print the distribution spec and condition report as JSON
    Inspect {
        #[command(flatten)]
        drift: DriftArgs,
    },
}

#[derive(Subcommand)]
enum SteinCommand {
    /// Evaluate f_z and f_z' at x
    Eval {
        #[command(flatten)]
        drift: DriftArgs,
        #[arg(long, allow_hyphen_values = true)]
        z: f64,
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
    },
}

#[derive(Args)]
struct CommonRun {
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long)]
    mc: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    batches: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    z_min: Option<f64>,
    #[arg(long)]
    z_max: Option<f64>,
    #[arg(long)]
    z_step: Option<f64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Worker threads (results do not depend on this)
    #[arg(long)]
    workers: Option<usize>,
    /// Exit with status 3 if an acceptance threshold fails
    #[arg(long)]
    check: bool,
}

#[derive(Subcommand)]
enum QuadformCommand {
    Run {
        /// `tridiagonal`, or a CSV / triplet file path; a size placeholder in
        /// braces is filled per size (see README)
        #[arg(long, default_value = "tridiagonal")]
        matrix: String,
        #[arg(long, default_value = "rademacher")]
        law: String,
        #[command(flatten)]
        common: CommonRun,
    },
}

#[derive(Subcommand)]
enum CurieweissCommand {
    Run {
        #[arg(long)]
        beta: f64,
        /// Law name or JSON file `{points: [], probs: []}`
        #[arg(long, default_value = "rademacher")]
        law: String,
        #[arg(long)]
        k: Option<usize>,
        /// Use a heat-bath chain with this many sweeps instead of exact sampling
        #[arg(long)]
        glauber_sweeps: Option<usize>,
        #[command(flatten)]
        common: CommonRun,
    },
}

#[derive(Subcommand)]
enum IndeptestCommand {
    Run {
        #[arg(long, default_value = "uniform")]
        law: String,
        /// Sizes with p = n
        #[arg(long, value_delimiter = ',')]
        np: Option<Vec<usize>>,
        #[arg(long, default_value_t = 200)]
        inner: usize,
        /// Compute W and its normal tail probability for a data matrix
        /// (rows = variables, columns = observations) instead of simulating
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        common: CommonRun,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[command(flatten)]
    common: CommonRun,
}

fn parse_g(s: &str) -> anyhow::Result<GFunction> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |i: usize| -> anyhow::Result<f64> {
        parts
            .get(i)
            .with_context(|| format!("missing parameter in `{s}`"))?
            .parse::<f64>()
            .with_context(|| format!("bad number in `{s}`"))
    };
    Ok(match parts[0] {
        "linear" if parts.len() == 1 => GFunction::standard_normal(),
        "linear" => GFunction::linear(num(1)?),
        "cubic" => GFunction::odd_power(1.0 / 3.0, 3.0)?,
        "odd-power" => GFunction::odd_power(num(1)?, num(2)?)?,
        other => bail!("unknown drift `{other}`"),
    })
}

fn parse_law(s: &str) -> anyhow::Result<LawSpec> {
    let path = Path::new(s);
    if path.is_file() {
        let text = std::fs::read_to_string(path)?;
        return serde_json::from_str(&text).with_context(|| format!("reading law file {s}"));
    }
    Ok(LawSpec::Named(s.to_string()))
}

fn build_dist(d: &DriftArgs) -> anyhow::Result<LimitDistribution> {
    if let Some(law) = &d.cw_law {
        let law = BaseLaw::from_spec(&parse_law(law)?)?;
        let t = classify_type(&law, MAX_MOMENT / 2, TYPE_TOL)?;
        return Ok(build_cw_limit(&law, t.k)?);
    }
    let g = parse_g(&d.g)?;
    if g.spec() == GFunction::standard_normal().spec() {
        return Ok(LimitDistribution::standard_normal());
    }
    Ok(normalize(g, None, DEFAULT_QUAD_TOL)?)
}

fn print_json(v: &impl serde::Serialize) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn apply_common(cfg: &mut ExperimentConfig, c: &CommonRun) {
    if let Some(s) = &c.sizes {
        cfg.sizes = s.clone();
    }
    if let Some(v) = c.mc {
        cfg.mc = v;
    }
    if let Some(v) = c.seed {
        cfg.seed = v;
    }
    if let Some(v) = c.batches {
        cfg.batches = v;
    }
    if let Some(v) = c.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = c.z_min {
        cfg.z_grid.min = v;
    }
    if let Some(v) = c.z_max {
        cfg.z_grid.max = v;
    }
    if let Some(v) = c.z_step {
        cfg.z_grid.step = v;
    }
    if let Some(v) = &c.output_dir {
        cfg.output_dir = v.clone();
    }
}

fn base_config(application: Application, sizes: Vec<usize>, mc: usize, dir: &str) -> ExperimentConfig {
    ExperimentConfig {
        application,
        sizes,
        mc,
        seed: 1,
        z_grid: ZGrid::default(),
        alpha: 0.05,
        batches: 16,
        output_dir: PathBuf::from("out").join(dir),
    }
}

fn summarize(report: &Report) -> serde_json::Value {
    let sizes: Vec<_> = report
        .sizes
        .iter()
        .map(|s| {
            json!({
                "size": s.size,
                "ks": s.profile.ks.distance,
                "weighted_sup": s.profile.sup_weighted(),
                "certificate": s.bound.certificate,
                "t1": s.bound.t1,
                "t2": s.bound.t2,
                "t3": s.bound.t3,
            })
        })
        .collect();
    json!({
        "application": report.application,
        "output_dir": report.config.output_dir,
        "sizes": sizes,
        "ks_slope": report.rates.ks.fit_all.as_ref().map(|f| f.slope),
        "certificate_slope": report.certificate_rate.fit_all.as_ref().map(|f| f.slope),
    })
}

fn run_config(cfg: ExperimentConfig, common: &CommonRun) -> anyhow::Result<ExitCode> {
    let mut cfg = cfg;
    apply_common(&mut cfg, common);
    let report = execute(
        &cfg,
        &RunOptions {
            workers: common.workers,
        },
    )?;
    print_json(&summarize(&report))?;
    if common.check {
        let checks = acceptance_checks(&report);
        for c in &checks {
            eprintln!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        if checks.iter().any(|c| !c.pass) {
            return Ok(ExitCode::from(EXIT_CHECK));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Limitdist {
            command: LimitdistCommand::Inspect { drift },
        } => {
            let dist = build_dist(&drift)?;
            let grid = uniform_grid(-dist.x_max(), dist.x_max(), 4001);
            print_json(&json!({
                "distribution": dist.spec(),
                "second_moment": dist.second_moment()?,
                "tail_majorant": dist.tail_majorant(),
                "conditions": check_conditions(dist.g(), Some(&dist), &grid),
            }))?;
        }
        Command::Stein {
            command: SteinCommand::Eval { drift, z, x },
        } => {
            let dist = build_dist(&drift)?;
            let s = SteinSolution::new(&dist, z);
            print_json(&json!({
                "z": z,
                "x": x,
                "f": s.f(x),
                "fprime": s.fprime(x),
                "g_f": s.g_f(x),
                "bound": s.bound(),
            }))?;
        }
        Command::Quadform {
            command: QuadformCommand::Run { matrix, law, common },
        } => {
            let app = Application::Quadform {
                matrix,
                law: parse_law(&law)?,
            };
            return run_config(base_config(app, vec![64, 128, 256, 512], 400_000, "quadform"), &common);
        }
        Command::Curieweiss {
            command:
                CurieweissCommand::Run {
                    beta,
                    law,
                    k,
                    glauber_sweeps,
                    common,
                },
        } => {
            let app = Application::Curieweiss {
                beta,
                law: parse_law(&law)?,
                k,
                sampler: glauber_sweeps.map_or(Sampler::Exact, |sweeps| Sampler::Glauber { sweeps }),
            };
            return run_config(base_config(app, vec![64, 256, 1024], 200_000, "curieweiss"), &common);
        }
        Command::Indeptest {
            command:
                IndeptestCommand::Run {
                    law,
                    np,
                    inner,
                    data,
                    common,
                },
        } => {
            if let Some(path) = data {
                print_json(&data_summary(read_data_csv(&path)?)?)?;
                return Ok(ExitCode::SUCCESS);
            }
            let app = Application::Indeptest {
                law: parse_law(&law)?,
                p: None,
                inner,
            };
            let mut cfg = base_config(app, vec![20, 40, 80], 20_000, "indeptest");
            if let Some(np) = np {
                cfg.sizes = np;
            }
            return run_config(cfg, &common);
        }
        Command::Run(args) => {
            let cfg = match (&args.config, &args.preset) {
                (Some(path), None) => ExperimentConfig::load(path)?,
                (None, Some(name)) => ExperimentConfig::preset(name)?,
                _ => {
                    return Err(Error::Config {
                        field: "<args>".into(),
                        message: "pass exactly one of --config or --preset".into(),
                    }
                    .into())
                }
            };
            return run_config(cfg, &args.common);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<Error>() {
                Some(Error::Config { .. }) => ExitCode::from(EXIT_VALIDATION),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
