//! Acceptance criteria, one test each. Every test writes a single
//! `PASS`/`FAIL` line straight to stderr so the verdicts show up in the
//! normal `cargo test` output.

use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;
use steinpair_core::curieweiss::CurieWeissModel;
use steinpair_core::experiment::{acceptance_checks, run_experiment, Check, ExperimentConfig, Report, RunOptions};
use steinpair_core::indeptest::{normalize_row, IndepModel};
use steinpair_core::limitdist::{
    check_conditions, normalize, uniform_grid, BaseLaw, GFunction, LimitDistribution, DEFAULT_QUAD_TOL,
};
use steinpair_core::mcengine::{batch_mean_se, stream_rng};
use steinpair_core::paircore::{estimate_bound_terms, PairModel};
use steinpair_core::quadform::{QuadFormModel, SymMatrix};
use steinpair_core::steinsolve::SteinSolution;

fn verdict(id: u32, title: &str, pass: bool, detail: &str, start: Instant) {
    let line = format!(
        "{} criterion {id} ({title}): {detail} [{:.1}s]\n",
        if pass { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {id} failed: {detail}");
}

fn within(x: f64, target: f64, se: f64) -> bool {
    (x - target).abs() <= 4.0 * se
}

fn preset(name: &str) -> &'static Report {
    static REPORTS: [OnceLock<Report>; 4] = [OnceLock::new(), OnceLock::new(), OnceLock::new(), OnceLock::new()];
    let i = ["thm4.1", "cw-beta05", "cw-beta1", "thm4.4"]
        .iter()
        .position(|p| *p == name)
        .expect("known preset");
    REPORTS[i].get_or_init(|| {
        let cfg = ExperimentConfig::preset(name).unwrap();
        run_experiment(&cfg, &RunOptions::default()).unwrap()
    })
}

fn find<'a>(checks: &'a [Check], name: &str) -> &'a Check {
    checks.iter().find(|c| c.name == name).expect("check present")
}

fn summarize(checks: &[&Check]) -> (bool, String) {
    let pass = checks.iter().all(|c| c.pass);
    let detail = checks
        .iter()
        .map(|c| format!("{} {}", c.name, c.detail))
        .collect::<Vec<_>>()
        .join("; ");
    (pass, detail)
}

#[test]
fn criterion_1_stein_machinery() {
    let start = Instant::now();
    let dists = [
        LimitDistribution::standard_normal(),
        normalize(GFunction::linear(0.5), None, DEFAULT_QUAD_TOL).unwrap(),
        normalize(GFunction::odd_power(1.0 / 3.0, 3.0).unwrap(), None, DEFAULT_QUAD_TOL).unwrap(),
    ];
    let mut rng = stream_rng(101, 0);
    let (mut worst_margin, mut worst_ode) = (f64::INFINITY, 0.0f64);
    let h = 1e-5;
    for _ in 0..1000 {
        let d = &dists[rng.random_range(0..3)];
        let z = rng.random_range(-4.0..4.0);
        let x = rng.random_range(-8.0..8.0);
        let s = SteinSolution::new(d, z);
        worst_margin = worst_margin.min(s.property_margins(&[x - 1e-3, x, x + 1e-3]).min());
        if (x - z).abs() > 1e-3 {
            let numeric = (s.f(x + h) - s.f(x - h)) / (2.0 * h);
            worst_ode = worst_ode.max((numeric - s.fprime(x)).abs());
        }
    }
    let mut invariants = true;
    for d in &dists {
        let grid = uniform_grid(-d.x_max(), d.x_max(), 2001);
        invariants &= (d.total_mass() - 1.0).abs() <= 1e-8;
        invariants &= check_conditions(d.g(), Some(d), &grid).a1.pass;
        invariants &= d.tail_majorant() <= 1e-12;
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = worst_margin >= -1e-10 && worst_ode <= 1e-5 && invariants && elapsed < 10.0;
    verdict(
        1,
        "Stein machinery",
        pass,
        &format!("min margin {worst_margin:.3e}, max ODE residual {worst_ode:.3e}, invariants {invariants}"),
        start,
    );
}

#[test]
fn criterion_2_exact_small_instances() {
    let start = Instant::now();
    let mut notes = Vec::new();

    // Quadratic form with a single pair, all 8 states and every (θ, X′).
    let a = SymMatrix::from_triplets(3, &[(0, 1, 1.0)]).unwrap();
    let qf = QuadFormModel::new(a, BaseLaw::rademacher()).unwrap();
    let (mut d1_err, mut d2_err) = (0.0f64, 0.0f64);
    for mask in 0..8u32 {
        let x: Vec<f64> = (0..3).map(|i| if mask >> i & 1 == 1 { 1.0 } else { -1.0 }).collect();
        let s = qf.state(x).unwrap();
        let (mut e1, mut e2) = (0.0, 0.0);
        for theta in 0..3 {
            for x_new in [-1.0, 1.0] {
                let d = qf.pair_at(&s, theta, x_new).delta;
                e1 += d / 6.0;
                e2 += d * d / 6.0;
            }
        }
        let cm = qf.cond_moments_of(&s);
        d1_err = d1_err.max((e1 - 2.0 / 3.0 * s.w).abs()).max((cm.d1 - e1).abs());
        d2_err = d2_err.max((e2 - 4.0 / 3.0).abs()).max((cm.d2 - 4.0 / 3.0).abs());
    }
    let qf_ok = d1_err <= 1e-12 && d2_err <= 1e-12;
    notes.push(format!("quadform d1 err {d1_err:.1e}, d2 err {d2_err:.1e}"));

    // Curie-Weiss n = 2.
    let beta = 0.7f64;
    let cw = CurieWeissModel::new(2, beta, BaseLaw::rademacher()).unwrap();
    let z = 2.0 * beta.exp() + 2.0;
    let expect = [beta.exp() / z, 2.0 / z, beta.exp() / z];
    let law = cw.exact_sum_law().unwrap();
    let enum_err = law
        .iter()
        .zip(&expect)
        .map(|((_, p), e)| (p - e).abs())
        .fold(0.0f64, f64::max);
    let draws = 1_000_000;
    let mut counts = [0usize; 3];
    let mut rng = stream_rng(202, 0);
    for _ in 0..draws {
        let s = cw.sample_exact(&mut rng).s;
        counts[((s + 2.0) / 2.0).round() as usize] += 1;
    }
    let sampler_ok = counts.iter().zip(&expect).all(|(&c, &p)| {
        let sd = (p * (1.0 - p) / draws as f64).sqrt();
        (c as f64 / draws as f64 - p).abs() <= 4.0 * sd
    });
    let cw_ok = law.len() == 3 && enum_err <= 1e-12 && sampler_ok;
    notes.push(format!(
        "curie-weiss enumeration err {enum_err:.1e}, sampler counts {counts:?}"
    ));

    // Correlation rows.
    let mut worst = 0.0f64;
    let law = BaseLaw::uniform();
    for _ in 0..10_000 {
        let x: Vec<f64> = (0..7).map(|_| law.sample(&mut rng)).collect();
        let u = normalize_row(&x).unwrap();
        worst = worst
            .max(u.iter().sum::<f64>().abs())
            .max((u.iter().map(|v| v * v).sum::<f64>() - 1.0).abs());
    }
    let it_ok = worst <= 1e-12;
    notes.push(format!("row identity err {worst:.1e}"));

    verdict(
        2,
        "exact small instances",
        qf_ok && cw_ok && it_ok,
        &notes.join("; "),
        start,
    );
}

#[test]
fn criterion_3_identity_checks() {
    let start = Instant::now();
    let mut notes = Vec::new();
    let mut pass = true;
    let law = BaseLaw::uniform();
    let mut rng = stream_rng(303, 0);
    let row = |n: usize, rng: &mut _| -> Vec<f64> {
        normalize_row(&(0..n).map(|_| law.sample(rng)).collect::<Vec<_>>()).unwrap()
    };

    // E u_ik u_ik' at n = 5.
    let v: Vec<f64> = (0..1_000_000)
        .map(|_| {
            let u = row(5, &mut rng);
            u[0] * u[1]
        })
        .collect();
    let (m, se) = batch_mean_se(&v, 16);
    let ok = within(m, -1.0 / 20.0, se);
    pass &= ok;
    notes.push(format!("E u u' = {m:.5} ± {se:.1e} (ok {ok})"));

    // E(r² | X_i) at n = 6 for 100 fixed rows.
    let mut bad = 0;
    for _ in 0..100 {
        let ui = row(6, &mut rng);
        let r2: Vec<f64> = (0..100_000)
            .map(|_| {
                let uj = row(6, &mut rng);
                let r: f64 = ui.iter().zip(&uj).map(|(a, b)| a * b).sum();
                r * r
            })
            .collect();
        let (m, se) = batch_mean_se(&r2, 16);
        if !within(m, 0.2, se) {
            bad += 1;
        }
    }
    // Each row fails with probability about 6e-5; two failures would be
    // very unlikely under the identity.
    let ok = bad <= 1;
    pass &= ok;
    notes.push(format!("E(r^2|X_i) off in {bad}/100 rows"));

    // E t at (n, p) = (10, 5).
    let im = IndepModel::uniform(10, 5).unwrap();
    let mut mrng = stream_rng(303, 1);
    let t: Vec<f64> = (0..1_000_000).map(|_| im.sample_state(&mut mrng).unwrap().t).collect();
    let (m, se) = batch_mean_se(&t, 16);
    let ok = within(m, im.center(), se);
    pass &= ok;
    notes.push(format!("E t = {m:.5} vs {:.5} (ok {ok})", im.center()));

    // E r⁴ at n = 200.
    let n = 200;
    let r4: Vec<f64> = (0..100_000)
        .map(|_| {
            let (a, b) = (row(n, &mut rng), row(n, &mut rng));
            let r: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
            r.powi(4)
        })
        .collect();
    let (m, _) = batch_mean_se(&r4, 16);
    let target = 3.0 / (n * n) as f64;
    let ok = ((m - target) / target).abs() <= 0.1;
    pass &= ok;
    notes.push(format!("E r^4 = {m:.4e} vs {target:.4e} (ok {ok})"));

    // E ΔΔ* ≈ 0 for the three models.
    let qf = QuadFormModel::tridiagonal(64, BaseLaw::rademacher()).unwrap();
    let cw = CurieWeissModel::new(64, 0.5, BaseLaw::rademacher()).unwrap();
    let it = IndepModel::uniform(10, 5).unwrap();
    let ests = [
        ("quadform", estimate_bound_terms(&qf, 160_000, 31).unwrap()),
        ("curieweiss", estimate_bound_terms(&cw, 160_000, 32).unwrap()),
        ("indeptest", estimate_bound_terms(&it, 16_000, 33).unwrap()),
    ];
    for (name, e) in &ests {
        let ok = within(e.mean_dds, 0.0, e.se_mean_dds);
        pass &= ok;
        notes.push(format!(
            "{name} E dd* = {:.2e} ± {:.1e} (ok {ok})",
            e.mean_dds, e.se_mean_dds
        ));
    }
    pass &= start.elapsed().as_secs_f64() < 300.0;
    verdict(3, "identity checks", pass, &notes.join("; "), start);
}

#[test]
fn criterion_4_quadratic_form_rate() {
    let start = Instant::now();
    let checks = acceptance_checks(preset("thm4.1"));
    let (pass, detail) = summarize(&[
        find(&checks, "ks_slope"),
        find(&checks, "weighted_z2.5_slope"),
        find(&checks, "rhs_slope"),
    ]);
    verdict(4, "quadratic form rate", pass, &detail, start);
}

#[test]
fn criterion_5_curie_weiss_high_temperature() {
    let start = Instant::now();
    let checks = acceptance_checks(preset("cw-beta05"));
    let (pass, detail) = summarize(&[find(&checks, "ks_slope"), find(&checks, "variance")]);
    verdict(5, "Curie-Weiss beta = 0.5", pass, &detail, start);
}

#[test]
fn criterion_6_curie_weiss_critical() {
    let start = Instant::now();
    let checks = acceptance_checks(preset("cw-beta1"));
    let (pass, detail) = summarize(&[find(&checks, "ks_decreasing"), find(&checks, "ks_slope")]);
    verdict(6, "Curie-Weiss beta = 1", pass, &detail, start);
}

#[test]
fn criterion_7_correlation_rate() {
    let start = Instant::now();
    let checks = acceptance_checks(preset("thm4.4"));
    let (pass, detail) = summarize(&[
        find(&checks, "ks_decreasing"),
        find(&checks, "ks_slope"),
        find(&checks, "t3_zero"),
        find(&checks, "fourth_moment_bounded"),
    ]);
    verdict(7, "correlation statistic rate", pass, &detail, start);
}

#[test]
fn criterion_8_certificate_decay() {
    let start = Instant::now();
    let mut all = Vec::new();
    let mut parts = Vec::new();
    for name in ["thm4.1", "cw-beta05", "cw-beta1", "thm4.4"] {
        let checks = acceptance_checks(preset(name));
        let c = find(&checks, "certificate_slope").clone();
        parts.push(format!("{name}: {}{}", c.detail, if c.pass { "" } else { " FAIL" }));
        all.push(c.pass);
    }
    verdict(
        8,
        "rate certificate decay",
        all.iter().all(|&p| p),
        &parts.join("; "),
        start,
    );
}

#[test]
fn criterion_9_reproducibility() {
    let start = Instant::now();
    let mut notes = Vec::new();
    let mut pass = true;
    for name in ["cw-beta05", "cw-beta1"] {
        let first = preset(name).to_json().unwrap();
        let cfg = ExperimentConfig::preset(name).unwrap();
        let again = run_experiment(&cfg, &RunOptions { workers: Some(3) })
            .unwrap()
            .to_json()
            .unwrap();
        let same = first.as_bytes() == again.as_bytes();
        pass &= same;
        notes.push(format!("{name} default pool vs 3 workers identical: {same}"));
    }
    verdict(9, "reproducibility", pass, &notes.join("; "), start);
}
