use steinpair_core::experiment::{emit_plot_data, execute, run_experiment, ExperimentConfig, RunOptions};
use steinpair_core::limitdist::{BaseLaw, LimitDistribution};
use steinpair_core::mcengine::{
    dkw_alpha, dkw_band, fit_rate, run_batches, stream_rng, two_sample_ks, EmpiricalCdf, McLayout,
};
use steinpair_core::quadform::QuadFormModel;

#[test]
fn dkw_formula() {
    assert!((dkw_band(1_000_000, 0.05) - 0.001358).abs() < 1e-6);
    assert!((dkw_band(1, 0.5) - (4f64.ln() / 2.0).sqrt()).abs() < 1e-15);
    assert!((dkw_alpha(5000, dkw_band(5000, 0.01)) - 0.01).abs() < 1e-12);
}

#[test]
fn rate_fit_examples() {
    let sizes = [64.0, 128.0, 256.0, 512.0];
    let errors: Vec<f64> = sizes.iter().map(|n: &f64| 3.0 * n.powf(-0.5)).collect();
    let f = fit_rate(&sizes, &errors, &[]).unwrap();
    assert!((f.slope + 0.5).abs() < 1e-12);
    assert!((f.r_squared - 1.0).abs() < 1e-12);
    let f = fit_rate(&sizes, &[0.1; 4], &[]).unwrap();
    assert!(f.slope.abs() < 1e-12);
    let f = fit_rate(&sizes, &errors, &[0.0, 0.0, 0.0, 0.2]).unwrap();
    assert_eq!(f.excluded_points.len(), 1);
    assert_eq!(f.sizes.len(), 3);
    assert!(fit_rate(&sizes, &errors, &[1.0; 4]).is_err());
}

#[test]
fn worker_count_does_not_change_samples() {
    let m = QuadFormModel::tridiagonal(16, BaseLaw::rademacher()).unwrap();
    let a = run_batches(&m, 3200, McLayout::with_workers(1), 9).unwrap();
    let b = run_batches(&m, 3200, McLayout::with_workers(8), 9).unwrap();
    assert_eq!(a, b);
    let c = run_batches(&m, 3200, McLayout::default(), 10).unwrap();
    let wa: Vec<f64> = a.iter().map(|s| s.w).collect();
    let wc: Vec<f64> = c.iter().map(|s| s.w).collect();
    let band = 2.0 * dkw_band(3200, 0.001);
    assert!(two_sample_ks(&wa, &wc) <= band);
}

#[test]
fn ecdf_dkw_coverage() {
    let d = LimitDistribution::standard_normal();
    // The band's coverage is barely above 95%, so 100 repetitions would put
    // the count below 95 a good part of the time; 2000 resolve it.
    let n = 500;
    let mut covered = 0;
    for rep in 0..2000 {
        let mut rng = stream_rng(55, rep);
        let ecdf = EmpiricalCdf::new((0..n).map(|_| d.sample(&mut rng)).collect()).unwrap();
        if ecdf.ks_distance(|z| d.cdf(z)).distance <= dkw_band(n, 0.05) {
            covered += 1;
        }
    }
    assert!(covered >= 95 * 20, "{covered}");
}

#[test]
fn outputs_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::preset("thm4.1").unwrap();
    cfg.sizes = vec![8, 16, 32];
    cfg.mc = 1600;
    cfg.output_dir = dir.path().join("qf");
    let report = execute(&cfg, &RunOptions::default()).unwrap();
    for f in [
        "report.json",
        "manifest.json",
        "summary.csv",
        "profile_n8.csv",
        "profile_n32.csv",
    ] {
        assert!(cfg.output_dir.join(f).is_file(), "{f}");
    }
    let again = run_experiment(&cfg, &RunOptions { workers: Some(2) }).unwrap();
    let on_disk = std::fs::read_to_string(cfg.output_dir.join("report.json")).unwrap();
    assert_eq!(on_disk, again.to_json().unwrap());
    assert!(!on_disk.contains("wall_clock"));

    let files = emit_plot_data(&report, &dir.path().join("plots")).unwrap();
    assert_eq!(files.len(), 4);
    let text = std::fs::read_to_string(dir.path().join("plots/profile_n16.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "z,F_hat,F,raw_err,weighted_g_err,weighted_z2_err,dkw"
    );
    let p = &report.sizes[1].profile;
    for (i, line) in lines.enumerate() {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(v[0], p.z_grid[i]);
        assert_eq!(v[1], p.f_hat[i]);
        assert_eq!(v[3], p.raw_err[i]);
    }
    let summary = std::fs::read_to_string(dir.path().join("plots/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);
}

#[test]
fn missing_matrix_file_is_a_field_error() {
    let mut cfg = ExperimentConfig::preset("thm4.1").unwrap();
    cfg.application = serde_json::from_str(r#"{"kind": "quadform", "matrix": "/nonexistent/a_{n}.csv"}"#).unwrap();
    let err = cfg.validate().unwrap_err().to_string();
    assert!(err.contains("application.matrix"), "{err}");
}
