use steinpair_core::curieweiss::CurieWeissModel;
use steinpair_core::indeptest::{it_cond_moments, IndepModel};
use steinpair_core::limitdist::{BaseLaw, LimitDistribution};
use steinpair_core::mcengine::{batch_mean_se, stream_rng};
use steinpair_core::paircore::{exchangeability_check, PairModel};
use steinpair_core::quadform::{qf_statistic, qf_theoretical_rhs, QuadFormModel, SymMatrix};

fn one_pair() -> QuadFormModel {
    QuadFormModel::new(
        SymMatrix::from_triplets(3, &[(0, 1, 1.0)]).unwrap(),
        BaseLaw::rademacher(),
    )
    .unwrap()
}

#[test]
fn quadform_one_pair_examples() {
    let m = one_pair();
    assert_eq!(m.sigma(), 2.0);
    assert_eq!(qf_statistic(&m, &[1.0, 1.0, 1.0]).unwrap(), 1.0);
    assert_eq!(qf_statistic(&m, &[0.0; 3]).unwrap(), 0.0);
    let s = m.state(vec![1.0, 1.0, 1.0]).unwrap();
    assert_eq!(m.pair_at(&s, 0, -1.0).delta, 2.0);
    assert_eq!(m.pair_at(&s, 2, -1.0).delta, 0.0);
    let cm = m.cond_moments_of(&s);
    assert!((1.0 - cm.d2 / (2.0 * m.lambda())).abs() < 1e-15);
    let rhs = qf_theoretical_rhs(&m);
    assert!((rhs - 0.5 * std::f64::consts::SQRT_2).abs() < 1e-15);
    assert!(qf_statistic(&m, &[1.0, 1.0]).is_err());
}

#[test]
fn quadform_rhs_homogeneity_and_decay() {
    let a = SymMatrix::tridiagonal(40).unwrap();
    let base = qf_theoretical_rhs(&QuadFormModel::new(a.clone(), BaseLaw::rademacher()).unwrap());
    for c in [0.5, 3.0] {
        let r = qf_theoretical_rhs(&QuadFormModel::new(a.scaled(c), BaseLaw::rademacher()).unwrap());
        assert!((r - base).abs() < 1e-14 * base);
    }
    let r1 = qf_theoretical_rhs(&QuadFormModel::tridiagonal(256, BaseLaw::rademacher()).unwrap());
    let r2 = qf_theoretical_rhs(&QuadFormModel::tridiagonal(1024, BaseLaw::rademacher()).unwrap());
    let slope = (r2 / r1).ln() / 4f64.ln();
    assert!((slope + 0.5).abs() < 0.01, "{slope}");
}

#[test]
fn quadform_incremental_moves() {
    let m = QuadFormModel::tridiagonal(50, BaseLaw::standard_normal()).unwrap();
    let mut rng = stream_rng(4, 0);
    let mut s = m.sample_state(&mut rng).unwrap();
    for _ in 0..3000 {
        let p = m.sample_pair(&s, &mut rng);
        m.apply_move(&mut s, p.theta, p.x_new);
        let fresh = m.state(s.x.clone()).unwrap();
        assert!((fresh.w - p.w_prime).abs() < 1e-10);
    }
}

#[test]
fn curie_weiss_heat_bath_is_stationary() {
    let m = CurieWeissModel::new(16, 0.8, BaseLaw::rademacher()).unwrap();
    let mut rng = stream_rng(8, 0);
    let reps = 100_000;
    let (mut s2a, mut s2b, mut s4a, mut s4b) = (vec![], vec![], vec![], vec![]);
    for _ in 0..reps {
        let mut st = m.sample_exact(&mut rng);
        s2a.push(st.s * st.s);
        s4a.push(st.s.powi(4));
        for _ in 0..16 {
            let p = m.sample_pair(&st, &mut rng);
            m.apply_pair(&mut st, &p);
        }
        s2b.push(st.s * st.s);
        s4b.push(st.s.powi(4));
    }
    for (a, b) in [(&s2a, &s2b), (&s4a, &s4b)] {
        let (ma, sa) = batch_mean_se(a, 16);
        let (mb, sb) = batch_mean_se(b, 16);
        assert!((ma - mb).abs() <= 4.0 * (sa * sa + sb * sb).sqrt(), "{ma} vs {mb}");
    }
}

#[test]
fn curie_weiss_critical_second_moment_approaches_limit() {
    let m = CurieWeissModel::new(1024, 1.0, BaseLaw::rademacher()).unwrap();
    let limit = m.limit_distribution().unwrap().second_moment().unwrap();
    let mut rng = stream_rng(12, 0);
    let w2: Vec<f64> = (0..100_000)
        .map(|_| {
            let w = m.sample_exact(&mut rng).s / m.scale();
            w * w
        })
        .collect();
    let (mean, _) = batch_mean_se(&w2, 16);
    assert!((mean - limit).abs() / limit < 0.05, "{mean} vs {limit}");
}

#[test]
fn pairs_are_exchangeable() {
    let qf = QuadFormModel::tridiagonal(32, BaseLaw::rademacher()).unwrap();
    let r = exchangeability_check(&qf, 20_000, 1).unwrap();
    assert!(!r.flagged, "{r:?}");
    let cw = CurieWeissModel::new(64, 1.0, BaseLaw::rademacher()).unwrap();
    assert!(!exchangeability_check(&cw, 20_000, 2).unwrap().flagged);
    let it = IndepModel::uniform(8, 4).unwrap();
    assert!(!exchangeability_check(&it, 20_000, 3).unwrap().flagged);
}

#[test]
fn indeptest_linear_regression_by_inner_mc() {
    let m = IndepModel::uniform(6, 4).unwrap();
    let mut rng = stream_rng(21, 0);
    for _ in 0..3 {
        let st = m.sample_state(&mut rng).unwrap();
        let deltas: Vec<f64> = (0..100_000)
            .map(|_| m.sample_pair(&st, &mut rng).unwrap().delta)
            .collect();
        let (mean, se) = batch_mean_se(&deltas, 16);
        assert!((mean - 2.0 / 4.0 * st.w).abs() <= 4.0 * se, "{mean} vs {}", st.w / 2.0);
    }
}

#[test]
fn indeptest_dds_stable_across_seeds() {
    let law = BaseLaw::finite(vec![-1.5, 0.0, 1.5], vec![2.0 / 9.0, 5.0 / 9.0, 2.0 / 9.0]).unwrap();
    let m = IndepModel::new(6, 4, law).unwrap();
    let st = m.sample_state(&mut stream_rng(30, 0)).unwrap();
    let a = it_cond_moments(&m, &st, &mut stream_rng(31, 0), 100_000).unwrap();
    let b = it_cond_moments(&m, &st, &mut stream_rng(32, 0), 100_000).unwrap();
    let se = |c: &steinpair_core::paircore::CondMoments| (c.inner.unwrap().var_dds / 100_000.0).sqrt();
    assert!((a.dds - b.dds).abs() <= 4.0 * (se(&a).powi(2) + se(&b).powi(2)).sqrt());
    assert_eq!(a.d1, b.d1);
}

#[test]
fn indeptest_fourth_moment_bounded() {
    let mut prev = f64::INFINITY;
    for np in [20, 40] {
        let m = IndepModel::uniform(np, np).unwrap();
        let mut rng = stream_rng(40, np as u64);
        let w4: Vec<f64> = (0..4000).map(|_| m.sample_state(&mut rng).unwrap().w.powi(4)).collect();
        let (mean, se) = batch_mean_se(&w4, 16);
        assert!(mean <= prev + 4.0 * se);
        prev = mean;
    }
}

#[test]
fn data_summary_matches_model() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.csv");
    std::fs::write(&path, "1,2,3,4,5\n2,1,0,3,3\n# comment\n5,1,4,1,2\n").unwrap();
    let rows = steinpair_core::indeptest::read_data_csv(&path).unwrap();
    let s = steinpair_core::indeptest::data_summary(rows.clone()).unwrap();
    let m = IndepModel::uniform(5, 3).unwrap();
    assert_eq!(s.w, m.state(rows).unwrap().w);
    let sf = LimitDistribution::standard_normal().sf(s.w);
    assert_eq!(s.tail_probability, sf);
}
