use hfcoint::cointtest::modified_df_statistic;
use hfcoint::experiment::{run_empirical, run_empirical_pair, run_size_power, ExperimentConfig, Preset};
use hfcoint::limitdist::{build_table, critical_value, local_power_curve, simulate_limit_statistic};
use hfcoint::timegrid::{parse_date, weekday_calendar, write_tick_csv};
use hfcoint::{
    deflate, fit_cointegration, pair_align, simulate_model, DeflationConfig, Error, LimitConfig, ModelSpec,
    RhoRegime, TestKind, TruncationConfig,
};

fn sim(model: u8, rho: f64, seed: u64, seconds: f64) -> hfcoint::SimOutput {
    let spec = ModelSpec::new(model, RhoRegime::from_rho(rho), seed)
        .unwrap()
        .with_horizon(126.0)
        .with_sampling_seconds(seconds);
    simulate_model(&spec).unwrap()
}

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset(Preset::Desk);
    cfg.models = vec![1, 7];
    cfg.rhos = vec![1.0, 0.9];
    cfg.intervals = vec![600.0, 23_400.0];
    cfg.reps = 4;
    cfg.kinds = vec![TestKind::ModifiedDf, TestKind::ClassicalDf];
    cfg.cv_reps = 2_000;
    cfg.cv_grid = 1_000;
    cfg
}

#[test]
fn exact_affine_pair_is_degenerate_not_fitted() {
    let out = sim(1, 1.0, 21, 600.0);
    let x = out.pair.x().clone();
    let pair = pair_align(x.clone(), x.affine(2.0, 1.0)).unwrap();
    let err = modified_df_statistic(&pair, &TruncationConfig::default(), &DeflationConfig::default(), false)
        .unwrap_err();
    assert!(matches!(err, Error::DegenerateRegressor(_)), "{err}");
    assert!(err.is_data_error());
    // the fit itself recovers the relation on the deflated scale
    let dp = deflate(&pair, &TruncationConfig::default(), &DeflationConfig::default()).unwrap();
    let fit = fit_cointegration(&dp).unwrap();
    assert!((fit.alpha_hat - 2.0).abs() < 1e-9);
    assert!(fit.residuals.iter().all(|e| e.abs() < 1e-9));
}

#[test]
fn statistic_diverges_with_the_sample_size() {
    let cfg = (TruncationConfig::default(), DeflationConfig::default());
    let stat = |seconds: f64, seed: u64| {
        let out = sim(1, 0.8, seed, seconds);
        modified_df_statistic(&out.pair, &cfg.0, &cfg.1, false).unwrap().0.psi
    };
    let (fine, coarse) = (stat(600.0, 31), stat(3_600.0, 32));
    assert!(coarse < -3.4, "1h statistic {coarse}");
    // six times the observations at the same per-step rho scales by about sqrt(6)
    let ratio = fine / coarse;
    assert!(ratio > 1.8 && ratio < 3.2, "ratio {ratio} ({fine} vs {coarse})");
}

#[test]
fn size_power_is_deterministic_and_resumes_from_cache() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    let cv = build_table(&cfg.kinds, &[cfg.level], cfg.cv_reps, cfg.cv_grid, 5, None).unwrap();

    let (rows, table) = run_size_power(&cfg, &cv).unwrap();
    assert_eq!(rows.len(), 2 * 2 * 2 * 2);
    let (_, again) = run_size_power(&cfg, &cv).unwrap();
    assert_eq!(table.to_csv_string().unwrap(), again.to_csv_string().unwrap());

    cfg.out_dir = Some(dir.path().to_path_buf());
    let (_, cold) = run_size_power(&cfg, &cv).unwrap();
    let (_, warm) = run_size_power(&cfg, &cv).unwrap();
    assert_eq!(cold.to_csv_string().unwrap(), table.to_csv_string().unwrap());
    assert_eq!(warm.to_csv_string().unwrap(), table.to_csv_string().unwrap());
    let simulated = |t: &hfcoint::experiment::ResultTable| {
        t.meta.iter().find(|(k, _)| k == "models_simulated").map(|(_, v)| v.clone()).unwrap()
    };
    assert_eq!(simulated(&warm), "0");
    assert_ne!(simulated(&cold), "0");
}

#[test]
fn tick_files_reproduce_the_aligned_pair_results() {
    let out = sim(8, 0.9, 41, 600.0);
    let days = weekday_calendar(parse_date("2015-03-02").unwrap(), 126);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    write_tick_csv(out.pair.x(), &days, &mut xs).unwrap();
    write_tick_csv(out.pair.y(), &days, &mut ys).unwrap();

    let cfg = small_config();
    let cv = build_table(&cfg.kinds, &[cfg.level], cfg.cv_reps, cfg.cv_grid, 6, None).unwrap();
    let ladder = [600.0, 3_600.0, 23_400.0];
    let from_pair = run_empirical_pair(&out.pair, &ladder, &cfg, &cv).unwrap();
    let from_ticks = run_empirical(&xs[..], &ys[..], &ladder, &cfg, &cv, (None, None)).unwrap();
    assert_eq!(from_pair.len(), from_ticks.len());
    for (a, b) in from_pair.iter().zip(&from_ticks) {
        assert_eq!(a.n, b.n);
        assert!((a.rho_hat - b.rho_hat).abs() < 1e-8);
        for (da, db) in a.decisions.iter().zip(&b.decisions) {
            let (sa, qa, ra) = da.outcome.clone().unwrap();
            let (sb, qb, rb) = db.outcome.clone().unwrap();
            assert!((sa - sb).abs() < 1e-6 * sa.abs().max(1.0), "{sa} vs {sb}");
            assert_eq!((qa, ra), (qb, rb));
        }
    }
    assert!(from_pair[0].decisions[0].outcome.as_ref().unwrap().2);

    let later = run_empirical(&xs[..], &ys[..], &ladder, &cfg, &cv, (parse_date("2015-06-01").ok(), None)).unwrap();
    assert!(later[0].n < from_pair[0].n);
}

#[test]
fn identical_series_fail_per_frequency() {
    let out = sim(1, 1.0, 51, 600.0);
    let pair = pair_align(out.pair.x().clone(), out.pair.x().clone()).unwrap();
    let cfg = small_config();
    let cv = build_table(&cfg.kinds, &[cfg.level], cfg.cv_reps, cfg.cv_grid, 7, None).unwrap();
    let rows = run_empirical_pair(&pair, &[600.0, 23_400.0], &cfg, &cv).unwrap();
    assert_eq!(rows.len(), 2);
    for row in &rows {
        assert!(row.decisions.iter().all(|d| d.outcome.is_err()), "{:?}", row.decisions);
    }
}

#[test]
fn limit_power_rises_with_mean_reversion() {
    let base = LimitConfig { reps: 4_000, grid_points: 1_000, seed: 9, ..LimitConfig::default() };
    let null = simulate_limit_statistic(&LimitConfig { seed: 10, ..base.clone() }).unwrap();
    let q = critical_value(&null, 0.05).unwrap().value;
    let curve = local_power_curve(&[0.0, 5.0, 15.0, 40.0], &base, q).unwrap();
    assert!((curve[0].1 - 0.05).abs() < 0.015, "size {}", curve[0].1);
    for w in curve.windows(2) {
        assert!(w[1].1 > w[0].1 + 2.0 * w[1].2, "{:?}", curve);
    }
    assert!(curve[3].1 > 0.9, "{:?}", curve);
}
