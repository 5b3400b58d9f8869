use kpp_core::sweep::{bd_leading, fit_correction_points, run_sweep, trend_checks, SweepConfig};

fn small(eps: Vec<f64>, seed: u64) -> SweepConfig {
    SweepConfig { horizon: 80.0, replicas: 6, seed, ..SweepConfig::new(eps) }
}

#[test]
fn noisy_fronts_run_below_two_and_slow_with_noise() {
    let cfg = small(vec![(-2.0f64).exp(), (-3.0f64).exp()], 3);
    let res = run_sweep(&cfg).unwrap();
    for r in &res.rows {
        assert_eq!(r.failed, 0, "{:?}", r.flags);
        assert!(r.v_hat + r.ci < 2.0, "eps {}: {} +- {}", r.eps, r.v_hat, r.ci);
        assert!(r.cutoff_speed.is_some());
        // The comparison front needs eps^2 below the slope cap.
        assert_eq!(r.kappa_ref.is_some(), r.eps * r.eps < 1e-2, "{:?}", r.flags);
    }
    assert!(res.monotone);
    assert!(trend_checks(&res).below_two);
    let again = run_sweep(&cfg).unwrap();
    assert_eq!(serde_json::to_string(&res.rows).unwrap(), serde_json::to_string(&again.rows).unwrap());
}

#[test]
fn fit_recovers_a_planted_law() {
    let eps: Vec<f64> = [1.5, 2.0, 2.5, 3.0, 4.0].iter().map(|l: &f64| (-l).exp()).collect();
    let deficit: Vec<f64> = eps
        .iter()
        .map(|&e| {
            let le = e.ln().abs();
            1.3 * bd_leading(e) / std::f64::consts::PI.powi(2) + 0.4 * le.ln() / le.powi(3)
        })
        .collect();
    let fit = fit_correction_points(&eps, &deficit, &[0.01; 5]).unwrap();
    assert!((fit.a - 1.3).abs() < 1e-9 && (fit.b - 0.4).abs() < 1e-9, "{fit:?}");
    assert!(fit.rms < 1e-12);
    assert!(fit_correction_points(&eps[..3], &deficit[..3], &[0.01; 3]).is_err());
}

#[test]
fn config_defaults_and_rejections() {
    let cfg = SweepConfig::from_json(r#"{"eps": [0.1, 0.05]}"#).unwrap();
    assert_eq!(cfg, SweepConfig::new(vec![0.1, 0.05]));
    assert!(SweepConfig::from_json(r#"{"eps": []}"#).is_err());
    assert!(SweepConfig::from_json(r#"{"eps": [0.1], "replicas": 1}"#).is_err());
    assert!(SweepConfig::from_json(r#"{"eps": [0.1], "bogus": 1}"#).is_err());
    assert!(SweepConfig::from_json(r#"{"eps": [0.1], "schema_version": 9}"#).is_err());
}
