use kpp_core::dual::{
    default_dual_dt, dual_step, duality_check, run_dual, DualRunConfig, DualState, DualityConfig,
};
use kpp_core::model::ModelSpec;
use kpp_core::rng::replica_rng;
use kpp_core::stats::Estimate;
use rand::Rng;

fn evolve(x0: f64, eps2: f64, n: usize, t: f64, seed: u64, idx: u64) -> (DualState, rand_chacha::ChaCha8Rng) {
    let mut rng = replica_rng(seed, 77, idx);
    let mut s = DualState::new(&[x0], eps2, n).unwrap();
    let dt = default_dual_dt(n);
    for _ in 0..(t / dt).round() as u64 {
        dual_step(&mut s, dt, &mut rng).unwrap();
    }
    (s, rng)
}

/// Without coalescence every lineage is a walk with generator `d^2/dx^2`.
#[test]
fn uniform_lineage_has_heat_variance() {
    let t = 1.0;
    let xs: Vec<f64> = (0..10_000u64)
        .map(|i| {
            let (s, mut rng) = evolve(0.0, 0.0, 8, t, 1, i);
            let pos = s.positions();
            pos[rng.gen_range(0..pos.len())]
        })
        .collect();
    let e = Estimate::from_samples(&xs);
    assert!(e.value.abs() <= 3.0 * e.se, "mean {e:?}");
    let var = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
    assert!((var / (2.0 * t) - 1.0).abs() < 0.05, "variance {var}");
}

#[test]
fn yule_mean_population() {
    let counts: Vec<f64> = (0..4000u64).map(|i| evolve(0.0, 0.0, 4, 1.0, 2, i).0.count() as f64).collect();
    let e = Estimate::from_samples(&counts);
    let want = std::f64::consts::E;
    assert!((e.value - want).abs() <= 3.0 * e.se, "{} +- {} vs e", e.value, e.se);
}

#[test]
fn extremes_are_symmetric() {
    let mut cfg = DualRunConfig::new(vec![0.0], 0.5, 8, 6.0, 400, 3);
    cfg.record_every = 6.0;
    let runs = run_dual(&cfg).unwrap();
    let r: Vec<f64> = runs.iter().map(|x| *x.r.last().unwrap()).collect();
    let l: Vec<f64> = runs.iter().map(|x| -x.l.last().unwrap()).collect();
    let (er, el) = (Estimate::from_samples(&r), Estimate::from_samples(&l));
    assert!(er.value > 0.0);
    assert!(er.agrees_with(&el, 3.0, 0.0), "R {er:?} vs -L {el:?}");
}

/// Particles fill the occupied range at about the stationary density `2/eps^2`.
#[test]
fn stationary_density() {
    let eps2 = 0.5;
    let mut cfg = DualRunConfig::new(vec![0.0], eps2, 8, 20.0, 20, 4);
    cfg.record_every = 20.0;
    let runs = run_dual(&cfg).unwrap();
    for run in &runs {
        let k = run.times.len() - 1;
        let span = run.r[k] - run.l[k];
        let density = run.counts[k] as f64 / span;
        let want = 2.0 / eps2;
        assert!(density > want / 3.0 && density < 3.0 * want, "density {density}");
    }
}

fn rightmost_speeds(eps2: f64, horizon: f64, replicas: usize) -> Estimate {
    let mut cfg = DualRunConfig::new(vec![0.0], eps2, 8, horizon, replicas, 5);
    cfg.record_every = horizon;
    let runs = run_dual(&cfg).unwrap();
    assert!(runs.iter().all(|r| !r.capped));
    let r: Vec<f64> = runs.iter().map(|x| x.r.last().unwrap() / horizon).collect();
    Estimate::from_samples(&r)
}

#[test]
fn rightmost_speed_between_one_and_two() {
    let e = rightmost_speeds(2.0 * (-4.0f64).exp(), 30.0, 8);
    assert!(e.value > 1.0 && e.value < 2.0, "R(30)/30 = {e:?}");
}

#[test]
fn rightmost_speed_drops_with_noise() {
    let speeds: Vec<Estimate> = [0.05, 0.5, 2.0].iter().map(|&e2| rightmost_speeds(e2, 10.0, 24)).collect();
    for w in speeds.windows(2) {
        assert!(w[1].value <= w[0].value + 3.0 * w[0].se.hypot(w[1].se), "{speeds:?}");
    }
    assert!(speeds[2].value < speeds[0].value);
}

#[test]
fn event_bookkeeping_over_a_run() {
    let mut rng = replica_rng(6, 6, 6);
    let mut s = DualState::new(&[0.0, 0.25, -0.5], 2.0, 8).unwrap();
    let dt = default_dual_dt(8);
    let (mut born, mut merged) = (0u64, 0u64);
    for _ in 0..5000 {
        let r = dual_step(&mut s, dt, &mut rng).unwrap();
        born += r.branched;
        merged += r.coalesced;
    }
    assert_eq!(s.count() + merged, 3 + born);
}

#[test]
fn duality_at_time_zero_is_exact() {
    let model = ModelSpec::fisher_wright_fisher(0.5);
    for (x, want) in [(1.0, 1.0), (-1.0, 0.0)] {
        let cfg = DualityConfig { x_eval: x, t: 0.0, eps: 0.5, n: 8, replicas_pde: 10, replicas_dual: 10, seed: 1, c_coal: 1.0 };
        let r = duality_check(&model, &cfg).unwrap();
        assert_eq!(r.lhs.value, want);
        assert_eq!(r.rhs.value, want);
        assert!(r.agrees_3se);
    }
}

#[test]
fn duality_holds_at_short_time() {
    let model = ModelSpec::fisher_wright_fisher(0.5);
    let cfg = DualityConfig { x_eval: 0.5, t: 0.5, eps: 0.5, n: 8, replicas_pde: 400, replicas_dual: 4000, seed: 8, c_coal: 1.0 };
    let r = duality_check(&model, &cfg).unwrap();
    assert!(r.lhs.agrees_with(&r.rhs, 3.0, 0.0), "lhs {:?} rhs {:?}", r.lhs, r.rhs);
}
