use kpp_core::kernel::{heat_kernel, killed_kernel, KernelQuery, KillMode};
use kpp_core::rng::replica_rng;
use rand_distr::{Distribution, Normal};

fn query(s: f64, t: f64, x: f64, y: f64, v: f64) -> KernelQuery {
    KernelQuery { s, t, x, y, v, half_width: 0.0 }
}

#[test]
fn heat_kernel_values_and_mass() {
    assert!((heat_kernel(1.0, 0.0).unwrap() - 0.2820948).abs() < 1e-7);
    let want = std::f64::consts::PI.powf(-0.5) * (-1.0f64).exp();
    assert!((heat_kernel(0.25, 1.0).unwrap() - want).abs() < 1e-12);
    assert!(heat_kernel(0.0, 1.0).is_err());
    for t in [0.1, 1.0, 5.0] {
        let h = 1e-3;
        let total: f64 = (-60_000..=60_000).map(|i| heat_kernel(t, i as f64 * h).unwrap() * h).sum();
        assert!((total - 1.0).abs() < 1e-8, "t={t}: {total}");
    }
}

#[test]
fn semigroup() {
    let (s, t, x, y) = (0.3, 0.7, 0.4, -0.9);
    let h = 2e-3;
    let conv: f64 = (-10_000..=10_000)
        .map(|i| {
            let z = i as f64 * h;
            heat_kernel(s, z - y).unwrap() * heat_kernel(t, x - z).unwrap() * h
        })
        .sum();
    assert!((conv - heat_kernel(s + t, x - y).unwrap()).abs() < 1e-6);
}

#[test]
fn reflection_at_zero_speed() {
    let k = killed_kernel(query(0.0, 1.0, -1.0, -1.0, 0.0), KillMode::OneSided).unwrap();
    assert!((k - 0.1783179).abs() < 1e-7, "{k}");
    let on_wall = killed_kernel(query(0.0, 1.0, 1.0, -1.0, 1.0), KillMode::OneSided).unwrap();
    assert_eq!(on_wall, 0.0);
    assert!(killed_kernel(query(1.0, 1.0, -1.0, -1.0, 0.0), KillMode::OneSided).is_err());
}

/// Endpoint density of walkers killed on `z >= v u`, against the closed form.
#[test]
fn killed_kernel_matches_absorbed_walks() {
    let (v, y, x0) = (1.0, -2.0, -1.0);
    let paths = 100_000;
    let steps = 2000;
    let dt = 1.0 / steps as f64;
    let sd = (2.0 * dt).sqrt();
    let bin = 0.1;
    let mut rng = replica_rng(42, 1, 0);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut hits = 0usize;
    for _ in 0..paths {
        let mut z = y;
        let mut alive = true;
        for k in 1..=steps {
            z += sd * normal.sample(&mut rng);
            if z >= v * k as f64 * dt {
                alive = false;
                break;
            }
        }
        if alive && (z - x0).abs() < bin / 2.0 {
            hits += 1;
        }
    }
    let p = hits as f64 / paths as f64;
    let density = p / bin;
    let se = (p * (1.0 - p) / paths as f64).sqrt() / bin;
    // Average the closed form over the bin.
    let m = 50;
    let exact: f64 = (0..m)
        .map(|i| {
            let x = x0 - bin / 2.0 + (i as f64 + 0.5) * bin / m as f64;
            killed_kernel(query(0.0, 1.0, x, y, v), KillMode::OneSided).unwrap()
        })
        .sum::<f64>()
        / m as f64;
    // Discrete monitoring misses some crossings, which biases the walk density up by O(sqrt(dt)).
    let bias = 0.6 * sd * exact;
    assert!((density - exact).abs() <= 3.0 * se + bias, "mc {density} +- {se}, exact {exact}");
}

#[test]
fn killed_below_free_and_approaches_it() {
    let (s, t, x, y) = (0.0, 1.0, -0.5, -0.3);
    let free = heat_kernel(t - s, x - y).unwrap();
    let mut prev = 0.0;
    for v in [1.0, 2.0, 4.0, 8.0, 16.0, 32.0] {
        let k = killed_kernel(query(s, t, x, y, v), KillMode::OneSided).unwrap();
        assert!(k > 0.0 && k <= free * (1.0 + 1e-12));
        assert!(k >= prev, "v = {v}");
        prev = k;
    }
    assert!((prev / free - 1.0).abs() < 1e-3, "{prev} vs {free}");
    let two = killed_kernel(
        KernelQuery { s, t, x, y, v: 0.0, half_width: 3.0 },
        KillMode::TwoSided,
    )
    .unwrap();
    assert!(two < free && two > 0.9 * free);
}
