//! Heat kernels for the generator `d^2/dx^2` (variance `2t`), free and killed.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// `(4 pi t)^{-1/2} exp(-x^2 / 4t)`.
pub fn heat_kernel(t: f64, x: f64) -> Result<f64> {
    if !(t > 0.0) {
        return domain(format!("heat kernel needs t > 0, got {t}"));
    }
    Ok(g(t, x))
}

#[inline]
pub(crate) fn g(t: f64, x: f64) -> f64 {
    (-x * x / (4.0 * t)).exp() / (4.0 * std::f64::consts::PI * t).sqrt()
}

/// Transition density from `(s, y)` to `(t, x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelQuery {
    pub s: f64,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    /// Boundary speed.
    pub v: f64,
    /// Half-width of the two-sided domain at time zero.
    pub half_width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KillMode {
    /// Killed on `z >= v u`.
    OneSided,
    /// Killed on `|z| >= L + v u`.
    TwoSided,
}

/// Relative size at which the image series is truncated.
pub const IMAGE_TOL: f64 = 1e-12;

pub fn killed_kernel(q: KernelQuery, mode: KillMode) -> Result<f64> {
    if !(q.s < q.t) {
        return domain(format!("killed kernel needs s < t, got s={}, t={}", q.s, q.t));
    }
    if q.v < 0.0 {
        return domain(format!("boundary speed must be non-negative, got {}", q.v));
    }
    let dt = q.t - q.s;
    match mode {
        KillMode::OneSided => {
            let xp = q.x - q.v * q.t;
            let yp = q.y - q.v * q.s;
            if xp >= 0.0 || yp >= 0.0 {
                return Ok(0.0);
            }
            let tilt = (-0.5 * q.v * (xp - yp) - 0.25 * q.v * q.v * dt).exp();
            let val = tilt * (g(dt, xp - yp) - g(dt, xp + yp));
            Ok(val.max(0.0))
        }
        KillMode::TwoSided => {
            if q.v != 0.0 {
                return Err(Error::Unsupported(
                    "two-sided kernel with expanding walls has no image series; only v = 0 is evaluated".into(),
                ));
            }
            let l = q.half_width;
            if !(l > 0.0) || q.x.abs() >= l || q.y.abs() >= l {
                return Ok(0.0);
            }
            Ok(interval_images(dt, q.x, q.y, -l, l).clamp(0.0, g(dt, q.x - q.y)))
        }
    }
}

/// Dirichlet kernel of `(a, b)` by the method of images.
fn interval_images(t: f64, x: f64, y: f64, a: f64, b: f64) -> f64 {
    let w = 2.0 * (b - a);
    let refl = 2.0 * a - y;
    let term = |k: f64| g(t, x - y - k * w) - g(t, x - refl - k * w);
    let mut sum = term(0.0);
    for k in 1..10_000 {
        let kf = k as f64;
        let pair = term(kf) + term(-kf);
        sum += pair;
        let scale = sum.abs().max(f64::MIN_POSITIVE);
        if (g(t, x - y - kf * w).abs() + g(t, x - y + kf * w)) <= IMAGE_TOL * scale && pair.abs() <= IMAGE_TOL * scale {
            break;
        }
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn heat_kernel_values() {
        assert!((heat_kernel(1.0, 0.0).unwrap() - 0.282_094_8).abs() < 1e-7);
        let expect = (-1.0f64).exp() / std::f64::consts::PI.sqrt();
        assert!((heat_kernel(0.25, 1.0).unwrap() - expect).abs() < 1e-15);
        assert!((expect - 0.207_553_7).abs() < 1e-7);
        assert!(heat_kernel(0.0, 1.0).is_err());
        assert!(heat_kernel(-1.0, 1.0).is_err());
    }

    #[test]
    fn heat_kernel_is_a_density() {
        for t in [0.1f64, 1.0, 7.0] {
            let mass = simpson(|x| g(t, x), -40.0 * t.sqrt(), 40.0 * t.sqrt(), 20_000);
            assert!((mass - 1.0).abs() < 1e-8, "t = {t}: {mass}");
        }
    }

    #[test]
    fn semigroup_property() {
        let (s, t, x, y) = (0.3, 0.9, 0.7, -0.4);
        let lhs = simpson(|z| g(s, z - y) * g(t, x - z), -30.0, 30.0, 40_000);
        assert!((lhs - g(s + t, x - y)).abs() < 1e-6);
    }

    #[test]
    fn one_sided_reflection_values() {
        let q = |x: f64, y: f64, v: f64| KernelQuery { s: 0.0, t: 1.0, x, y, v, half_width: 0.0 };
        // On the boundary the killed density vanishes.
        assert_eq!(killed_kernel(q(1.0, -1.0, 1.0), KillMode::OneSided).unwrap(), 0.0);
        let v0 = killed_kernel(q(-1.0, -1.0, 0.0), KillMode::OneSided).unwrap();
        assert!((v0 - (0.282_094_8 - 0.103_776_9)).abs() < 1e-7, "{v0}");
        assert!((v0 - 0.178_317_9).abs() < 1e-7);
        let bad = KernelQuery { s: 1.0, t: 1.0, x: -1.0, y: -1.0, v: 0.0, half_width: 0.0 };
        assert!(killed_kernel(bad, KillMode::OneSided).is_err());
    }

    #[test]
    fn killed_is_dominated_and_recovers_free_kernel() {
        let (x, y) = (-0.5, 0.3);
        let free = g(0.9, x - y);
        let mut prev = 0.0;
        for v in [1.0, 2.0, 4.0, 8.0, 16.0, 32.0] {
            let q = KernelQuery { s: 0.1, t: 1.0, x, y, v, half_width: 0.0 };
            let k = killed_kernel(q, KillMode::OneSided).unwrap();
            assert!(k <= free * (1.0 + 1e-12), "{k} > {free}");
            assert!(k >= prev - 1e-15, "not monotone at v = {v}");
            prev = k;
        }
        assert!((prev - free).abs() < 1e-6 * free);
    }

    #[test]
    fn two_sided_images() {
        // Wide interval recovers the free kernel.
        let q = KernelQuery { s: 0.0, t: 0.5, x: 0.2, y: -0.1, v: 0.0, half_width: 50.0 };
        let k = killed_kernel(q, KillMode::TwoSided).unwrap();
        assert!((k - g(0.5, 0.3)).abs() < 1e-14);
        // First Dirichlet eigenmode dominates at long times on (-L, L).
        let l = 1.0;
        let t = 3.0;
        let q = KernelQuery { s: 0.0, t, x: 0.0, y: 0.0, v: 0.0, half_width: l };
        let k = killed_kernel(q, KillMode::TwoSided).unwrap();
        let lam = (std::f64::consts::PI / (2.0 * l)).powi(2);
        let modal = (1.0 / l) * (-lam * t).exp();
        assert!((k - modal).abs() < 1e-6 * modal, "{k} vs {modal}");
        let q = KernelQuery { s: 0.0, t: 1.0, x: 1.0, y: 0.0, v: 0.0, half_width: 1.0 };
        assert_eq!(killed_kernel(q, KillMode::TwoSided).unwrap(), 0.0);
        let q = KernelQuery { s: 0.0, t: 1.0, x: 0.0, y: 0.0, v: 0.5, half_width: 1.0 };
        assert!(killed_kernel(q, KillMode::TwoSided).is_err());
    }
}
