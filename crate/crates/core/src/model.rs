//! Reaction terms, noise intensities and structural checks on them.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Reaction term `f(u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Nonlinearity {
    /// `u(1-u)`.
    Fisher,
    /// `u` on `[0,1]`, `2-u` above: the convex majorant used for upper bounds.
    Barred,
    /// Tent `a u` for `u <= alpha/2`, `a (alpha - u)` above; zero at `alpha`.
    Sharp { a: f64, alpha: f64 },
    /// Same tent shape with the rate deficit tied to the noise level.
    Underline { a: f64, alpha: f64 },
    /// `u(1-u)` switched off below `theta_cut`.
    Cutoff { theta_cut: f64 },
    /// Piecewise-linear interpolant, extended by its end slopes.
    CustomTable { u: Vec<f64>, f: Vec<f64> },
}

impl Nonlinearity {
    /// `f(u) = b u`.
    pub fn linear(b: f64) -> Self {
        Nonlinearity::CustomTable { u: vec![0.0, 1.0], f: vec![0.0, b] }
    }

    pub fn zero() -> Self {
        Self::linear(0.0)
    }

    /// The lower-bound tent with deficit `|log eps|^{-3}`.
    pub fn underline_for_eps(eps: f64, alpha: f64) -> Self {
        let a = 1.0 - eps.ln().abs().powi(-3);
        Nonlinearity::Underline { a, alpha }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Nonlinearity::Sharp { a, alpha } | Nonlinearity::Underline { a, alpha } => {
                if !(*a > 0.0 && *alpha > 0.0 && *alpha <= 1.0) {
                    return domain(format!("tent needs a > 0 and alpha in (0,1], got a={a}, alpha={alpha}"));
                }
            }
            Nonlinearity::Cutoff { theta_cut } => {
                if !(*theta_cut > 0.0 && *theta_cut < 1.0) {
                    return domain(format!("cutoff level must lie in (0,1), got {theta_cut}"));
                }
            }
            Nonlinearity::CustomTable { u, f } => {
                if u.len() < 2 || u.len() != f.len() {
                    return domain("custom table needs at least two (u, f) pairs of equal length");
                }
                if u.windows(2).any(|w| w[1] <= w[0]) {
                    return domain("custom table abscissae must increase strictly");
                }
            }
            Nonlinearity::Fisher | Nonlinearity::Barred => {}
        }
        Ok(())
    }

    /// `f(u)`; negative `u` is a domain error.
    pub fn eval(&self, u: f64) -> Result<f64> {
        if u < 0.0 || u.is_nan() {
            return domain(format!("f evaluated at u = {u}"));
        }
        Ok(self.value(u))
    }

    /// Unchecked evaluation for inner loops.
    #[inline]
    pub fn value(&self, u: f64) -> f64 {
        match self {
            Nonlinearity::Fisher => u * (1.0 - u),
            Nonlinearity::Barred => {
                if u <= 1.0 {
                    u
                } else {
                    2.0 - u
                }
            }
            Nonlinearity::Sharp { a, alpha } | Nonlinearity::Underline { a, alpha } => {
                if u <= 0.5 * alpha {
                    a * u
                } else {
                    a * (alpha - u)
                }
            }
            Nonlinearity::Cutoff { theta_cut } => {
                if u >= *theta_cut {
                    u * (1.0 - u)
                } else {
                    0.0
                }
            }
            Nonlinearity::CustomTable { u: us, f: fs } => interp_extend(us, fs, u),
        }
    }

    /// `f'(0)`, exact for the closed forms.
    pub fn slope_at_zero(&self) -> f64 {
        match self {
            Nonlinearity::Fisher | Nonlinearity::Barred => 1.0,
            Nonlinearity::Sharp { a, .. } | Nonlinearity::Underline { a, .. } => *a,
            Nonlinearity::Cutoff { .. } => 0.0,
            Nonlinearity::CustomTable { u, f } => (f[1] - f[0]) / (u[1] - u[0]),
        }
    }

    /// Stable equilibrium `x*` with `f(x*) = 0, f'(x*) < 0`, as `(x*, f'(x*))`.
    pub fn saddle(&self) -> Option<(f64, f64)> {
        match self {
            Nonlinearity::Fisher | Nonlinearity::Cutoff { .. } => Some((1.0, -1.0)),
            Nonlinearity::Barred => Some((2.0, -1.0)),
            Nonlinearity::Sharp { a, alpha } | Nonlinearity::Underline { a, alpha } => Some((*alpha, -a)),
            Nonlinearity::CustomTable { u, f } => {
                // First sign change from + to - after the origin.
                (1..u.len()).find_map(|i| {
                    if f[i - 1] > 0.0 && f[i] <= 0.0 {
                        let x = u[i - 1] + (u[i] - u[i - 1]) * f[i - 1] / (f[i - 1] - f[i]);
                        Some((x, (f[i] - f[i - 1]) / (u[i] - u[i - 1])))
                    } else {
                        None
                    }
                })
            }
        }
    }
}

fn interp_extend(us: &[f64], fs: &[f64], u: f64) -> f64 {
    let n = us.len();
    let k = match us.iter().position(|&x| x > u) {
        Some(0) => 1,
        Some(k) => k,
        None => n - 1,
    };
    let (u0, u1, f0, f1) = (us[k - 1], us[k], fs[k - 1], fs[k]);
    f0 + (f1 - f0) * (u - u0) / (u1 - u0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseKind {
    /// `u(1-u)` on `[0,1]`, zero above.
    WrightFisher,
    /// `u`.
    SqrtU,
    CustomTable { u: Vec<f64>, s2: Vec<f64> },
}

/// Noise intensity `sigma^2(u)` together with its amplitude `epsilon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub epsilon: f64,
    /// Declared lower modulus constants of `sigma^2` near zero.
    pub a_star: f64,
    pub u_star: f64,
}

impl NoiseSpec {
    pub fn wright_fisher(epsilon: f64) -> Self {
        Self { kind: NoiseKind::WrightFisher, epsilon, a_star: 0.5, u_star: 0.25 }
    }

    pub fn sqrt_u(epsilon: f64) -> Self {
        Self { kind: NoiseKind::SqrtU, epsilon, a_star: 1.0, u_star: 0.5 }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn eval_sigma2(&self, u: f64) -> Result<f64> {
        if u < 0.0 || u.is_nan() {
            return domain(format!("sigma^2 evaluated at u = {u}"));
        }
        Ok(self.sigma2(u))
    }

    #[inline]
    pub fn sigma2(&self, u: f64) -> f64 {
        match &self.kind {
            NoiseKind::WrightFisher => {
                if u <= 1.0 {
                    u * (1.0 - u)
                } else {
                    0.0
                }
            }
            NoiseKind::SqrtU => u,
            NoiseKind::CustomTable { u: us, s2 } => interp_extend(us, s2, u).max(0.0),
        }
    }

    #[inline]
    /// Whether `u = 1` is absorbing with `sigma^2(u) = sigma^2(1-u)` on `[0,1]`.
    pub fn absorbing_at_one(&self) -> bool {
        matches!(self.kind, NoiseKind::WrightFisher)
    }

    pub fn sigma(&self, u: f64) -> f64 {
        self.sigma2(u.max(0.0)).sqrt()
    }
}

/// Reaction term, noise, and derived structural constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub f: Nonlinearity,
    pub noise: NoiseSpec,
    /// Largest absolute difference quotient of `f` on the validation grid.
    pub lipschitz_f: f64,
}

impl ModelSpec {
    pub fn new(f: Nonlinearity, noise: NoiseSpec) -> Result<Self> {
        f.validate()?;
        if let NoiseKind::CustomTable { u, s2 } = &noise.kind {
            if u.len() < 2 || u.len() != s2.len() || u.windows(2).any(|w| w[1] <= w[0]) {
                return domain("noise table needs increasing abscissae and matching values");
            }
        }
        if !(noise.epsilon >= 0.0) {
            return domain(format!("noise amplitude must be non-negative, got {}", noise.epsilon));
        }
        let lipschitz_f = lipschitz(&f, &uniform_grid(VALIDATION_RANGE, 3001));
        Ok(Self { f, noise, lipschitz_f })
    }

    /// `f = u(1-u)` with Wright-Fisher noise.
    pub fn fisher_wright_fisher(epsilon: f64) -> Self {
        Self::new(Nonlinearity::Fisher, NoiseSpec::wright_fisher(epsilon)).expect("valid preset")
    }

    /// Same model with the noise amplitude replaced.
    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        let mut m = self.clone();
        m.noise.epsilon = epsilon;
        m
    }

    /// Largest `alpha` with `(1-a) u 1(u <= alpha) <= f(u)`.
    pub fn alpha(&self, a: f64) -> f64 {
        alpha_of(&self.f, a)
    }
}

/// Largest `alpha` such that `f(u) >= (1-a) u` on `(0, alpha]`, searched on `[0, 3]`.
pub fn alpha_of(f: &Nonlinearity, a: f64) -> f64 {
    if a <= 0.0 {
        return 0.0;
    }
    match f {
        Nonlinearity::Fisher => return a.min(1.0),
        Nonlinearity::Barred => return (2.0 / (2.0 - a.min(1.0))).min(VALIDATION_RANGE),
        _ => {}
    }
    let ok = |u: f64| f.value(u) >= (1.0 - a) * u - 1e-15;
    let n = 30_000;
    let h = VALIDATION_RANGE / n as f64;
    let mut good = 0.0;
    for i in 1..=n {
        let u = i as f64 * h;
        if !ok(u) {
            let (mut lo, mut hi) = (good, u);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if ok(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return lo;
        }
        good = u;
    }
    VALIDATION_RANGE
}

const VALIDATION_RANGE: f64 = 3.0;

fn uniform_grid(hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| hi * i as f64 / (n - 1) as f64).collect()
}

fn lipschitz(f: &Nonlinearity, grid: &[f64]) -> f64 {
    grid.windows(2)
        .map(|w| ((f.value(w[1]) - f.value(w[0])) / (w[1] - w[0])).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<ConditionCheck>,
    pub lipschitz_f: f64,
    /// Best `(a*, u*)` pair found on the grid (maximising `a* u*`).
    pub a_star: f64,
    pub u_star: f64,
    pub all_passed: bool,
}

impl ValidationReport {
    pub fn check(&self, name: &str) -> Option<&ConditionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Grid check of the reaction/noise structural conditions on `[0, 3]`.
pub fn validate_model(spec: &ModelSpec, grid_n: usize) -> Result<ValidationReport> {
    if grid_n < 100 {
        return Err(Error::Config(format!("validation grid needs at least 100 points, got {grid_n}")));
    }
    let grid = uniform_grid(VALIDATION_RANGE, grid_n);
    let f = &spec.f;
    let noise = &spec.noise;
    let tol = 1e-12;
    let mut checks = Vec::new();
    let mut push = |name: &str, passed: bool, detail: String| {
        checks.push(ConditionCheck { name: name.to_string(), passed, detail });
    };

    let f0 = f.value(0.0);
    let f1 = f.value(1.0);
    push("f(0)=0", f0 == 0.0, format!("f(0) = {f0:e}"));
    push("f(1)=0", f1.abs() <= tol, format!("f(1) = {f1:e}"));

    let slope0 = f.slope_at_zero();
    let interior: Vec<f64> = grid.iter().copied().filter(|&u| u > 0.0 && u < 1.0).collect();
    let worst_pos = interior.iter().map(|&u| f.value(u)).fold(f64::INFINITY, f64::min);
    let worst_lin = interior.iter().map(|&u| f.value(u) - u * slope0).fold(f64::NEG_INFINITY, f64::max);
    push(
        "0<f(u)<=u f'(0) on (0,1)",
        worst_pos > 0.0 && worst_lin <= tol,
        format!("min f = {worst_pos:e}, max f(u) - u f'(0) = {worst_lin:e}, f'(0) = {slope0}"),
    );

    let worst_cap = grid
        .iter()
        .filter(|&&u| u >= 1.0)
        .map(|&u| f.value(u) - (2.0 - u))
        .fold(f64::NEG_INFINITY, f64::max);
    push("f(u)<=2-u for u>=1", worst_cap <= tol, format!("max f(u) - (2-u) = {worst_cap:e}"));

    let worst_s = grid.iter().map(|&u| noise.sigma2(u) - u).fold(f64::NEG_INFINITY, f64::max);
    push("sigma^2(u)<=u", worst_s <= tol, format!("max sigma^2(u) - u = {worst_s:e}"));

    let curve = lower_modulus_curve(noise, &grid);
    let best = curve
        .iter()
        .copied()
        .filter(|&(_, a)| a > 0.0)
        .max_by(|x, y| (x.0 * x.1).total_cmp(&(y.0 * y.1)));
    let (u_star, a_star) = best.unwrap_or((0.0, 0.0));
    push(
        "sigma^2 lower modulus",
        a_star > 0.0,
        format!("best pair a* = {a_star:.6}, u* = {u_star:.6}"),
    );

    let declared_ok = if noise.u_star > 0.0 && noise.u_star < 1.0 && noise.a_star > 0.0 {
        modulus_at(noise, &grid, noise.u_star) >= noise.a_star - 1e-9
    } else {
        false
    };
    push(
        "declared (a*, u*) valid",
        declared_ok,
        format!("a* = {}, u* = {}", noise.a_star, noise.u_star),
    );

    let all_passed = checks.iter().all(|c| c.passed);
    Ok(ValidationReport { checks, lipschitz_f: lipschitz(f, &grid), a_star, u_star, all_passed })
}

/// `(u*, a*(u*))`: smallest difference quotient of `sigma^2` over pairs in `[0, u*]`.
fn lower_modulus_curve(noise: &NoiseSpec, grid: &[f64]) -> Vec<(f64, f64)> {
    let pts: Vec<f64> = grid.iter().copied().filter(|&u| u < 1.0).collect();
    let s: Vec<f64> = pts.iter().map(|&u| noise.sigma2(u)).collect();
    let mut out = Vec::with_capacity(pts.len());
    let mut running = f64::INFINITY;
    for k in 1..pts.len() {
        for j in 0..k {
            running = running.min((s[k] - s[j]) / (pts[k] - pts[j]));
        }
        out.push((pts[k], running));
    }
    out
}

fn modulus_at(noise: &NoiseSpec, grid: &[f64], u_star: f64) -> f64 {
    let mut pts: Vec<f64> = grid.iter().copied().filter(|&u| u < u_star).collect();
    pts.push(u_star);
    let s: Vec<f64> = pts.iter().map(|&u| noise.sigma2(u)).collect();
    let mut m = f64::INFINITY;
    for k in 1..pts.len() {
        for j in 0..k {
            m = m.min((s[k] - s[j]) / (pts[k] - pts[j]));
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        assert_eq!(Nonlinearity::Fisher.eval(0.5).unwrap(), 0.25);
        assert_eq!(Nonlinearity::Barred.eval(1.5).unwrap(), 0.5);
        assert_eq!(Nonlinearity::Cutoff { theta_cut: 0.01 }.eval(0.005).unwrap(), 0.0);
        assert!(Nonlinearity::Fisher.eval(-0.1).is_err());

        let wf = NoiseSpec::wright_fisher(0.1);
        assert_eq!(wf.eval_sigma2(0.5).unwrap(), 0.25);
        assert_eq!(wf.eval_sigma2(1.2).unwrap(), 0.0);
        assert_eq!(NoiseSpec::sqrt_u(0.1).eval_sigma2(2.0).unwrap(), 2.0);
        assert!(wf.eval_sigma2(-1.0).is_err());
    }

    #[test]
    fn zero_is_absorbing_for_every_kind() {
        let kinds = [
            Nonlinearity::Fisher,
            Nonlinearity::Barred,
            Nonlinearity::Sharp { a: 0.9, alpha: 0.1 },
            Nonlinearity::Underline { a: 0.8, alpha: 0.05 },
            Nonlinearity::Cutoff { theta_cut: 1e-3 },
        ];
        for k in &kinds {
            assert_eq!(k.eval(0.0).unwrap(), 0.0, "{k:?}");
        }
        assert_eq!(Nonlinearity::Fisher.value(1.0), 0.0);
        assert_eq!(Nonlinearity::Barred.value(1.0), 1.0);
    }

    #[test]
    fn custom_table_extends_by_end_slopes() {
        let t = Nonlinearity::CustomTable { u: vec![0.0, 1.0, 2.0], f: vec![0.0, 1.0, 0.0] };
        assert_eq!(t.value(0.5), 0.5);
        assert_eq!(t.value(3.0), -1.0);
        assert_eq!(Nonlinearity::linear(2.0).value(5.0), 10.0);
    }

    #[test]
    fn pointwise_ordering_of_comparison_terms() {
        let a_s = 0.9;
        let alpha = alpha_of(&Nonlinearity::Fisher, 1.0 - a_s);
        let sharp = Nonlinearity::Sharp { a: a_s, alpha };
        let under = Nonlinearity::Underline { a: 0.8, alpha };
        for i in 0..=1000 {
            let u = i as f64 / 1000.0;
            let (fu, fs, fb) = (Nonlinearity::Fisher.value(u), sharp.value(u), Nonlinearity::Barred.value(u));
            assert!(fs <= fu + 1e-15 && fu <= fb, "u = {u}");
            if u <= alpha {
                assert!(under.value(u) <= fs, "u = {u}");
            }
        }
        for i in 0..=3000 {
            let u = i as f64 / 1000.0;
            assert!(Nonlinearity::Fisher.value(u) <= Nonlinearity::Barred.value(u));
        }
    }

    #[test]
    fn alpha_is_identity_for_fisher() {
        let m = ModelSpec::fisher_wright_fisher(0.1);
        for a in [0.01, 0.1, 0.5] {
            assert_eq!(m.alpha(a), a);
            let generic = alpha_of(&Nonlinearity::CustomTable {
                u: (0..=3000).map(|i| i as f64 / 1000.0).collect(),
                f: (0..=3000).map(|i| { let u = i as f64 / 1000.0; u * (1.0 - u) }).collect(),
            }, a);
            assert!((generic - a).abs() < 2e-3, "{generic} vs {a}");
        }
        assert!((alpha_of(&Nonlinearity::Barred, 0.5) - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn fisher_wright_fisher_passes() {
        let r = validate_model(&ModelSpec::fisher_wright_fisher(0.1), 301).unwrap();
        assert!(r.all_passed, "{r:#?}");
        // a*(u*) = 1 - 2u* on the grid; the best product sits at u* ~ 1/4.
        assert!((r.a_star - 0.5).abs() < 0.03, "{r:?}");
        assert!((r.u_star - 0.25).abs() < 0.02, "{r:?}");
        assert!((r.lipschitz_f - 5.0).abs() < 0.02);
    }

    #[test]
    fn sqrt_noise_has_unit_modulus() {
        let m = ModelSpec::new(Nonlinearity::Fisher, NoiseSpec::sqrt_u(0.1)).unwrap();
        let r = validate_model(&m, 301).unwrap();
        assert!(r.all_passed, "{r:#?}");
        assert!((r.a_star - 1.0).abs() < 1e-12);
    }

    #[test]
    fn oversized_noise_fails_sigma_bound() {
        let noise = NoiseSpec {
            kind: NoiseKind::CustomTable { u: vec![0.0, 1.0], s2: vec![0.0, 2.0] },
            epsilon: 0.1,
            a_star: 1.0,
            u_star: 0.5,
        };
        let m = ModelSpec::new(Nonlinearity::Fisher, noise).unwrap();
        let r = validate_model(&m, 200).unwrap();
        assert!(!r.check("sigma^2(u)<=u").unwrap().passed);
        assert!(!r.all_passed);
    }

    #[test]
    fn cutoff_fails_positivity() {
        let m = ModelSpec::new(Nonlinearity::Cutoff { theta_cut: 0.05 }, NoiseSpec::wright_fisher(0.1)).unwrap();
        let r = validate_model(&m, 300).unwrap();
        assert!(!r.check("0<f(u)<=u f'(0) on (0,1)").unwrap().passed);
    }

    #[test]
    fn small_grid_rejected() {
        assert!(validate_model(&ModelSpec::fisher_wright_fisher(0.1), 50).is_err());
    }
}
