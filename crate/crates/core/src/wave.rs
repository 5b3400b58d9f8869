//! Comparison fronts by phase-plane shooting.
//!
//! A front `F(x - v t)` of `u_t = u_xx + f(u)` killed on `x >= v t` is, with
//! `x(t) = F(-t)`, an orbit of `x' = y, y' = v y - f(x)` joining the origin
//! to the saddle of `f`. The boundary slope `nu = -F'(0)` is where that orbit
//! meets `x = 0`. Orbits are traced backwards from the saddle along its
//! stable eigendirection, which is attracting in reverse time.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::model::{alpha_of, Nonlinearity};
use crate::ode::{Dopri5, Outcome};

/// Point of the phase plane `(x, x')`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: f64,
    pub y: f64,
}

/// `delta - delta^2 / 4`.
pub fn delta_hat(delta: f64) -> f64 {
    delta - 0.25 * delta * delta
}

/// Stable eigenvalue of the barred saddle `(2, 0)`.
pub fn varpi(delta: f64) -> f64 {
    1.0 - 0.5 * delta - (2.0 - delta_hat(delta)).sqrt()
}

/// Unstable eigenvalue of the barred saddle `(2, 0)`.
pub fn lambda(delta: f64) -> f64 {
    1.0 - 0.5 * delta + (2.0 - delta_hat(delta)).sqrt()
}

/// Linearised orbit leaving the origin with slope `nu`, and its derivative.
pub fn x_lin(t: f64, nu: f64, delta: f64) -> Result<(f64, f64)> {
    if !(delta > 0.0 && delta < 2.0) {
        return domain(format!("x_lin needs delta in (0, 2), got {delta}"));
    }
    let w = delta_hat(delta).sqrt();
    let g = 1.0 - 0.5 * delta;
    let e = (g * t).exp();
    let (s, c) = (w * t).sin_cos();
    Ok((nu / w * e * s, nu * e * (g / w * s + c)))
}

/// Smallest `t > 0` with `x_lin(t) = level`, if the first arch reaches it.
pub fn theta_at_level(nu: f64, delta: f64, level: f64) -> Result<Option<f64>> {
    x_lin(0.0, nu, delta)?;
    let w = delta_hat(delta).sqrt();
    let g = 1.0 - 0.5 * delta;
    let t_peak = (std::f64::consts::PI - (w / g).atan()) / w;
    if x_lin(t_peak, nu, delta)?.0 < level {
        return Ok(None);
    }
    let (mut lo, mut hi) = (0.0, t_peak);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if x_lin(mid, nu, delta)?.0 < level {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

/// `Theta`: first time the linearised orbit reaches 1.
pub fn theta(nu: f64, delta: f64) -> Result<Option<f64>> {
    theta_at_level(nu, delta, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootResult {
    pub v: f64,
    /// Orbit slope where it crosses the target level.
    pub nu_out: f64,
    pub converged: bool,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct ShootOptions {
    /// Initial displacement from the saddle along the stable direction.
    pub h0: f64,
    /// Relative change of `nu_out` under halving `h` accepted as converged.
    pub tol: f64,
    pub max_halvings: usize,
    /// Level of `x` at which the slope is read (0 for the killed problem).
    pub target: f64,
    pub t_max: f64,
    pub integrator: Dopri5,
}

impl Default for ShootOptions {
    fn default() -> Self {
        Self { h0: 1e-8, tol: 1e-9, max_halvings: 12, target: 0.0, t_max: 1e4, integrator: Dopri5::default() }
    }
}

/// Stable eigenvalue of the saddle `(x*, 0)` of `x' = y, y' = v y - f(x)`.
pub fn stable_slope(v: f64, fprime_saddle: f64) -> f64 {
    0.5 * v - (0.25 * v * v - fprime_saddle).sqrt()
}

fn shoot_once(f: &Nonlinearity, v: f64, saddle: (f64, f64), h: f64, opts: &ShootOptions) -> (Option<f64>, usize) {
    let (xs, fp) = saddle;
    let mu = stable_slope(v, fp);
    let norm = (1.0 + mu * mu).sqrt();
    let y0 = [xs - h / norm, -mu * h / norm];
    let target = opts.target;
    let out = opts.integrator.integrate_until(
        |s| [-s[1], -(v * s[1] - f.value(s[0].max(0.0)))],
        y0,
        opts.t_max,
        |s| s[0] - target,
        |s| {
            s[0] < -0.5 || s[0] > xs + 1.0 || s[1].abs() > 5.0 || (s[0].abs() < 1e-250 && s[1].abs() < 1e-250)
        },
    );
    match out {
        Outcome::Event { y, steps, .. } if y[1] > 0.0 => (Some(y[1]), steps),
        Outcome::Event { steps, .. } | Outcome::Aborted { steps, .. } | Outcome::Exhausted { steps, .. } => {
            (None, steps)
        }
    }
}

/// Trace the separatrix into `saddle = (x*, f'(x*))` backwards to `x = target`.
pub fn shoot_separatrix(f: &Nonlinearity, v: f64, saddle: (f64, f64), opts: &ShootOptions) -> Result<ShootResult> {
    if !(saddle.1 < 0.0) {
        return domain(format!("saddle needs f'(x*) < 0, got {}", saddle.1));
    }
    if !v.is_finite() {
        return domain("speed must be finite");
    }
    let mut h = opts.h0;
    let mut total = 0;
    let (first, steps) = shoot_once(f, v, saddle, h, opts);
    total += steps;
    let Some(mut nu) = first else {
        return Ok(ShootResult { v, nu_out: f64::NAN, converged: false, steps: total });
    };
    for _ in 0..opts.max_halvings {
        h *= 0.5;
        let (next, steps) = shoot_once(f, v, saddle, h, opts);
        total += steps;
        let Some(next) = next else {
            return Ok(ShootResult { v, nu_out: nu, converged: false, steps: total });
        };
        let change = (next - nu).abs();
        nu = next;
        if change <= opts.tol * nu.abs() {
            return Ok(ShootResult { v, nu_out: nu, converged: true, steps: total });
        }
    }
    Ok(ShootResult { v, nu_out: nu, converged: false, steps: total })
}

/// Largest boundary slope handled by the inversion.
pub const NU_CAP: f64 = 1e-2;
const V_LO: f64 = 1.5;
const V_HI: f64 = 2.0 - 1e-9;

/// Speed `kappa(nu)` of the killed comparison front with `-F'(0) = nu`.
pub fn kappa_of_nu(f: &Nonlinearity, nu: f64, tol: f64) -> Result<f64> {
    if !(nu > 0.0 && nu < NU_CAP) {
        return domain(format!("nu must lie in (0, {NU_CAP}), got {nu}"));
    }
    if !(tol > 0.0) {
        return domain("tolerance must be positive");
    }
    let saddle = f.saddle().ok_or_else(|| Error::Domain(format!("{f:?} has no saddle")))?;
    let opts = ShootOptions::default();
    // nu(v) decreases in v; failed shots sit on the small-nu side.
    let above = |v: f64| -> Result<(bool, f64)> {
        let r = shoot_separatrix(f, v, saddle, &opts)?;
        Ok(if r.converged { (r.nu_out > nu, r.nu_out) } else { (false, 0.0) })
    };
    let (lo_above, _) = above(V_LO)?;
    if !lo_above {
        return Err(Error::Inversion(format!("nu = {nu:e} exceeds the slope attained at v = {V_LO}")));
    }
    let (hi_above, _) = above(V_HI)?;
    if hi_above {
        return Err(Error::Inversion(format!("nu = {nu:e} is below the slope attained at v = {V_HI}")));
    }
    let (mut lo, mut hi) = (V_LO, V_HI);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let (is_above, nu_mid) = above(mid)?;
        if nu_mid > 0.0 && (nu_mid - nu).abs() <= tol * nu {
            return Ok(mid);
        }
        if is_above {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON {
            return Ok(0.5 * (lo + hi));
        }
    }
    Err(Error::Inversion(format!("bisection for nu = {nu:e} did not settle")))
}

/// Traveling speed of `u_t = u_xx + u(1-u) 1(u >= theta_cut)`.
///
/// Below the cutoff the front is `theta_cut e^{-v xi}`, so the orbit must
/// cross `x = theta_cut` with slope `v theta_cut`; bisection on `v` matches
/// the separatrix slope there.
pub fn cutoff_wave_speed(theta_cut: f64, tol: f64) -> Result<f64> {
    if !(theta_cut > 0.0 && theta_cut < (-2.0f64).exp()) {
        return domain(format!("cutoff level must lie in (0, e^-2), got {theta_cut}"));
    }
    if !(tol > 0.0) {
        return domain("tolerance must be positive");
    }
    let f = Nonlinearity::Cutoff { theta_cut };
    let saddle = f.saddle().expect("cutoff has a saddle");
    let opts = ShootOptions { target: theta_cut, ..ShootOptions::default() };
    let mismatch = |v: f64| -> Result<Option<f64>> {
        let r = shoot_separatrix(&f, v, saddle, &opts)?;
        Ok(r.converged.then(|| r.nu_out / (v * theta_cut) - 1.0))
    };
    let bad = |v: f64| Error::Inversion(format!("separatrix did not reach the cutoff level at v = {v}"));
    let g_lo = mismatch(V_LO)?.ok_or_else(|| bad(V_LO))?;
    let g_hi = mismatch(V_HI)?.ok_or_else(|| bad(V_HI))?;
    if !(g_lo > 0.0 && g_hi < 0.0) {
        return Err(Error::Inversion(format!(
            "cutoff speed not bracketed on [{V_LO}, {V_HI}] (mismatch {g_lo:e}, {g_hi:e})"
        )));
    }
    let (mut lo, mut hi) = (V_LO, V_HI);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let g = mismatch(mid)?.ok_or_else(|| bad(mid))?;
        if g.abs() <= tol {
            return Ok(mid);
        }
        if g > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON {
            return Ok(0.5 * (lo + hi));
        }
    }
    Err(Error::Inversion(format!("cutoff bisection at theta = {theta_cut:e} did not settle")))
}

/// Printed bracket for `kappa(nu)`:
/// `2 - pi^2/(|log nu| - 3 log|log nu| - log alpha(|log nu|^-3) - 2)^2` to `2 - pi^2/(|log nu| + 3)^2`.
pub fn kappa_bounds(f: &Nonlinearity, nu: f64) -> (f64, f64) {
    let l = nu.ln().abs();
    let den = l - 3.0 * l.ln() - alpha_of(f, l.powi(-3)).ln() - 2.0;
    let pi2 = std::f64::consts::PI.powi(2);
    (2.0 - pi2 / (den * den), 2.0 - pi2 / (l + 3.0).powi(2))
}

/// `|v - 2 + pi^2/(log eps^2)^2| |log eps|^3` for a cutoff at `eps^2`.
pub fn cutoff_residual(eps: f64, v: f64) -> f64 {
    let le = eps.ln().abs();
    (v - 2.0 + std::f64::consts::PI.powi(2) / (2.0 * le).powi(2)).abs() * le.powi(3)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaRow {
    pub nu: f64,
    pub kappa: f64,
    pub lower: f64,
    pub upper: f64,
    /// Inside the bracket widened by `slack`.
    pub inside: bool,
}

/// `kappa(nu)` for the Fisher term with its printed bracket.
pub fn kappa_table(nus: &[f64], tol: f64, slack: f64) -> Result<Vec<KappaRow>> {
    let f = Nonlinearity::Fisher;
    nus.iter()
        .map(|&nu| {
            let kappa = kappa_of_nu(&f, nu, tol)?;
            let (lower, upper) = kappa_bounds(&f, nu);
            Ok(KappaRow { nu, kappa, lower, upper, inside: kappa >= lower - slack && kappa <= upper + slack })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffRow {
    pub eps: f64,
    pub theta_cut: f64,
    pub v_cutoff: f64,
    pub leading: f64,
    /// `cutoff_residual(eps, v_cutoff)`.
    pub scaled_residual: f64,
}

/// Cutoff speeds at `theta_cut = eps^2`, with the spread `max/min` of the scaled residuals.
pub fn cutoff_table(eps: &[f64], tol: f64) -> Result<(Vec<CutoffRow>, f64)> {
    let rows: Vec<CutoffRow> = eps
        .iter()
        .map(|&e| {
            let v = cutoff_wave_speed(e * e, tol)?;
            Ok(CutoffRow {
                eps: e,
                theta_cut: e * e,
                v_cutoff: v,
                leading: 2.0 - std::f64::consts::PI.powi(2) / (e * e).ln().powi(2),
                scaled_residual: cutoff_residual(e, v),
            })
        })
        .collect::<Result<_>>()?;
    let hi = rows.iter().map(|r| r.scaled_residual).fold(f64::NEG_INFINITY, f64::max);
    let lo = rows.iter().map(|r| r.scaled_residual).fold(f64::INFINITY, f64::min);
    Ok((rows, hi / lo))
}

/// Speed of the barred comparison front, from the explicit linear pieces:
/// the orbit `x_lin` must reach `x = 1` on the saddle's stable line,
/// `x_lin'(Theta) = -varpi`.
pub fn barred_kappa(nu: f64) -> Result<f64> {
    if !(nu > 0.0 && nu < NU_CAP) {
        return domain(format!("nu must lie in (0, {NU_CAP}), got {nu}"));
    }
    let mismatch = |delta: f64| -> Result<f64> {
        Ok(match theta(nu, delta)? {
            Some(th) => x_lin(th, nu, delta)?.1 + varpi(delta),
            None => -1.0,
        })
    };
    let (mut lo, mut hi) = (1e-9, 1.0);
    if !(mismatch(lo)? > 0.0 && mismatch(hi)? < 0.0) {
        return Err(Error::Inversion(format!("barred speed not bracketed for nu = {nu:e}")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mismatch(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 {
            break;
        }
    }
    Ok(2.0 - 0.5 * (lo + hi))
}

/// Three-piece comparison front for the barred reaction term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveProfile {
    pub v: f64,
    pub delta: f64,
    pub delta_hat: f64,
    pub nu: f64,
    pub theta: f64,
    pub varpi: f64,
    pub lambda: f64,
    /// Coefficient `kappa` of the unstable tail mode `kappa lambda e^{-lambda (Theta + x)}`.
    pub kappa_match: f64,
    /// Coefficient of the stable tail mode.
    pub tail_stable: f64,
    /// `tail_stable + 1 + kappa_match`: zero when the tail fits `2 - (1 + kappa) e^{-varpi (Theta + x)}`.
    pub consistency_residual: f64,
    pub samples: Vec<(f64, f64)>,
}

impl WaveProfile {
    /// `F(x)`.
    pub fn eval(&self, x: f64) -> f64 {
        if x >= 0.0 {
            0.0
        } else if x >= -self.theta {
            x_lin(-x, self.nu, self.delta).map(|p| p.0).unwrap_or(f64::NAN)
        } else {
            let s = self.theta + x;
            2.0 + self.kappa_match * self.lambda * (-self.lambda * s).exp() + self.tail_stable * (-self.varpi * s).exp()
        }
    }

    /// `F'(x)`, one-sided from the left at the breakpoints.
    pub fn derivative(&self, x: f64) -> f64 {
        if x > 0.0 {
            0.0
        } else if x >= -self.theta {
            x_lin(-x, self.nu, self.delta).map(|p| -p.1).unwrap_or(f64::NAN)
        } else {
            let s = self.theta + x;
            -self.kappa_match * self.lambda * self.lambda * (-self.lambda * s).exp()
                - self.varpi * self.tail_stable * (-self.varpi * s).exp()
        }
    }

    /// Leftmost point where the unstable tail mode is still below `1e-6`.
    ///
    /// At `v = kappa(nu)` that mode's coefficient is shooting error, and it
    /// grows like `e^{lambda |Theta + x|}` behind the front.
    pub fn trusted_min(&self) -> f64 {
        let unstable = (self.kappa_match * self.lambda).abs();
        let reach = if unstable > 0.0 { ((1e-6 / unstable).ln() / self.lambda).max(0.0) } else { f64::INFINITY };
        -self.theta - reach.min(self.theta + 20.0)
    }

    /// Re-sample on `[x_min, 0]` at spacing `1/n`.
    pub fn resample(&mut self, n: usize, x_min: f64) {
        let count = ((-x_min) * n as f64).floor() as usize;
        self.samples = (0..=count)
            .rev()
            .map(|k| {
                let x = -(k as f64) / n as f64;
                (x, self.eval(x))
            })
            .collect();
    }
}

/// Assemble `F` from `x_lin` on `[-Theta, 0)` and the saddle modes below.
pub fn build_front_profile(f: &Nonlinearity, nu: f64, v: f64) -> Result<WaveProfile> {
    if *f != Nonlinearity::Barred {
        return Err(Error::Profile("the explicit front profile exists for the barred reaction term only".into()));
    }
    if !(v < 2.0 && nu > 0.0) {
        return domain(format!("profile needs v < 2 and nu > 0, got v={v}, nu={nu}"));
    }
    let delta = 2.0 - v;
    let th = theta(nu, delta)?
        .ok_or_else(|| Error::Profile(format!("x_lin never reaches 1 for nu={nu:e}, v={v}")))?;
    let (vp, lam) = (varpi(delta), lambda(delta));
    let slope = x_lin(th, nu, delta)?.1;
    // 2 + A + B = 1 and lambda A + varpi B = x_lin'(Theta).
    let det = lam - vp;
    if !(det.abs() > 1e-14) {
        return Err(Error::Profile("continuity system is singular".into()));
    }
    let a = (slope + vp) / det;
    let b = -1.0 - a;
    let kappa_match = a / lam;
    let mut p = WaveProfile {
        v,
        delta,
        delta_hat: delta_hat(delta),
        nu,
        theta: th,
        varpi: vp,
        lambda: lam,
        kappa_match,
        tail_stable: b,
        consistency_residual: b + 1.0 + kappa_match,
        samples: Vec::new(),
    };
    let x_min = p.trusted_min();
    p.resample(16, x_min);
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn printed_bracket() {
        let (lo, hi) = kappa_bounds(&Nonlinearity::Fisher, (-20.0f64).exp());
        assert!((lo - 1.96954).abs() < 1e-5 && (hi - 1.98134).abs() < 1e-5, "{lo} {hi}");
        let (lo, hi) = kappa_bounds(&Nonlinearity::Fisher, (-24.0f64).exp());
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((lo - (2.0 - pi2 / 484.0)).abs() < 1e-12 && (hi - (2.0 - pi2 / 729.0)).abs() < 1e-12);
    }

    #[test]
    fn x_lin_basics() {
        assert_eq!(x_lin(0.0, 0.3, 0.1).unwrap(), (0.0, 0.3));
        assert!(x_lin(1.0, 0.3, 0.0).is_err());
        assert!(x_lin(1.0, 0.3, 2.0).is_err());
        let (nu, d) = (0.7, 1e-6);
        for t in [0.1f64, 0.5, 1.0, 2.0] {
            let approx = nu * t * ((1.0 - d / 2.0) * t).exp();
            let x = x_lin(t, nu, d).unwrap().0;
            assert!((x / approx - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn x_lin_solves_linearised_equation() {
        let (nu, d) = (1e-3, 0.05);
        let v = 2.0 - d;
        let h = 1e-5;
        for k in 1..=100 {
            let t = 0.3 * k as f64;
            let (x, xp) = x_lin(t, nu, d).unwrap();
            let xpp = (x_lin(t + h, nu, d).unwrap().1 - x_lin(t - h, nu, d).unwrap().1) / (2.0 * h);
            let scale = x.abs() + xp.abs() + 1e-300;
            assert!((xpp - (v * xp - x)).abs() <= 1e-9 * scale.max(1.0) + 1e-9 * scale, "t = {t}");
        }
    }

    #[test]
    fn saddle_eigen_identities() {
        for d in [0.0, 0.01, 0.1, 0.5] {
            let (w, l) = (varpi(d), lambda(d));
            assert!((w * l - ((1.0 - d / 2.0).powi(2) - (2.0 - delta_hat(d)))).abs() < 1e-14);
            assert!((w + l - (2.0 - d)).abs() < 1e-14);
        }
        assert!((varpi(0.0) - (1.0 - 2f64.sqrt())).abs() < 1e-15);
        assert!((varpi(0.0) + 0.414_213_6).abs() < 1e-7);
        // stable eigenvalue of the barred saddle from the generic linearisation
        assert!((stable_slope(2.0 - 0.1, -1.0) - varpi(0.1)).abs() < 1e-14);
    }

    #[test]
    fn supercritical_speeds_do_not_cross() {
        for v in [2.0, 2.2] {
            let r = shoot_separatrix(&Nonlinearity::Fisher, v, (1.0, -1.0), &ShootOptions::default()).unwrap();
            assert!(!r.converged, "v = {v}: {r:?}");
        }
    }

    #[test]
    fn slope_decreases_with_speed() {
        let s = |v| shoot_separatrix(&Nonlinearity::Fisher, v, (1.0, -1.0), &ShootOptions::default()).unwrap();
        let (a, b, c) = (s(1.90), s(1.95), s(1.99));
        assert!(a.converged && b.converged && c.converged);
        assert!(a.nu_out > b.nu_out && b.nu_out > c.nu_out, "{a:?} {b:?} {c:?}");
    }

    #[test]
    fn barred_shooter_matches_explicit_construction() {
        for nu in [(-10.0f64).exp(), (-16.0f64).exp()] {
            let shot = kappa_of_nu(&Nonlinearity::Barred, nu, 1e-8).unwrap();
            let explicit = barred_kappa(nu).unwrap();
            assert!((shot - explicit).abs() < 1e-8, "{shot} vs {explicit}");
        }
    }

    #[test]
    fn kappa_domain_errors() {
        assert!(kappa_of_nu(&Nonlinearity::Fisher, 0.5, 1e-6).is_err());
        assert!(kappa_of_nu(&Nonlinearity::Fisher, 0.0, 1e-6).is_err());
        assert!(cutoff_wave_speed(0.5, 1e-6).is_err());
    }

    #[test]
    fn profile_continuity_and_limits() {
        let nu = (-20.0f64).exp();
        let v = barred_kappa(nu).unwrap();
        let p = build_front_profile(&Nonlinearity::Barred, nu, v).unwrap();
        assert_eq!(p.eval(0.0), 0.0);
        assert!((p.derivative(-1e-300) + nu).abs() < 1e-8 * nu.max(1e-300) + 1e-20);
        assert!((p.derivative(0.0) + nu).abs() <= 1e-8);
        let th = p.theta;
        let left = p.eval(-th - 1e-12);
        let right = p.eval(-th + 1e-12);
        assert!((left - right).abs() < 1e-8);
        assert!((p.derivative(-th - 1e-12) - p.derivative(-th + 1e-12)).abs() < 1e-8);
        // At the separatrix speed the unstable mode vanishes and F climbs towards the saddle value 2.
        assert!(p.kappa_match.abs() < 1e-6, "{}", p.kappa_match);
        assert!((p.eval(-th - 8.0) - 2.0).abs() < 0.1, "{}", p.eval(-th - 8.0));
        assert!(p.samples.windows(2).all(|w| w[0].1 > w[1].1));
        let ratio = p.theta / nu.ln().abs();
        assert!((0.8..=1.2).contains(&ratio), "{ratio}");
        assert!(build_front_profile(&Nonlinearity::Fisher, nu, v).is_err());
        assert!(build_front_profile(&Nonlinearity::Barred, nu, 2.1).is_err());
    }
}
