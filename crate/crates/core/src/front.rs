//! Front position, level crossings and speed estimates.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spde::FieldState;
use crate::stats::{ols_line, t_half_width, weighted_lstsq};

/// Positions of one run sampled in time, in absolute coordinates.
///
/// `r` is `-inf` once the field has died out; `m_star` is `NaN` where the
/// level was not crossed, with `valid` false.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrontTrace {
    pub times: Vec<f64>,
    pub r: Vec<f64>,
    pub m_star: Vec<f64>,
    pub valid: Vec<bool>,
}

impl FrontTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, t: f64, r: f64, m_star: Option<f64>) {
        self.times.push(t);
        self.r.push(r);
        self.m_star.push(m_star.unwrap_or(f64::NAN));
        self.valid.push(m_star.is_some());
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Record both positions of `state`.
    pub fn observe(&mut self, state: &FieldState, level: f64) {
        self.push(state.t, rightmost_support(state, 0.0), level_crossing(state, level));
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "r", "m_star"])?;
        for i in 0..self.len() {
            out.write_record([
                self.times[i].to_string(),
                self.r[i].to_string(),
                if self.valid[i] { self.m_star[i].to_string() } else { String::new() },
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Largest absolute `x` with `u(x) > tol`, or `-inf`.
pub fn rightmost_support(state: &FieldState, tol: f64) -> f64 {
    match state.u.iter().rposition(|&v| v > tol) {
        Some(i) => state.grid.x(i),
        None => f64::NEG_INFINITY,
    }
}

/// Front-most point where the interpolated field falls through `level`.
pub fn level_crossing(state: &FieldState, level: f64) -> Option<f64> {
    let u = &state.u;
    let hi = u.iter().rposition(|&v| v >= level)?;
    if hi + 1 >= u.len() {
        return None;
    }
    let (a, b) = (u[hi], u[hi + 1]);
    let frac = (a - level) / (a - b);
    Some(state.grid.x(hi) + frac / state.grid.n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrontUse {
    R,
    MStar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpeedMethod {
    OlsSlope,
    EndpointDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedEstimate {
    pub v_hat: f64,
    /// 95% half width.
    pub ci_half_width: f64,
    pub t_window: (f64, f64),
    pub method: SpeedMethod,
    pub points: usize,
}

impl SpeedEstimate {
    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// `max(0.1 * horizon, 20)`.
pub fn default_burn_in(horizon: f64) -> f64 {
    (0.1 * horizon).max(20.0)
}

fn usable(trace: &FrontTrace, burn_in: f64, which: FrontUse) -> (Vec<f64>, Vec<f64>) {
    let mut ts = Vec::new();
    let mut xs = Vec::new();
    for i in 0..trace.len() {
        let t = trace.times[i];
        if t < burn_in {
            continue;
        }
        let x = match which {
            FrontUse::R => trace.r[i],
            FrontUse::MStar if trace.valid[i] => trace.m_star[i],
            FrontUse::MStar => continue,
        };
        if x.is_finite() {
            ts.push(t);
            xs.push(x);
        }
    }
    (ts, xs)
}

/// OLS slope of the chosen position after `burn_in`.
pub fn estimate_speed(trace: &FrontTrace, burn_in: f64, which: FrontUse) -> Result<SpeedEstimate> {
    estimate_speed_with(trace, burn_in, which, SpeedMethod::OlsSlope)
}

pub fn estimate_speed_with(
    trace: &FrontTrace,
    burn_in: f64,
    which: FrontUse,
    method: SpeedMethod,
) -> Result<SpeedEstimate> {
    let (ts, xs) = usable(trace, burn_in, which);
    let k = ts.len();
    if k < 10 {
        return Err(Error::Estimation(format!("{k} usable points after burn-in {burn_in}; need 10")));
    }
    let t_window = (ts[0], ts[k - 1]);
    match method {
        SpeedMethod::OlsSlope => {
            let fit = ols_line(&ts, &xs)?;
            Ok(SpeedEstimate {
                v_hat: fit.slope,
                ci_half_width: t_half_width(fit.slope_se, k - 1, 0.95),
                t_window,
                method,
                points: k,
            })
        }
        SpeedMethod::EndpointDifference => Ok(SpeedEstimate {
            v_hat: (xs[k - 1] - xs[0]) / (ts[k - 1] - ts[0]),
            ci_half_width: 0.0,
            t_window,
            method,
            points: k,
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BramsonFit {
    pub v: f64,
    /// Signed coefficient of `log t`.
    pub c_log: f64,
    pub intercept: f64,
    /// RMS residual.
    pub resid: f64,
}

/// Least squares of `m*(t)` on `(t, log t, 1)`.
pub fn bramson_fit(trace: &FrontTrace, burn_in: f64) -> Result<BramsonFit> {
    let (ts, xs) = usable(trace, burn_in.max(f64::MIN_POSITIVE), FrontUse::MStar);
    let k = ts.len();
    if k < 30 {
        return Err(Error::Estimation(format!("{k} usable points after burn-in; need 30")));
    }
    if ts[k - 1] < 4.0 * ts[0] {
        return Err(Error::Estimation(format!("time span [{}, {}] is under a factor 4", ts[0], ts[k - 1])));
    }
    let design: Vec<Vec<f64>> = ts.iter().map(|&t| vec![t, t.ln(), 1.0]).collect();
    let w = vec![1.0; k];
    let (beta, resid) = weighted_lstsq(&design, &xs, &w).map_err(|e| Error::Estimation(e.to_string()))?;
    let rms = (resid.iter().map(|r| r * r).sum::<f64>() / k as f64).sqrt();
    Ok(BramsonFit { v: beta[0], c_log: beta[1], intercept: beta[2], resid: rms })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(f: impl Fn(f64) -> f64, t0: f64, t1: f64, k: usize) -> FrontTrace {
        let mut tr = FrontTrace::new();
        for i in 0..k {
            let t = t0 + (t1 - t0) * i as f64 / (k - 1) as f64;
            tr.push(t, f(t) + 1.0, Some(f(t)));
        }
        tr
    }

    #[test]
    fn linear_trace() {
        let tr = synthetic(|t| 2.0 * t, 0.0, 100.0, 201);
        let s = estimate_speed(&tr, 20.0, FrontUse::R).unwrap();
        assert!((s.v_hat - 2.0).abs() < 1e-12);
        assert!(s.ci_half_width < 1e-9);
        let e = estimate_speed_with(&tr, 20.0, FrontUse::MStar, SpeedMethod::EndpointDifference).unwrap();
        assert!((e.v_hat - 2.0).abs() < 1e-12);
    }

    #[test]
    fn log_lagged_trace() {
        let tr = synthetic(|t| 2.0 * t - 1.5 * t.ln(), 20.0, 200.0, 400);
        let s = estimate_speed(&tr, 20.0, FrontUse::MStar).unwrap();
        assert!(s.v_hat > 1.95 && s.v_hat < 2.0, "{}", s.v_hat);
    }

    #[test]
    fn bramson_recovers_exact_model() {
        let tr = synthetic(|t| 2.0 * t - 1.5 * t.ln() + 0.3, 20.0, 400.0, 200);
        let b = bramson_fit(&tr, 20.0).unwrap();
        assert!((b.v - 2.0).abs() < 1e-9 && (b.c_log + 1.5).abs() < 1e-8 && (b.intercept - 0.3).abs() < 1e-7);
        assert!(b.resid < 1e-9);
        let flat = synthetic(|t| 1.7 * t + 4.0, 20.0, 400.0, 200);
        assert!(bramson_fit(&flat, 20.0).unwrap().c_log.abs() < 1e-8);
    }

    #[test]
    fn estimation_errors() {
        let short = synthetic(|t| t, 0.0, 10.0, 5);
        assert!(matches!(estimate_speed(&short, 0.0, FrontUse::R), Err(Error::Estimation(_))));
        let narrow = synthetic(|t| t, 20.0, 40.0, 100);
        assert!(matches!(bramson_fit(&narrow, 20.0), Err(Error::Estimation(_))));
    }

    #[test]
    fn shift_and_rescale() {
        let base = synthetic(|t| 1.8 * t + 0.2 * (t / 7.0).sin(), 0.0, 200.0, 300);
        let shifted = synthetic(|t| 1.8 * t + 0.2 * (t / 7.0).sin() + 13.25, 0.0, 200.0, 300);
        let a = estimate_speed(&base, 20.0, FrontUse::MStar).unwrap();
        let b = estimate_speed(&shifted, 20.0, FrontUse::MStar).unwrap();
        assert!((a.v_hat - b.v_hat).abs() < 1e-12);
        let c = 3.0;
        let scaled = synthetic(|t| 1.8 * c * t - 4.0, 0.0, 200.0, 300);
        let s = estimate_speed(&scaled, 20.0, FrontUse::MStar).unwrap();
        assert!((s.v_hat - 1.8 * c).abs() < 1e-12);
    }
}
