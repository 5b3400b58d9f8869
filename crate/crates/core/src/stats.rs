//! Small statistics helpers shared by the Monte Carlo modules.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, se: 0.0, samples: 0 }
    }

    /// Sample mean and standard error of the mean.
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { value: f64::NAN, se: f64::NAN, samples: 0 };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            f64::INFINITY
        };
        Self { value: mean, se, samples: n }
    }

    /// Fraction of successes with the binomial standard error.
    pub fn proportion(successes: usize, trials: usize) -> Self {
        let p = successes as f64 / trials as f64;
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        Self { value: p, se, samples: trials }
    }

    /// `|self - other| <= k * sqrt(se1^2 + se2^2) + slack`.
    pub fn agrees_with(&self, other: &Estimate, k: f64, slack: f64) -> bool {
        (self.value - other.value).abs() <= k * self.se.hypot(other.se) + slack
    }
}

/// Two-sided Student-t half width for a mean with `n` samples.
pub fn t_half_width(se: f64, n: usize, level: f64) -> f64 {
    if n < 2 {
        return f64::INFINITY;
    }
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("valid dof");
    t.inverse_cdf(0.5 + level / 2.0) * se
}

/// Ordinary least squares line through `(x, y)`.
#[derive(Debug, Clone, Copy)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
}

pub fn ols_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    let n = x.len();
    if n != y.len() || n < 3 {
        return Err(Error::Estimation(format!("need at least 3 paired points, got {n}")));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|xi| (xi - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::Estimation("degenerate abscissae".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(xi, yi)| (xi - mx) * (yi - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(xi, yi)| (yi - intercept - slope * xi).powi(2)).sum();
    let slope_se = (rss / (nf - 2.0) / sxx).sqrt();
    Ok(LineFit { slope, intercept, slope_se })
}

/// Weighted least squares `y ~ X beta`; returns `(beta, residuals)`.
///
/// Columns are rescaled before the SVD solve; a relative singular value below
/// `1e-12` is reported as a degenerate design.
pub fn weighted_lstsq(design: &[Vec<f64>], y: &[f64], w: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = y.len();
    let p = design.first().map(|r| r.len()).unwrap_or(0);
    if n < p || p == 0 || design.len() != n || w.len() != n {
        return Err(Error::Fit(format!("{n} observations for {p} parameters")));
    }
    let scale: Vec<f64> = (0..p)
        .map(|j| design.iter().map(|r| r[j].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE))
        .collect();
    let a = DMatrix::from_fn(n, p, |i, j| w[i].sqrt() * design[i][j] / scale[j]);
    let b = DVector::from_fn(n, |i, _| w[i].sqrt() * y[i]);
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-12 * smax) {
        return Err(Error::Fit("degenerate design matrix".into()));
    }
    let sol = svd.solve(&b, 0.0).map_err(|e| Error::Fit(e.to_string()))?;
    let beta: Vec<f64> = (0..p).map(|j| sol[j] / scale[j]).collect();
    let resid = (0..n)
        .map(|i| y[i] - design[i].iter().zip(&beta).map(|(x, b)| x * b).sum::<f64>())
        .collect();
    Ok((beta, resid))
}
