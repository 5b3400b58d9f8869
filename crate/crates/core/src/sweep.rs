//! Speed sweeps over the noise amplitude and the correction-law fit.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::front::{default_burn_in, estimate_speed, FrontUse};
use crate::model::{alpha_of, ModelSpec, Nonlinearity, NoiseSpec};
use crate::par::map_indexed;
use crate::rng::replica_seed;
use crate::spde::{init_front_data, run, Boundary, InitProfile, LatticeGrid, RunOptions, StepParams};
use crate::stats::{t_half_width, weighted_lstsq, Estimate};
use crate::wave::{cutoff_wave_speed, kappa_of_nu};

pub const SWEEP_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// `u(1-u)` with Wright-Fisher noise.
    #[default]
    FisherWf,
    /// `u(1-u)` with `sqrt(u)` noise.
    FisherSqrtU,
}

impl Preset {
    pub fn model(self, eps: f64) -> Result<ModelSpec> {
        match self {
            Preset::FisherWf => ModelSpec::new(Nonlinearity::Fisher, NoiseSpec::wright_fisher(eps)),
            Preset::FisherSqrtU => ModelSpec::new(Nonlinearity::Fisher, NoiseSpec::sqrt_u(eps)),
        }
    }
}

fn schema() -> u32 {
    SWEEP_SCHEMA_VERSION
}
fn d_n() -> usize {
    8
}
fn d_window() -> f64 {
    60.0
}
fn d_horizon() -> f64 {
    150.0
}
fn d_replicas() -> usize {
    16
}
fn d_record() -> f64 {
    0.5
}
fn d_front() -> FrontUse {
    FrontUse::MStar
}
fn d_true() -> bool {
    true
}

/// Sweep configuration as read from JSON; omitted fields take the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "schema")]
    pub schema_version: u32,
    #[serde(default)]
    pub preset: Preset,
    pub eps: Vec<f64>,
    #[serde(default = "d_n")]
    pub n: usize,
    /// Window width in space units.
    #[serde(default = "d_window")]
    pub window: f64,
    #[serde(default = "d_horizon")]
    pub horizon: f64,
    #[serde(default = "d_replicas")]
    pub replicas: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// `None` means `max(0.1 horizon, 20)`.
    #[serde(default)]
    pub burn_in: Option<f64>,
    #[serde(default = "d_record")]
    pub record_every: f64,
    #[serde(default = "d_front")]
    pub front: FrontUse,
    /// Attach comparison-front speeds to each row.
    #[serde(default = "d_true")]
    pub references: bool,
}

impl SweepConfig {
    pub fn new(eps: Vec<f64>) -> Self {
        Self {
            schema_version: SWEEP_SCHEMA_VERSION,
            preset: Preset::FisherWf,
            eps,
            n: d_n(),
            window: d_window(),
            horizon: d_horizon(),
            replicas: d_replicas(),
            seed: 0,
            out_dir: None,
            burn_in: None,
            record_every: d_record(),
            front: d_front(),
            references: true,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("sweep config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.schema_version != SWEEP_SCHEMA_VERSION {
            return bad(format!("schema_version {} is not supported (expected {SWEEP_SCHEMA_VERSION})", self.schema_version));
        }
        if self.eps.is_empty() {
            return bad("the eps list is empty".into());
        }
        if let Some(e) = self.eps.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
            return bad(format!("eps values must lie in (0,1), got {e}"));
        }
        if self.replicas < 2 {
            return bad(format!("at least 2 replicas per eps are needed, got {}", self.replicas));
        }
        if self.n < 4 {
            return bad(format!("lattice n must be at least 4, got {}", self.n));
        }
        if !(self.window >= 40.0) {
            return bad(format!("window must be at least 40 units, got {}", self.window));
        }
        if !(self.horizon > 0.0 && self.record_every > 0.0) {
            return bad("horizon and record_every must be positive".into());
        }
        if self.burn_in() >= self.horizon {
            return bad(format!("burn-in {} leaves nothing of horizon {}", self.burn_in(), self.horizon));
        }
        Ok(())
    }

    pub fn burn_in(&self) -> f64 {
        self.burn_in.unwrap_or_else(|| default_burn_in(self.horizon))
    }

    /// Seed of replica `r` at eps index `k`.
    pub fn replica_seed(&self, k: usize, r: usize) -> u64 {
        replica_seed(self.seed, k as u64, r as u64)
    }
}

/// Leading correction `pi^2 / (log eps^2)^2`.
pub fn bd_leading(eps: f64) -> f64 {
    PI * PI / (eps * eps).ln().powi(2)
}

/// Lower and upper speed bounds of the main theorem, as printed, with `v0 = 2`.
pub fn bd_band(f: &Nonlinearity, eps: f64) -> (f64, f64) {
    let le = eps.ln().abs();
    let l2 = 2.0 * le;
    let ll = le.ln();
    let alpha = alpha_of(f, le.powi(-3));
    let base = 2.0 - PI * PI / (l2 * l2);
    let lo = base - 2.0 * PI * PI * (9.0 * ll - alpha.ln()) / l2.powi(3);
    let hi = base + 8.0 * PI * PI * ll / l2.powi(3);
    (lo, hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaOutcome {
    pub replica: usize,
    pub seed: u64,
    pub slope: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps: f64,
    pub v_hat: f64,
    /// 95% half width of the mean of the per-replica slopes.
    pub ci: f64,
    pub se: f64,
    pub replicas: usize,
    pub failed: usize,
    /// `kappa(nu)` at `nu = eps^2`, `eps^2/|log eps|` and `eps^2 |log eps|`.
    pub kappa_ref: Option<f64>,
    pub kappa_low: Option<f64>,
    pub kappa_high: Option<f64>,
    pub cutoff_speed: Option<f64>,
    pub bd_leading: f64,
    pub bd_band_lo: f64,
    pub bd_band_hi: f64,
    pub flags: Vec<String>,
    pub outcomes: Vec<ReplicaOutcome>,
}

impl SweepRow {
    pub fn estimate(&self) -> Estimate {
        Estimate { value: self.v_hat, se: self.se, samples: self.replicas }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionFit {
    pub points: usize,
    /// `2 - v ~ a / (log eps^2)^2 + b log|log eps| / |log eps|^3`.
    pub a: f64,
    pub b: f64,
    pub residuals: Vec<f64>,
    pub rms: f64,
    /// `2 - v ~ a / (log eps^2)^2` alone.
    pub single_a: f64,
    pub single_residuals: Vec<f64>,
    pub single_rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: SweepConfig,
    pub rows: Vec<SweepRow>,
    pub fit: Option<CorrectionFit>,
    pub fit_error: Option<String>,
    pub monotone: bool,
}

fn replica_slope(cfg: &SweepConfig, model: &ModelSpec, seed: u64) -> Result<f64> {
    let x_min = -(cfg.window / 4.0).round();
    let grid = LatticeGrid::new(cfg.n, x_min, cfg.window, Boundary::WholeLineWindow { theta_left: 1.0 })?;
    let state = init_front_data(grid, &InitProfile::Step { x0: 0.0 })?;
    let p = StepParams::for_grid(cfg.n, seed);
    let opts = RunOptions { record_every: cfg.record_every, ..RunOptions::new(cfg.horizon) };
    let rec = run(state, model, &p, &opts, &mut [])?;
    Ok(estimate_speed(&rec.trace, cfg.burn_in(), cfg.front)?.v_hat)
}

/// Replicated SPDE runs at every eps, with reference curves attached.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let models: Vec<ModelSpec> = cfg.eps.iter().map(|&e| cfg.preset.model(e)).collect::<Result<_>>()?;
    let reps = cfg.replicas;
    let tasks = map_indexed(cfg.eps.len() * reps, |i| {
        let (k, r) = (i / reps, i % reps);
        let seed = cfg.replica_seed(k, r);
        match replica_slope(cfg, &models[k], seed) {
            Ok(s) => ReplicaOutcome { replica: r, seed, slope: Some(s), error: None },
            Err(e) => ReplicaOutcome { replica: r, seed, slope: None, error: Some(e.to_string()) },
        }
    });
    let refs = if cfg.references {
        map_indexed(cfg.eps.len(), |k| {
            let e2 = cfg.eps[k].powi(2);
            let le = cfg.eps[k].ln().abs();
            let kap = |nu: f64| kappa_of_nu(&Nonlinearity::Fisher, nu, 1e-9).ok();
            (kap(e2), kap(e2 / le), kap(e2 * le), cutoff_wave_speed(e2, 1e-9).ok())
        })
    } else {
        vec![(None, None, None, None); cfg.eps.len()]
    };

    let mut rows = Vec::with_capacity(cfg.eps.len());
    for (k, chunk) in tasks.chunks(reps).enumerate() {
        let eps = cfg.eps[k];
        let slopes: Vec<f64> = chunk.iter().filter_map(|o| o.slope).collect();
        let failed = reps - slopes.len();
        if slopes.is_empty() {
            let why = chunk[0].error.clone().unwrap_or_default();
            return Err(Error::Estimation(format!("every replica failed at eps = {eps}: {why}")));
        }
        let est = Estimate::from_samples(&slopes);
        let ci = t_half_width(est.se, slopes.len(), 0.95);
        let (lo, hi) = bd_band(&Nonlinearity::Fisher, eps);
        let mut flags = Vec::new();
        if failed > 0 {
            flags.push(format!("failed-replicas:{failed}"));
        }
        if slopes.len() < 2 {
            flags.push("no-ci".to_string());
        }
        if !(est.value + ci < 2.0) {
            flags.push("not-below-2".to_string());
        }
        let (kappa_ref, kappa_low, kappa_high, cutoff_speed) = refs[k];
        if cfg.references && kappa_ref.is_none() {
            flags.push("kappa-out-of-range".to_string());
        }
        rows.push(SweepRow {
            eps,
            v_hat: est.value,
            ci,
            se: est.se,
            replicas: slopes.len(),
            failed,
            kappa_ref,
            kappa_low,
            kappa_high,
            cutoff_speed,
            bd_leading: 2.0 - bd_leading(eps),
            bd_band_lo: lo,
            bd_band_hi: hi,
            flags,
            outcomes: chunk.to_vec(),
        });
    }
    let (fit, fit_error) = match fit_correction_law(&rows) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let monotone = is_monotone(&rows);
    Ok(SweepResult { config: cfg.clone(), rows, fit, fit_error, monotone })
}

/// `v_hat` nonincreasing in eps, up to the combined half widths.
pub fn is_monotone(rows: &[SweepRow]) -> bool {
    for a in rows {
        for b in rows {
            if a.eps < b.eps && a.v_hat < b.v_hat - a.ci.hypot(b.ci) {
                return false;
            }
        }
    }
    true
}

/// Trend properties of a finished sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendChecks {
    /// Every `v_hat + ci < 2`.
    pub below_two: bool,
    pub monotone: bool,
    /// Single-basis coefficient inside `[0.3 pi^2, 3 pi^2]`; `None` without a fit.
    pub fit_in_range: Option<bool>,
    /// Every `2 - v_hat > 0.5 pi^2 / (log eps^2)^2`.
    pub above_half_leading: bool,
    pub notes: Vec<String>,
}

pub fn trend_checks(result: &SweepResult) -> TrendChecks {
    let mut notes = Vec::new();
    let mut below_two = true;
    let mut above_half_leading = true;
    for r in &result.rows {
        if !(r.v_hat + r.ci < 2.0) {
            below_two = false;
            notes.push(format!("eps {:.5}: v_hat {:.5} + ci {:.5} is not below 2", r.eps, r.v_hat, r.ci));
        }
        let floor = 0.5 * bd_leading(r.eps);
        if !(2.0 - r.v_hat > floor) {
            above_half_leading = false;
            notes.push(format!("eps {:.5}: deficit {:.5} <= {:.5}", r.eps, 2.0 - r.v_hat, floor));
        }
    }
    let pi2 = PI * PI;
    let fit_in_range = result.fit.as_ref().map(|f| f.single_a >= 0.3 * pi2 && f.single_a <= 3.0 * pi2);
    if fit_in_range == Some(false) {
        notes.push(format!("single-basis A = {:.4}", result.fit.as_ref().unwrap().single_a));
    }
    TrendChecks { below_two, monotone: is_monotone(&result.rows), fit_in_range, above_half_leading, notes }
}

/// Weighted fit of `2 - v_hat` on the two correction terms, plus the leading term alone.
///
/// Weights are `1/se^2` when every row has a positive finite standard error, uniform otherwise.
pub fn fit_correction_law(rows: &[SweepRow]) -> Result<CorrectionFit> {
    let eps: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    let deficit: Vec<f64> = rows.iter().map(|r| 2.0 - r.v_hat).collect();
    let se: Vec<f64> = rows.iter().map(|r| r.se).collect();
    fit_correction_points(&eps, &deficit, &se)
}

pub fn fit_correction_points(eps: &[f64], deficit: &[f64], se: &[f64]) -> Result<CorrectionFit> {
    let k = eps.len();
    if k < 4 || deficit.len() != k || se.len() != k {
        return Err(Error::Fit(format!("need at least 4 matching points, got {k}")));
    }
    let w: Vec<f64> = if se.iter().all(|s| s.is_finite() && *s > 0.0) {
        se.iter().map(|s| 1.0 / (s * s)).collect()
    } else {
        vec![1.0; k]
    };
    let basis: Vec<(f64, f64)> = eps
        .iter()
        .map(|&e| {
            let le = e.ln().abs();
            (1.0 / (2.0 * le).powi(2), le.ln() / le.powi(3))
        })
        .collect();
    let two: Vec<Vec<f64>> = basis.iter().map(|&(p, q)| vec![p, q]).collect();
    let one: Vec<Vec<f64>> = basis.iter().map(|&(p, _)| vec![p]).collect();
    let (beta, residuals) = weighted_lstsq(&two, deficit, &w).map_err(|e| Error::Fit(e.to_string()))?;
    let (beta1, single_residuals) = weighted_lstsq(&one, deficit, &w).map_err(|e| Error::Fit(e.to_string()))?;
    if beta.iter().chain(&beta1).any(|b| !b.is_finite()) {
        return Err(Error::Fit("degenerate design".into()));
    }
    let rms = |r: &[f64]| (r.iter().map(|x| x * x).sum::<f64>() / r.len() as f64).sqrt();
    Ok(CorrectionFit {
        points: k,
        a: beta[0],
        b: beta[1],
        rms: rms(&residuals),
        residuals,
        single_a: beta1[0],
        single_rms: rms(&single_residuals),
        single_residuals,
    })
}

impl SweepResult {
    /// `sweep.csv`, `replicas.csv`, `fit.json` and `report.json` under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut w = csv::Writer::from_path(dir.join("sweep.csv"))?;
        w.write_record(["eps", "v_hat", "ci", "kappa_ref", "bd_band_lo", "bd_band_hi", "flags"])?;
        for r in &self.rows {
            w.write_record([
                r.eps.to_string(),
                r.v_hat.to_string(),
                r.ci.to_string(),
                opt(r.kappa_ref),
                r.bd_band_lo.to_string(),
                r.bd_band_hi.to_string(),
                r.flags.join(";"),
            ])?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join("replicas.csv"))?;
        w.write_record(["eps", "replica", "seed", "slope", "error"])?;
        for r in &self.rows {
            for o in &r.outcomes {
                w.write_record([
                    r.eps.to_string(),
                    o.replica.to_string(),
                    o.seed.to_string(),
                    opt(o.slope),
                    o.error.clone().unwrap_or_default(),
                ])?;
            }
        }
        w.flush()?;
        #[derive(Serialize)]
        struct FitFile<'a> {
            fit: &'a Option<CorrectionFit>,
            error: &'a Option<String>,
        }
        std::fs::write(
            dir.join("fit.json"),
            serde_json::to_string_pretty(&FitFile { fit: &self.fit, error: &self.fit_error })?,
        )?;
        std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
