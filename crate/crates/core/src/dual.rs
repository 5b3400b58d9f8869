//! Branching-coalescing random walks dual to the Wright-Fisher KPP lattice.
//!
//! Walkers jump to each neighbour at rate `n^2`, split at rate 1, and each
//! co-located pair merges at rate `c_coal eps^2 n`. For the lattice system
//! with `f = sigma^2 = u(1-u)` the exact dual constant is `c_coal = 1`.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, Nonlinearity, NoiseKind};
use crate::par::map_indexed;
use crate::rng::{replica_rng, replica_seed};
use crate::spde::{run, Boundary, FieldState, LatticeGrid, RunOptions, StepParams};
use crate::stats::Estimate;

/// Sorted `(site, count)` pairs, counts positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub sites: Vec<(i64, u64)>,
    pub t: f64,
    pub eps2: f64,
    pub n: usize,
    pub c_coal: f64,
}

impl DualState {
    /// Walkers at the lattice points nearest `positions`.
    pub fn new(positions: &[f64], eps2: f64, n: usize) -> Result<Self> {
        if n == 0 || !(eps2 >= 0.0) {
            return Err(Error::Config(format!("need n >= 1 and eps^2 >= 0, got n={n}, eps^2={eps2}")));
        }
        let mut ks: Vec<i64> = positions.iter().map(|x| (x * n as f64).round() as i64).collect();
        ks.sort_unstable();
        let mut sites: Vec<(i64, u64)> = Vec::new();
        for k in ks {
            match sites.last_mut() {
                Some((s, c)) if *s == k => *c += 1,
                _ => sites.push((k, 1)),
            }
        }
        Ok(Self { sites, t: 0.0, eps2, n, c_coal: 1.0 })
    }

    pub fn with_c_coal(mut self, c: f64) -> Self {
        self.c_coal = c;
        self
    }

    pub fn count(&self) -> u64 {
        self.sites.iter().map(|s| s.1).sum()
    }

    pub fn rightmost(&self) -> Option<f64> {
        self.sites.last().map(|s| s.0 as f64 / self.n as f64)
    }

    pub fn leftmost(&self) -> Option<f64> {
        self.sites.first().map(|s| s.0 as f64 / self.n as f64)
    }

    pub fn positions(&self) -> Vec<f64> {
        self.sites
            .iter()
            .flat_map(|&(k, c)| std::iter::repeat(k as f64 / self.n as f64).take(c as usize))
            .collect()
    }
}

/// Event counts of one step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DualStepReport {
    pub branched: u64,
    pub coalesced: u64,
}

fn binomial(rng: &mut ChaCha8Rng, k: u64, p: f64) -> u64 {
    if k == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return k;
    }
    if k <= 16 {
        (0..k).filter(|_| rng.gen::<f64>() < p).count() as u64
    } else {
        Binomial::new(k, p).expect("valid binomial").sample(rng)
    }
}

fn merge_add(a: &[(i64, u64)], b: &[(i64, u64)], out: &mut Vec<(i64, u64)>) {
    out.clear();
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let take_a = j >= b.len() || (i < a.len() && a[i].0 < b[j].0);
        let take_b = i >= a.len() || (j < b.len() && b[j].0 < a[i].0);
        let (k, c) = if take_a {
            i += 1;
            a[i - 1]
        } else if take_b {
            j += 1;
            b[j - 1]
        } else {
            i += 1;
            j += 1;
            (a[i - 1].0, a[i - 1].1 + b[j - 1].1)
        };
        if c > 0 {
            out.push((k, c));
        }
    }
}

/// Move, then branch, then coalesce.
pub fn dual_step(state: &mut DualState, dt: f64, rng: &mut ChaCha8Rng) -> Result<DualStepReport> {
    let nf = state.n as f64;
    let guard = (1.0 / (8.0 * nf * nf)).min(0.1);
    if !(dt > 0.0 && dt <= guard * (1.0 + 1e-12)) {
        return Err(Error::Config(format!("dual step dt = {dt} outside (0, {guard}]")));
    }
    let mut report = DualStepReport::default();
    if state.sites.is_empty() {
        state.t += dt;
        return Ok(report);
    }
    let p = nf * nf * dt;
    let mut left = Vec::with_capacity(state.sites.len());
    let mut stay = Vec::with_capacity(state.sites.len());
    let mut right = Vec::with_capacity(state.sites.len());
    for &(k, c) in &state.sites {
        let l = binomial(rng, c, p);
        let r = binomial(rng, c - l, p / (1.0 - p));
        left.push((k - 1, l));
        right.push((k + 1, r));
        stay.push((k, c - l - r));
    }
    let mut tmp = Vec::with_capacity(2 * state.sites.len());
    merge_add(&left, &stay, &mut tmp);
    merge_add(&tmp, &right, &mut state.sites);
    let q = state.c_coal * state.eps2 * nf * dt;
    for s in state.sites.iter_mut() {
        let b = binomial(rng, s.1, dt);
        s.1 += b;
        report.branched += b;
        if s.1 >= 2 && q > 0.0 {
            let pairs = s.1 * (s.1 - 1) / 2;
            let m = binomial(rng, pairs, q.min(1.0)).min(s.1 - 1);
            s.1 -= m;
            report.coalesced += m;
        }
    }
    state.t += dt;
    Ok(report)
}

pub fn default_dual_dt(n: usize) -> f64 {
    (1.0 / (8.0 * (n * n) as f64)).min(0.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualRunStats {
    pub replica: usize,
    pub seed: u64,
    pub times: Vec<f64>,
    pub counts: Vec<u64>,
    /// `NaN` when empty.
    pub r: Vec<f64>,
    pub l: Vec<f64>,
    /// Set when the population cap stopped the run early.
    pub capped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualRunConfig {
    pub initial: Vec<f64>,
    pub eps2: f64,
    pub n: usize,
    pub horizon: f64,
    pub replicas: usize,
    pub seed: u64,
    pub c_coal: f64,
    pub record_every: f64,
    pub cap: u64,
}

impl DualRunConfig {
    pub fn new(initial: Vec<f64>, eps2: f64, n: usize, horizon: f64, replicas: usize, seed: u64) -> Self {
        Self { initial, eps2, n, horizon, replicas, seed, c_coal: 1.0, record_every: 0.5, cap: POPULATION_CAP }
    }
}

pub const POPULATION_CAP: u64 = 1_000_000;
const DUAL_TAG: u64 = 0xd0a1;

fn run_one(cfg: &DualRunConfig, replica: usize) -> Result<DualRunStats> {
    let mut rng = replica_rng(cfg.seed, DUAL_TAG, replica as u64);
    let mut state = DualState::new(&cfg.initial, cfg.eps2, cfg.n)?.with_c_coal(cfg.c_coal);
    let dt = default_dual_dt(cfg.n);
    let total = (cfg.horizon / dt).round() as u64;
    let stride = ((cfg.record_every / dt).round() as u64).max(1);
    let mut out = DualRunStats {
        replica,
        seed: replica_seed(cfg.seed, DUAL_TAG, replica as u64),
        times: Vec::new(),
        counts: Vec::new(),
        r: Vec::new(),
        l: Vec::new(),
        capped: false,
    };
    let record = |s: &DualState, out: &mut DualRunStats| {
        out.times.push(s.t);
        out.counts.push(s.count());
        out.r.push(s.rightmost().unwrap_or(f64::NAN));
        out.l.push(s.leftmost().unwrap_or(f64::NAN));
    };
    record(&state, &mut out);
    for k in 1..=total {
        dual_step(&mut state, dt, &mut rng)?;
        if state.count() > cfg.cap {
            out.capped = true;
            record(&state, &mut out);
            break;
        }
        if k % stride == 0 || k == total {
            record(&state, &mut out);
        }
    }
    Ok(out)
}

/// Independent replicas, returned in replica order.
pub fn run_dual(cfg: &DualRunConfig) -> Result<Vec<DualRunStats>> {
    if cfg.eps2 == 0.0 && (cfg.initial.len() as f64) * cfg.horizon.exp() > 1e6 {
        return Err(Error::Config("expected Yule population exceeds 1e6; shorten the horizon".into()));
    }
    map_indexed(cfg.replicas, |i| run_one(cfg, i)).into_iter().collect()
}

/// CSV with columns `t, N, R, L, replica_id`.
pub fn write_dual_csv<W: Write>(runs: &[DualRunStats], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "N", "R", "L", "replica_id"])?;
    for run in runs {
        for i in 0..run.times.len() {
            out.write_record([
                run.times[i].to_string(),
                run.counts[i].to_string(),
                run.r[i].to_string(),
                run.l[i].to_string(),
                run.replica.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityConfig {
    pub x_eval: f64,
    pub t: f64,
    pub eps: f64,
    pub n: usize,
    pub replicas_pde: usize,
    pub replicas_dual: usize,
    pub seed: u64,
    pub c_coal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityResult {
    pub config: DualityConfig,
    /// `E[1 - u(t, x_eval)]` with `u_0 = 1(x <= 0)`.
    pub lhs: Estimate,
    /// `P(all dual walkers started at x_eval are > 0 at t)`.
    pub rhs: Estimate,
    pub c_coal: f64,
    pub agrees_3se: bool,
}

impl DualityResult {
    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

const PDE_TAG: u64 = 0x1d5e;
const RHS_TAG: u64 = 0x2d5e;

fn require_dual_pair(model: &ModelSpec) -> Result<()> {
    if model.f != Nonlinearity::Fisher || model.noise.kind != NoiseKind::WrightFisher {
        return Err(Error::Config("the duality holds for f = sigma^2 = u(1-u) only".into()));
    }
    Ok(())
}

/// `E[1 - u(t, x_eval)]` by SPDE Monte Carlo.
pub fn duality_lhs(model: &ModelSpec, cfg: &DualityConfig) -> Result<Estimate> {
    require_dual_pair(model)?;
    let heaviside = |x: f64| if x <= 0.0 { 1.0 } else { 0.0 };
    if cfg.t == 0.0 {
        return Ok(Estimate::exact(1.0 - heaviside(cfg.x_eval)));
    }
    let model = model.with_epsilon(cfg.eps);
    let n = cfg.n;
    let reach = 10.0 + 4.0 * cfg.t;
    let x_min = -(reach.ceil());
    let width = (cfg.x_eval.max(0.0) + reach).ceil() - x_min;
    let samples: Vec<Result<f64>> = map_indexed(cfg.replicas_pde, |i| {
        let grid = LatticeGrid::new(n, x_min, width, Boundary::WholeLineWindow { theta_left: 1.0 })?;
        let state = FieldState::from_fn(grid, heaviside)?;
        let p = StepParams::for_grid(n, replica_seed(cfg.seed, PDE_TAG, i as u64));
        let opts = RunOptions {
            record_every: cfg.t,
            shift_window: false,
            ..RunOptions::new(cfg.t)
        };
        let rec = run(state, &model, &p, &opts, &mut [])?;
        let fin = rec.final_state.expect("run returns its final state");
        Ok(1.0 - fin.value_at(cfg.x_eval))
    });
    let xs: Vec<f64> = samples.into_iter().collect::<Result<_>>()?;
    Ok(Estimate::from_samples(&xs))
}

/// `P(all walkers > 0)` for one walker started at `x_eval`.
pub fn duality_rhs(cfg: &DualityConfig) -> Result<Estimate> {
    let n = cfg.n;
    let dt = default_dual_dt(n);
    let total = (cfg.t / dt).round() as u64;
    let hits: Vec<Result<bool>> = map_indexed(cfg.replicas_dual, |i| {
        let mut rng = replica_rng(cfg.seed, RHS_TAG, i as u64);
        let mut s = DualState::new(&[cfg.x_eval], cfg.eps * cfg.eps, n)?.with_c_coal(cfg.c_coal);
        for _ in 0..total {
            dual_step(&mut s, dt, &mut rng)?;
        }
        Ok(s.sites.first().map(|&(k, _)| k > 0).unwrap_or(true))
    });
    let hits: Vec<bool> = hits.into_iter().collect::<Result<_>>()?;
    Ok(Estimate::proportion(hits.iter().filter(|&&h| h).count(), hits.len()))
}

pub fn duality_check(model: &ModelSpec, cfg: &DualityConfig) -> Result<DualityResult> {
    let lhs = duality_lhs(model, cfg)?;
    let rhs = if cfg.t == 0.0 {
        Estimate::exact(if cfg.x_eval > 0.0 { 1.0 } else { 0.0 })
    } else {
        duality_rhs(cfg)?
    };
    Ok(DualityResult { config: cfg.clone(), lhs, rhs, c_coal: cfg.c_coal, agrees_3se: lhs.agrees_with(&rhs, 3.0, 0.0) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub reference: DualityConfig,
    pub lhs: Estimate,
    /// `(c, rhs(c))` over the candidate grid.
    pub scan: Vec<(f64, Estimate)>,
    pub c_coal: f64,
}

/// Pick the candidate `c_coal` whose dual estimate is closest to the SPDE side.
///
/// All candidates share the dual seed, so the comparison uses common random numbers.
pub fn calibrate_c_coal(model: &ModelSpec, reference: &DualityConfig, candidates: &[f64]) -> Result<Calibration> {
    if candidates.is_empty() {
        return Err(Error::Config("no calibration candidates".into()));
    }
    let lhs = duality_lhs(model, reference)?;
    let mut scan = Vec::with_capacity(candidates.len());
    for &c in candidates {
        let cfg = DualityConfig { c_coal: c, ..reference.clone() };
        scan.push((c, duality_rhs(&cfg)?));
    }
    let best = scan
        .iter()
        .min_by(|a, b| (a.1.value - lhs.value).abs().total_cmp(&(b.1.value - lhs.value).abs()))
        .map(|s| s.0)
        .expect("non-empty scan");
    Ok(Calibration { reference: reference.clone(), lhs, scan, c_coal: best })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_bookkeeping() {
        let s = DualState::new(&[0.5, -1.0, 0.5, 0.0], 0.1, 4).unwrap();
        assert_eq!(s.sites, vec![(-4, 1), (0, 1), (2, 2)]);
        assert_eq!(s.count(), 4);
        assert_eq!(s.rightmost(), Some(0.5));
        assert_eq!(s.leftmost(), Some(-1.0));
    }

    #[test]
    fn empty_is_absorbing() {
        let mut s = DualState::new(&[], 0.1, 8).unwrap();
        let mut rng = replica_rng(1, 2, 3);
        for _ in 0..100 {
            assert_eq!(dual_step(&mut s, default_dual_dt(8), &mut rng).unwrap(), DualStepReport::default());
        }
        assert_eq!(s.count(), 0);
    }

    #[test]
    fn count_changes_by_events() {
        let mut s = DualState::new(&[0.0; 50], 4.0, 8).unwrap();
        let mut rng = replica_rng(5, 6, 7);
        for _ in 0..2000 {
            let before = s.count();
            let r = dual_step(&mut s, default_dual_dt(8), &mut rng).unwrap();
            assert_eq!(s.count() + r.coalesced, before + r.branched);
            assert!(s.sites.windows(2).all(|w| w[0].0 < w[1].0) && s.sites.iter().all(|x| x.1 > 0));
        }
    }

    #[test]
    fn step_guard() {
        let mut s = DualState::new(&[0.0], 0.1, 8).unwrap();
        let mut rng = replica_rng(1, 1, 1);
        assert!(dual_step(&mut s, 0.01, &mut rng).is_err());
    }

    #[test]
    fn duality_at_time_zero() {
        let model = ModelSpec::fisher_wright_fisher(0.5);
        for (x, want) in [(1.0, 1.0), (-1.0, 0.0), (0.0, 0.0), (0.25, 1.0)] {
            let cfg = DualityConfig {
                x_eval: x,
                t: 0.0,
                eps: 0.5,
                n: 16,
                replicas_pde: 10,
                replicas_dual: 10,
                seed: 1,
                c_coal: 1.0,
            };
            let r = duality_check(&model, &cfg).unwrap();
            assert_eq!((r.lhs.value, r.rhs.value), (want, want));
        }
    }
}
