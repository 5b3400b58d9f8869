//! Explicit Euler-Maruyama for the lattice system
//!
//! `du_i = [n^2 (u_{i+1} - 2u_i + u_{i-1}) + f(u_i)] dt + n^{1/2} eps sigma(u_i) dB_i`
//!
//! on a window that follows the front. Site `i` of the window sits at the
//! absolute lattice index `origin + i`, i.e. at `x = (origin + i) / n`, and
//! the Gaussian for a site is keyed by that absolute index.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::front::{level_crossing, FrontTrace};
use crate::model::ModelSpec;
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::rng::{cell_uniforms, normal_at, normal_quantile};
use crate::wave::WaveProfile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Boundary {
    /// Leftmost site pinned at `theta_left`; zero beyond the right edge.
    WholeLineWindow { theta_left: f64 },
    /// Killed on `x >= v t`; reflecting at the left edge.
    DirichletRight { v: f64 },
    /// Killed on `|x| >= half_width + v t`.
    DirichletTwoSided { v: f64, half_width: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeGrid {
    pub n: usize,
    /// Absolute lattice index of window site 0.
    pub origin: i64,
    pub sites: usize,
    pub boundary: Boundary,
    /// Origin at construction, for the cumulative shift.
    pub origin0: i64,
}

fn lattice_count(x: f64, n: usize, what: &str) -> Result<i64> {
    let k = x * n as f64;
    if (k - k.round()).abs() > 1e-9 * k.abs().max(1.0) {
        return Err(Error::Config(format!("{what} = {x} is not a multiple of 1/{n}")));
    }
    Ok(k.round() as i64)
}

impl LatticeGrid {
    /// Window `[x_min, x_min + width)` with `n` sites per unit length.
    pub fn new(n: usize, x_min: f64, width: f64, boundary: Boundary) -> Result<Self> {
        if n < 4 {
            return Err(Error::Config(format!("need at least 4 sites per unit length, got {n}")));
        }
        if !(width > 0.0) {
            return Err(Error::Config(format!("window width must be positive, got {width}")));
        }
        let origin = lattice_count(x_min, n, "window start")?;
        let sites = lattice_count(width, n, "window width")? as usize;
        match boundary {
            Boundary::WholeLineWindow { theta_left } if !(theta_left >= 0.0) => {
                return Err(Error::Config(format!("theta_left must be non-negative, got {theta_left}")))
            }
            Boundary::DirichletRight { v } if !(v >= 0.0) => {
                return Err(Error::Config(format!("boundary speed must be non-negative, got {v}")))
            }
            Boundary::DirichletTwoSided { v, half_width } if !(v >= 0.0 && half_width >= 0.0) => {
                return Err(Error::Config("two-sided boundary needs v >= 0 and half width >= 0".into()))
            }
            _ => {}
        }
        Ok(Self { n, origin, sites, boundary, origin0: origin })
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        (self.origin + i as i64) as f64 / self.n as f64
    }

    pub fn x_min(&self) -> f64 {
        self.x(0)
    }

    /// Right end of the window, one site past the last.
    pub fn x_end(&self) -> f64 {
        self.x(self.sites)
    }

    pub fn window_width(&self) -> f64 {
        self.sites as f64 / self.n as f64
    }

    pub fn shift_sites(&self) -> i64 {
        self.origin - self.origin0
    }

    pub fn shift(&self) -> f64 {
        self.shift_sites() as f64 / self.n as f64
    }

    /// Window index of the site nearest `x`, if inside.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let k = (x * self.n as f64).round() as i64 - self.origin;
        (0..self.sites as i64).contains(&k).then_some(k as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldState {
    pub u: Vec<f64>,
    pub t: f64,
    pub step: u64,
    pub grid: LatticeGrid,
}

impl FieldState {
    /// `sum u / n`.
    pub fn total_mass(&self) -> f64 {
        self.u.iter().sum::<f64>() / self.grid.n as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.grid.x(i)
    }

    /// Field value at absolute position `x` (zero outside the window).
    pub fn value_at(&self, x: f64) -> f64 {
        self.grid.index_of(x).map(|i| self.u[i]).unwrap_or(0.0)
    }

    pub fn is_extinct(&self) -> bool {
        self.u.iter().all(|&v| v == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitProfile {
    /// `1` on `x < x0`.
    Step { x0: f64 },
    /// `theta` on `x < x0`.
    ThetaStep { theta: f64, x0: f64 },
    /// `F(x)` with the boundary point of `F` at `x = 0`.
    WaveProfile { profile: WaveProfile },
    /// Piecewise linear through `(x, u)` samples, zero outside.
    Bump { samples: Vec<(f64, f64)> },
}

/// Sample `profile` on the grid at `t = 0`.
///
/// For a whole-line window the leftmost site is then set to `theta_left`.
pub fn init_front_data(grid: LatticeGrid, profile: &InitProfile) -> Result<FieldState> {
    let inside = |x: f64| x >= grid.x_min() && x <= grid.x_end();
    let mut u: Vec<f64> = match profile {
        InitProfile::Step { x0 } | InitProfile::ThetaStep { x0, .. } => {
            if !inside(*x0) {
                return Err(Error::Config(format!("step at {x0} lies outside the window")));
            }
            let level = match profile {
                InitProfile::ThetaStep { theta, .. } => *theta,
                _ => 1.0,
            };
            if !(level >= 0.0) {
                return Err(Error::Config(format!("plateau value must be non-negative, got {level}")));
            }
            (0..grid.sites).map(|i| if grid.x(i) < *x0 { level } else { 0.0 }).collect()
        }
        InitProfile::WaveProfile { profile } => {
            if !inside(0.0) {
                return Err(Error::Config("wave profile boundary point lies outside the window".into()));
            }
            if grid.x(0) < profile.trusted_min() {
                return Err(Error::Config(format!(
                    "window starts at {} but the profile is only trusted from {}",
                    grid.x(0),
                    profile.trusted_min()
                )));
            }
            (0..grid.sites).map(|i| profile.eval(grid.x(i)).max(0.0)).collect()
        }
        InitProfile::Bump { samples } => {
            if samples.len() < 2 || samples.windows(2).any(|w| w[1].0 <= w[0].0) {
                return Err(Error::Config("bump needs at least two samples with increasing x".into()));
            }
            let (a, b) = (samples[0].0, samples[samples.len() - 1].0);
            if !(inside(a) && inside(b)) {
                return Err(Error::Config(format!("bump support [{a}, {b}] exceeds the window")));
            }
            if samples.iter().any(|s| !(s.1 >= 0.0)) {
                return Err(Error::Config("bump values must be non-negative".into()));
            }
            (0..grid.sites).map(|i| interp(samples, grid.x(i))).collect()
        }
    };
    if let Boundary::WholeLineWindow { theta_left } = grid.boundary {
        if let Some(first) = u.first_mut() {
            *first = theta_left;
        }
    }
    let mut state = FieldState { u: std::mem::take(&mut u), t: 0.0, step: 0, grid };
    apply_killing(&mut state);
    Ok(state)
}

fn interp(samples: &[(f64, f64)], x: f64) -> f64 {
    let k = samples.partition_point(|s| s.0 <= x);
    if k == 0 || k == samples.len() {
        return if k == samples.len() && x == samples[k - 1].0 { samples[k - 1].1 } else { 0.0 };
    }
    let (x0, y0) = samples[k - 1];
    let (x1, y1) = samples[k];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

impl FieldState {
    /// Field built from a closure of absolute `x`, on a fresh grid at `t = 0`.
    pub fn from_fn(grid: LatticeGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let u: Vec<f64> = (0..grid.sites).map(|i| f(grid.x(i))).collect();
        if u.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Config("initial field must be finite and non-negative".into()));
        }
        let mut state = FieldState { u, t: 0.0, step: 0, grid };
        if let Boundary::WholeLineWindow { theta_left } = state.grid.boundary {
            state.u[0] = theta_left;
        }
        apply_killing(&mut state);
        Ok(state)
    }
}

/// Piecewise-constant injection rate `A'(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RateTrace {
    Constant { rate: f64 },
    /// Rate `rate[k]` on `[t[k], t[k+1])`; the last value holds afterwards.
    Table { t: Vec<f64>, rate: Vec<f64> },
}

impl RateTrace {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            RateTrace::Constant { rate } => *rate,
            RateTrace::Table { t: ts, rate } => {
                let k = ts.partition_point(|&s| s <= t);
                if k == 0 {
                    0.0
                } else {
                    rate[k - 1]
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Deposit {
    /// One site behind the killing boundary `v t`.
    BehindBoundary,
    At { x: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassAtom {
    pub t: f64,
    pub x: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Injection {
    Rate { rate: RateTrace, deposit: Deposit },
    /// Point masses, each added during the step that covers its time.
    Atoms { atoms: Vec<MassAtom> },
}

/// How the noise increment is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseScheme {
    /// Deterministic Euler step, then the noise `dv = eps sqrt(n g v) dB` with
    /// `g = sigma^2(v)/v` frozen, sampled from its exact Feller transition.
    #[default]
    FellerSplit,
    /// Plain Euler-Maruyama increment `n^{1/2} eps sigma(u) sqrt(dt) xi`.
    EulerMaruyama,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepParams {
    pub dt: f64,
    pub seed: u64,
    pub clamp_negatives: bool,
    #[serde(default)]
    pub scheme: NoiseScheme,
    pub injection: Option<Injection>,
}

impl StepParams {
    /// `dt = 1/(8 n^2)`, clamping on, no injection.
    pub fn for_grid(n: usize, seed: u64) -> Self {
        Self { dt: default_dt(n), seed, clamp_negatives: true, scheme: NoiseScheme::FellerSplit, injection: None }
    }

    pub fn validate(&self, grid: &LatticeGrid) -> Result<()> {
        let guard = 1.0 / (4.0 * (grid.n * grid.n) as f64);
        if !(self.dt > 0.0 && self.dt <= guard * (1.0 + 1e-12)) {
            return Err(Error::Config(format!("dt = {} violates 0 < dt <= 1/(4n^2) = {guard}", self.dt)));
        }
        match &self.injection {
            Some(Injection::Rate { deposit: Deposit::BehindBoundary, .. })
                if !matches!(grid.boundary, Boundary::DirichletRight { .. }) =>
            {
                Err(Error::Config("deposit behind the boundary needs a right Dirichlet boundary".into()))
            }
            Some(Injection::Rate { rate: RateTrace::Table { t, rate }, .. })
                if t.len() != rate.len() || t.windows(2).any(|w| w[1] <= w[0]) =>
            {
                Err(Error::Config("rate table needs increasing times and matching values".into()))
            }
            _ => Ok(()),
        }
    }
}

pub fn default_dt(n: usize) -> f64 {
    1.0 / (8.0 * (n * n) as f64)
}

/// Poisson mean above which the Feller step uses its Gaussian limit.
const FELLER_GAUSS: f64 = 2000.0;
/// Poisson mean below which the count is drawn exactly.
const FELLER_EXACT: f64 = 30.0;

/// One step of `dv = sqrt(c v) dB` from `v`, given `c dt`.
///
/// The exact transition is `Gamma(N, c dt/2)` with `N ~ Poisson(2v/(c dt))`
/// and `0` when `N = 0`. Both stages are drawn by quantile, the count from
/// `u1` and the size from `u2`, so cells sharing `(u1, u2)` are ordered like
/// their `v`. From a Poisson mean of 30 the count is its continuous cube-root
/// approximation, and above 2000 the step is Gaussian.
pub fn feller_transition(v: f64, c_dt: f64, u1: f64, u2: f64) -> f64 {
    let lambda = 2.0 * v / c_dt;
    if lambda > FELLER_GAUSS {
        let z = (normal_quantile(u1) + normal_quantile(u2)) * std::f64::consts::FRAC_1_SQRT_2;
        return v + (v * c_dt).sqrt() * z;
    }
    let shape = if lambda < FELLER_EXACT {
        poisson_quantile(lambda, u1) as f64
    } else {
        cube_root_quantile(lambda, normal_quantile(u1))
    };
    if shape <= 0.0 {
        return 0.0;
    }
    0.5 * c_dt * gamma_quantile(shape, u2)
}

/// `m (1 - 1/(9m) + z/(3 sqrt m))^3`, floored at 0.
fn cube_root_quantile(m: f64, z: f64) -> f64 {
    let a = 1.0 / (9.0 * m);
    let h = (1.0 - a + z * a.sqrt()).max(0.0);
    m * h * h * h
}

/// Smallest `k` with `P(Poisson(lambda) <= k) >= p`.
fn poisson_quantile(lambda: f64, p: f64) -> u64 {
    let cap = (lambda + 20.0 * lambda.sqrt() + 30.0) as u64;
    let mut pk = (-lambda).exp();
    let mut cdf = pk;
    let mut k = 0;
    while cdf < p && k < cap {
        k += 1;
        pk *= lambda / k as f64;
        cdf += pk;
    }
    k
}

/// Shape below which the Gamma quantile is solved instead of approximated.
const GAMMA_EXACT: f64 = 10.0;

/// Quantile of `Gamma(shape, 1)` at `p`.
fn gamma_quantile(shape: f64, p: f64) -> f64 {
    if shape == 1.0 {
        return -(-p).ln_1p();
    }
    let guess = cube_root_quantile(shape, normal_quantile(p));
    if shape >= GAMMA_EXACT {
        return guess;
    }
    // Work in whichever tail is smaller so that neither side loses digits.
    let upper = p > 0.5;
    let target = if upper { 1.0 - p } else { p };
    let int = (shape.fract() == 0.0).then_some(shape as u32);
    let ln_norm = ln_gamma(shape);
    let tail = |x: f64| match int {
        Some(k) => integer_gamma_tail(k, x, upper),
        None => {
            let dens = ((shape - 1.0) * x.ln() - x - ln_norm).exp();
            (if upper { gamma_ur(shape, x) } else { gamma_lr(shape, x) }, dens)
        }
    };
    let (mut lo, mut hi) = (0.0, f64::INFINITY);
    let mut x = if guess > 0.0 { guess } else { ((target.ln() + ln_gamma(shape + 1.0)) / shape).exp() };
    for _ in 0..100 {
        let (t, dens) = tail(x);
        let g = if upper { target - t } else { t - target };
        if g > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let mut next = x - g / dens;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * x.max(1e-300) };
        }
        if (next - x).abs() <= 1e-12 * x {
            return next;
        }
        x = next;
    }
    x
}

/// Lower (or upper) regularised incomplete gamma for integer shape `k`, with
/// the density at `x`.
fn integer_gamma_tail(k: u32, x: f64, upper: bool) -> (f64, f64) {
    let mut term = (-x).exp();
    let mut below = 0.0;
    let mut dens = 0.0;
    for j in 0..k {
        below += term;
        dens = term;
        term *= x / (j + 1) as f64;
    }
    if upper {
        return (below, dens);
    }
    if below < 0.99 {
        return (1.0 - below, dens);
    }
    // Deep lower tail: sum the series from `x^k/k!` instead of cancelling.
    let mut sum = 0.0;
    let mut j = k;
    while term > 1e-17 * sum {
        sum += term;
        j += 1;
        term *= x / j as f64;
    }
    (sum, dens)
}

fn kill_index(v: f64, width: f64, t: f64, n: usize) -> i64 {
    ((width + v * t) * n as f64 + 1e-9).floor() as i64
}

fn apply_killing(state: &mut FieldState) {
    let g = &state.grid;
    let (lo_abs, hi_abs) = match g.boundary {
        Boundary::WholeLineWindow { .. } => return,
        Boundary::DirichletRight { v } => (i64::MIN, kill_index(v, 0.0, state.t, g.n)),
        Boundary::DirichletTwoSided { v, half_width } => {
            let k = kill_index(v, half_width, state.t, g.n);
            (-k, k)
        }
    };
    for (i, u) in state.u.iter_mut().enumerate() {
        let k = g.origin + i as i64;
        if k >= hi_abs || k <= lo_abs {
            *u = 0.0;
        }
    }
}

/// One Euler-Maruyama step in place.
///
/// Order: reaction-diffusion-noise update, clamping, killing, injection.
pub fn step(state: &mut FieldState, model: &ModelSpec, p: &StepParams) -> Result<()> {
    let n = state.grid.n;
    let nf = n as f64;
    let len = state.u.len();
    let dt = p.dt;
    let diff = nf * nf * dt;
    let amp = nf.sqrt() * model.noise.epsilon * dt.sqrt();
    let f = &model.f;
    let noise = &model.noise;
    let pinned_left = matches!(state.grid.boundary, Boundary::WholeLineWindow { .. });
    let reflect_left = matches!(state.grid.boundary, Boundary::DirichletRight { .. });
    let absorbing_one = noise.absorbing_at_one();

    // Zero sites with zero neighbours stay zero when f(0) = 0.
    let (lo, hi) = if f.value(0.0) == 0.0 {
        match (state.u.iter().position(|&v| v != 0.0), state.u.iter().rposition(|&v| v != 0.0)) {
            (Some(a), Some(b)) => (a.saturating_sub(1), (b + 1).min(len - 1)),
            _ => (1, 0),
        }
    } else {
        (0, len.saturating_sub(1))
    };
    let start = if pinned_left { lo.max(1) } else { lo };
    let eps2_n_dt = model.noise.epsilon * model.noise.epsilon * nf * dt;
    let cell_step = state.step;
    let origin = state.grid.origin;
    let u = &mut state.u;
    if start <= hi && len > 0 {
        let mut left_old = if start == 0 {
            if reflect_left {
                u[0]
            } else {
                0.0
            }
        } else {
            u[start - 1]
        };
        for i in start..=hi {
            let old = u[i];
            let right = if i + 1 < len { u[i + 1] } else { 0.0 };
            let mut new = old + diff * (right - 2.0 * old + left_old) + f.value(old) * dt;
            if amp != 0.0 {
                let site = origin + i as i64;
                match p.scheme {
                    NoiseScheme::EulerMaruyama => {
                        let s = noise.sigma(old);
                        if s != 0.0 {
                            new += amp * s * normal_at(p.seed, cell_step, site);
                        }
                    }
                    NoiseScheme::FellerSplit if new > 0.0 => {
                        // Above 1/2 the step acts on the distance to the absorbing state 1.
                        let mirror = absorbing_one && new > 0.5;
                        let w = if mirror { 1.0 - new } else { new };
                        let c_dt = if w > 0.0 { eps2_n_dt * noise.sigma2(new) / w } else { 0.0 };
                        if c_dt > 0.0 {
                            let (u1, u2) = cell_uniforms(p.seed, cell_step, site);
                            new = if mirror {
                                1.0 - feller_transition(w, c_dt, 1.0 - u1, 1.0 - u2)
                            } else {
                                feller_transition(w, c_dt, u1, u2)
                            };
                        }
                    }
                    NoiseScheme::FellerSplit => {}
                }
            }
            if !new.is_finite() {
                return Err(Error::Blowup { site: i, x: (origin + i as i64) as f64 / nf, t: state.t + dt });
            }
            if p.clamp_negatives && new < 0.0 {
                new = 0.0;
            }
            u[i] = new;
            left_old = old;
        }
    }
    let t_old = state.t;
    state.step += 1;
    state.t = t_old + dt;
    apply_killing(state);
    if let Some(inj) = &p.injection {
        inject(state, inj, t_old, dt)?;
    }
    Ok(())
}

fn inject(state: &mut FieldState, inj: &Injection, t_old: f64, dt: f64) -> Result<()> {
    let nf = state.grid.n as f64;
    match inj {
        Injection::Rate { rate, deposit } => {
            let a = rate.at(t_old);
            if a == 0.0 {
                return Ok(());
            }
            let abs = match deposit {
                Deposit::BehindBoundary => match state.grid.boundary {
                    Boundary::DirichletRight { v } => kill_index(v, 0.0, state.t, state.grid.n) - 1,
                    _ => return Err(Error::Config("deposit behind the boundary needs a right Dirichlet boundary".into())),
                },
                Deposit::At { x } => (x * nf).round() as i64,
            };
            let i = abs - state.grid.origin;
            if i < 0 || i >= state.u.len() as i64 {
                return Err(Error::WindowOverrun { t: state.t });
            }
            state.u[i as usize] += a * dt * nf;
        }
        Injection::Atoms { atoms } => {
            for atom in atoms {
                if atom.t >= t_old && atom.t < t_old + dt {
                    let i = state.grid.index_of(atom.x).ok_or(Error::WindowOverrun { t: state.t })?;
                    state.u[i] += atom.mass * nf;
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub horizon: f64,
    /// Time between trace records and observer calls.
    pub record_every: f64,
    pub snapshot_times: Vec<f64>,
    /// Shift once the tracked front is within this distance of the right edge.
    pub margin: f64,
    /// Shift distance; `None` is a quarter of the window.
    pub stride: Option<f64>,
    /// Field value that counts as front for window tracking.
    pub tracking_level: f64,
    pub shift_window: bool,
    /// Level of the `m*` crossing.
    pub level: f64,
}

impl RunOptions {
    pub fn new(horizon: f64) -> Self {
        Self {
            horizon,
            record_every: 0.5,
            snapshot_times: Vec::new(),
            margin: 10.0,
            stride: None,
            tracking_level: 0.0,
            shift_window: true,
            level: 0.5,
        }
    }

    /// Settings for noiseless runs, where the support fills the window at once.
    pub fn deterministic(horizon: f64) -> Self {
        Self { tracking_level: 1e-100, ..Self::new(horizon) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub origin: i64,
    pub n: usize,
    pub u: Vec<f64>,
}

impl Snapshot {
    pub fn of(state: &FieldState) -> Self {
        Self { t: state.t, origin: state.grid.origin, n: state.grid.n, u: state.u.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub dt: f64,
    pub steps: u64,
    pub model: ModelSpec,
    pub grid: LatticeGrid,
    pub options: RunOptions,
    pub trace: FrontTrace,
    pub snapshots: Vec<Snapshot>,
    #[serde(skip)]
    pub final_state: Option<FieldState>,
}

/// Called with the state at every record time.
pub type Observer<'a> = &'a mut dyn FnMut(&FieldState);

fn maybe_shift(state: &mut FieldState, opts: &RunOptions) -> Result<()> {
    let len = state.u.len();
    let Some(front) = state.u.iter().rposition(|&v| v > opts.tracking_level) else {
        return Ok(());
    };
    let n = state.grid.n as f64;
    let margin_sites = (opts.margin * n).round() as usize;
    if len - 1 - front >= margin_sites {
        return Ok(());
    }
    let two_sided = matches!(state.grid.boundary, Boundary::DirichletTwoSided { .. });
    if !opts.shift_window || two_sided {
        return if front + 1 >= len { Err(Error::WindowOverrun { t: state.t }) } else { Ok(()) };
    }
    let stride = opts.stride.unwrap_or(0.25 * state.grid.window_width());
    let s = ((stride * n).round() as usize).clamp(1, len - 1);
    state.u.drain(..s);
    state.u.resize(len, 0.0);
    state.grid.origin += s as i64;
    if let Boundary::WholeLineWindow { theta_left } = state.grid.boundary {
        state.u[0] = theta_left;
    }
    if len - 1 - state.u.iter().rposition(|&v| v > opts.tracking_level).unwrap_or(0) < margin_sites {
        return Err(Error::WindowOverrun { t: state.t });
    }
    Ok(())
}

/// Step to `horizon`, shifting the window and recording the front.
pub fn run(
    mut state: FieldState,
    model: &ModelSpec,
    p: &StepParams,
    opts: &RunOptions,
    observers: &mut [Observer<'_>],
) -> Result<RunRecord> {
    if !(opts.horizon > 0.0) {
        return Err(Error::Config(format!("horizon must be positive, got {}", opts.horizon)));
    }
    if !(opts.record_every > 0.0) {
        return Err(Error::Config("record interval must be positive".into()));
    }
    if opts.shift_window && !(opts.margin > 0.0 && opts.margin < state.grid.window_width() / 2.0) {
        return Err(Error::Config(format!(
            "margin {} must be positive and below half the window width {}",
            opts.margin,
            state.grid.window_width()
        )));
    }
    p.validate(&state.grid)?;
    let grid0 = state.grid.clone();
    let total = (opts.horizon / p.dt).round() as u64;
    let record_stride = ((opts.record_every / p.dt).round() as u64).max(1);
    let mut snaps: Vec<f64> = opts.snapshot_times.clone();
    snaps.sort_by(f64::total_cmp);
    let mut next_snap = 0;
    let mut trace = FrontTrace::new();
    let mut snapshots = Vec::new();
    let record = |state: &FieldState, trace: &mut FrontTrace, observers: &mut [Observer<'_>]| {
        trace.push(state.t, crate::front::rightmost_support(state, 0.0), level_crossing(state, opts.level));
        for obs in observers.iter_mut() {
            obs(state);
        }
    };
    let t0 = state.t;
    record(&state, &mut trace, observers);
    while next_snap < snaps.len() && snaps[next_snap] <= t0 + 0.5 * p.dt {
        snapshots.push(Snapshot::of(&state));
        next_snap += 1;
    }
    for k in 1..=total {
        step(&mut state, model, p)?;
        maybe_shift(&mut state, opts)?;
        if k % record_stride == 0 || k == total {
            record(&state, &mut trace, observers);
        }
        while next_snap < snaps.len() && snaps[next_snap] <= state.t + 0.5 * p.dt {
            snapshots.push(Snapshot::of(&state));
            next_snap += 1;
        }
    }
    Ok(RunRecord {
        seed: p.seed,
        dt: p.dt,
        steps: total,
        model: model.clone(),
        grid: grid0,
        options: opts.clone(),
        trace,
        snapshots,
        final_state: Some(state),
    })
}

/// [`run`] with the noise amplitude forced to zero.
pub fn solve_deterministic(
    state: FieldState,
    model: &ModelSpec,
    p: &StepParams,
    opts: &RunOptions,
) -> Result<RunRecord> {
    run(state, &model.with_epsilon(0.0), p, opts, &mut [])
}

/// CSV with columns `t, site_index, x_absolute, u`.
pub fn write_snapshots_csv<W: Write>(snapshots: &[Snapshot], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "site_index", "x_absolute", "u"])?;
    for s in snapshots {
        for (i, u) in s.u.iter().enumerate() {
            let k = s.origin + i as i64;
            out.write_record([s.t.to_string(), k.to_string(), (k as f64 / s.n as f64).to_string(), u.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Hex SHA-256 of `blob <len>\0<canonical json>`.
pub fn content_hash<T: Serialize>(config: &T) -> Result<String> {
    let body = serde_json::to_vec(config)?;
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", body.len()).as_bytes());
    h.update(&body);
    Ok(hex::encode(h.finalize()))
}

#[derive(Debug, Clone, Serialize)]
struct RunMeta<'a> {
    seed: u64,
    dt: f64,
    steps: u64,
    grid: &'a LatticeGrid,
    final_shift: f64,
    model: &'a ModelSpec,
    options: &'a RunOptions,
    config_hash: String,
}

impl RunRecord {
    pub fn metadata_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Config<'a> {
            seed: u64,
            dt: f64,
            grid: &'a LatticeGrid,
            model: &'a ModelSpec,
            options: &'a RunOptions,
        }
        let config_hash =
            content_hash(&Config { seed: self.seed, dt: self.dt, grid: &self.grid, model: &self.model, options: &self.options })?;
        let meta = RunMeta {
            seed: self.seed,
            dt: self.dt,
            steps: self.steps,
            grid: &self.grid,
            final_shift: self.final_state.as_ref().map(|s| s.grid.shift()).unwrap_or(0.0),
            model: &self.model,
            options: &self.options,
            config_hash,
        };
        Ok(serde_json::to_string_pretty(&meta)?)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("run.json"), self.metadata_json()?)?;
        self.trace.save_csv(&dir.join("trace.csv"))?;
        write_snapshots_csv(&self.snapshots, std::fs::File::create(dir.join("snapshots.csv"))?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Nonlinearity, NoiseSpec};

    fn whole(n: usize, a: f64, w: f64, theta: f64) -> LatticeGrid {
        LatticeGrid::new(n, a, w, Boundary::WholeLineWindow { theta_left: theta }).unwrap()
    }

    #[test]
    fn step_initial_data() {
        let s = init_front_data(whole(8, -50.0, 200.0, 1.0), &InitProfile::Step { x0: 0.0 }).unwrap();
        assert_eq!(s.u.len(), 1600);
        assert!(s.u[..400].iter().all(|&v| v == 1.0));
        assert!(s.u[400..].iter().all(|&v| v == 0.0));
        let th = init_front_data(whole(8, -50.0, 200.0, 0.5), &InitProfile::ThetaStep { theta: 0.5, x0: 0.0 }).unwrap();
        assert!(th.u[..400].iter().all(|&v| v == 0.5));
        assert!(init_front_data(whole(8, -50.0, 200.0, 1.0), &InitProfile::Step { x0: 400.0 }).is_err());
        assert!(LatticeGrid::new(8, 0.0, 10.05, Boundary::WholeLineWindow { theta_left: 1.0 }).is_err());
        assert!(LatticeGrid::new(2, 0.0, 10.0, Boundary::WholeLineWindow { theta_left: 1.0 }).is_err());
    }

    #[test]
    fn laplacian_conserves_mass() {
        let grid = whole(8, -20.0, 40.0, 0.0);
        let mut s = FieldState::from_fn(grid, |x| if x == 0.0 { 1.0 } else { 0.0 }).unwrap();
        let model = ModelSpec::new(Nonlinearity::zero(), NoiseSpec::sqrt_u(0.0)).unwrap();
        let p = StepParams::for_grid(8, 1);
        let m0 = s.total_mass();
        for _ in 0..50 {
            step(&mut s, &model, &p).unwrap();
        }
        assert!((s.total_mass() - m0).abs() < 1e-12);
        assert!(s.u.iter().filter(|&&v| v > 0.0).count() > 50);
    }

    #[test]
    fn zero_is_absorbing() {
        let mut s = FieldState::from_fn(whole(8, 0.0, 20.0, 0.0), |_| 0.0).unwrap();
        let model = ModelSpec::fisher_wright_fisher(0.0);
        let p = StepParams::for_grid(8, 3);
        for _ in 0..200 {
            step(&mut s, &model, &p).unwrap();
        }
        assert!(s.is_extinct());
    }

    #[test]
    fn dt_guard_and_blowup() {
        let grid = whole(8, 0.0, 20.0, 0.0);
        let s = FieldState::from_fn(grid.clone(), |_| 0.0).unwrap();
        let model = ModelSpec::fisher_wright_fisher(0.1);
        let mut p = StepParams::for_grid(8, 1);
        p.dt = 1.0 / 200.0;
        assert!(matches!(run(s, &model, &p, &RunOptions::new(1.0), &mut []), Err(Error::Config(_))));
        let mut s = FieldState::from_fn(grid, |x| if x == 5.0 { f64::MAX } else { 0.0 }).unwrap();
        let p = StepParams::for_grid(8, 1);
        assert!(matches!(step(&mut s, &model, &p), Err(Error::Blowup { .. })));
    }

    #[test]
    fn killing_zeroes_boundary_sites() {
        let grid = LatticeGrid::new(8, -30.0, 60.0, Boundary::DirichletTwoSided { v: 0.5, half_width: 5.0 }).unwrap();
        let model = ModelSpec::new(Nonlinearity::Fisher, NoiseSpec::wright_fisher(0.0)).unwrap();
        let s = FieldState::from_fn(grid, |x| if x.abs() < 4.0 { 1.0 } else { 0.0 }).unwrap();
        let p = StepParams::for_grid(8, 1);
        let mut opts = RunOptions::deterministic(4.0);
        opts.snapshot_times = vec![1.0, 2.0, 4.0];
        let rec = solve_deterministic(s, &model, &p, &opts).unwrap();
        for snap in &rec.snapshots {
            let edge = 5.0 + 0.5 * snap.t;
            for (i, &u) in snap.u.iter().enumerate() {
                let x = (snap.origin + i as i64) as f64 / 8.0;
                if x.abs() >= edge {
                    assert_eq!(u, 0.0, "x = {x}, t = {}", snap.t);
                }
            }
        }
    }

    #[test]
    fn window_follows_front() {
        let grid = whole(8, -20.0, 60.0, 1.0);
        let s = init_front_data(grid, &InitProfile::Step { x0: 0.0 }).unwrap();
        let model = ModelSpec::fisher_wright_fisher(0.0);
        let opts = RunOptions { tracking_level: 1e-10, ..RunOptions::deterministic(30.0) };
        let rec = solve_deterministic(s, &model, &StepParams::for_grid(8, 0), &opts).unwrap();
        let fin = rec.final_state.unwrap();
        assert!(fin.grid.shift() > 0.0);
        assert_eq!(fin.u[0], 1.0);
        let m = *rec.trace.m_star.last().unwrap();
        assert!(m > 40.0 && m < 60.0, "{m}");
    }

    #[test]
    fn overrun_without_shift() {
        let grid = whole(8, -5.0, 15.0, 1.0);
        let s = init_front_data(grid, &InitProfile::Step { x0: 0.0 }).unwrap();
        let model = ModelSpec::fisher_wright_fisher(0.0);
        let mut opts = RunOptions::deterministic(20.0);
        opts.shift_window = false;
        let r = solve_deterministic(s, &model, &StepParams::for_grid(8, 0), &opts);
        assert!(matches!(r, Err(Error::WindowOverrun { .. })));
    }

    #[test]
    fn identical_seeds_reproduce() {
        let model = ModelSpec::fisher_wright_fisher(0.2);
        let go = |seed| {
            let s = init_front_data(whole(8, -10.0, 40.0, 1.0), &InitProfile::Step { x0: 0.0 }).unwrap();
            run(s, &model, &StepParams::for_grid(8, seed), &RunOptions::new(5.0), &mut []).unwrap()
        };
        let (a, b, c) = (go(9), go(9), go(10));
        assert_eq!(a.final_state, b.final_state);
        assert_ne!(a.final_state, c.final_state);
        assert_eq!(a.metadata_json().unwrap(), b.metadata_json().unwrap());
    }

    #[test]
    fn gamma_quantile_inverts_cdf() {
        for shape in [1.0, 2.0, 3.5, 7.0] {
            for p in [1e-9, 0.16, 0.5, 0.75, 1.0 - 1e-7] {
                let x = gamma_quantile(shape, p);
                let q = 1.0 - p;
                let err = if p > 0.5 { gamma_ur(shape, x) - q } else { gamma_lr(shape, x) - p };
                assert!(err.abs() < 1e-10 * p.min(q), "shape {shape}, p {p}: {x}");
            }
        }
        for k in [1u32, 3, 9] {
            for x in [0.01, 0.5, 3.0, 12.0] {
                let lo = integer_gamma_tail(k, x, false).0;
                assert!((lo - gamma_lr(k as f64, x)).abs() <= 1e-13 * lo.max(1e-300) + 1e-300, "{k} {x}");
                assert!((integer_gamma_tail(k, x, true).0 - gamma_ur(k as f64, x)).abs() < 1e-14);
            }
        }
        assert_eq!(poisson_quantile(3.0, 1e-3), 0);
        assert_eq!(poisson_quantile(3.0, 0.5), 3);
    }

    #[test]
    fn feller_transition_is_monotone_in_v() {
        for (u1, u2) in [(0.02, 0.7), (0.6, 0.1), (0.93, 0.93), (0.46, 0.5)] {
            let mut last = 0.0;
            for i in 1..4000 {
                let v = 1e-5 * 1.004f64.powi(i);
                let x = feller_transition(v, 6e-4, u1, u2);
                assert!(x >= last - 1e-12 * v, "v {v}: {x} < {last}");
                last = x;
            }
        }
    }

    #[test]
    fn feller_transition_moments() {
        let mut rng = crate::rng::replica_rng(4, 4, 4);
        use rand::Rng;
        for (v, c_dt) in [(0.3, 0.2), (2.0, 0.05), (0.01, 0.5), (1.0, 0.02), (1.0, 1e-4)] {
            let k = 200_000;
            let xs: Vec<f64> = (0..k)
                .map(|_| {
                    let (u1, u2): (f64, f64) = (rng.gen(), rng.gen());
                    feller_transition(v, c_dt, u1, u2)
                })
                .collect();
            let mean = xs.iter().sum::<f64>() / k as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / k as f64;
            let zero = xs.iter().filter(|&&x| x == 0.0).count() as f64 / k as f64;
            let se = (v * c_dt / k as f64).sqrt();
            assert!((mean - v).abs() < 4.0 * se, "mean {mean} vs {v}");
            assert!((var / (v * c_dt) - 1.0).abs() < 0.05, "var {var}");
            let p0 = (-2.0 * v / c_dt).exp();
            assert!((zero - p0).abs() < 4.0 * (p0 * (1.0 - p0) / k as f64).sqrt() + 1e-12, "{zero} vs {p0}");
        }
    }
}
