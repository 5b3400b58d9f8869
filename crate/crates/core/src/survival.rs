//! Critical-mass and confinement experiments for `w_t = w_xx + b w + theta0 sqrt(w) W'`,
//! and the oriented-percolation skeleton.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, Nonlinearity, NoiseSpec};
use crate::par::map_indexed;
use crate::rng::{replica_rng, replica_seed};
use crate::spde::{default_dt, step, Boundary, FieldState, Injection, LatticeGrid, MassAtom, StepParams};
use crate::stats::Estimate;

/// Total mass below which a field counts as extinct.
pub const EXTINCT_MASS: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialShape {
    /// Constant on `[-half_width, half_width]`.
    Box { half_width: f64 },
    Gaussian { sd: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtinctionExperiment {
    pub vartheta0: f64,
    pub b: f64,
    pub m0: f64,
    pub t: f64,
    pub shape: InitialShape,
    pub replicas: usize,
    pub n: usize,
    /// `None` uses `1/(8 n^2)`.
    pub dt: Option<f64>,
    /// Killing walls at `|x| = half_width`, far enough to be inert.
    pub half_width: f64,
    pub seed: u64,
}

impl ExtinctionExperiment {
    pub fn new(vartheta0: f64, b: f64, m0: f64, t: f64, replicas: usize, n: usize, seed: u64) -> Self {
        Self {
            vartheta0,
            b,
            m0,
            t,
            shape: InitialShape::Box { half_width: 0.5 },
            replicas,
            n,
            dt: None,
            half_width: 6.0 + 4.0 * t.sqrt(),
            seed,
        }
    }

    pub fn model(&self) -> Result<ModelSpec> {
        ModelSpec::new(Nonlinearity::linear(self.b), NoiseSpec::sqrt_u(self.vartheta0))
    }

    fn validate(&self) -> Result<()> {
        if !(self.vartheta0 > 0.0) {
            return Err(Error::Config(format!("noise floor must be positive, got {}", self.vartheta0)));
        }
        if !(self.m0 >= 0.0 && self.t >= 0.0 && self.half_width > 0.0) {
            return Err(Error::Config("need m0 >= 0, t >= 0 and a positive domain".into()));
        }
        if self.replicas == 0 {
            return Err(Error::Config("need at least one replica".into()));
        }
        Ok(())
    }

    fn grid(&self) -> Result<LatticeGrid> {
        let l = self.half_width.ceil();
        LatticeGrid::new(self.n, -l - 1.0, 2.0 * l + 2.0, Boundary::DirichletTwoSided { v: 0.0, half_width: l })
    }

    /// Initial field with lattice mass exactly `m0`.
    pub fn initial_state(&self) -> Result<FieldState> {
        let grid = self.grid()?;
        let shape = self.shape;
        let mut s = FieldState::from_fn(grid, |x| match shape {
            InitialShape::Box { half_width } => {
                if x.abs() <= half_width {
                    1.0
                } else {
                    0.0
                }
            }
            InitialShape::Gaussian { sd } => (-0.5 * (x / sd).powi(2)).exp(),
        })?;
        let mass = s.total_mass();
        if self.m0 > 0.0 && !(mass > 0.0) {
            return Err(Error::Config("initial shape has no lattice mass".into()));
        }
        let scale = if mass > 0.0 { self.m0 / mass } else { 0.0 };
        s.u.iter_mut().for_each(|u| *u *= scale);
        Ok(s)
    }

    fn params(&self, replica: usize, tag: u64) -> StepParams {
        StepParams {
            dt: self.dt.unwrap_or_else(|| default_dt(self.n)),
            ..StepParams::for_grid(self.n, replica_seed(self.seed, tag, replica as u64))
        }
    }
}

fn extinct(s: &FieldState) -> bool {
    s.is_extinct() || s.total_mass() < EXTINCT_MASS
}

const EXT_TAG: u64 = 0xe7;
const CONF_TAG: u64 = 0xc0f;

/// Run one replica to `t`, returning the final total mass (0 once extinct).
pub fn extinction_replica(e: &ExtinctionExperiment, replica: usize) -> Result<f64> {
    let model = e.model()?;
    let p = e.params(replica, EXT_TAG);
    let mut s = e.initial_state()?;
    let total = (e.t / p.dt).round() as u64;
    for _ in 0..total {
        if extinct(&s) {
            return Ok(0.0);
        }
        step(&mut s, &model, &p)?;
    }
    Ok(if extinct(&s) { 0.0 } else { s.total_mass() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtinctionReport {
    pub experiment: ExtinctionExperiment,
    pub extinction: Estimate,
    pub mean_mass: Estimate,
    /// `exp(-2 M0 / (theta0^2 t))`.
    pub feller_closed_form: f64,
    /// `exp(-M0 / (theta0^2 t))`, the constant as printed alongside the log-Laplace equation.
    pub printed_constant: f64,
    pub matches_feller: bool,
    pub matches_printed: bool,
}

/// Fraction of replicas extinct at `t`, with the binomial standard error.
pub fn extinction_probability_mc(e: &ExtinctionExperiment) -> Result<Estimate> {
    Ok(extinction_report(e)?.extinction)
}

/// Extinction fraction together with the two closed-form candidates.
pub fn extinction_report(e: &ExtinctionExperiment) -> Result<ExtinctionReport> {
    e.validate()?;
    let masses: Vec<f64> = map_indexed(e.replicas, |i| extinction_replica(e, i)).into_iter().collect::<Result<_>>()?;
    let dead = masses.iter().filter(|&&m| m == 0.0).count();
    let extinction = Estimate::proportion(dead, masses.len());
    let k = e.vartheta0 * e.vartheta0 * e.t;
    let (feller, printed) = if e.t > 0.0 { ((-2.0 * e.m0 / k).exp(), (-e.m0 / k).exp()) } else { (0.0, 0.0) };
    Ok(ExtinctionReport {
        experiment: e.clone(),
        extinction,
        mean_mass: Estimate::from_samples(&masses),
        feller_closed_form: feller,
        printed_constant: printed,
        matches_feller: extinction.agrees_with(&Estimate::exact(feller), 3.0, 0.02),
        matches_printed: extinction.agrees_with(&Estimate::exact(printed), 3.0, 0.02),
    })
}

/// `P(M_t = 0)` for `dM = theta0 sqrt(M) dB` by Euler steps absorbed at 0.
pub fn feller_total_mass_oracle(vartheta0: f64, m0: f64, t: f64, paths: usize, seed: u64) -> Result<Estimate> {
    feller_euler(vartheta0, m0, t, paths, 2000, seed).map(|r| r.0)
}

/// Euler oracle with `steps` steps; returns the extinction estimate and the mean of `M_t`.
pub fn feller_euler(
    vartheta0: f64,
    m0: f64,
    t: f64,
    paths: usize,
    steps: usize,
    seed: u64,
) -> Result<(Estimate, Estimate)> {
    if paths < 10_000 {
        return Err(Error::Config(format!("the Feller oracle needs at least 1e4 paths, got {paths}")));
    }
    if !(vartheta0 > 0.0 && m0 >= 0.0 && t > 0.0 && steps > 0) {
        return Err(Error::Config("need theta0 > 0, M0 >= 0, t > 0 and steps > 0".into()));
    }
    let dt = t / steps as f64;
    let sd = vartheta0 * dt.sqrt();
    // Paths are grouped into blocks so each block owns one sequential generator.
    const BLOCK: usize = 1000;
    let blocks = paths.div_ceil(BLOCK);
    let finals: Vec<Vec<f64>> = map_indexed(blocks, |bi| {
        let mut rng = replica_rng(seed, 0xfe11e7, bi as u64);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let count = BLOCK.min(paths - bi * BLOCK);
        (0..count)
            .map(|_| {
                let mut m = m0;
                for _ in 0..steps {
                    if m <= 0.0 {
                        return 0.0;
                    }
                    m += sd * m.sqrt() * normal.sample(&mut rng);
                }
                m.max(0.0)
            })
            .collect()
    });
    let finals: Vec<f64> = finals.into_iter().flatten().collect();
    let dead = finals.iter().filter(|&&m| m <= 0.0).count();
    Ok((Estimate::proportion(dead, finals.len()), Estimate::from_samples(&finals)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfinementExperiment {
    pub base: ExtinctionExperiment,
    pub atoms: Vec<MassAtom>,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfinementReport {
    pub experiment: ConfinementExperiment,
    pub confined: Estimate,
    /// `1 - 100 r^-2 e^b theta0^-2 E[M]`.
    pub printed_lower_bound: f64,
    pub bound_honoured: bool,
}

/// Fraction of replicas whose support stays inside `(-r, r)` on `[0, 1]`.
pub fn confinement_probability_mc(c: &ConfinementExperiment) -> Result<Estimate> {
    Ok(confinement_report(c)?.confined)
}

pub fn confinement_report(c: &ConfinementExperiment) -> Result<ConfinementReport> {
    let e = &c.base;
    e.validate()?;
    if !(c.r > 0.0) {
        return Err(Error::Config(format!("r must be positive, got {}", c.r)));
    }
    if c.atoms.iter().any(|a| !(a.x.abs() < c.r / 2.0 && a.mass >= 0.0 && (0.0..1.0).contains(&a.t))) {
        return Err(Error::Config("injection atoms must sit in (-r/2, r/2) at times in [0, 1)".into()));
    }
    let injected: f64 = c.atoms.iter().map(|a| a.mass).sum();
    let bound = 1.0 - 100.0 / (c.r * c.r) * e.b.exp() / (e.vartheta0 * e.vartheta0) * injected;
    let exp = ExtinctionExperiment { half_width: c.r + 2.0, ..e.clone() };
    let model = exp.model()?;
    let stays: Vec<bool> = map_indexed(e.replicas, |i| -> Result<bool> {
        if injected == 0.0 {
            return Ok(true);
        }
        let mut p = exp.params(i, CONF_TAG);
        p.injection = Some(Injection::Atoms { atoms: c.atoms.clone() });
        let grid = exp.grid()?;
        let mut s = FieldState::from_fn(grid, |_| 0.0)?;
        let total = (1.0 / p.dt).round() as u64;
        for _ in 0..total {
            step(&mut s, &model, &p)?;
            let lo = s.u.iter().position(|&v| v > 0.0);
            let hi = s.u.iter().rposition(|&v| v > 0.0);
            if let (Some(lo), Some(hi)) = (lo, hi) {
                if s.x(lo) <= -c.r || s.x(hi) >= c.r {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let confined = Estimate::proportion(stays.iter().filter(|&&s| s).count(), stays.len());
    Ok(ConfinementReport {
        experiment: c.clone(),
        confined,
        printed_lower_bound: bound,
        bound_honoured: confined.value + 3.0 * confined.se >= bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourBound {
    /// `+inf` when divergent.
    pub value: f64,
    pub divergent: bool,
    pub rho: f64,
}

/// `sum_{k >= m delta} 4^{2k+m} (1-p)^{k/2} = 4^m rho^{ceil(m delta)} / (1 - rho)`, `rho = 16 sqrt(1-p)`.
pub fn contour_bound(p: f64, m: u32, delta: f64) -> Result<ContourBound> {
    if !(0.0..=1.0).contains(&p) || !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Domain(format!("need p in [0,1] and delta in (0,1], got p={p}, delta={delta}")));
    }
    let rho = 16.0 * (1.0 - p).sqrt();
    if rho >= 1.0 {
        return Ok(ContourBound { value: f64::INFINITY, divergent: true, rho });
    }
    let k0 = (m as f64 * delta - 1e-12).ceil().max(0.0);
    let value = (m as f64 * 4f64.ln() + k0 * rho.ln()).exp() / (1.0 - rho);
    Ok(ContourBound { value, divergent: false, rho })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercolationConfig {
    pub p: f64,
    pub m_max: usize,
    pub replicas: usize,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercolationResult {
    pub config: PercolationConfig,
    /// `N_m` for `m = 0..=m_max` per replica; `None` once nothing is reachable.
    pub traces: Vec<Vec<Option<i64>>>,
    /// Mean of `N_m / m` at `m_max` over surviving replicas.
    pub ratio: Estimate,
    pub min_ratio: f64,
    /// Empirical `P(N_m < m (1 - delta))` at `m_max`.
    pub tail: Estimate,
    pub dead_fraction: f64,
}

/// Rightmost wet site per generation, started from every `x <= 0` of even parity.
///
/// Start points left of `-3 m_max` are dropped; they only matter when every
/// nearer cluster dies.
pub fn percolation_trace<R: Rng>(p: f64, m_max: usize, rng: &mut R) -> Vec<Option<i64>> {
    let reach = 3 * m_max as i64 + 2;
    let x_min = -reach;
    let width = (reach + m_max as i64 + 2) as usize;
    let mut wet: Vec<bool> = (0..width).map(|i| {
        let x = x_min + i as i64;
        x <= 0 && x.rem_euclid(2) == 0
    }).collect();
    let mut next = vec![false; width];
    let mut out = Vec::with_capacity(m_max + 1);
    let rightmost = |w: &[bool]| w.iter().rposition(|&b| b).map(|i| x_min + i as i64);
    out.push(rightmost(&wet));
    for _ in 0..m_max {
        next.iter_mut().for_each(|b| *b = false);
        for i in 0..width {
            if !wet[i] {
                continue;
            }
            if i > 0 && rng.gen::<f64>() < p {
                next[i - 1] = true;
            }
            if i + 1 < width && rng.gen::<f64>() < p {
                next[i + 1] = true;
            }
        }
        std::mem::swap(&mut wet, &mut next);
        out.push(rightmost(&wet));
    }
    out
}

pub fn percolation_speed_mc(c: &PercolationConfig, seed: u64) -> Result<PercolationResult> {
    if !(0.0..=1.0).contains(&c.p) || c.m_max == 0 || c.replicas == 0 {
        return Err(Error::Config("need p in [0,1], m_max >= 1 and replicas >= 1".into()));
    }
    let traces = map_indexed(c.replicas, |i| {
        let mut rng = replica_rng(seed, 0x9e7c, i as u64);
        percolation_trace(c.p, c.m_max, &mut rng)
    });
    let m = c.m_max as f64;
    let last: Vec<Option<i64>> = traces.iter().map(|t| t[c.m_max]).collect();
    let ratios: Vec<f64> = last.iter().flatten().map(|&n| n as f64 / m).collect();
    let below = last.iter().filter(|n| n.map_or(true, |n| (n as f64) < m * (1.0 - c.delta))).count();
    Ok(PercolationResult {
        config: c.clone(),
        ratio: Estimate::from_samples(&ratios),
        min_ratio: ratios.iter().copied().fold(f64::INFINITY, f64::min),
        tail: Estimate::proportion(below, c.replicas),
        dead_fraction: 1.0 - ratios.len() as f64 / c.replicas as f64,
        traces,
    })
}

impl PercolationResult {
    /// CSV with columns `m, N_m, replica`; unreachable generations are left blank.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["m", "N_m", "replica"])?;
        for (r, tr) in self.traces.iter().enumerate() {
            for (m, n) in tr.iter().enumerate() {
                out.write_record([m.to_string(), n.map(|v| v.to_string()).unwrap_or_default(), r.to_string()])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}
