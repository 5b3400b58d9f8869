//! `kpplab`: command-line front end for the noisy KPP laboratory.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 numerical
//! failure, 3 a check requested with `--assert` failed.

mod report;

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use kpp_core::dual::{duality_check, run_dual, write_dual_csv, DualRunConfig, DualityConfig};
use kpp_core::front::{default_burn_in, estimate_speed, FrontUse};
use kpp_core::model::{validate_model, ModelSpec};
use kpp_core::spde::{init_front_data, run, Boundary, InitProfile, LatticeGrid, MassAtom, RunOptions, StepParams};
use kpp_core::survival::{
    confinement_report, contour_bound, extinction_report, percolation_speed_mc, ConfinementExperiment,
    ExtinctionExperiment, PercolationConfig,
};
use kpp_core::sweep::{run_sweep, trend_checks, Preset, SweepConfig};
use kpp_core::wave::{cutoff_table, kappa_table};

#[derive(Parser, Debug)]
#[command(name = "kpplab", version, about = "Noisy KPP front propagation laboratory")]
struct Cli {
    /// Worker threads; overrides KPP_WORKERS.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One SPDE run from step initial data; writes the trace and snapshots.
    Simulate(SimulateArgs),
    /// Replicated front speeds over a list of noise amplitudes, with the correction-law fit.
    SpeedSweep(SweepArgs),
    /// Comparison-front speeds kappa(nu) against their bracket.
    Kappa(KappaArgs),
    /// Cutoff front speeds and the scaled residual of the leading law.
    CutoffSpeed(CutoffArgs),
    /// Branching-coalescing dual walkers, optionally checked against the SPDE.
    Dual(DualArgs),
    /// Extinction probability of the sqrt-u noise model against the Feller law.
    Extinction(ExtinctionArgs),
    /// Support confinement under injected mass.
    Confinement(ConfinementArgs),
    /// Oriented percolation reach and the contour bound.
    Percolation(PercolationArgs),
    /// Structural checks on a model preset or a model JSON file.
    ValidateModel(ValidateArgs),
    /// Collect the JSON and CSV outputs under a directory into one bundle.
    Report(ReportArgs),
}

#[derive(Copy, Clone, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum PresetArg {
    FisherWf,
    FisherSqrtU,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::FisherWf => Preset::FisherWf,
            PresetArg::FisherSqrtU => Preset::FisherSqrtU,
        }
    }
}

#[derive(Copy, Clone, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum FrontArg {
    R,
    MStar,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "fisher-wf")]
    preset: PresetArg,
    #[arg(long, default_value_t = 0.0)]
    eps: f64,
    #[arg(long, default_value_t = 8)]
    n: usize,
    /// Window width; defaults to 100, or 400 without noise.
    #[arg(long)]
    window: Option<f64>,
    #[arg(long, default_value_t = 50.0)]
    horizon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.5)]
    record_every: f64,
    /// Snapshot spacing; without it only the first and last states are kept.
    #[arg(long)]
    snapshot_every: Option<f64>,
    /// Level of the m* crossing.
    #[arg(long, default_value_t = 0.5)]
    level: f64,
    /// Field value tracked by the moving window; defaults to 0, or 1e-100 without noise.
    #[arg(long)]
    tracking_level: Option<f64>,
    #[arg(long, value_enum, default_value = "m-star")]
    front: FrontArg,
    #[arg(long, default_value = "out/simulate")]
    #[serde(skip)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct SweepArgs {
    /// JSON sweep configuration; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Noise amplitudes, comma separated.
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Four replicas per amplitude; the assert covers the per-row checks only.
    #[arg(long)]
    quick: bool,
    #[arg(long)]
    assert: bool,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct KappaArgs {
    /// Boundary slopes; defaults to e^-12, e^-16, e^-20, e^-24.
    #[arg(long, value_delimiter = ',')]
    nu: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Exit 3 unless every kappa lies in its bracket (to 1e-6).
    #[arg(long)]
    assert_bounds: bool,
    #[arg(long, default_value = "out/kappa")]
    #[serde(skip)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct CutoffArgs {
    /// Values of |log eps|; the cutoff sits at eps^2.
    #[arg(long, value_delimiter = ',', default_value = "4,6,8,10")]
    log_eps: Vec<f64>,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Exit 3 unless the scaled residuals vary by less than a factor 3.
    #[arg(long)]
    assert: bool,
    #[arg(long, default_value = "out/cutoff-speed")]
    #[serde(skip)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct DualArgs {
    #[arg(long, default_value_t = 0.5)]
    eps: f64,
    #[arg(long, default_value_t = 16)]
    n: usize,
    #[arg(long, default_value_t = 2.0)]
    horizon: f64,
    #[arg(long, default_value_t = 100)]
    replicas: usize,
    /// Starting positions, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    x0: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    c_coal: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also compare E[1 - u(t, x)] from the SPDE with the dual probability.
    #[arg(long)]
    check: bool,
    #[arg(long, default_value_t = 1.0)]
    x_eval: f64,
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    #[arg(long, default_value_t = 400)]
    replicas_pde: usize,
    #[arg(long, default_value_t = 4000)]
    replicas_dual: usize,
    #[arg(long)]
    assert: bool,
    #[arg(long, default_value = "out/dual")]
    #[serde(skip)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct ExtinctionArgs {
    #[arg(long, default_value_t = 1.0)]
    vartheta: f64,
    #[arg(long, default_value_t = 0.0)]
    b: f64,
    #[arg(long, default_value_t = 1.0)]
    m0: f64,
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    #[arg(long, default_value_t = 2000)]
    replicas: usize,
    #[arg(long, default_value_t = 32)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    assert: bool,
    #[arg(long, default_value = "out/extinction")]
    #[serde(skip)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct ConfinementArgs {
    #[arg(long, default_value_t = 1.0)]
    vartheta: f64,
    #[arg(long, default_value_t = 0.0)]
    b: f64,
    #[arg(long, default_value_t = 10.0)]
    r: f64,
    /// Injected atoms as `t:x:mass`, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0:0:1")]
    atoms: Vec<String>,
    #[arg(long, default_value_t = 200)]
    replicas: usize,
    #[arg(long, default_value_t = 16)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    assert: bool,
    #[arg(long, default_value = "out/confinement")]
    #[serde(skip)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct PercolationArgs {
    /// Open-bond probability; defaults to 1 - e^-10.
    #[arg(long)]
    p: Option<f64>,
    #[arg(long, default_value_t = 10)]
    m_max: usize,
    #[arg(long, default_value_t = 1000)]
    replicas: usize,
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    assert: bool,
    #[arg(long, default_value = "out/percolation")]
    #[serde(skip)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct ValidateArgs {
    #[arg(long, value_enum, default_value = "fisher-wf")]
    preset: PresetArg,
    /// Model JSON (`f` and `noise` fields) instead of a preset.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 3001)]
    grid: usize,
    #[arg(long)]
    assert: bool,
    #[arg(long, default_value = "out/validate-model")]
    #[serde(skip)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct ReportArgs {
    /// Directory holding earlier outputs.
    #[arg(long, default_value = "out")]
    dir: PathBuf,
    /// Bundle directory; defaults to `<dir>/report`.
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

/// A check requested with `--assert` did not hold.
#[derive(Debug)]
struct AssertFailed(String);

impl std::fmt::Display for AssertFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "check failed: {}", self.0)
    }
}

impl std::error::Error for AssertFailed {}

fn check(ok: bool, what: impl Into<String>) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(AssertFailed(what.into()).into())
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let model = Preset::from(a.preset).model(a.eps)?;
    let noiseless = a.eps == 0.0;
    let window = a.window.unwrap_or(if noiseless { 400.0 } else { 100.0 });
    let x_min = -(window / 8.0).round();
    let grid = LatticeGrid::new(a.n, x_min, window, Boundary::WholeLineWindow { theta_left: 1.0 })?;
    let state = init_front_data(grid, &InitProfile::Step { x0: 0.0 })?;
    let p = StepParams::for_grid(a.n, a.seed);
    let base = if noiseless { RunOptions::deterministic(a.horizon) } else { RunOptions::new(a.horizon) };
    let mut snapshot_times = vec![0.0, a.horizon];
    if let Some(every) = a.snapshot_every.filter(|e| *e > 0.0) {
        let k = (a.horizon / every).floor() as usize;
        snapshot_times = (0..=k).map(|i| i as f64 * every).collect();
        if *snapshot_times.last().unwrap() < a.horizon - 1e-9 {
            snapshot_times.push(a.horizon);
        }
    }
    let opts = RunOptions {
        record_every: a.record_every,
        level: a.level,
        tracking_level: a.tracking_level.unwrap_or(base.tracking_level),
        snapshot_times,
        ..base
    };
    let rec = run(state, &model, &p, &opts, &mut [])?;
    rec.save(&a.out)?;
    write_json(&a.out, "config.json", a)?;
    let which = match a.front {
        FrontArg::R => FrontUse::R,
        FrontArg::MStar => FrontUse::MStar,
    };
    match estimate_speed(&rec.trace, default_burn_in(a.horizon), which) {
        Ok(s) => {
            write_json(&a.out, "speed.json", &s)?;
            println!("speed {:.6} +- {:.6} over t in [{}, {}]", s.v_hat, s.ci_half_width, s.t_window.0, s.t_window.1);
        }
        Err(e) => println!("no speed estimate: {e}"),
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn speed_sweep(a: &SweepArgs) -> Result<()> {
    let mut cfg = match (&a.config, &a.eps) {
        (Some(path), _) => SweepConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
        (None, Some(eps)) => SweepConfig::new(eps.clone()),
        (None, None) => SweepConfig::new([1.5, 2.0, 2.5, 3.0, 4.0].iter().map(|l: &f64| (-l).exp()).collect()),
    };
    if let (Some(_), Some(eps)) = (&a.config, &a.eps) {
        cfg.eps = eps.clone();
    }
    if a.quick {
        cfg.replicas = 4;
    }
    if let Some(r) = a.replicas {
        cfg.replicas = r;
    }
    if let Some(h) = a.horizon {
        cfg.horizon = h;
    }
    if let Some(n) = a.n {
        cfg.n = n;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let out = a.out.clone().or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out/speed-sweep"));
    cfg.out_dir = None;
    let result = run_sweep(&cfg)?;
    result.save(&out)?;
    let checks = trend_checks(&result);
    write_json(&out, "checks.json", &checks)?;
    println!("{:>10} {:>10} {:>9} {:>4} {:>10} {:>10}", "eps", "v_hat", "ci", "reps", "2-pi2/L^2", "flags");
    for r in &result.rows {
        println!(
            "{:>10.6} {:>10.6} {:>9.6} {:>4} {:>10.6} {}",
            r.eps,
            r.v_hat,
            r.ci,
            r.replicas,
            r.bd_leading,
            r.flags.join(";")
        );
    }
    match &result.fit {
        Some(f) => println!("fit: A = {:.4}, B = {:.4}; single-basis A = {:.4} (pi^2 = {:.4})", f.a, f.b, f.single_a, PI * PI),
        None => println!("fit: {}", result.fit_error.clone().unwrap_or_default()),
    }
    println!("wrote {}", out.display());
    if a.assert {
        for note in &checks.notes {
            println!("  {note}");
        }
        let mut ok = checks.below_two && checks.above_half_leading;
        println!("{} every v_hat below 2 by more than its CI", verdict(checks.below_two));
        println!("{} every deficit above half the leading term", verdict(checks.above_half_leading));
        if !a.quick {
            let fit_ok = checks.fit_in_range == Some(true);
            println!("{} v_hat nonincreasing in eps", verdict(checks.monotone));
            println!("{} single-basis A in [0.3 pi^2, 3 pi^2]", verdict(fit_ok));
            ok &= checks.monotone && fit_ok;
        }
        check(ok, "speed sweep trend")?;
    }
    Ok(())
}

fn kappa(a: &KappaArgs) -> Result<()> {
    let nus = a.nu.clone().unwrap_or_else(|| [12.0, 16.0, 20.0, 24.0].iter().map(|l: &f64| (-l).exp()).collect());
    let rows = kappa_table(&nus, a.tol, 1e-6)?;
    std::fs::create_dir_all(&a.out)?;
    let mut w = csv::Writer::from_path(a.out.join("kappa.csv"))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    write_json(&a.out, "kappa.json", &rows)?;
    write_json(&a.out, "config.json", a)?;
    for r in &rows {
        let tag = if a.assert_bounds { format!("{} ", verdict(r.inside)) } else { String::new() };
        println!("{tag}nu = {:.6e}: kappa = {:.9} in [{:.6}, {:.6}]", r.nu, r.kappa, r.lower, r.upper);
    }
    if a.assert_bounds {
        check(rows.iter().all(|r| r.inside), "kappa outside its bracket")?;
    }
    Ok(())
}

fn cutoff_speed(a: &CutoffArgs) -> Result<()> {
    let eps: Vec<f64> = a.log_eps.iter().map(|l| (-l.abs()).exp()).collect();
    let (rows, spread) = cutoff_table(&eps, a.tol)?;
    std::fs::create_dir_all(&a.out)?;
    let mut w = csv::Writer::from_path(a.out.join("cutoff.csv"))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    #[derive(Serialize)]
    struct Out<'a> {
        rows: &'a [kpp_core::wave::CutoffRow],
        spread: f64,
    }
    write_json(&a.out, "cutoff.json", &Out { rows: &rows, spread })?;
    write_json(&a.out, "config.json", a)?;
    for r in &rows {
        println!(
            "eps = {:.6e}: v_cutoff = {:.9}, leading = {:.9}, scaled residual = {:.5}",
            r.eps, r.v_cutoff, r.leading, r.scaled_residual
        );
    }
    println!("max/min scaled residual = {spread:.4}");
    if a.assert {
        let ok = spread.is_finite() && spread < 3.0;
        println!("{} scaled residuals within a factor 3", verdict(ok));
        check(ok, format!("scaled residual spread {spread:.4}"))?;
    }
    Ok(())
}

fn dual(a: &DualArgs) -> Result<()> {
    let cfg = DualRunConfig { c_coal: a.c_coal, ..DualRunConfig::new(a.x0.clone(), a.eps * a.eps, a.n, a.horizon, a.replicas, a.seed) };
    let runs = run_dual(&cfg)?;
    std::fs::create_dir_all(&a.out)?;
    write_dual_csv(&runs, std::fs::File::create(a.out.join("dual.csv"))?)?;
    write_json(&a.out, "config.json", a)?;
    let last: Vec<f64> = runs.iter().map(|r| *r.counts.last().unwrap_or(&0) as f64).collect();
    println!("mean final population {:.3} over {} replicas", last.iter().sum::<f64>() / last.len().max(1) as f64, runs.len());
    if a.check {
        let model = ModelSpec::fisher_wright_fisher(a.eps);
        let dc = DualityConfig {
            x_eval: a.x_eval,
            t: a.t,
            eps: a.eps,
            n: a.n,
            replicas_pde: a.replicas_pde,
            replicas_dual: a.replicas_dual,
            seed: a.seed,
            c_coal: a.c_coal,
        };
        let res = duality_check(&model, &dc)?;
        res.save_json(&a.out.join("duality.json"))?;
        println!(
            "{}E[1-u] = {:.4} +- {:.4}, dual = {:.4} +- {:.4}",
            if a.assert { format!("{} ", verdict(res.agrees_3se)) } else { String::new() },
            res.lhs.value,
            res.lhs.se,
            res.rhs.value,
            res.rhs.se
        );
        if a.assert {
            check(res.agrees_3se, "duality disagreement beyond 3 se")?;
        }
    }
    Ok(())
}

fn extinction(a: &ExtinctionArgs) -> Result<()> {
    let e = ExtinctionExperiment::new(a.vartheta, a.b, a.m0, a.t, a.replicas, a.n, a.seed);
    let rep = extinction_report(&e)?;
    write_json(&a.out, "extinction.json", &rep)?;
    write_json(&a.out, "config.json", a)?;
    println!(
        "extinct {:.4} +- {:.4}; Feller {:.4}; printed constant {:.4}; mean mass {:.4}",
        rep.extinction.value, rep.extinction.se, rep.feller_closed_form, rep.printed_constant, rep.mean_mass.value
    );
    if a.assert {
        println!("{} agreement with the Feller law", verdict(rep.matches_feller));
        check(rep.matches_feller, "extinction fraction off the Feller law")?;
    }
    Ok(())
}

fn parse_atom(s: &str) -> Result<MassAtom> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(kpp_core::Error::Config(format!("atom `{s}` is not t:x:mass")).into());
    }
    let num = |p: &str| p.trim().parse::<f64>().map_err(|e| kpp_core::Error::Config(format!("atom `{s}`: {e}")));
    Ok(MassAtom { t: num(parts[0])?, x: num(parts[1])?, mass: num(parts[2])? })
}

fn confinement(a: &ConfinementArgs) -> Result<()> {
    let atoms = a.atoms.iter().map(|s| parse_atom(s)).collect::<Result<Vec<_>>>()?;
    let c = ConfinementExperiment {
        base: ExtinctionExperiment::new(a.vartheta, a.b, 0.0, 1.0, a.replicas, a.n, a.seed),
        atoms,
        r: a.r,
    };
    let rep = confinement_report(&c)?;
    write_json(&a.out, "confinement.json", &rep)?;
    write_json(&a.out, "config.json", a)?;
    println!(
        "confined {:.4} +- {:.4}; printed lower bound {:.4}",
        rep.confined.value, rep.confined.se, rep.printed_lower_bound
    );
    if a.assert {
        println!("{} bound honoured", verdict(rep.bound_honoured));
        check(rep.bound_honoured, "confinement below the printed bound")?;
    }
    Ok(())
}

fn percolation(a: &PercolationArgs) -> Result<()> {
    let cfg = PercolationConfig { p: a.p.unwrap_or(1.0 - (-10.0f64).exp()), m_max: a.m_max, replicas: a.replicas, delta: a.delta };
    let res = percolation_speed_mc(&cfg, a.seed)?;
    let bound = contour_bound(cfg.p, a.m_max as u32, a.delta)?;
    std::fs::create_dir_all(&a.out)?;
    res.write_csv(std::fs::File::create(a.out.join("percolation.csv"))?)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        config: &'a PercolationConfig,
        ratio: kpp_core::stats::Estimate,
        min_ratio: f64,
        tail: kpp_core::stats::Estimate,
        dead_fraction: f64,
        contour_bound: kpp_core::survival::ContourBound,
        bound_honoured: bool,
    }
    let honoured = res.tail.value <= bound.value + 3.0 * res.tail.se;
    let summary = Summary {
        config: &cfg,
        ratio: res.ratio,
        min_ratio: res.min_ratio,
        tail: res.tail,
        dead_fraction: res.dead_fraction,
        contour_bound: bound,
        bound_honoured: honoured,
    };
    write_json(&a.out, "percolation.json", &summary)?;
    write_json(&a.out, "config.json", a)?;
    println!(
        "N_m/m = {:.4} +- {:.4}; P(N_m < m(1-delta)) = {:.4} +- {:.4}; contour bound {:.4e}",
        res.ratio.value, res.ratio.se, res.tail.value, res.tail.se, bound.value
    );
    if a.assert {
        println!("{} tail within the contour bound", verdict(honoured));
        check(honoured, "percolation tail above the contour bound")?;
    }
    Ok(())
}

fn validate(a: &ValidateArgs) -> Result<()> {
    let model = match &a.model {
        Some(path) => {
            #[derive(serde::Deserialize)]
            struct Raw {
                f: kpp_core::model::Nonlinearity,
                noise: kpp_core::model::NoiseSpec,
            }
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let raw: Raw = serde_json::from_str(&text).map_err(|e| kpp_core::Error::Config(format!("model file: {e}")))?;
            ModelSpec::new(raw.f, raw.noise)?
        }
        None => Preset::from(a.preset).model(1.0)?,
    };
    let rep = validate_model(&model, a.grid)?;
    write_json(&a.out, "validation.json", &rep)?;
    write_json(&a.out, "config.json", a)?;
    for c in &rep.checks {
        println!("{} {}: {}", verdict(c.passed), c.name, c.detail);
    }
    if a.assert {
        check(rep.all_passed, "model validation")?;
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    kpp_core::par::init_workers(cli.workers);
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::SpeedSweep(a) => speed_sweep(a),
        Command::Kappa(a) => kappa(a),
        Command::CutoffSpeed(a) => cutoff_speed(a),
        Command::Dual(a) => dual(a),
        Command::Extinction(a) => extinction(a),
        Command::Confinement(a) => confinement(a),
        Command::Percolation(a) => percolation(a),
        Command::ValidateModel(a) => validate(a),
        Command::Report(a) => {
            let out = a.out.clone().unwrap_or_else(|| a.dir.join("report"));
            let n = report::bundle(&a.dir, &out)?;
            println!("bundled {n} files into {}", out.display());
            Ok(())
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<AssertFailed>().is_some() {
        return 3;
    }
    use kpp_core::Error as E;
    match err.downcast_ref::<E>() {
        Some(
            E::Blowup { .. }
            | E::WindowOverrun { .. }
            | E::Estimation(_)
            | E::NonConvergence(_)
            | E::Inversion(_)
            | E::Profile(_)
            | E::Fit(_),
        ) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
