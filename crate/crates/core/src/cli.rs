//! Command-line front end: `generate`, `fit`, `rollout`, `diagnose` and
//! `experiment`.

use std::ffi::OsString;
use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use crate::config::{IcKind, RunConfig};
use crate::diagnostics::{
    bandwidth_study, conservation_error, extrema_error, mse, resolution_consistency_check,
    DiagnosticsReport,
};
use crate::diffeo::MapChain;
use crate::error::{Error, Result};
use crate::field::{
    energy_spectrum, simpson_integral, AnalyticSampler, BilinearSampler, Grid, HermiteField,
    PeriodicField, ScalarSampler, SharedSampler,
};
use crate::io::{self, ArchiveKind, StoredLifter};
use crate::lifting::{
    build_dataset, fit_spectral_lifter, FitMode, FitReport, Lifter, LifterKind, OracleLifter,
    RegistrationLifter, SpectralLifter,
};
use crate::rollout::{run, RolloutConfig, RolloutState};
use crate::solvers::{
    advect_cmm, euler_cmm, random_vorticity, vorticity_sampler, ConstantVelocity, ExpressionField,
    SlottedCylinder, Trajectory,
};

/// Share of trajectories used for training by `fit` and `experiment euler`.
pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Parser)]
#[command(name = "diffeoflow", version, about = "Flow-map learning on the 2-torus")]
pub struct Cli {
    /// key=value configuration file; defaults apply to missing keys
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides out.dir)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker thread cap
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed (overrides ic.seed)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate reference trajectories from the configured initial condition
    Generate,
    /// Fit a spectral lifter on trajectory archives
    Fit {
        #[arg(required = true)]
        data: Vec<PathBuf>,
    },
    /// Roll out a lifter from an initial condition
    Rollout {
        /// Lifter archive, or a trajectory archive for oracle/registration lifters
        #[arg(long)]
        lifter: PathBuf,
        /// Field or trajectory archive holding the initial condition
        #[arg(long)]
        ic: Option<PathBuf>,
        /// Number of steps (default time.T / (time.dt · solver.remap_every))
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Write diagnostics CSVs for trajectory archives
    Diagnose {
        #[arg(required = true)]
        archives: Vec<PathBuf>,
    },
    /// End-to-end pipeline
    Experiment {
        #[arg(value_enum)]
        name: Experiment,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    Advection,
    Euler,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code: 0 on success, 1 on runtime errors, 2 on usage errors.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut c = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = &cli.out {
        c.out_dir = o.clone();
    }
    if let Some(s) = cli.seed {
        c.ic_seed = s;
    }
    Ok(c)
}

pub fn execute(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        // a second initialisation in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    fs::create_dir_all(&cfg.out_dir)?;
    match &cli.command {
        Command::Generate => generate(&cfg).map(|_| ()),
        Command::Fit { data } => fit(&cfg, data).map(|_| ()),
        Command::Rollout { lifter, ic, steps } => rollout_cmd(&cfg, lifter, ic.as_deref(), *steps),
        Command::Diagnose { archives } => diagnose(&cfg, archives),
        Command::Experiment { name } => match name {
            Experiment::Advection => experiment_advection(&cfg),
            Experiment::Euler => experiment_euler(&cfg),
        },
    }
}

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.out_dir.join(name)
}

fn write_manifest(cfg: &RunConfig, command: &str) -> Result<()> {
    let text = format!("# diffeoflow {command}\n{}", cfg.to_text());
    fs::write(out_path(cfg, &format!("{command}.config")), text)?;
    Ok(())
}

/// Reference trajectory for seed `seed`: Euler for random vorticity,
/// translation by `(2π, 0)` for the advected initial conditions.
pub fn simulate(cfg: &RunConfig, seed: u64) -> Result<Trajectory> {
    let grid = cfg.grid();
    let mut traj = match cfg.ic_kind {
        IcKind::RandomVorticity => {
            let w0 = random_vorticity(grid, cfg.ic_k, seed)?;
            euler_cmm(&w0, cfg.t_final, cfg.dt, cfg.solver_remap_every, grid)?
        }
        IcKind::SlottedCylinder => advect_cmm(
            &ConstantVelocity([TAU, 0.0]),
            &SlottedCylinder::default(),
            cfg.t_final,
            cfg.dt,
            cfg.solver_remap_every,
            grid,
        )?,
        IcKind::Expression => advect_cmm(
            &ConstantVelocity([TAU, 0.0]),
            &ExpressionField::parse(&cfg.ic_expr)?,
            cfg.t_final,
            cfg.dt,
            cfg.solver_remap_every,
            grid,
        )?,
    };
    traj.meta.seed = Some(seed);
    Ok(traj)
}

pub fn generate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for i in 0..cfg.ic_count {
        let seed = cfg.ic_seed + i as u64;
        let traj = simulate(cfg, seed)?;
        let p = out_path(cfg, &format!("traj_{i:03}.dflo"));
        io::save_trajectory(&p, &traj)?;
        info!("wrote {} ({} frames)", p.display(), traj.len());
        paths.push(p);
    }
    write_manifest(cfg, "generate")?;
    Ok(paths)
}

fn fit_report_csv(report: &FitReport) -> Result<DiagnosticsReport> {
    let mut r = DiagnosticsReport::new();
    r.push("train_samples", 0.0, report.train_samples as f64)?;
    r.push("test_samples", 0.0, report.test_samples as f64)?;
    for (name, v) in [
        ("train_map_mse", report.train_map_mse),
        ("test_map_mse", report.test_map_mse),
        ("test_baseline_mse", report.test_baseline_mse),
    ] {
        if let Some(v) = v {
            r.push(name, 0.0, v)?;
        }
    }
    for (k, l) in report.loss_history.iter().enumerate() {
        r.push("field_loss", k as f64, *l)?;
    }
    Ok(r)
}

fn fit_lifter(cfg: &RunConfig, trajs: Vec<Trajectory>, fraction: f64) -> Result<(SpectralLifter, FitReport)> {
    if cfg.lifter_kind != LifterKind::Spectral {
        return Err(Error::Config(format!(
            "lifter.kind={} is not fitted; pass a trajectory archive to rollout instead",
            cfg.lifter_kind
        )));
    }
    let ds = build_dataset(trajs, cfg.lifter_window, fraction, cfg.ic_seed)?;
    if ds.train().is_empty() {
        return Err(Error::Dataset("no training samples".into()));
    }
    let mode = if ds.has_maps() {
        FitMode::MapSupervised
    } else {
        FitMode::FieldMismatch {
            lambda: cfg.reg_lambda,
            max_iters: cfg.reg_max_iters,
            step_init: 0.1,
        }
    };
    fit_spectral_lifter(&ds, cfg.lifter_k_feat, cfg.lifter_ridge, mode)
}

pub fn fit(cfg: &RunConfig, data: &[PathBuf]) -> Result<PathBuf> {
    let trajs = data.iter().map(|p| io::load_trajectory(p)).collect::<Result<Vec<_>>>()?;
    let fraction = if trajs.len() == 1 { 1.0 } else { TRAIN_FRACTION };
    let (lifter, report) = fit_lifter(cfg, trajs, fraction)?;
    let p = out_path(cfg, "lifter.dflo");
    io::save_lifter(&p, &StoredLifter::Spectral(lifter))?;
    fit_report_csv(&report)?.write_csv(&out_path(cfg, "fit_report.csv"))?;
    write_manifest(cfg, "fit")?;
    Ok(p)
}

/// Sampler of an initial field: the C¹ spectral interpolant for vorticity,
/// bilinear otherwise (which keeps pullbacks within the initial range).
fn field_sampler(cfg: &RunConfig, field: &PeriodicField) -> Result<SharedSampler> {
    Ok(match cfg.ic_kind {
        IcKind::RandomVorticity => Arc::new(vorticity_sampler(field)?),
        _ => Arc::new(BilinearSampler::new(field.clone())?),
    })
}

fn config_sampler(cfg: &RunConfig, grid: Grid) -> Result<SharedSampler> {
    Ok(match cfg.ic_kind {
        IcKind::RandomVorticity => {
            let w0 = random_vorticity(grid, cfg.ic_k, cfg.ic_seed)?;
            Arc::new(vorticity_sampler(&w0)?)
        }
        IcKind::SlottedCylinder => Arc::new(SlottedCylinder::default()),
        IcKind::Expression => Arc::new(ExpressionField::parse(&cfg.ic_expr)?),
    })
}

fn load_initial_field(path: &Path) -> Result<PeriodicField> {
    match io::peek_header(path)?.kind {
        ArchiveKind::Field => io::load_field(path),
        ArchiveKind::Trajectory => Ok(io::load_trajectory(path)?.frames[0].clone()),
        other => Err(Error::Config(format!(
            "{} holds a {other:?} archive, not an initial condition",
            path.display()
        ))),
    }
}

fn frame_stats(traj: &Trajectory) -> Result<DiagnosticsReport> {
    let mut r = DiagnosticsReport::new();
    for (t, f) in traj.times().into_iter().zip(&traj.frames) {
        r.push("min", t, f.min())?;
        r.push("max", t, f.max())?;
        r.push("mean", t, f.mean())?;
    }
    Ok(r)
}

fn rollout_cmd(cfg: &RunConfig, lifter_path: &Path, ic: Option<&Path>, steps: Option<usize>) -> Result<()> {
    let mut reference: Option<Trajectory> = None;
    let lifter: Box<dyn Lifter> = match io::peek_header(lifter_path)?.kind {
        ArchiveKind::Lifter => Box::new(io::load_lifter(lifter_path)?),
        ArchiveKind::Trajectory => {
            let traj = io::load_trajectory(lifter_path)?;
            let l: Box<dyn Lifter> = match cfg.lifter_kind {
                LifterKind::Oracle => Box::new(OracleLifter::from_trajectory(&traj, 0, cfg.lifter_window)?),
                LifterKind::Registration => Box::new(RegistrationLifter::new(
                    traj.frames[1..].to_vec(),
                    cfg.registration(),
                    cfg.lifter_window,
                )?),
                other => {
                    return Err(Error::Config(format!(
                        "lifter.kind={other} needs a lifter archive, got a trajectory"
                    )))
                }
            };
            reference = Some(traj);
            l
        }
        other => {
            return Err(Error::Config(format!(
                "{} holds a {other:?} archive, not a lifter",
                lifter_path.display()
            )))
        }
    };
    let grid = lifter.grid();
    let sampler = match (ic, &reference) {
        (Some(p), _) => field_sampler(cfg, &load_initial_field(p)?)?,
        (None, Some(t)) => field_sampler(cfg, &t.frames[0])?,
        (None, None) => config_sampler(cfg, grid)?,
    };
    let n = match steps {
        Some(n) => n,
        None => (cfg.t_final / cfg.frame_dt()).round() as usize,
    };
    let rc = RolloutConfig {
        scheme: cfg.rollout_scheme,
        remap_every: cfg.rollout_remap_every,
        fd_eps: None,
        grid,
        dt: cfg.frame_dt(),
    };
    let state = RolloutState::new(sampler, rc, lifter.window())?;
    let (traj, chain) = run(state, lifter.as_ref(), n)?;
    io::save_trajectory(&out_path(cfg, "rollout.dflo"), &traj)?;
    io::save_chain(&out_path(cfg, "rollout_chain.dflo"), &chain)?;
    frame_stats(&traj)?.write_csv(&out_path(cfg, "rollout_frames.csv"))?;
    write_manifest(cfg, "rollout")
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().replace([',', '\n'], "_"))
        .unwrap_or_else(|| "archive".into())
}

fn diagnose(cfg: &RunConfig, archives: &[PathBuf]) -> Result<()> {
    if archives.is_empty() {
        return Err(Error::Config("no archives given".into()));
    }
    let mut report = DiagnosticsReport::new();
    let mut loaded: Vec<(String, Trajectory)> = Vec::new();
    for p in archives {
        loaded.push((stem(p), io::load_trajectory(p)?));
    }
    for (name, traj) in &loaded {
        for (t, f) in traj.times().into_iter().zip(&traj.frames) {
            report.push(&format!("{name}.mass"), t, simpson_integral(f)?)?;
            let (lo, hi) = extrema_error(f, &traj.frames[0]);
            report.push(&format!("{name}.extrema_error"), t, lo.max(hi))?;
        }
        for (k, e) in energy_spectrum(traj.last())? {
            report.push(&format!("{name}.spectrum"), k as f64, e)?;
        }
        if let Some(chain) = &traj.submaps {
            diagnose_chain(cfg, name, traj, chain, &mut report)?;
        }
    }
    if let Some((ref_name, reference)) = loaded.first() {
        for (name, traj) in loaded.iter().skip(1) {
            if traj.grid != reference.grid {
                continue;
            }
            for (k, (a, b)) in traj.frames.iter().zip(&reference.frames).enumerate() {
                report.push(&format!("{name}.mse_vs_{ref_name}"), k as f64 * traj.dt, mse(a, b)?)?;
            }
        }
    }
    report.write_csv(&out_path(cfg, "diagnostics.csv"))?;
    write_manifest(cfg, "diagnose")
}

fn diagnose_chain(
    cfg: &RunConfig,
    name: &str,
    traj: &Trajectory,
    chain: &MapChain,
    report: &mut DiagnosticsReport,
) -> Result<()> {
    let grid = traj.grid;
    let w0 = HermiteField::from_field_spectral(&traj.frames[0])?;
    let a0 = AnalyticSampler(move |x: f64, y: f64| w0.sample([x, y]).powi(2));
    let quad = Grid::square(cfg.diag_quad_n)?;
    let norm = simpson_integral(&PeriodicField::from_fn(quad, |x, y| a0.sample([x, y]).abs()))?;
    let t_end = chain.len() as f64 * traj.dt;
    let err = conservation_error(chain, &a0, quad)?;
    report.push(&format!("{name}.conservation_error"), t_end, err)?;
    if norm > 0.0 {
        report.push(&format!("{name}.conservation_error_rel"), t_end, err.abs() / norm)?;
    }
    let fine = Grid::new(2 * grid.nx(), 2 * grid.ny())?;
    let frame0 = BilinearSampler::new(traj.frames[0].clone())?;
    let consistency = resolution_consistency_check(chain, &frame0, grid, fine)?;
    report.push(&format!("{name}.resolution_consistency"), t_end, consistency)?;

    let prefix = chain.prefix(5);
    let samples = fine;
    let l = prefix
        .maps()
        .iter()
        .map(|m| {
            let single = MapChain::from_maps(vec![m.clone()])?;
            Ok(bandwidth_study(&single, cfg.diag_eps, 0.0, samples)?[0].measured)
        })
        .collect::<Result<Vec<usize>>>()?
        .into_iter()
        .max()
        .unwrap_or(0);
    for p in bandwidth_study(&prefix, cfg.diag_eps, l as f64, samples)? {
        let d = p.depth as f64;
        report.push(&format!("{name}.bandwidth_measured"), d, p.measured as f64)?;
        report.push(&format!("{name}.bandwidth_bound"), d, p.bound)?;
    }
    Ok(())
}

/// Learns the translation lifter from a smooth advected field and transports
/// the slotted cylinder with it; writes error and mass series.
fn experiment_advection(cfg: &RunConfig) -> Result<()> {
    let grid = cfg.grid();
    let train_cfg = RunConfig {
        ic_kind: IcKind::Expression,
        ic_expr: "math::exp(math::sin(x) + 0.5 * math::cos(2 * y))".into(),
        ..cfg.clone()
    };
    let train = simulate(&train_cfg, cfg.ic_seed)?;
    let (lifter, fit_report) = fit_lifter(cfg, vec![train], 1.0)?;
    io::save_lifter(&out_path(cfg, "advection_lifter.dflo"), &StoredLifter::Spectral(lifter.clone()))?;
    fit_report_csv(&fit_report)?.write_csv(&out_path(cfg, "advection_fit.csv"))?;

    let cylinder = SlottedCylinder::default();
    let u0 = PeriodicField::from_fn(grid, |x, y| cylinder.sample([x, y]));
    let sampler: SharedSampler = Arc::new(BilinearSampler::new(u0.clone())?);
    let n = (cfg.t_final / cfg.frame_dt()).round() as usize;
    let rc = RolloutConfig {
        scheme: cfg.rollout_scheme,
        remap_every: cfg.rollout_remap_every,
        fd_eps: None,
        grid,
        dt: cfg.frame_dt(),
    };
    let state = RolloutState::new(sampler, rc, lifter.window())?;
    let (traj, _) = run(state, &lifter, n)?;
    io::save_trajectory(&out_path(cfg, "advection_rollout.dflo"), &traj)?;

    let mass0 = simpson_integral(&u0)?;
    let mut report = DiagnosticsReport::new();
    for (t, f) in traj.times().into_iter().zip(&traj.frames) {
        let exact = PeriodicField::from_fn(grid, |x, y| cylinder.sample([x - TAU * t, y]));
        report.push("mse_vs_exact", t, mse(f, &exact)?)?;
        report.push("mass_error_rel", t, (simpson_integral(f)? - mass0) / mass0)?;
        let (lo, hi) = extrema_error(f, &u0);
        report.push("extrema_error", t, lo.max(hi))?;
    }
    report.write_csv(&out_path(cfg, "advection_errors.csv"))?;
    write_manifest(cfg, "experiment_advection")
}

/// Fits a spectral lifter on Euler trajectories and compares its rollout
/// and the oracle rollout against a held-out solver trajectory.
fn experiment_euler(cfg: &RunConfig) -> Result<()> {
    if cfg.ic_kind != IcKind::RandomVorticity {
        return Err(Error::Config("experiment euler needs ic.kind=random_vorticity".into()));
    }
    let count = cfg.ic_count.max(2);
    let trajs = (0..count)
        .map(|i| simulate(cfg, cfg.ic_seed + i as u64))
        .collect::<Result<Vec<_>>>()?;
    let ds = build_dataset(trajs.clone(), cfg.lifter_window, TRAIN_FRACTION, cfg.ic_seed)?;
    let test_id = ds
        .test_trajectories()
        .first()
        .copied()
        .unwrap_or(ds.trajectories().len() - 1);
    let truth = ds.trajectories()[test_id].clone();
    let (lifter, fit_report) = fit_lifter(cfg, trajs, TRAIN_FRACTION)?;
    io::save_lifter(&out_path(cfg, "euler_lifter.dflo"), &StoredLifter::Spectral(lifter.clone()))?;
    fit_report_csv(&fit_report)?.write_csv(&out_path(cfg, "euler_fit.csv"))?;

    let start = cfg.lifter_window - 1;
    let n = truth.len() - 1 - start;
    let rc = RolloutConfig {
        scheme: cfg.rollout_scheme,
        remap_every: cfg.rollout_remap_every,
        fd_eps: None,
        grid: truth.grid,
        dt: truth.dt,
    };
    let sampler: SharedSampler = Arc::new(vorticity_sampler(&truth.frames[start])?);
    let mut learned = RolloutState::new(sampler.clone(), rc, lifter.window())?;
    learned.seed_history(&truth.frames[..start])?;
    let (learned, _) = run(learned, &lifter, n)?;
    let oracle = OracleLifter::from_trajectory(&truth, start, lifter.window())?;
    let (oracle_traj, _) = run(RolloutState::new(sampler, rc, lifter.window())?, &oracle, n)?;

    let mut report = DiagnosticsReport::new();
    for k in 0..=n {
        let t = k as f64 * truth.dt;
        let reference = &truth.frames[start + k];
        report.push("mse_learned", t, mse(&learned.frames[k], reference)?)?;
        report.push("mse_oracle", t, mse(&oracle_traj.frames[k], reference)?)?;
    }
    report.write_csv(&out_path(cfg, "euler_errors.csv"))?;
    let mut spectra = DiagnosticsReport::new();
    for (name, f) in [("truth", truth.last()), ("learned", learned.last()), ("oracle", oracle_traj.last())] {
        for (k, e) in energy_spectrum(f)? {
            spectra.push(name, k as f64, e)?;
        }
    }
    spectra.write_csv(&out_path(cfg, "euler_spectrum.csv"))?;
    io::save_trajectory(&out_path(cfg, "euler_rollout.dflo"), &learned)?;
    write_manifest(cfg, "experiment_euler")
}
