//! Autoregressive time stepping with a lifter: full composition and the
//! semi-Lagrangian variant with periodic projection.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffeo::{project, push_through, DiffeoMap, MapChain, PAR_CHUNK};
use crate::error::{Error, Result};
use crate::field::{wrap, Grid, PeriodicField, ScalarSampler, SharedSampler};
use crate::lifting::Lifter;
use crate::solvers::{pull_back, Trajectory, TrajectoryMeta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "compose")]
    Compose,
    #[serde(rename = "semilag")]
    SemiLagrangian,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Compose => "compose",
            Scheme::SemiLagrangian => "semilag",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "compose" => Ok(Scheme::Compose),
            "semilag" => Ok(Scheme::SemiLagrangian),
            other => Err(Error::Config(format!(
                "unknown rollout scheme {other:?} (expected compose or semilag)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutConfig {
    pub scheme: Scheme,
    /// Lifted maps per projection in the semi-Lagrangian scheme.
    pub remap_every: usize,
    /// Stencil width of the projection; `None` uses `Δx / 100`.
    pub fd_eps: Option<f64>,
    pub grid: Grid,
    /// Time between frames, only used to label the trajectory.
    pub dt: f64,
}

impl RolloutConfig {
    pub fn compose(grid: Grid, dt: f64) -> Self {
        Self {
            scheme: Scheme::Compose,
            remap_every: 1,
            fd_eps: None,
            grid,
            dt,
        }
    }

    pub fn semi_lagrangian(grid: Grid, dt: f64, remap_every: usize) -> Self {
        Self {
            scheme: Scheme::SemiLagrangian,
            remap_every,
            fd_eps: None,
            grid,
            dt,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.remap_every == 0 {
            return Err(Error::Config("remap_every must be at least 1".into()));
        }
        if let Some(e) = self.fd_eps {
            if !(e > 0.0) || !e.is_finite() {
                return Err(Error::Config(format!("fd_eps must be positive, got {e}")));
            }
        }
        if !(self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        Ok(())
    }

    fn fd_eps(&self) -> f64 {
        self.fd_eps
            .unwrap_or_else(|| self.grid.dx().min(self.grid.dy()) / 100.0)
    }
}

/// Samples `u0 ∘ (macro ∘ working)` at the vertices of `grid`; the newest
/// working map acts first.
fn pull_back_split(
    u0: &dyn ScalarSampler,
    chain: &MapChain,
    working: &[DiffeoMap],
    grid: Grid,
) -> Result<PeriodicField> {
    if working.is_empty() {
        return pull_back(u0, chain, grid);
    }
    let mut q: Vec<[f64; 2]> = grid.vertices().iter().map(|p| [wrap(p[0]), wrap(p[1])]).collect();
    push_through(working, &mut q);
    let values: Vec<f64> = chain
        .evaluate(&q)
        .par_iter()
        .with_min_len(PAR_CHUNK)
        .map(|&p| u0.sample(p))
        .collect();
    PeriodicField::new(grid, 1, values)
}

/// Evolving backward map of a rollout and its cached current frame.
pub struct RolloutState {
    chain: MapChain,
    working: Vec<DiffeoMap>,
    u0: SharedSampler,
    frame: PeriodicField,
    history: VecDeque<PeriodicField>,
    window: usize,
    step: usize,
    config: RolloutConfig,
}

impl fmt::Debug for RolloutState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RolloutState")
            .field("chain_len", &self.chain.len())
            .field("working_len", &self.working.len())
            .field("window", &self.window)
            .field("step", &self.step)
            .field("config", &self.config)
            .finish()
    }
}

impl RolloutState {
    /// Starts at `u0` sampled on the config grid. The lifter history is
    /// padded with copies of the initial frame.
    pub fn new(u0: SharedSampler, config: RolloutConfig, window: usize) -> Result<Self> {
        config.validate()?;
        if window == 0 {
            return Err(Error::Lifter("window must be at least 1".into()));
        }
        let chain = MapChain::new();
        let frame = pull_back(u0.as_ref(), &chain, config.grid)?;
        let history = std::iter::repeat(frame.clone()).take(window).collect();
        Ok(Self {
            chain,
            working: Vec::new(),
            u0,
            frame,
            history,
            window,
            step: 0,
            config,
        })
    }

    /// Replaces the padding with `earlier` frames (oldest first) preceding
    /// the initial frame, at most `window - 1` of them.
    pub fn seed_history(&mut self, earlier: &[PeriodicField]) -> Result<()> {
        if earlier.len() >= self.window {
            return Err(Error::Lifter(format!(
                "at most {} warm-up frames fit a window of {}",
                self.window - 1,
                self.window
            )));
        }
        for f in earlier {
            self.config.grid.ensure_same(&f.grid())?;
            f.ensure_scalar()?;
        }
        let keep = self.window - earlier.len();
        let tail: Vec<PeriodicField> = self.history.iter().skip(self.window - keep).cloned().collect();
        self.history = earlier.iter().cloned().chain(tail).collect();
        Ok(())
    }

    pub fn frame(&self) -> &PeriodicField {
        &self.frame
    }

    pub fn history(&self) -> Vec<PeriodicField> {
        self.history.iter().cloned().collect()
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn config(&self) -> &RolloutConfig {
        &self.config
    }

    pub fn sampler(&self) -> &SharedSampler {
        &self.u0
    }

    /// Projected (or, for full composition, lifted) maps so far.
    pub fn chain(&self) -> &MapChain {
        &self.chain
    }

    /// Lifted maps since the last projection (semi-Lagrangian only).
    pub fn working(&self) -> &[DiffeoMap] {
        &self.working
    }

    /// The complete backward map `macro ∘ working` as one chain.
    pub fn full_chain(&self) -> MapChain {
        let mut c = self.chain.clone();
        for m in &self.working {
            c.push(m.clone()).expect("maps share the rollout grid");
        }
        c
    }

    /// Max abs difference between the cached frame and a fresh pullback.
    pub fn cache_deviation(&self) -> Result<f64> {
        let fresh = pull_back_split(self.u0.as_ref(), &self.chain, &self.working, self.config.grid)?;
        Ok(fresh
            .data()
            .iter()
            .zip(self.frame.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    fn lift(&self, lifter: &dyn Lifter) -> Result<DiffeoMap> {
        if lifter.window() != self.window {
            return Err(Error::Lifter(format!(
                "lifter window {} differs from the rollout window {}",
                lifter.window(),
                self.window
            )));
        }
        lifter.grid().ensure_same(&self.config.grid)?;
        let history: Vec<PeriodicField> = self.history.iter().cloned().collect();
        let map = lifter.lift(&history, self.step)?;
        map.grid().ensure_same(&self.config.grid)?;
        Ok(map)
    }

    fn advance_frame(&mut self) -> Result<()> {
        self.frame = pull_back_split(self.u0.as_ref(), &self.chain, &self.working, self.config.grid)?;
        self.history.pop_front();
        self.history.push_back(self.frame.clone());
        self.step += 1;
        Ok(())
    }

    /// One step of the configured scheme.
    pub fn step(&mut self, lifter: &dyn Lifter) -> Result<()> {
        match self.config.scheme {
            Scheme::Compose => self.step_compose(lifter),
            Scheme::SemiLagrangian => self.step_semi_lagrangian(lifter),
        }
    }

    /// Appends the lifted map to the chain and pulls `u0` back through all
    /// of it.
    pub fn step_compose(&mut self, lifter: &dyn Lifter) -> Result<()> {
        let map = self.lift(lifter)?;
        self.flush_working()?;
        self.chain.push(map)?;
        self.advance_frame()
    }

    /// Adds the lifted map to the working composition; every `remap_every`
    /// maps the working composition is projected to a single map on the
    /// grid and moved to the chain.
    pub fn step_semi_lagrangian(&mut self, lifter: &dyn Lifter) -> Result<()> {
        let map = self.lift(lifter)?;
        self.working.push(map);
        if self.working.len() >= self.config.remap_every {
            self.flush_working()?;
        }
        self.advance_frame()
    }

    /// Projects any pending working maps into one chain entry.
    pub fn flush_working(&mut self) -> Result<()> {
        if self.working.is_empty() {
            return Ok(());
        }
        let pending = MapChain::from_maps(std::mem::take(&mut self.working))?;
        let merged = project(&pending, self.config.grid, self.config.fd_eps())?;
        self.chain.push(merged)
    }

    pub fn into_chain(mut self) -> Result<MapChain> {
        self.flush_working()?;
        Ok(self.chain)
    }
}

/// `u0 ∘ chain` sampled on any output grid.
pub fn pullback_field(chain: &MapChain, u0: &dyn ScalarSampler, grid_out: Grid) -> Result<PeriodicField> {
    pull_back(u0, chain, grid_out)
}

/// A transported density and the smallest accumulated Jacobian determinant.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportedDensity {
    pub density: PeriodicField,
    pub min_det: f64,
}

impl TransportedDensity {
    pub fn orientation_preserving(&self) -> bool {
        self.min_det > 0.0
    }
}

/// `ρ0 ∘ φ · det Dφ` on `grid_out`, with the determinant accumulated along
/// the evaluation path.
pub fn transport_density(
    chain: &MapChain,
    rho0: &dyn ScalarSampler,
    grid_out: Grid,
) -> Result<TransportedDensity> {
    let out: Vec<(f64, f64)> = chain
        .evaluate_with_det(&grid_out.vertices())
        .par_iter()
        .with_min_len(PAR_CHUNK)
        .map(|&(q, det)| (rho0.sample(q) * det, det))
        .collect();
    let min_det = out.iter().map(|o| o.1).fold(f64::INFINITY, f64::min);
    if min_det <= 0.0 {
        warn!("accumulated Jacobian determinant reaches {min_det:.3e}; the chain is not orientation preserving");
    }
    let density = PeriodicField::new(grid_out, 1, out.into_iter().map(|o| o.0).collect())?;
    Ok(TransportedDensity { density, min_det })
}

/// Runs `n_steps` autoregressive steps from `u0`.
///
/// The trajectory holds the `n_steps + 1` frames; with full composition it
/// also holds the lifted maps as submaps. The returned chain is the final
/// backward map (projected maps for the semi-Lagrangian scheme).
pub fn rollout(
    u0: SharedSampler,
    lifter: &dyn Lifter,
    n_steps: usize,
    config: &RolloutConfig,
) -> Result<(Trajectory, MapChain)> {
    let state = RolloutState::new(u0, *config, lifter.window())?;
    run(state, lifter, n_steps)
}

/// Continues `state` for `n_steps` steps.
pub fn run(mut state: RolloutState, lifter: &dyn Lifter, n_steps: usize) -> Result<(Trajectory, MapChain)> {
    let start_len = state.chain.len();
    let mut frames = Vec::with_capacity(n_steps + 1);
    frames.push(state.frame.clone());
    for _ in 0..n_steps {
        state.step(lifter)?;
        frames.push(state.frame.clone());
    }
    let config = state.config;
    let chain = state.into_chain()?;
    let submaps = match config.scheme {
        Scheme::Compose => Some(chain.suffix(start_len)),
        Scheme::SemiLagrangian => None,
    };
    let meta = TrajectoryMeta {
        solver: "rollout".into(),
        seed: None,
        remap_every: 1,
        step_dt: config.dt,
        note: format!("lifter={} scheme={}", lifter.kind(), config.scheme),
    };
    let traj = Trajectory::new(config.grid, config.dt, frames, submaps, meta)?;
    Ok((traj, chain))
}
