//! Plain-text `key=value` run configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::field::Grid;
use crate::lifting::{LifterKind, RegistrationConfig};
use crate::rollout::Scheme;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IcKind {
    RandomVorticity,
    SlottedCylinder,
    Expression,
}

impl FromStr for IcKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random_vorticity" => Ok(IcKind::RandomVorticity),
            "slotted_cylinder" => Ok(IcKind::SlottedCylinder),
            "expression" => Ok(IcKind::Expression),
            other => Err(Error::Config(format!(
                "unknown ic.kind {other:?} (expected random_vorticity, slotted_cylinder or expression)"
            ))),
        }
    }
}

impl fmt::Display for IcKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IcKind::RandomVorticity => "random_vorticity",
            IcKind::SlottedCylinder => "slotted_cylinder",
            IcKind::Expression => "expression",
        })
    }
}

fn lifter_kind(s: &str) -> Result<LifterKind> {
    match s {
        "oracle" => Ok(LifterKind::Oracle),
        "registration" => Ok(LifterKind::Registration),
        "spectral" => Ok(LifterKind::Spectral),
        other => Err(Error::Config(format!(
            "unknown lifter.kind {other:?} (expected oracle, registration or spectral)"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub grid_n: usize,
    pub dt: f64,
    pub t_final: f64,
    pub solver_remap_every: usize,
    pub ic_kind: IcKind,
    pub ic_k: usize,
    pub ic_seed: u64,
    /// Expression for `ic.kind=expression`.
    pub ic_expr: String,
    /// Number of trajectories produced by `generate`.
    pub ic_count: usize,
    pub lifter_kind: LifterKind,
    pub lifter_window: usize,
    pub lifter_k_feat: usize,
    pub lifter_ridge: f64,
    pub reg_lambda: f64,
    pub reg_max_iters: usize,
    pub rollout_scheme: Scheme,
    pub rollout_remap_every: usize,
    pub diag_quad_n: usize,
    pub diag_eps: f64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid_n: 128,
            dt: 1e-3,
            t_final: 1.0,
            solver_remap_every: 10,
            ic_kind: IcKind::RandomVorticity,
            ic_k: 8,
            ic_seed: 0,
            ic_expr: String::new(),
            ic_count: 1,
            lifter_kind: LifterKind::Spectral,
            lifter_window: 5,
            lifter_k_feat: 32,
            lifter_ridge: 1e-8,
            reg_lambda: 1e-3,
            reg_max_iters: 2000,
            rollout_scheme: Scheme::Compose,
            rollout_remap_every: 10,
            diag_quad_n: 512,
            diag_eps: 1e-6,
            out_dir: PathBuf::from("out"),
        }
    }
}

pub const KEYS: [&str; 20] = [
    "grid.n",
    "time.dt",
    "time.T",
    "solver.remap_every",
    "ic.kind",
    "ic.K",
    "ic.seed",
    "ic.expr",
    "ic.count",
    "lifter.kind",
    "lifter.window",
    "lifter.k_feat",
    "lifter.ridge",
    "reg.lambda",
    "reg.max_iters",
    "rollout.scheme",
    "rollout.remap_every",
    "diag.quad_n",
    "diag.eps",
    "out.dir",
];

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

impl RunConfig {
    /// Parses `key=value` lines on top of the defaults. Blank lines and
    /// lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {line:?}", no + 1)))?;
            c.set(key.trim(), value.trim())?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "grid.n" => self.grid_n = num(key, v)?,
            "time.dt" => self.dt = num(key, v)?,
            "time.T" => self.t_final = num(key, v)?,
            "solver.remap_every" => self.solver_remap_every = num(key, v)?,
            "ic.kind" => self.ic_kind = v.parse()?,
            "ic.K" => self.ic_k = num(key, v)?,
            "ic.seed" => self.ic_seed = num(key, v)?,
            "ic.expr" => self.ic_expr = v.to_string(),
            "ic.count" => self.ic_count = num(key, v)?,
            "lifter.kind" => self.lifter_kind = lifter_kind(v)?,
            "lifter.window" => self.lifter_window = num(key, v)?,
            "lifter.k_feat" => self.lifter_k_feat = num(key, v)?,
            "lifter.ridge" => self.lifter_ridge = num(key, v)?,
            "reg.lambda" => self.reg_lambda = num(key, v)?,
            "reg.max_iters" => self.reg_max_iters = num(key, v)?,
            "rollout.scheme" => self.rollout_scheme = v.parse()?,
            "rollout.remap_every" => self.rollout_remap_every = num(key, v)?,
            "diag.quad_n" => self.diag_quad_n = num(key, v)?,
            "diag.eps" => self.diag_eps = num(key, v)?,
            "out.dir" => self.out_dir = PathBuf::from(v),
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive_int = [
            ("grid.n", self.grid_n),
            ("solver.remap_every", self.solver_remap_every),
            ("ic.K", self.ic_k),
            ("ic.count", self.ic_count),
            ("lifter.window", self.lifter_window),
            ("reg.max_iters", self.reg_max_iters),
            ("rollout.remap_every", self.rollout_remap_every),
            ("diag.quad_n", self.diag_quad_n),
        ];
        for (k, v) in positive_int {
            if v == 0 {
                return Err(Error::Config(format!("{k} must be positive")));
            }
        }
        for (k, v) in [("time.dt", self.dt), ("time.T", self.t_final), ("diag.eps", self.diag_eps)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{k} must be positive, got {v}")));
            }
        }
        for (k, v) in [("lifter.ridge", self.lifter_ridge), ("reg.lambda", self.reg_lambda)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{k} must be nonnegative, got {v}")));
            }
        }
        if self.grid_n < 4 {
            return Err(Error::Config("grid.n must be at least 4".into()));
        }
        if self.ic_kind == IcKind::Expression && self.ic_expr.is_empty() {
            return Err(Error::Config("ic.kind=expression needs ic.expr".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Grid {
        Grid::square(self.grid_n).expect("validated grid size")
    }

    /// Time between stored frames (one lifter step).
    pub fn frame_dt(&self) -> f64 {
        self.dt * self.solver_remap_every as f64
    }

    pub fn registration(&self) -> RegistrationConfig {
        RegistrationConfig {
            lambda_reg: self.reg_lambda,
            max_iters: self.reg_max_iters,
            ..RegistrationConfig::default()
        }
    }

    /// The configuration in `key=value` form; parsing it gives `self` back.
    pub fn to_text(&self) -> String {
        let lifter = match self.lifter_kind {
            LifterKind::Fixed => "fixed".to_string(),
            k => k.to_string(),
        };
        let values = [
            self.grid_n.to_string(),
            self.dt.to_string(),
            self.t_final.to_string(),
            self.solver_remap_every.to_string(),
            self.ic_kind.to_string(),
            self.ic_k.to_string(),
            self.ic_seed.to_string(),
            self.ic_expr.clone(),
            self.ic_count.to_string(),
            lifter,
            self.lifter_window.to_string(),
            self.lifter_k_feat.to_string(),
            self.lifter_ridge.to_string(),
            self.reg_lambda.to_string(),
            self.reg_max_iters.to_string(),
            self.rollout_scheme.to_string(),
            self.rollout_remap_every.to_string(),
            self.diag_quad_n.to_string(),
            self.diag_eps.to_string(),
            self.out_dir.display().to_string(),
        ];
        KEYS.iter()
            .zip(values)
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}
