use serde::{Deserialize, Serialize};

use crate::diffeo::MapChain;
use crate::error::{Error, Result};
use crate::field::{Grid, PeriodicField};

/// Run metadata stored alongside trajectory frames.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    /// Producer id, e.g. `advect_cmm`, `euler_cmm` or `rollout`.
    pub solver: String,
    pub seed: Option<u64>,
    /// Solver steps per stored frame.
    pub remap_every: usize,
    /// Internal solver time step.
    pub step_dt: f64,
    #[serde(default)]
    pub note: String,
}

/// Snapshots at `t_k = k·dt` plus, optionally, the submaps between them.
///
/// When present, `submaps.maps()[k]` carries frame `k` to frame `k + 1`, so
/// `frames[k] = u0 ∘ (φ₀ ∘ … ∘ φ_{k-1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: Grid,
    pub dt: f64,
    pub frames: Vec<PeriodicField>,
    pub submaps: Option<MapChain>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn new(
        grid: Grid,
        dt: f64,
        frames: Vec<PeriodicField>,
        submaps: Option<MapChain>,
        meta: TrajectoryMeta,
    ) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Dataset(format!("frame spacing must be positive, got {dt}")));
        }
        if frames.is_empty() {
            return Err(Error::Dataset("a trajectory needs at least one frame".into()));
        }
        for f in &frames {
            grid.ensure_same(&f.grid())?;
        }
        if let Some(chain) = &submaps {
            if chain.len() + 1 != frames.len() {
                return Err(Error::Dataset(format!(
                    "{} submaps do not fit {} frames",
                    chain.len(),
                    frames.len()
                )));
            }
        }
        Ok(Self {
            grid,
            dt,
            frames,
            submaps,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.frames.len()).map(|k| k as f64 * self.dt).collect()
    }

    pub fn last(&self) -> &PeriodicField {
        self.frames.last().expect("trajectory has frames")
    }
}
