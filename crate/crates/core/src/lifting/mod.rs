//! One-step lifting operators: field history ↦ diffeomorphism.

mod dataset;
mod registration;
mod spectral;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use dataset::{build_dataset, PairDataset, SampleRef};
pub use registration::{
    register_pair, registration_gradient, registration_objective, RegistrationConfig,
    RegistrationLifter, RegistrationReport,
};
pub use spectral::{fit_spectral_lifter, FitMode, FitReport, SpectralLifter};

use crate::diffeo::{DiffeoMap, MapChain};
use crate::error::{Error, Result};
use crate::field::{Grid, PeriodicField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LifterKind {
    Fixed,
    Oracle,
    Registration,
    Spectral,
}

impl fmt::Display for LifterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LifterKind::Fixed => "fixed",
            LifterKind::Oracle => "oracle",
            LifterKind::Registration => "registration",
            LifterKind::Spectral => "spectral",
        };
        f.write_str(s)
    }
}

/// Maps the last `window()` frames to the map advancing the newest one.
///
/// `step` is the index of the step being taken (0 for the first); only
/// lifters replaying stored data use it.
pub trait Lifter: Send + Sync {
    fn window(&self) -> usize;
    fn grid(&self) -> Grid;
    fn kind(&self) -> LifterKind;
    fn lift(&self, history: &[PeriodicField], step: usize) -> Result<DiffeoMap>;
}

pub(crate) fn check_history(lifter: &dyn Lifter, history: &[PeriodicField]) -> Result<()> {
    if history.len() != lifter.window() {
        return Err(Error::Lifter(format!(
            "expected a history of {} frames, got {}",
            lifter.window(),
            history.len()
        )));
    }
    Ok(())
}

/// Returns the same map at every step (identity, translations, ...).
#[derive(Debug, Clone)]
pub struct FixedLifter {
    map: DiffeoMap,
    window: usize,
}

impl FixedLifter {
    pub fn new(map: DiffeoMap, window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::Lifter("window must be at least 1".into()));
        }
        Ok(Self { map, window })
    }

    pub fn map(&self) -> &DiffeoMap {
        &self.map
    }
}

impl Lifter for FixedLifter {
    fn window(&self) -> usize {
        self.window
    }

    fn grid(&self) -> Grid {
        self.map.grid()
    }

    fn kind(&self) -> LifterKind {
        LifterKind::Fixed
    }

    fn lift(&self, history: &[PeriodicField], _step: usize) -> Result<DiffeoMap> {
        check_history(self, history)?;
        Ok(self.map.clone())
    }
}

/// Replays solver submaps: step `k` returns `submaps[offset + k]`.
#[derive(Debug, Clone)]
pub struct OracleLifter {
    submaps: MapChain,
    offset: usize,
    window: usize,
}

impl OracleLifter {
    pub fn new(submaps: MapChain, offset: usize, window: usize) -> Result<Self> {
        if submaps.is_empty() {
            return Err(Error::Lifter("oracle lifter needs stored submaps".into()));
        }
        if window == 0 {
            return Err(Error::Lifter("window must be at least 1".into()));
        }
        Ok(Self {
            submaps,
            offset,
            window,
        })
    }

    /// Oracle for a solver trajectory; `offset` skips the first submaps when
    /// the rollout starts from a later frame.
    pub fn from_trajectory(traj: &crate::solvers::Trajectory, offset: usize, window: usize) -> Result<Self> {
        let chain = traj
            .submaps
            .clone()
            .ok_or_else(|| Error::Lifter("trajectory has no stored submaps".into()))?;
        Self::new(chain, offset, window)
    }

    pub fn steps_available(&self) -> usize {
        self.submaps.len().saturating_sub(self.offset)
    }
}

impl Lifter for OracleLifter {
    fn window(&self) -> usize {
        self.window
    }

    fn grid(&self) -> Grid {
        self.submaps.grid().expect("non-empty chain")
    }

    fn kind(&self) -> LifterKind {
        LifterKind::Oracle
    }

    fn lift(&self, history: &[PeriodicField], step: usize) -> Result<DiffeoMap> {
        check_history(self, history)?;
        self.submaps
            .maps()
            .get(self.offset + step)
            .cloned()
            .ok_or_else(|| {
                Error::Lifter(format!(
                    "oracle has {} submaps, step {} requested",
                    self.submaps.len(),
                    self.offset + step
                ))
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_replays_and_bounds_checks() {
        let g = Grid::square(8).unwrap();
        let maps: Vec<DiffeoMap> = (0..3)
            .map(|k| DiffeoMap::translation(g, [k as f64, 0.0]).unwrap())
            .collect();
        let o = OracleLifter::new(MapChain::from_maps(maps.clone()).unwrap(), 1, 2).unwrap();
        let h = vec![PeriodicField::zeros(g, 1); 2];
        assert_eq!(o.lift(&h, 0).unwrap(), maps[1]);
        assert_eq!(o.lift(&h, 1).unwrap(), maps[2]);
        assert!(matches!(o.lift(&h, 2), Err(Error::Lifter(_))));
        assert!(matches!(o.lift(&h[..1], 0), Err(Error::Lifter(_))));
        assert_eq!(o.steps_available(), 2);
    }
}
