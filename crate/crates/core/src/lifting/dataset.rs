use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diffeo::DiffeoMap;
use crate::error::{Error, Result};
use crate::field::{Grid, PeriodicField};
use crate::solvers::Trajectory;

/// A sample: frames `start .. start + window` of one trajectory as input and
/// frame `start + window` as target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleRef {
    pub trajectory: usize,
    pub start: usize,
}

/// Sliding-window pairs over a set of trajectories, split by trajectory.
#[derive(Debug, Clone)]
pub struct PairDataset {
    grid: Grid,
    dt: f64,
    window: usize,
    trajectories: Vec<Trajectory>,
    train: Vec<SampleRef>,
    test: Vec<SampleRef>,
}

/// Builds windows of `window` frames over every trajectory with at least
/// `window + 1` frames. A seeded shuffle assigns `round(train_fraction · n)`
/// trajectories to the training split and the rest to the test split.
pub fn build_dataset(
    trajectories: Vec<Trajectory>,
    window: usize,
    train_fraction: f64,
    seed: u64,
) -> Result<PairDataset> {
    if window == 0 {
        return Err(Error::Dataset("window must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::Dataset(format!(
            "train fraction must lie in [0, 1], got {train_fraction}"
        )));
    }
    let first = trajectories
        .first()
        .ok_or_else(|| Error::Dataset("no trajectories".into()))?;
    let (grid, dt) = (first.grid, first.dt);
    for t in &trajectories {
        t.grid.ensure_same(&grid)?;
        if (t.dt - dt).abs() > 1e-12 * dt {
            return Err(Error::Dataset(format!(
                "trajectories use different steps ({} vs {dt})",
                t.dt
            )));
        }
        if t.frames.iter().any(|f| f.channels() != 1) {
            return Err(Error::Dataset("frames must be scalar".into()));
        }
    }
    let kept: Vec<Trajectory> = trajectories
        .into_iter()
        .enumerate()
        .filter_map(|(i, t)| {
            if t.len() < window + 1 {
                warn!(
                    "trajectory {i} has {} frames, fewer than window + 1 = {}; skipped",
                    t.len(),
                    window + 1
                );
                None
            } else {
                Some(t)
            }
        })
        .collect();

    let mut order: Vec<usize> = (0..kept.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (train_fraction * kept.len() as f64).round() as usize;
    let mut train_ids = order[..n_train].to_vec();
    let mut test_ids = order[n_train..].to_vec();
    train_ids.sort_unstable();
    test_ids.sort_unstable();
    let windows = |ids: &[usize]| -> Vec<SampleRef> {
        ids.iter()
            .flat_map(|&t| {
                (0..kept[t].len() - window).map(move |start| SampleRef { trajectory: t, start })
            })
            .collect()
    };
    let train = windows(&train_ids);
    let test = windows(&test_ids);
    Ok(PairDataset {
        grid,
        dt,
        window,
        trajectories: kept,
        train,
        test,
    })
}

impl PairDataset {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn train(&self) -> &[SampleRef] {
        &self.train
    }

    pub fn test(&self) -> &[SampleRef] {
        &self.test
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Trajectory indices in the training split.
    pub fn train_trajectories(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.train.iter().map(|s| s.trajectory).collect();
        ids.dedup();
        ids
    }

    pub fn test_trajectories(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.test.iter().map(|s| s.trajectory).collect();
        ids.dedup();
        ids
    }

    pub fn inputs(&self, s: SampleRef) -> &[PeriodicField] {
        &self.trajectories[s.trajectory].frames[s.start..s.start + self.window]
    }

    pub fn target(&self, s: SampleRef) -> &PeriodicField {
        &self.trajectories[s.trajectory].frames[s.start + self.window]
    }

    /// The stored submap carrying the newest input frame to the target.
    pub fn target_map(&self, s: SampleRef) -> Option<&DiffeoMap> {
        self.trajectories[s.trajectory]
            .submaps
            .as_ref()
            .map(|c| &c.maps()[s.start + self.window - 1])
    }

    pub fn has_maps(&self) -> bool {
        self.trajectories.iter().all(|t| t.submaps.is_some())
    }

    /// Moves every sample into the training split.
    pub fn with_all_train(mut self) -> Self {
        self.train.append(&mut self.test);
        self.train.sort_by_key(|s| (s.trajectory, s.start));
        self
    }

    /// Same dataset with the training samples in the given order.
    pub fn with_train_order(mut self, order: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.train.len()];
        if order.len() != self.train.len() {
            return Err(Error::Dataset("order must be a permutation of the training samples".into()));
        }
        for &i in order {
            if i >= seen.len() || seen[i] {
                return Err(Error::Dataset("order must be a permutation of the training samples".into()));
            }
            seen[i] = true;
        }
        self.train = order.iter().map(|&i| self.train[i]).collect();
        Ok(self)
    }
}
