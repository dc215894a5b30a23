use std::collections::HashMap;

use log::{debug, info};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::dataset::{PairDataset, SampleRef};
use super::{check_history, Lifter, LifterKind};
use crate::diffeo::{DiffeoMap, PAR_CHUNK};
use crate::error::{Error, Result};
use crate::field::{dft, dft_values, pairwise_sum, Grid, HermiteField, PeriodicField, Spectrum};

/// Smallest ridge accepted by the normal equations.
pub const MIN_RIDGE: f64 = 1e-10;

/// How [`fit_spectral_lifter`] obtains its weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FitMode {
    /// Ridge regression onto the stored target submaps.
    MapSupervised,
    /// Gradient descent on the field mismatch `‖u_tgt − u_src∘φ_W‖²` plus
    /// `λ Σ_α ‖∂^α v‖²` over `α ∈ {(1,0), (0,1), (1,1)}`. Starts from the
    /// map-supervised solution when the dataset stores submaps.
    FieldMismatch {
        lambda: f64,
        max_iters: usize,
        step_init: f64,
    },
}

/// Per-mode linear map from the spectra of the last `window` frames to the
/// displacement spectrum.
///
/// For each wavevector `k` with `0 < |k|_∞ ≤ K` (one of each `±k` pair)
/// `v̂_c(k) = Σ_j W_{c,j}(k) û_j(k)`, `c ∈ {x, y}`; the mean displacement is a
/// learned bias. Derivative planes follow by spectral differentiation.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralLifter {
    grid: Grid,
    window: usize,
    k_feat: usize,
    ridge: f64,
    /// `weights[(mode · 2 + c) · window + j]`
    weights: Vec<Complex64>,
    bias: [f64; 2],
}

/// The half set `{k : 0 < |k|_∞ ≤ K, k_y > 0 or (k_y = 0, k_x > 0)}`.
fn half_modes(k: usize) -> Vec<(i64, i64)> {
    let k = k as i64;
    let mut out = Vec::new();
    for ky in 0..=k {
        for kx in -k..=k {
            if ky == 0 && kx <= 0 {
                continue;
            }
            out.push((kx, ky));
        }
    }
    out
}

fn effective_k(grid: Grid, k_feat: usize) -> usize {
    k_feat.min(grid.nx().min(grid.ny()) / 2 - 1)
}

impl SpectralLifter {
    /// A lifter with all weights zero and the given bias.
    pub fn zeros(grid: Grid, window: usize, k_feat: usize, ridge: f64, bias: [f64; 2]) -> Result<Self> {
        if window == 0 {
            return Err(Error::Lifter("window must be at least 1".into()));
        }
        if grid.nx().min(grid.ny()) < 4 {
            return Err(Error::Lifter("grid too small for spectral features".into()));
        }
        let k_feat = effective_k(grid, k_feat);
        let n = half_modes(k_feat).len() * 2 * window;
        Ok(Self {
            grid,
            window,
            k_feat,
            ridge: ridge.max(MIN_RIDGE),
            weights: vec![Complex64::new(0.0, 0.0); n],
            bias,
        })
    }

    /// Rebuilds a lifter from stored parts.
    pub fn from_parts(
        grid: Grid,
        window: usize,
        k_feat: usize,
        ridge: f64,
        weights: Vec<Complex64>,
        bias: [f64; 2],
    ) -> Result<Self> {
        let mut l = Self::zeros(grid, window, k_feat, ridge, bias)?;
        if l.k_feat != k_feat {
            return Err(Error::Lifter(format!("K_feat = {k_feat} does not fit the grid")));
        }
        if weights.len() != l.weights.len() {
            return Err(Error::Lifter(format!(
                "expected {} weights, got {}",
                l.weights.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.re.is_finite() || !w.im.is_finite()) || !bias.iter().all(|b| b.is_finite()) {
            return Err(Error::Lifter("non-finite weights".into()));
        }
        l.weights = weights;
        Ok(l)
    }

    pub fn k_feat(&self) -> usize {
        self.k_feat
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn weights(&self) -> &[Complex64] {
        &self.weights
    }

    pub fn bias(&self) -> [f64; 2] {
        self.bias
    }

    pub fn modes(&self) -> Vec<(i64, i64)> {
        half_modes(self.k_feat)
    }

    /// Number of wavevectors with `|k|_∞ ≤ K`, the mean included.
    pub fn feature_count(&self) -> usize {
        (2 * self.k_feat + 1).pow(2)
    }

    /// True when every weight is zero, so the output is the constant bias.
    pub fn is_bias_only(&self) -> bool {
        self.weights.iter().all(|w| w.norm_sqr() == 0.0)
    }

    fn features(&self, frames: &[PeriodicField]) -> Result<Vec<Vec<Complex64>>> {
        let modes = self.modes();
        frames
            .iter()
            .map(|f| {
                f.grid().ensure_same(&self.grid)?;
                let s = dft(f)?;
                Ok(modes.iter().map(|&(kx, ky)| s.get(kx, ky)).collect())
            })
            .collect()
    }

    /// Displacement spectra for the given per-frame features.
    fn output_spectra(&self, feats: &[Vec<Complex64>]) -> [Spectrum; 2] {
        let modes = self.modes();
        let m = self.window;
        let mut out = [Spectrum::zeros(self.grid), Spectrum::zeros(self.grid)];
        for (c, spec) in out.iter_mut().enumerate() {
            for (mi, &(kx, ky)) in modes.iter().enumerate() {
                let w = &self.weights[(mi * 2 + c) * m..(mi * 2 + c + 1) * m];
                let v: Complex64 = w.iter().zip(feats).map(|(w, f)| w * f[mi]).sum();
                spec.set(kx, ky, v);
                spec.set(-kx, -ky, v.conj());
            }
            spec.set(0, 0, Complex64::new(self.bias[c], 0.0));
        }
        out
    }

    fn map_from_spectra(&self, spectra: &[Spectrum; 2]) -> Result<DiffeoMap> {
        DiffeoMap::from_components(
            HermiteField::from_spectrum(&spectra[0])?,
            HermiteField::from_spectrum(&spectra[1])?,
        )
    }
}

impl Lifter for SpectralLifter {
    fn window(&self) -> usize {
        self.window
    }

    fn grid(&self) -> Grid {
        self.grid
    }

    fn kind(&self) -> LifterKind {
        LifterKind::Spectral
    }

    fn lift(&self, history: &[PeriodicField], _step: usize) -> Result<DiffeoMap> {
        check_history(self, history)?;
        let feats = self.features(history)?;
        self.map_from_spectra(&self.output_spectra(&feats))
    }
}

/// Summary of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub mode: FitMode,
    pub train_samples: usize,
    pub test_samples: usize,
    /// Mean squared displacement error against the stored submaps.
    pub train_map_mse: Option<f64>,
    pub test_map_mse: Option<f64>,
    /// Test error of always predicting the mean training displacement field.
    pub test_baseline_mse: Option<f64>,
    /// Field-mismatch loss at the start and after every accepted iterate.
    pub loss_history: Vec<f64>,
}

/// Mode coefficients of every frame and stored map the dataset refers to.
struct Cache {
    modes: Vec<(i64, i64)>,
    frames: HashMap<(usize, usize), Vec<Complex64>>,
    maps: HashMap<(usize, usize), [Vec<Complex64>; 2]>,
    map_means: HashMap<(usize, usize), [f64; 2]>,
}

impl Cache {
    fn build(ds: &PairDataset, samples: &[SampleRef], k: usize, with_maps: bool) -> Self {
        let modes = half_modes(k);
        let m = ds.window();
        let mut frame_keys: Vec<(usize, usize)> = samples
            .iter()
            .flat_map(|s| (s.start..=s.start + m).map(move |i| (s.trajectory, i)))
            .collect();
        frame_keys.sort_unstable();
        frame_keys.dedup();
        let pick = |s: &Spectrum| modes.iter().map(|&(kx, ky)| s.get(kx, ky)).collect::<Vec<_>>();
        let frames = frame_keys
            .par_iter()
            .map(|&(t, i)| {
                let f = &ds.trajectories()[t].frames[i];
                ((t, i), pick(&dft_values(f.grid(), f.data())))
            })
            .collect();
        let mut maps = HashMap::new();
        let mut map_means = HashMap::new();
        if with_maps {
            let keys: Vec<(usize, usize)> = samples.iter().map(|s| (s.trajectory, s.start + m - 1)).collect();
            let computed: Vec<_> = keys
                .par_iter()
                .map(|&(t, i)| {
                    let map = &ds.trajectories()[t].submaps.as_ref().expect("checked").maps()[i];
                    let g = map.grid();
                    let sx = dft_values(g, &map.vx().plane(0));
                    let sy = dft_values(g, &map.vy().plane(0));
                    ((t, i), [pick(&sx), pick(&sy)], [sx.get(0, 0).re, sy.get(0, 0).re])
                })
                .collect();
            for (key, spec, mean) in computed {
                maps.insert(key, spec);
                map_means.insert(key, mean);
            }
        }
        Self {
            modes,
            frames,
            maps,
            map_means,
        }
    }

    fn inputs(&self, s: SampleRef, m: usize) -> Vec<&Vec<Complex64>> {
        (s.start..s.start + m).map(|i| &self.frames[&(s.trajectory, i)]).collect()
    }

    fn map_key(s: SampleRef, m: usize) -> (usize, usize) {
        (s.trajectory, s.start + m - 1)
    }
}

/// Ridge solve per mode and output component; the bias is the mean target
/// displacement.
fn solve_map_supervised(
    lifter: &mut SpectralLifter,
    cache: &Cache,
    samples: &[SampleRef],
) -> Result<()> {
    let m = lifter.window;
    let ridge = lifter.ridge;
    let n_modes = cache.modes.len();
    let solved: Vec<Result<[Vec<Complex64>; 2]>> = (0..n_modes)
        .into_par_iter()
        .map(|mi| {
            let mut a = DMatrix::<Complex64>::zeros(m, m);
            let mut b = [DVector::<Complex64>::zeros(m), DVector::<Complex64>::zeros(m)];
            for &s in samples {
                let f: Vec<Complex64> = cache.inputs(s, m).iter().map(|v| v[mi]).collect();
                let t = &cache.maps[&Cache::map_key(s, m)];
                for r in 0..m {
                    let fr = f[r].conj();
                    for c in 0..m {
                        a[(r, c)] += fr * f[c];
                    }
                    b[0][r] += fr * t[0][mi];
                    b[1][r] += fr * t[1][mi];
                }
            }
            for d in 0..m {
                a[(d, d)] += Complex64::new(ridge, 0.0);
            }
            let chol = a
                .cholesky()
                .ok_or_else(|| Error::Lifter(format!("normal equations of mode {mi} are not positive definite")))?;
            Ok([chol.solve(&b[0]).iter().copied().collect(), chol.solve(&b[1]).iter().copied().collect()])
        })
        .collect();
    for (mi, w) in solved.into_iter().enumerate() {
        let w = w?;
        for c in 0..2 {
            lifter.weights[(mi * 2 + c) * m..(mi * 2 + c + 1) * m].copy_from_slice(&w[c]);
        }
    }
    let means: Vec<[f64; 2]> = samples.iter().map(|&s| cache.map_means[&Cache::map_key(s, m)]).collect();
    for c in 0..2 {
        lifter.bias[c] = pairwise_sum(&means.iter().map(|v| v[c]).collect::<Vec<_>>()) / samples.len() as f64;
    }
    Ok(())
}

/// Mean squared displacement error of the lifter over `samples`, next to
/// the error of a constant predictor `baseline` (mode coefficients plus
/// mean) when given.
fn map_mse(
    lifter: &SpectralLifter,
    cache: &Cache,
    samples: &[SampleRef],
    baseline: Option<&[Vec<Complex64>; 2]>,
    baseline_mean: [f64; 2],
) -> (f64, f64) {
    let m = lifter.window;
    // Parseval over the half set, the mean and the modes beyond K
    let errs: Vec<(f64, f64)> = samples
        .par_iter()
        .map(|&s| {
            let key = Cache::map_key(s, m);
            let t = &cache.maps[&key];
            let mean = cache.map_means[&key];
            let feats = cache.inputs(s, m);
            let mut e = 0.0;
            let mut eb = 0.0;
            for c in 0..2 {
                for mi in 0..cache.modes.len() {
                    let w = &lifter.weights[(mi * 2 + c) * m..(mi * 2 + c + 1) * m];
                    let p: Complex64 = w.iter().zip(&feats).map(|(w, f)| w * f[mi]).sum();
                    e += 2.0 * (p - t[c][mi]).norm_sqr();
                    if let Some(b) = baseline {
                        eb += 2.0 * (b[c][mi] - t[c][mi]).norm_sqr();
                    }
                }
                e += (lifter.bias[c] - mean[c]).powi(2);
                eb += (baseline_mean[c] - mean[c]).powi(2);
            }
            (e, eb)
        })
        .collect();
    let n = samples.len().max(1) as f64;
    (
        errs.iter().map(|e| e.0).sum::<f64>() / n,
        errs.iter().map(|e| e.1).sum::<f64>() / n,
    )
}

/// Data for one field-mismatch sample.
struct MismatchSample {
    feats: Vec<Vec<Complex64>>,
    src: HermiteField,
    tgt: Vec<f64>,
}

struct Mismatch<'a> {
    lifter: &'a SpectralLifter,
    samples: Vec<MismatchSample>,
    lambda: f64,
    pts: Vec<[f64; 2]>,
}

impl Mismatch<'_> {
    fn weight(&self, kx: i64, ky: i64) -> f64 {
        let (x2, y2) = ((kx * kx) as f64, (ky * ky) as f64);
        x2 + y2 + x2 * y2
    }

    fn outputs(&self, l: &SpectralLifter, s: &MismatchSample) -> [Vec<f64>; 2] {
        let spectra = l.output_spectra(&s.feats);
        [
            crate::field::idft_values(&spectra[0]),
            crate::field::idft_values(&spectra[1]),
        ]
    }

    /// Regularizer `λ Σ_c Σ_α ‖∂^α v_c‖²/N` from the mode coefficients.
    fn penalty(&self, l: &SpectralLifter, s: &MismatchSample) -> f64 {
        let m = l.window;
        let modes = l.modes();
        let mut r = 0.0;
        for c in 0..2 {
            for (mi, &(kx, ky)) in modes.iter().enumerate() {
                let w = &l.weights[(mi * 2 + c) * m..(mi * 2 + c + 1) * m];
                let p: Complex64 = w.iter().zip(&s.feats).map(|(w, f)| w * f[mi]).sum();
                r += 2.0 * self.weight(kx, ky) * p.norm_sqr();
            }
        }
        self.lambda * r
    }

    fn loss(&self, l: &SpectralLifter) -> f64 {
        let total: Vec<f64> = self
            .samples
            .iter()
            .map(|s| {
                let v = self.outputs(l, s);
                let r: Vec<f64> = self
                    .pts
                    .par_iter()
                    .enumerate()
                    .with_min_len(PAR_CHUNK)
                    .map(|(i, &p)| {
                        let d = s.tgt[i] - s.src.eval([p[0] + v[0][i], p[1] + v[1][i]]);
                        d * d
                    })
                    .collect();
                pairwise_sum(&r) / self.pts.len() as f64 + self.penalty(l, s)
            })
            .collect();
        pairwise_sum(&total) / self.samples.len() as f64
    }

    /// Loss and gradient with respect to the weights and the bias.
    fn gradient(&self, l: &SpectralLifter) -> (f64, Vec<Complex64>, [f64; 2]) {
        let m = l.window;
        let modes = l.modes();
        let n = self.pts.len() as f64;
        let ns = self.samples.len() as f64;
        let mut gw = vec![Complex64::new(0.0, 0.0); l.weights.len()];
        let mut gb = [0.0; 2];
        let mut losses = Vec::with_capacity(self.samples.len());
        for s in &self.samples {
            let v = self.outputs(l, s);
            let evals: Vec<(f64, [f64; 2])> = self
                .pts
                .par_iter()
                .enumerate()
                .with_min_len(PAR_CHUNK)
                .map(|(i, &p)| {
                    let (val, grad) = s.src.eval_grad([p[0] + v[0][i], p[1] + v[1][i]]);
                    (s.tgt[i] - val, grad)
                })
                .collect();
            losses.push(
                pairwise_sum(&evals.iter().map(|(r, _)| r * r).collect::<Vec<_>>()) / n + self.penalty(l, s),
            );
            for c in 0..2 {
                // ∂L/∂v_c(x), then Γ(k) = 2 Σ_x g(x) e^{−ik·x}
                let g: Vec<f64> = evals.iter().map(|(r, gr)| -2.0 * r * gr[c] / (n * ns)).collect();
                gb[c] += pairwise_sum(&g);
                let gs = dft_values(l.grid, &g);
                for (mi, &(kx, ky)) in modes.iter().enumerate() {
                    let w = &l.weights[(mi * 2 + c) * m..(mi * 2 + c + 1) * m];
                    let p: Complex64 = w.iter().zip(&s.feats).map(|(w, f)| w * f[mi]).sum();
                    let gamma = gs.get(kx, ky) * (2.0 * n) + p * (4.0 * self.lambda * self.weight(kx, ky) / ns);
                    for j in 0..m {
                        gw[(mi * 2 + c) * m + j] += s.feats[j][mi].conj() * gamma;
                    }
                }
            }
        }
        (pairwise_sum(&losses) / ns, gw, gb)
    }

    fn descend(&self, l: &mut SpectralLifter, max_iters: usize, step_init: f64) -> Vec<f64> {
        let (mut loss, mut gw, mut gb) = self.gradient(l);
        let mut history = vec![loss];
        let mut alpha = step_init;
        for _ in 0..max_iters {
            let g2: f64 = gw.iter().map(|g| g.norm_sqr()).sum::<f64>() + gb.iter().map(|g| g * g).sum::<f64>();
            if g2 == 0.0 || loss == 0.0 {
                break;
            }
            let mut accepted = None;
            for _ in 0..60 {
                let mut trial = l.clone();
                trial.weights.iter_mut().zip(&gw).for_each(|(w, g)| *w -= g * alpha);
                trial.bias[0] -= alpha * gb[0];
                trial.bias[1] -= alpha * gb[1];
                let lt = self.loss(&trial);
                if lt <= loss - 1e-4 * alpha * g2 {
                    accepted = Some((trial, lt));
                    break;
                }
                alpha *= 0.5;
            }
            let Some((trial, lt)) = accepted else { break };
            let decrease = (loss - lt) / loss;
            *l = trial;
            let (nl, ngw, ngb) = self.gradient(l);
            loss = nl;
            gw = ngw;
            gb = ngb;
            history.push(loss);
            if decrease < 1e-10 {
                break;
            }
            alpha *= 2.0;
        }
        history
    }
}

/// Fits a [`SpectralLifter`] on the training split of `ds`.
///
/// `k_feat` is clamped below the grid's Nyquist index and `ridge` to at
/// least [`MIN_RIDGE`].
pub fn fit_spectral_lifter(
    ds: &PairDataset,
    k_feat: usize,
    ridge: f64,
    mode: FitMode,
) -> Result<(SpectralLifter, FitReport)> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::Lifter(format!("ridge must be nonnegative, got {ridge}")));
    }
    if ds.train().is_empty() {
        return Err(Error::Dataset("no training samples".into()));
    }
    if mode == FitMode::MapSupervised && !ds.has_maps() {
        return Err(Error::Dataset("map-supervised fitting needs stored target submaps".into()));
    }
    if let FitMode::FieldMismatch { lambda, max_iters, step_init } = mode {
        if !(lambda >= 0.0 && step_init > 0.0 && max_iters > 0) {
            return Err(Error::Lifter("field-mismatch settings must be positive".into()));
        }
    }
    let mut lifter = SpectralLifter::zeros(ds.grid(), ds.window(), k_feat, ridge, [0.0; 2])?;
    let with_maps = ds.has_maps();
    let all: Vec<SampleRef> = ds.train().iter().chain(ds.test()).copied().collect();
    let cache = Cache::build(ds, &all, lifter.k_feat, with_maps);
    info!(
        "fitting spectral lifter: {} train samples, {} modes, window {}",
        ds.train().len(),
        cache.modes.len(),
        ds.window()
    );
    if with_maps {
        solve_map_supervised(&mut lifter, &cache, ds.train())?;
    }

    let mut loss_history = Vec::new();
    if let FitMode::FieldMismatch { lambda, max_iters, step_init } = mode {
        let m = ds.window();
        let samples = ds
            .train()
            .iter()
            .map(|&s| {
                let src = ds.inputs(s).last().expect("window is at least 1");
                Ok(MismatchSample {
                    feats: cache.inputs(s, m).into_iter().cloned().collect(),
                    src: HermiteField::from_field_spectral(src)?,
                    tgt: ds.target(s).data().to_vec(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let problem = Mismatch {
            lifter: &lifter,
            samples,
            lambda,
            pts: ds.grid().vertices(),
        };
        let mut refined = problem.lifter.clone();
        loss_history = problem.descend(&mut refined, max_iters, step_init);
        debug!(
            "field mismatch: {} iterations, loss {:e} -> {:e}",
            loss_history.len() - 1,
            loss_history[0],
            loss_history.last().expect("non-empty")
        );
        lifter = refined;
    }

    let (mut train_map_mse, mut test_map_mse, mut test_baseline_mse) = (None, None, None);
    if with_maps {
        let m = ds.window();
        let n = ds.train().len() as f64;
        let mut mean_modes = [vec![Complex64::new(0.0, 0.0); cache.modes.len()], vec![Complex64::new(0.0, 0.0); cache.modes.len()]];
        let mut mean_bias = [0.0; 2];
        for &s in ds.train() {
            let key = Cache::map_key(s, m);
            for c in 0..2 {
                for (acc, v) in mean_modes[c].iter_mut().zip(&cache.maps[&key][c]) {
                    *acc += v / n;
                }
                mean_bias[c] += cache.map_means[&key][c] / n;
            }
        }
        train_map_mse = Some(map_mse(&lifter, &cache, ds.train(), None, mean_bias).0);
        if !ds.test().is_empty() {
            let (e, b) = map_mse(&lifter, &cache, ds.test(), Some(&mean_modes), mean_bias);
            test_map_mse = Some(e);
            test_baseline_mse = Some(b);
        }
    }
    let report = FitReport {
        mode,
        train_samples: ds.train().len(),
        test_samples: ds.test().len(),
        train_map_mse,
        test_map_mse,
        test_baseline_mse,
        loss_history,
    };
    Ok((lifter, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffeo::MapChain;
    use crate::lifting::build_dataset;
    use crate::solvers::{Trajectory, TrajectoryMeta};

    fn translation_trajectory(g: Grid, frames: usize, dt: f64, phase: f64) -> Trajectory {
        let c = 2.0 * std::f64::consts::PI;
        let u = |t: f64| {
            PeriodicField::from_fn(g, move |x, y| (x - c * t + phase).sin() + 0.5 * (2.0 * (x - c * t) + y).cos())
        };
        let f: Vec<PeriodicField> = (0..frames).map(|k| u(k as f64 * dt)).collect();
        let maps = (1..frames).map(|_| DiffeoMap::translation(g, [-c * dt, 0.0]).unwrap()).collect();
        Trajectory::new(g, dt, f, Some(MapChain::from_maps(maps).unwrap()), TrajectoryMeta::default()).unwrap()
    }

    #[test]
    fn translation_data_gives_constant_shift() {
        let g = Grid::square(32).unwrap();
        let dt = 0.01;
        let trajs = (0..5).map(|i| translation_trajectory(g, 12, dt, i as f64)).collect();
        let ds = build_dataset(trajs, 5, 0.8, 1).unwrap();
        let (l, report) = fit_spectral_lifter(&ds, 32, 1e-8, FitMode::MapSupervised).unwrap();
        assert_eq!(l.k_feat(), 15);
        assert!(l.weights().iter().all(|w| w.norm() < 1e-12));
        assert!(report.test_map_mse.unwrap() < 1e-20);
        for &s in ds.test() {
            let map = l.lift(ds.inputs(s), 0).unwrap();
            let d = map.displacement_at([1.0, 2.0]);
            assert!((d[0] + 2.0 * std::f64::consts::PI * dt).abs() < 1e-12 && d[1].abs() < 1e-15);
        }
    }

    #[test]
    fn identity_dataset_gives_identity() {
        let g = Grid::square(16).unwrap();
        let f = PeriodicField::from_fn(g, |x, y| x.sin() * y.cos());
        let maps = (0..6).map(|_| DiffeoMap::identity(g)).collect();
        let t = Trajectory::new(g, 0.1, vec![f; 7], Some(MapChain::from_maps(maps).unwrap()), TrajectoryMeta::default())
            .unwrap();
        let ds = build_dataset(vec![t], 3, 1.0, 0).unwrap();
        let (l, _) = fit_spectral_lifter(&ds, 8, 0.0, FitMode::MapSupervised).unwrap();
        assert!(l.is_bias_only() && l.bias() == [0.0, 0.0]);
        assert_eq!(l.lift(ds.inputs(ds.train()[0]), 0).unwrap(), DiffeoMap::identity(g));
    }

    #[test]
    fn solution_ignores_sample_order() {
        let g = Grid::square(16).unwrap();
        let trajs = (0..3).map(|i| {
            let f: Vec<PeriodicField> = (0..6)
                .map(|k| crate::solvers::random_vorticity(g, 5, 10 * i + k).unwrap())
                .collect();
            let maps = (0..5)
                .map(|k| {
                    let a = 0.01 * (k + 2 * i as usize) as f64;
                    DiffeoMap::from_fn(g, move |x, _| [[a * x.sin(), a * x.cos(), 0.0, 0.0], [0.0; 4]])
                })
                .collect();
            Trajectory::new(g, 0.1, f, Some(MapChain::from_maps(maps).unwrap()), TrajectoryMeta::default()).unwrap()
        });
        let ds = build_dataset(trajs.collect(), 2, 1.0, 0).unwrap();
        let (a, _) = fit_spectral_lifter(&ds, 4, 1e-6, FitMode::MapSupervised).unwrap();
        let n = ds.train().len();
        let perm: Vec<usize> = (0..n).rev().collect();
        let ds2 = ds.with_train_order(&perm).unwrap();
        let (b, _) = fit_spectral_lifter(&ds2, 4, 1e-6, FitMode::MapSupervised).unwrap();
        let scale = a.weights().iter().map(|w| w.norm()).fold(0.0, f64::max);
        for (x, y) in a.weights().iter().zip(b.weights()) {
            assert!((x - y).norm() <= 1e-12 * scale.max(1.0));
        }
        assert!((a.bias()[0] - b.bias()[0]).abs() < 1e-15);
    }

    #[test]
    fn mismatch_gradient_matches_differences() {
        let g = Grid::square(16).unwrap();
        let trajs = vec![translation_trajectory(g, 4, 0.02, 0.3)];
        let ds = build_dataset(trajs, 2, 1.0, 0).unwrap();
        let mut l = SpectralLifter::zeros(g, 2, 2, 1e-6, [0.01, -0.02]).unwrap();
        for (i, w) in l.weights.iter_mut().enumerate() {
            *w = Complex64::new(0.01 * ((i % 7) as f64 - 3.0), 0.005 * ((i % 5) as f64 - 2.0));
        }
        let cache = Cache::build(&ds, ds.train(), l.k_feat, false);
        let samples = ds
            .train()
            .iter()
            .map(|&s| MismatchSample {
                feats: cache.inputs(s, 2).into_iter().cloned().collect(),
                src: HermiteField::from_field_spectral(ds.inputs(s).last().unwrap()).unwrap(),
                tgt: ds.target(s).data().to_vec(),
            })
            .collect();
        let p = Mismatch {
            lifter: &l,
            samples,
            lambda: 0.1,
            pts: g.vertices(),
        };
        let (_, gw, gb) = p.gradient(&l);
        let h = 1e-6;
        for idx in [0usize, 5, 13, l.weights.len() - 1] {
            for part in 0..2 {
                let unit = if part == 0 { Complex64::new(h, 0.0) } else { Complex64::new(0.0, h) };
                let mut a = l.clone();
                a.weights[idx] += unit;
                let mut b = l.clone();
                b.weights[idx] -= unit;
                let fd = (p.loss(&a) - p.loss(&b)) / (2.0 * h);
                let an = if part == 0 { gw[idx].re } else { gw[idx].im };
                assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-4), "{idx} {part}: {fd} vs {an}");
            }
        }
        for c in 0..2 {
            let mut a = l.clone();
            a.bias[c] += h;
            let mut b = l.clone();
            b.bias[c] -= h;
            let fd = (p.loss(&a) - p.loss(&b)) / (2.0 * h);
            assert!((fd - gb[c]).abs() <= 1e-6 * gb[c].abs().max(1e-4), "{fd} vs {}", gb[c]);
        }
    }

    #[test]
    fn field_mismatch_learns_shift_without_maps() {
        let g = Grid::square(32).unwrap();
        let dt = 0.01;
        let trajs = (0..3)
            .map(|i| {
                let mut t = translation_trajectory(g, 8, dt, i as f64);
                t.submaps = None;
                t
            })
            .collect();
        let ds = build_dataset(trajs, 1, 1.0, 0).unwrap();
        let mode = FitMode::FieldMismatch {
            lambda: 1e-3,
            max_iters: 200,
            step_init: 1.0,
        };
        let (l, report) = fit_spectral_lifter(&ds, 4, 1e-6, mode).unwrap();
        let h = &report.loss_history;
        assert!(h.windows(2).all(|w| w[1] <= w[0]));
        assert!(h.last().unwrap() < &(1e-2 * h[0]), "{h:?}");
        let d = l.lift(&ds.inputs(ds.train()[0]), 0).unwrap().displacement_at([0.5, 0.5]);
        assert!((d[0] + 2.0 * std::f64::consts::PI * dt).abs() < 5e-3, "{d:?}");
    }
}
