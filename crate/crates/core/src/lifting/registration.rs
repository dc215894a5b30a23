use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_history, Lifter, LifterKind};
use crate::diffeo::{DiffeoMap, PAR_CHUNK};
use crate::error::{Error, Result};
use crate::field::{
    dft_values, differentiate, idft_values, pairwise_sum, spectral_resample, wavenumber, Grid,
    HermiteField, PeriodicField,
};

/// Settings for [`register_pair`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegistrationConfig {
    /// Weight of the `|∇v|²` penalty.
    pub lambda_reg: f64,
    /// Iteration cap per resolution level.
    pub max_iters: usize,
    /// First trial step of the line search.
    pub step_init: f64,
    pub armijo_c: f64,
    /// Stop once an accepted step decreases the objective by less than this
    /// fraction.
    pub tol_rel: f64,
    pub multires_levels: usize,
    /// Descent runs in the metric `(1 − σΔ)`: the gradient is smoothed by
    /// `1/(1 + σ|k|²)` before each step. `σ = 0` is plain descent.
    pub smoothing: f64,
    /// `u_src` is evaluated through the Hermite interpolant of its spectral
    /// refinement by this factor.
    pub src_refine: usize,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            lambda_reg: 1e-3,
            max_iters: 2000,
            step_init: 0.1,
            armijo_c: 1e-4,
            tol_rel: 1e-9,
            multires_levels: 1,
            smoothing: 1.0,
            src_refine: 4,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_reg >= 0.0 && self.lambda_reg.is_finite()) {
            return Err(Error::Config(format!("lambda_reg must be nonnegative, got {}", self.lambda_reg)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if !(self.step_init > 0.0 && self.step_init.is_finite()) {
            return Err(Error::Config(format!("step_init must be positive, got {}", self.step_init)));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Err(Error::Config(format!("armijo_c must lie in (0, 1), got {}", self.armijo_c)));
        }
        if !(self.tol_rel > 0.0) {
            return Err(Error::Config(format!("tol_rel must be positive, got {}", self.tol_rel)));
        }
        if !(self.smoothing >= 0.0 && self.smoothing.is_finite()) {
            return Err(Error::Config(format!("smoothing must be nonnegative, got {}", self.smoothing)));
        }
        if self.src_refine == 0 {
            return Err(Error::Config("src_refine must be at least 1".into()));
        }
        if self.multires_levels == 0 {
            return Err(Error::Config("multires_levels must be at least 1".into()));
        }
        Ok(())
    }
}

/// Objective history of one resolution level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub nx: usize,
    pub ny: usize,
    /// `J` at the starting point followed by every accepted iterate.
    pub objective: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationReport {
    pub levels: Vec<LevelReport>,
}

impl RegistrationReport {
    /// Accepted iterations summed over levels.
    pub fn iterations(&self) -> usize {
        self.levels.iter().map(|l| l.objective.len() - 1).sum()
    }

    pub fn converged(&self) -> bool {
        self.levels.last().map_or(true, |l| l.converged)
    }

    /// `J` at the final iterate on the finest level.
    pub fn final_objective(&self) -> f64 {
        self.levels
            .last()
            .and_then(|l| l.objective.last().copied())
            .unwrap_or(0.0)
    }

    /// True when every level's history is non-increasing.
    pub fn is_monotone(&self) -> bool {
        self.levels
            .iter()
            .all(|l| l.objective.windows(2).all(|w| w[1] <= w[0]))
    }
}

/// One registration problem on one grid.
struct Problem {
    grid: Grid,
    src: HermiteField,
    /// Vertex `i` of `grid` is node `node_of[i]` of `src`.
    node_of: Vec<usize>,
    tgt: Vec<f64>,
    pts: Vec<[f64; 2]>,
    lambda: f64,
}

impl Problem {
    fn new(u_src: &PeriodicField, u_tgt: &PeriodicField, lambda: f64, refine: usize) -> Result<Self> {
        u_src.ensure_scalar()?;
        u_tgt.ensure_scalar()?;
        let g = u_src.grid();
        g.ensure_same(&u_tgt.grid())?;
        let fine = Grid::new(g.nx() * refine, g.ny() * refine)?;
        let src = if refine == 1 {
            HermiteField::from_field_spectral(u_src)?
        } else {
            HermiteField::from_field_spectral(&spectral_resample(u_src, fine)?)?
        };
        let node_of = (0..g.ny())
            .flat_map(|j| (0..g.nx()).map(move |i| fine.index(i * refine, j * refine)))
            .collect();
        Ok(Self {
            grid: g,
            src,
            node_of,
            tgt: u_tgt.data().to_vec(),
            pts: u_src.grid().vertices(),
            lambda,
        })
    }

    fn n(&self) -> f64 {
        self.grid.len() as f64
    }

    fn residuals(&self, vx: &[f64], vy: &[f64]) -> Vec<f64> {
        self.pts
            .par_iter()
            .enumerate()
            .with_min_len(PAR_CHUNK)
            .map(|(i, &p)| self.tgt[i] - self.sample(i, p, vx[i], vy[i]).0)
            .collect()
    }

    /// Interpolant value and gradient at vertex `i` displaced by `(dx, dy)`;
    /// undisplaced vertices read the nodal data directly.
    #[inline]
    fn sample(&self, i: usize, p: [f64; 2], dx: f64, dy: f64) -> (f64, [f64; 2]) {
        if dx == 0.0 && dy == 0.0 {
            let n = self.src.nodes()[self.node_of[i]];
            (n[0], [n[1], n[2]])
        } else {
            self.src.eval_grad([p[0] + dx, p[1] + dy])
        }
    }

    fn smooth(&self, g: &[f64], sigma: f64) -> Vec<f64> {
        if sigma == 0.0 {
            return g.to_vec();
        }
        let mut s = dft_values(self.grid, g);
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        for (idx, c) in s.coeffs_mut().iter_mut().enumerate() {
            let kx = wavenumber(idx % nx, nx) as f64;
            let ky = wavenumber(idx / nx, ny) as f64;
            *c /= 1.0 + sigma * (kx * kx + ky * ky);
        }
        idft_values(&s)
    }

    /// `(Σ |∂x v|² + |∂y v|²)` for one component and `−Δv` (spectral).
    fn dirichlet(&self, v: &[f64]) -> (f64, Vec<f64>) {
        let s = dft_values(self.grid, v);
        let sx = differentiate(&s, 1, 0);
        let sy = differentiate(&s, 0, 1);
        let dx = idft_values(&sx);
        let dy = idft_values(&sy);
        let energy = pairwise_sum(&dx.iter().zip(&dy).map(|(a, b)| a * a + b * b).collect::<Vec<_>>());
        let xx = idft_values(&differentiate(&sx, 1, 0));
        let yy = idft_values(&differentiate(&sy, 0, 1));
        let neg_lap = xx.iter().zip(&yy).map(|(a, b)| -(a + b)).collect();
        (energy, neg_lap)
    }

    fn objective(&self, vx: &[f64], vy: &[f64]) -> f64 {
        let r = self.residuals(vx, vy);
        let data = pairwise_sum(&r.iter().map(|r| r * r).collect::<Vec<_>>());
        let reg = if self.lambda > 0.0 {
            self.dirichlet(vx).0 + self.dirichlet(vy).0
        } else {
            0.0
        };
        (data + self.lambda * reg) / self.n()
    }

    fn gradient(&self, vx: &[f64], vy: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let n = self.n();
        let evals: Vec<(f64, [f64; 2])> = self
            .pts
            .par_iter()
            .enumerate()
            .with_min_len(PAR_CHUNK)
            .map(|(i, &p)| {
                let (val, grad) = self.sample(i, p, vx[i], vy[i]);
                (self.tgt[i] - val, grad)
            })
            .collect();
        let data = pairwise_sum(&evals.iter().map(|(r, _)| r * r).collect::<Vec<_>>());
        let mut gx: Vec<f64> = evals.iter().map(|(r, g)| -2.0 * r * g[0] / n).collect();
        let mut gy: Vec<f64> = evals.iter().map(|(r, g)| -2.0 * r * g[1] / n).collect();
        let mut reg = 0.0;
        if self.lambda > 0.0 {
            let (ex, lx) = self.dirichlet(vx);
            let (ey, ly) = self.dirichlet(vy);
            reg = ex + ey;
            let s = 2.0 * self.lambda / n;
            gx.iter_mut().zip(&lx).for_each(|(g, l)| *g += s * l);
            gy.iter_mut().zip(&ly).for_each(|(g, l)| *g += s * l);
        }
        ((data + self.lambda * reg) / n, gx, gy)
    }

    /// Smooths both halves of a stacked `[x; y]` vector.
    fn precondition(&self, g: &[f64], sigma: f64) -> Vec<f64> {
        let n = self.grid.len();
        let mut out = self.smooth(&g[..n], sigma);
        out.extend(self.smooth(&g[n..], sigma));
        out
    }

    /// Descent from `(vx, vy)` along limited-memory quasi-Newton directions
    /// with Armijo backtracking; the initial inverse Hessian is the smoothing
    /// operator. Falls back to the smoothed gradient whenever the quasi-Newton
    /// direction is not a descent direction.
    fn descend(&self, vx: &mut Vec<f64>, vy: &mut Vec<f64>, cfg: &RegistrationConfig) -> LevelReport {
        const MEMORY: usize = 8;
        let n = self.grid.len();
        let nf = self.n();
        let stack = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().chain(b).copied().collect() };
        let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };

        let mut v = stack(vx, vy);
        let (mut j, gx, gy) = self.gradient(vx, vy);
        // N·∇J keeps step lengths independent of the resolution
        let mut g: Vec<f64> = stack(&gx, &gy).into_iter().map(|x| x * nf).collect();
        let mut history = vec![j];
        let mut converged = j == 0.0;
        let mut memory: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
        let mut iter = 0;
        while !converged && iter < cfg.max_iters {
            iter += 1;
            let mut q = g.clone();
            let mut coef = Vec::with_capacity(memory.len());
            for (s_k, y_k, rho) in memory.iter().rev() {
                let a = rho * dot(s_k, &q);
                q.iter_mut().zip(y_k).for_each(|(q, y)| *q -= a * y);
                coef.push(a);
            }
            let mut r = self.precondition(&q, cfg.smoothing);
            let first = memory.is_empty();
            if let Some((s_k, y_k, _)) = memory.last() {
                let py = self.precondition(y_k, cfg.smoothing);
                let gamma = dot(s_k, y_k) / dot(y_k, &py);
                r.iter_mut().for_each(|x| *x *= gamma);
            }
            for ((s_k, y_k, rho), a) in memory.iter().zip(coef.iter().rev()) {
                let b = rho * dot(y_k, &r);
                r.iter_mut().zip(s_k).for_each(|(r, s)| *r += (a - b) * s);
            }
            let mut slope = dot(&g, &r);
            if !(slope > 0.0) {
                memory.clear();
                r = self.precondition(&g, cfg.smoothing);
                slope = dot(&g, &r);
            }
            if !(slope > 0.0) {
                converged = true;
                break;
            }
            // slope is along N·∇J, the objective changes by slope/N per unit step
            let slope = slope / nf;
            let mut alpha = if first { cfg.step_init } else { 1.0 };
            let mut accepted = None;
            for _ in 0..60 {
                let t: Vec<f64> = v.iter().zip(&r).map(|(v, d)| v - alpha * d).collect();
                let jt = self.objective(&t[..n], &t[n..]);
                if jt <= j - cfg.armijo_c * alpha * slope {
                    accepted = Some((t, jt));
                    break;
                }
                alpha *= 0.5;
            }
            let Some((t, jt)) = accepted else {
                // no decrease representable at this precision
                converged = true;
                break;
            };
            let decrease = (j - jt) / j;
            let (jn, ngx, ngy) = self.gradient(&t[..n], &t[n..]);
            let gn: Vec<f64> = stack(&ngx, &ngy).into_iter().map(|x| x * nf).collect();
            let s_k: Vec<f64> = t.iter().zip(&v).map(|(a, b)| a - b).collect();
            let y_k: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
            let sy = dot(&s_k, &y_k);
            if sy > 1e-12 * dot(&s_k, &s_k).sqrt() * dot(&y_k, &y_k).sqrt() {
                if memory.len() == MEMORY {
                    memory.remove(0);
                }
                memory.push((s_k, y_k, 1.0 / sy));
            }
            v = t;
            g = gn;
            j = jn;
            history.push(j);
            if decrease < cfg.tol_rel || j == 0.0 {
                converged = true;
            }
        }
        *vx = v[..n].to_vec();
        *vy = v[n..].to_vec();
        debug!(
            "registration {}x{}: {} iterations, J {:e} -> {:e}",
            self.grid.nx(),
            self.grid.ny(),
            history.len() - 1,
            history[0],
            j
        );
        LevelReport {
            nx: self.grid.nx(),
            ny: self.grid.ny(),
            objective: history,
            converged,
        }
    }
}

fn resample_values(grid: Grid, values: Vec<f64>, target: Grid) -> Result<Vec<f64>> {
    if grid == target {
        return Ok(values);
    }
    Ok(spectral_resample(&PeriodicField::new(grid, 1, values)?, target)?.into_data())
}

/// Finds `φ = id + v` with `u_tgt ≈ u_src ∘ φ` by minimizing
/// `Σ (u_tgt − u_src(x + v))²/N + λ Σ |∇v|²/N` over vertex displacements.
///
/// `u_src` is evaluated through its spectral Hermite interpolant. Coarse
/// levels halve the grid; a level whose warm start is worse than the zero
/// displacement restarts from zero, so `J(v) ≤ J(0)` on the input grid.
pub fn register_pair(
    u_src: &PeriodicField,
    u_tgt: &PeriodicField,
    cfg: &RegistrationConfig,
) -> Result<(DiffeoMap, RegistrationReport)> {
    cfg.validate()?;
    u_src.ensure_scalar()?;
    u_tgt.ensure_scalar()?;
    let fine = u_src.grid();
    fine.ensure_same(&u_tgt.grid())?;

    let mut grids = vec![fine];
    for _ in 1..cfg.multires_levels {
        let g = *grids.last().expect("non-empty");
        if g.nx() % 2 != 0 || g.ny() % 2 != 0 || g.nx() / 2 < 8 || g.ny() / 2 < 8 {
            break;
        }
        grids.push(Grid::new(g.nx() / 2, g.ny() / 2)?);
    }
    grids.reverse();

    let mut levels = Vec::new();
    let mut current: Option<(Grid, Vec<f64>, Vec<f64>)> = None;
    for &g in &grids {
        let (src, tgt) = if g == fine {
            (u_src.clone(), u_tgt.clone())
        } else {
            (spectral_resample(u_src, g)?, spectral_resample(u_tgt, g)?)
        };
        let problem = Problem::new(&src, &tgt, cfg.lambda_reg, cfg.src_refine)?;
        let zero = vec![0.0; g.len()];
        let (mut vx, mut vy) = match current.take() {
            Some((pg, px, py)) => {
                let vx = resample_values(pg, px, g)?;
                let vy = resample_values(pg, py, g)?;
                if problem.objective(&vx, &vy) <= problem.objective(&zero, &zero) {
                    (vx, vy)
                } else {
                    (zero.clone(), zero)
                }
            }
            None => (zero.clone(), zero),
        };
        levels.push(problem.descend(&mut vx, &mut vy, cfg));
        current = Some((g, vx, vy));
    }
    let (_, vx, vy) = current.expect("at least one level");
    let map = if vx.iter().chain(&vy).all(|&v| v == 0.0) {
        DiffeoMap::identity(fine)
    } else {
        DiffeoMap::from_values_spectral(fine, &vx, &vy)?
    };
    Ok((map, RegistrationReport { levels }))
}

/// The objective [`register_pair`] minimizes on the input grid, at
/// displacement values `(vx, vy)`.
pub fn registration_objective(
    u_src: &PeriodicField,
    u_tgt: &PeriodicField,
    vx: &[f64],
    vy: &[f64],
    cfg: &RegistrationConfig,
) -> Result<f64> {
    cfg.validate()?;
    let p = Problem::new(u_src, u_tgt, cfg.lambda_reg, cfg.src_refine)?;
    check_len(&p, vx, vy)?;
    Ok(p.objective(vx, vy))
}

/// Objective and its analytic gradient with respect to `(vx, vy)`.
pub fn registration_gradient(
    u_src: &PeriodicField,
    u_tgt: &PeriodicField,
    vx: &[f64],
    vy: &[f64],
    cfg: &RegistrationConfig,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    cfg.validate()?;
    let p = Problem::new(u_src, u_tgt, cfg.lambda_reg, cfg.src_refine)?;
    check_len(&p, vx, vy)?;
    Ok(p.gradient(vx, vy))
}

fn check_len(p: &Problem, vx: &[f64], vy: &[f64]) -> Result<()> {
    if vx.len() != p.grid.len() || vy.len() != p.grid.len() {
        return Err(Error::InvalidField(format!(
            "displacement planes need {} values",
            p.grid.len()
        )));
    }
    Ok(())
}

/// Lifts by registering the newest history frame onto a reference frame.
///
/// Step `k` registers onto `targets[k]`, the frame the rollout should reach
/// after that step.
#[derive(Debug, Clone)]
pub struct RegistrationLifter {
    targets: Vec<PeriodicField>,
    cfg: RegistrationConfig,
    window: usize,
}

impl RegistrationLifter {
    pub fn new(targets: Vec<PeriodicField>, cfg: RegistrationConfig, window: usize) -> Result<Self> {
        cfg.validate()?;
        let first = targets
            .first()
            .ok_or_else(|| Error::Lifter("registration lifter needs target frames".into()))?;
        for t in &targets {
            t.ensure_scalar()?;
            first.grid().ensure_same(&t.grid())?;
        }
        if window == 0 {
            return Err(Error::Lifter("window must be at least 1".into()));
        }
        Ok(Self { targets, cfg, window })
    }

    pub fn config(&self) -> &RegistrationConfig {
        &self.cfg
    }
}

impl Lifter for RegistrationLifter {
    fn window(&self) -> usize {
        self.window
    }

    fn grid(&self) -> Grid {
        self.targets[0].grid()
    }

    fn kind(&self) -> LifterKind {
        LifterKind::Registration
    }

    fn lift(&self, history: &[PeriodicField], step: usize) -> Result<DiffeoMap> {
        check_history(self, history)?;
        let target = self.targets.get(step).ok_or_else(|| {
            Error::Lifter(format!(
                "registration lifter has {} targets, step {step} requested",
                self.targets.len()
            ))
        })?;
        let src = history.last().expect("window is at least 1");
        let (map, report) = register_pair(src, target, &self.cfg)?;
        if !report.converged() {
            log::warn!(
                "registration at step {step} stopped after {} iterations without converging",
                report.iterations()
            );
        }
        Ok(map)
    }
}
