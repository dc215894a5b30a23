use log::warn;
use rayon::prelude::*;

use super::trajectory::{Trajectory, TrajectoryMeta};
use super::velocity::VelocitySampler;
use crate::diffeo::{stencil_nodes, stencil_offsets, DiffeoMap, MapChain, PAR_CHUNK};
use crate::error::{Error, Result};
use crate::field::{Grid, HermiteField, PeriodicField, ScalarSampler};

/// Offset of the SSP-RK3 backward foot point from `p` over `[t1 - dt, t1]`.
#[inline]
fn foot_offset(vel: &dyn VelocitySampler, p: [f64; 2], t1: f64, dt: f64) -> [f64; 2] {
    let h = -dt;
    let k1 = vel.velocity(t1, p);
    let y1 = [h * k1[0], h * k1[1]];
    let k2 = vel.velocity(t1 + h, [p[0] + y1[0], p[1] + y1[1]]);
    let y2 = [0.25 * (y1[0] + h * k2[0]), 0.25 * (y1[1] + h * k2[1])];
    let k3 = vel.velocity(t1 + 0.5 * h, [p[0] + y2[0], p[1] + y2[1]]);
    [
        2.0 / 3.0 * (y2[0] + h * k3[0]),
        2.0 / 3.0 * (y2[1] + h * k3[1]),
    ]
}

/// Advances a backward submap by one step: the new map sends `p` to
/// `sub(foot(p))`, where `foot` traces the characteristic from `t1` back to
/// `t1 - dt`. Hermite data are rebuilt from the 5-point stencil.
pub(crate) fn advance_submap(
    sub: &DiffeoMap,
    vel: &dyn VelocitySampler,
    t1: f64,
    dt: f64,
    fd_eps: f64,
) -> Result<(DiffeoMap, f64)> {
    let grid = sub.grid();
    let offsets = stencil_offsets(fd_eps);
    let out: Vec<([[f64; 4]; 2], f64)> = grid
        .vertices()
        .par_iter()
        .with_min_len(PAR_CHUNK / 8)
        .map(|&p| {
            let disp = |o: [f64; 2]| {
                let s = [p[0] + o[0], p[1] + o[1]];
                let y = foot_offset(vel, s, t1, dt);
                let d = sub.displacement_at([s[0] + y[0], s[1] + y[1]]);
                [y[0] + d[0], y[1] + d[1]]
            };
            let u = vel.velocity(t1, p);
            let speed = u[0].hypot(u[1]);
            (stencil_nodes(disp([0.0, 0.0]), offsets.map(disp), fd_eps), speed)
        })
        .collect();
    let max_speed = out.iter().map(|o| o.1).fold(0.0, f64::max);
    let unstable = |e: Error| Error::Instability(format!("submap reconstruction at t = {t1}: {e}"));
    let vx = HermiteField::from_nodes(grid, out.iter().map(|o| o.0[0]).collect()).map_err(unstable)?;
    let vy = HermiteField::from_nodes(grid, out.iter().map(|o| o.0[1]).collect()).map_err(unstable)?;
    Ok((DiffeoMap::from_components(vx, vy)?, max_speed))
}

pub(crate) fn check_cfl(max_speed: f64, dt: f64, grid: Grid) {
    let h = grid.dx().min(grid.dy());
    if max_speed * dt > h {
        warn!(
            "CFL number {:.3} exceeds 1 (max speed {max_speed:.3e}, dt {dt:.3e})",
            max_speed * dt / h
        );
    }
}

pub(crate) fn step_count(span: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !(span > 0.0) {
        return Err(Error::Domain(format!(
            "time span and step must be positive (span {span}, dt {dt})"
        )));
    }
    let n = (span / dt).round();
    if (n * dt - span).abs() > 1e-9 * span.max(1.0) || n < 1.0 {
        return Err(Error::Domain(format!("dt {dt} does not divide the interval {span}")));
    }
    Ok(n as usize)
}

pub(crate) fn default_fd_eps(grid: Grid) -> f64 {
    grid.dx().min(grid.dy()) / 100.0
}

/// Backward submap `φ_{[t1,t0]}` of a velocity field, integrated with RK3
/// characteristics and Hermite reconstruction every `dt`.
pub fn integrate_backward_map(
    vel: &dyn VelocitySampler,
    t0: f64,
    t1: f64,
    dt: f64,
    grid: Grid,
    fd_eps: f64,
) -> Result<DiffeoMap> {
    if !(fd_eps > 0.0) {
        return Err(Error::Domain(format!("fd_eps must be positive, got {fd_eps}")));
    }
    let n = step_count(t1 - t0, dt)?;
    let mut sub = DiffeoMap::identity(grid);
    for k in 0..n {
        let t = t0 + (k + 1) as f64 * dt;
        let (next, speed) = advance_submap(&sub, vel, t, dt, fd_eps)?;
        check_cfl(speed, dt, grid);
        sub = next;
    }
    Ok(sub)
}

/// Samples `u0 ∘ chain` at the vertices of `grid`.
pub(crate) fn pull_back(u0: &dyn ScalarSampler, chain: &MapChain, grid: Grid) -> Result<PeriodicField> {
    let values: Vec<f64> = chain
        .evaluate(&grid.vertices())
        .par_iter()
        .with_min_len(PAR_CHUNK)
        .map(|&q| u0.sample(q))
        .collect();
    PeriodicField::new(grid, 1, values)
}

/// Characteristic-mapping advection of `u0` by a prescribed velocity.
///
/// Frames are stored every `remap_every` steps, each together with the
/// submap that produced it.
pub fn advect_cmm(
    vel: &dyn VelocitySampler,
    u0: &dyn ScalarSampler,
    t_final: f64,
    dt: f64,
    remap_every: usize,
    grid: Grid,
) -> Result<Trajectory> {
    if remap_every == 0 {
        return Err(Error::Domain("remap_every must be at least 1".into()));
    }
    let n = step_count(t_final, dt)?;
    if n % remap_every != 0 {
        return Err(Error::Domain(format!(
            "{n} steps are not a multiple of remap_every = {remap_every}"
        )));
    }
    let fd_eps = default_fd_eps(grid);
    let mut chain = MapChain::new();
    let mut frames = vec![pull_back(u0, &chain, grid)?];
    let mut sub = DiffeoMap::identity(grid);
    for k in 0..n {
        let t = (k + 1) as f64 * dt;
        let (next, speed) = advance_submap(&sub, vel, t, dt, fd_eps)?;
        check_cfl(speed, dt, grid);
        sub = next;
        if (k + 1) % remap_every == 0 {
            chain.push(std::mem::replace(&mut sub, DiffeoMap::identity(grid)))?;
            frames.push(pull_back(u0, &chain, grid)?);
        }
    }
    let meta = TrajectoryMeta {
        solver: "advect_cmm".into(),
        seed: None,
        remap_every,
        step_dt: dt,
        note: String::new(),
    };
    Trajectory::new(grid, dt * remap_every as f64, frames, Some(chain), meta)
}
