use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use super::cmm::{advance_submap, check_cfl, default_fd_eps, step_count};
use super::trajectory::{Trajectory, TrajectoryMeta};
use super::velocity::{ExtrapolatedVelocity, HermiteVector};
use crate::diffeo::{DiffeoMap, MapChain, PAR_CHUNK};
use crate::error::{Error, Result};
use crate::field::{
    dft, idft_values, Grid, HermiteField, PeriodicField, ScalarSampler, Spectrum,
};

/// Velocity spectra `(û_x, û_y)` of a vorticity field.
///
/// With `ω = ∂x u_y − ∂y u_x` and `∇·u = 0` the stream function solves
/// `Δψ = −ω`, giving `û = i (k_y, −k_x) ω̂ / |k|²`. The mean and the Nyquist
/// rows are dropped.
fn velocity_spectra(omega: &PeriodicField) -> Result<(Spectrum, Spectrum)> {
    let w = dft(omega)?;
    let g = w.grid();
    let (hx, hy) = (g.nx() as i64 / 2, g.ny() as i64 / 2);
    let mut ux = Spectrum::zeros(g);
    let mut uy = Spectrum::zeros(g);
    for (kx, ky, c) in w.modes() {
        if (kx == 0 && ky == 0) || kx == -hx || ky == -hy {
            continue;
        }
        let k2 = (kx * kx + ky * ky) as f64;
        let s = c / k2;
        ux.set(kx, ky, Complex64::new(0.0, ky as f64) * s);
        uy.set(kx, ky, Complex64::new(0.0, -(kx as f64)) * s);
    }
    Ok((ux, uy))
}

/// Divergence-free velocity (2 channels) whose curl is `omega` minus its mean.
pub fn biot_savart(omega: &PeriodicField) -> Result<PeriodicField> {
    let (ux, uy) = velocity_spectra(omega)?;
    let mut data = idft_values(&ux);
    data.extend(idft_values(&uy));
    PeriodicField::new(omega.grid(), 2, data)
}

pub(crate) fn velocity_hermite(omega: &PeriodicField) -> Result<HermiteVector> {
    let (ux, uy) = velocity_spectra(omega)?;
    Ok(HermiteVector {
        x: HermiteField::from_spectrum(&ux)?,
        y: HermiteField::from_spectrum(&uy)?,
    })
}

/// The C¹ sampler of the initial vorticity used by [`euler_cmm`]; rollouts
/// that should reproduce solver frames must pull back through this sampler.
pub fn vorticity_sampler(omega0: &PeriodicField) -> Result<HermiteField> {
    HermiteField::from_field_spectral(omega0)
}

fn pull_back_through(
    w0: &dyn ScalarSampler,
    chain: &MapChain,
    sub: &DiffeoMap,
    grid: Grid,
) -> Result<PeriodicField> {
    let values: Vec<f64> = chain
        .evaluate(&sub.evaluate(&grid.vertices()))
        .par_iter()
        .with_min_len(PAR_CHUNK)
        .map(|&q| w0.sample(q))
        .collect();
    PeriodicField::new(grid, 1, values)
        .map_err(|e| Error::Instability(format!("vorticity became non-finite: {e}")))
}

/// 2D incompressible Euler by the characteristic mapping method.
///
/// The vorticity is `ω0 ∘ φ_{[t,0]}`, with the backward map built from
/// submaps of `remap_every` steps each. Velocities come from the
/// Biot–Savart law applied to the current vorticity on `grid` and are
/// extrapolated linearly in time from the last two steps. Frames are stored
/// at every remap.
pub fn euler_cmm(
    omega0: &PeriodicField,
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
    let w0 = vorticity_sampler(&omega0.map(|v| v - omega0.mean()))?;
    let fd_eps = default_fd_eps(grid);
    let mut chain = MapChain::new();
    let mut sub = DiffeoMap::identity(grid);
    let mut omega = pull_back_through(&w0, &chain, &sub, grid)?;
    let limit = 10.0 * omega.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut frames = vec![omega.clone()];
    let mut previous: Option<HermiteVector> = None;
    for k in 0..n {
        let vel = ExtrapolatedVelocity {
            current: velocity_hermite(&omega)?,
            previous: previous.take(),
            t_current: k as f64 * dt,
            dt,
        };
        let (next, speed) = advance_submap(&sub, &vel, (k + 1) as f64 * dt, dt, fd_eps)?;
        check_cfl(speed, dt, grid);
        previous = Some(vel.current);
        sub = next;
        let remap = (k + 1) % remap_every == 0;
        if remap {
            chain.push(std::mem::replace(&mut sub, DiffeoMap::identity(grid)))?;
        }
        omega = pull_back_through(&w0, &chain, &sub, grid)?;
        let peak = omega.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak > limit && limit > 0.0 {
            return Err(Error::Instability(format!(
                "max |ω| = {peak:.3e} at t = {:.4} exceeds 10× its initial value",
                (k + 1) as f64 * dt
            )));
        }
        if remap {
            frames.push(omega.clone());
        }
    }
    let meta = TrajectoryMeta {
        solver: "euler_cmm".into(),
        seed: None,
        remap_every,
        step_dt: dt,
        note: String::new(),
    };
    Trajectory::new(grid, dt * remap_every as f64, frames, Some(chain), meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::spectral_derivative;
    use crate::solvers::initial::random_vorticity;

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    fn curl(u: &PeriodicField) -> PeriodicField {
        let a = spectral_derivative(&u.channel_field(1), 1, 0).unwrap();
        let b = spectral_derivative(&u.channel_field(0), 0, 1).unwrap();
        PeriodicField::new(u.grid(), 1, a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect())
            .unwrap()
    }

    #[test]
    fn single_mode_round_trip() {
        let g = Grid::square(16).unwrap();
        let w = PeriodicField::from_fn(g, |_, y| y.cos());
        let u = biot_savart(&w).unwrap();
        let expect: Vec<f64> = g.vertices().iter().map(|p| -p[1].sin()).collect();
        assert!(max_abs_diff(u.channel(0), &expect) < 1e-14);
        assert!(u.channel(1).iter().all(|v| v.abs() < 1e-14));
        assert!(max_abs_diff(curl(&u).data(), w.data()) < 1e-12);
    }

    #[test]
    fn zero_vorticity_zero_velocity() {
        let g = Grid::square(8).unwrap();
        let u = biot_savart(&PeriodicField::zeros(g, 1)).unwrap();
        assert!(u.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn random_field_is_solenoidal_with_matching_curl() {
        let g = Grid::square(64).unwrap();
        let w = random_vorticity(g, 10, 4).unwrap();
        let u = biot_savart(&w).unwrap();
        assert!(crate::solvers::divergence_norm(&u).unwrap() < 1e-10);
        assert!(max_abs_diff(curl(&u).data(), w.data()) < 1e-10);
    }

    #[test]
    fn zero_vorticity_stays_zero() {
        let g = Grid::square(16).unwrap();
        let traj = euler_cmm(&PeriodicField::zeros(g, 1), 0.1, 0.01, 5, g).unwrap();
        assert!(traj.frames.iter().all(|f| f.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn shear_is_steady() {
        let g = Grid::square(32).unwrap();
        let w0 = PeriodicField::from_fn(g, |_, y| y.cos());
        let traj = euler_cmm(&w0, 0.2, 1e-2, 10, g).unwrap();
        let diff: f64 = traj.last().data().iter().zip(w0.data()).map(|(a, b)| (a - b).powi(2)).sum();
        let norm: f64 = w0.data().iter().map(|a| a * a).sum();
        assert!((diff / norm).sqrt() < 1e-6);
    }
}
