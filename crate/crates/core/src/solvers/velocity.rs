use std::fmt;

use crate::error::{Error, Result};
use crate::field::{dft, differentiate, wrap, Grid, HermiteCell, HermiteField, PeriodicField};

/// Time-dependent velocity field on the torus.
pub trait VelocitySampler: Send + Sync {
    fn velocity(&self, t: f64, p: [f64; 2]) -> [f64; 2];
}

/// Spatially uniform, steady velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantVelocity(pub [f64; 2]);

impl VelocitySampler for ConstantVelocity {
    #[inline]
    fn velocity(&self, _t: f64, _p: [f64; 2]) -> [f64; 2] {
        self.0
    }
}

/// Closed-form velocity `f(t, p)`.
pub struct AnalyticVelocity<F>(pub F);

impl<F: Fn(f64, [f64; 2]) -> [f64; 2] + Send + Sync> VelocitySampler for AnalyticVelocity<F> {
    #[inline]
    fn velocity(&self, t: f64, p: [f64; 2]) -> [f64; 2] {
        (self.0)(t, p)
    }
}

impl<F> fmt::Debug for AnalyticVelocity<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("AnalyticVelocity")
    }
}

/// Velocity frames at uniform times, bilinear in space and linear in time.
/// Queries outside the stored time range use the nearest frame.
#[derive(Debug, Clone)]
pub struct GriddedVelocity {
    t0: f64,
    dt: f64,
    frames: Vec<PeriodicField>,
}

impl GriddedVelocity {
    /// `frames[k]` holds the 2-channel velocity at `t0 + k·dt`. With
    /// `incompressible` set, every frame must have spectral divergence norm
    /// below `1e-8`.
    pub fn new(frames: Vec<PeriodicField>, t0: f64, dt: f64, incompressible: bool) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::InvalidField("no velocity frames".into()))?;
        if !(dt > 0.0) {
            return Err(Error::Domain(format!("frame spacing must be positive, got {dt}")));
        }
        for f in &frames {
            first.grid().ensure_same(&f.grid())?;
            if f.channels() != 2 {
                return Err(Error::InvalidField(format!(
                    "velocity frames need 2 channels, got {}",
                    f.channels()
                )));
            }
            if incompressible {
                let div = divergence_norm(f)?;
                if div > 1e-8 {
                    return Err(Error::InvalidField(format!(
                        "velocity frame is not divergence free (norm {div:e})"
                    )));
                }
            }
        }
        Ok(Self { t0, dt, frames })
    }

    pub fn frames(&self) -> &[PeriodicField] {
        &self.frames
    }
}

#[inline]
fn bilinear2(field: &PeriodicField, p: [f64; 2]) -> [f64; 2] {
    let g = field.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let sx = wrap(p[0]) / g.dx();
    let sy = wrap(p[1]) / g.dy();
    let i0 = (sx.floor() as usize).min(nx - 1);
    let j0 = (sy.floor() as usize).min(ny - 1);
    let fx = sx - i0 as f64;
    let fy = sy - j0 as f64;
    let (i1, j1) = ((i0 + 1) % nx, (j0 + 1) % ny);
    let w = [
        (1.0 - fx) * (1.0 - fy),
        fx * (1.0 - fy),
        (1.0 - fx) * fy,
        fx * fy,
    ];
    let idx = [j0 * nx + i0, j0 * nx + i1, j1 * nx + i0, j1 * nx + i1];
    std::array::from_fn(|c| {
        let ch = field.channel(c);
        idx.iter().zip(&w).map(|(&k, &wk)| ch[k] * wk).sum()
    })
}

impl VelocitySampler for GriddedVelocity {
    fn velocity(&self, t: f64, p: [f64; 2]) -> [f64; 2] {
        let last = self.frames.len() - 1;
        let s = ((t - self.t0) / self.dt).clamp(0.0, last as f64);
        let k = (s.floor() as usize).min(last.saturating_sub(1));
        let a = bilinear2(&self.frames[k], p);
        if last == 0 {
            return a;
        }
        let b = bilinear2(&self.frames[k + 1], p);
        let th = s - k as f64;
        [a[0] + th * (b[0] - a[0]), a[1] + th * (b[1] - a[1])]
    }
}

/// RMS of the spectral divergence of a 2-channel field.
pub fn divergence_norm(velocity: &PeriodicField) -> Result<f64> {
    let ux = dft(&velocity.channel_field(0))?;
    let uy = dft(&velocity.channel_field(1))?;
    let dx = differentiate(&ux, 1, 0);
    let dy = differentiate(&uy, 0, 1);
    let s: f64 = dx
        .coeffs()
        .iter()
        .zip(dy.coeffs())
        .map(|(a, b)| (a + b).norm_sqr())
        .sum();
    Ok(s.sqrt())
}

/// Vector-valued Hermite interpolant; both components share one cell lookup.
#[derive(Debug, Clone)]
pub(crate) struct HermiteVector {
    pub x: HermiteField,
    pub y: HermiteField,
}

impl HermiteVector {
    pub fn grid(&self) -> Grid {
        self.x.grid()
    }
}

/// Velocity from the two most recent Hermite frames, extrapolated linearly
/// in time: `u(t) = u_n + (t - t_n)/dt · (u_n - u_{n-1})`.
#[derive(Debug, Clone)]
pub(crate) struct ExtrapolatedVelocity {
    pub current: HermiteVector,
    pub previous: Option<HermiteVector>,
    pub t_current: f64,
    pub dt: f64,
}

impl VelocitySampler for ExtrapolatedVelocity {
    #[inline]
    fn velocity(&self, t: f64, p: [f64; 2]) -> [f64; 2] {
        let cell = HermiteCell::locate(&self.current.grid(), p);
        let ux = cell.value(self.current.x.nodes());
        let uy = cell.value(self.current.y.nodes());
        match &self.previous {
            None => [ux, uy],
            Some(prev) => {
                let th = (t - self.t_current) / self.dt;
                let px = cell.value(prev.x.nodes());
                let py = cell.value(prev.y.nodes());
                [ux + th * (ux - px), uy + th * (uy - py)]
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shear(grid: Grid, amp: f64) -> PeriodicField {
        let ux = PeriodicField::from_fn(grid, |_, y| amp * y.sin());
        let uy = PeriodicField::zeros(grid, 1);
        PeriodicField::stack(&[ux, uy]).unwrap()
    }

    #[test]
    fn gridded_interpolates_in_time() {
        let g = Grid::square(32).unwrap();
        let v = GriddedVelocity::new(vec![shear(g, 1.0), shear(g, 3.0)], 0.0, 0.5, true).unwrap();
        let p = [0.0, g.y(8)];
        let u = v.velocity(0.25, p);
        assert!((u[0] - 2.0 * p[1].sin()).abs() < 1e-14 && u[1] == 0.0);
        assert_eq!(v.velocity(10.0, p), v.velocity(0.5, p));
    }

    #[test]
    fn rejects_compressible_frames() {
        let g = Grid::square(16).unwrap();
        let ux = PeriodicField::from_fn(g, |x, _| x.sin());
        let f = PeriodicField::stack(&[ux, PeriodicField::zeros(g, 1)]).unwrap();
        assert!(GriddedVelocity::new(vec![f.clone()], 0.0, 1.0, true).is_err());
        assert!(GriddedVelocity::new(vec![f], 0.0, 1.0, false).is_ok());
    }

    #[test]
    fn divergence_of_cosine_field() {
        let g = Grid::square(16).unwrap();
        let ux = PeriodicField::from_fn(g, |x, _| x.sin());
        let f = PeriodicField::stack(&[ux, PeriodicField::zeros(g, 1)]).unwrap();
        // div = cos x, whose RMS is 1/√2
        assert!((divergence_norm(&f).unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
    }
}
