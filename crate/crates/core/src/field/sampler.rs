//! Point evaluation of fields: periodic bilinear interpolation and a common
//! sampler interface used by the group action.

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;

use super::grid::{wrap, Grid, PeriodicField};
use super::hermite::HermiteField;
use super::spectrum::dft;
use crate::error::{Error, Result};

/// Anything that can be evaluated at arbitrary points of the torus.
pub trait ScalarSampler: Send + Sync {
    fn sample(&self, p: [f64; 2]) -> f64;

    fn sample_many(&self, points: &[[f64; 2]]) -> Vec<f64> {
        points.iter().map(|&p| self.sample(p)).collect()
    }
}

pub type SharedSampler = Arc<dyn ScalarSampler>;

#[inline]
fn bilinear_at(grid: &Grid, data: &[f64], p: [f64; 2]) -> f64 {
    let (nx, ny) = (grid.nx(), grid.ny());
    let sx = wrap(p[0]) / grid.dx();
    let sy = wrap(p[1]) / grid.dy();
    let i0 = (sx.floor() as usize).min(nx - 1);
    let j0 = (sy.floor() as usize).min(ny - 1);
    let fx = (sx - i0 as f64).clamp(0.0, 1.0);
    let fy = (sy - j0 as f64).clamp(0.0, 1.0);
    let i1 = (i0 + 1) % nx;
    let j1 = (j0 + 1) % ny;
    let f00 = data[j0 * nx + i0];
    let f10 = data[j0 * nx + i1];
    let f01 = data[j1 * nx + i0];
    let f11 = data[j1 * nx + i1];
    let bottom = f00 + fx * (f10 - f00);
    let top = f01 + fx * (f11 - f01);
    let v = bottom + fy * (top - bottom);
    // keeps the convex-combination bound exact under rounding
    let lo = f00.min(f10).min(f01).min(f11);
    let hi = f00.max(f10).max(f01).max(f11);
    v.clamp(lo, hi)
}

/// Periodic bilinear interpolation of a scalar field at arbitrary points.
pub fn sample_bilinear(field: &PeriodicField, points: &[[f64; 2]]) -> Result<Vec<f64>> {
    field.ensure_scalar()?;
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidField("non-finite query point".into()));
    }
    let g = field.grid();
    Ok(points
        .iter()
        .map(|&p| bilinear_at(&g, field.data(), p))
        .collect())
}

/// Bilinear-wrapped grid field.
#[derive(Debug, Clone)]
pub struct BilinearSampler {
    field: PeriodicField,
}

impl BilinearSampler {
    pub fn new(field: PeriodicField) -> Result<Self> {
        field.ensure_scalar()?;
        Ok(Self { field })
    }

    pub fn field(&self) -> &PeriodicField {
        &self.field
    }
}

impl ScalarSampler for BilinearSampler {
    #[inline]
    fn sample(&self, p: [f64; 2]) -> f64 {
        bilinear_at(&self.field.grid(), self.field.data(), p)
    }
}

impl ScalarSampler for HermiteField {
    #[inline]
    fn sample(&self, p: [f64; 2]) -> f64 {
        self.eval(p)
    }
}

/// Closed-form function of `(x, y)`.
pub struct AnalyticSampler<F>(pub F);

impl<F: Fn(f64, f64) -> f64 + Send + Sync> ScalarSampler for AnalyticSampler<F> {
    #[inline]
    fn sample(&self, p: [f64; 2]) -> f64 {
        (self.0)(p[0], p[1])
    }
}

impl<F> fmt::Debug for AnalyticSampler<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("AnalyticSampler")
    }
}

/// Exact evaluation of a trigonometric polynomial from its nonzero modes.
#[derive(Debug, Clone)]
pub struct FourierSampler {
    modes: Vec<(f64, f64, Complex64)>,
}

impl FourierSampler {
    /// Keeps every mode whose magnitude exceeds `threshold`.
    pub fn from_field(field: &PeriodicField, threshold: f64) -> Result<Self> {
        let g = field.grid();
        let spec = dft(field)?;
        let modes = spec
            .modes()
            .filter(|(_, _, c)| c.norm() > threshold)
            .map(|(kx, ky, c)| {
                // the Nyquist mode is evaluated as its real cosine part
                let nyq = kx == -(g.nx() as i64) / 2 || ky == -(g.ny() as i64) / 2;
                let c = if nyq { Complex64::new(c.re, 0.0) } else { c };
                (kx as f64, ky as f64, c)
            })
            .collect();
        Ok(Self { modes })
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }
}

impl ScalarSampler for FourierSampler {
    fn sample(&self, p: [f64; 2]) -> f64 {
        self.modes
            .iter()
            .map(|&(kx, ky, c)| {
                let phase = kx * p[0] + ky * p[1];
                c.re * phase.cos() - c.im * phase.sin()
            })
            .sum()
    }
}
