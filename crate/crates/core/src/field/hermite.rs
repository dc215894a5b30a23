//! Bicubic Hermite splines on the periodic grid.
//!
//! Each vertex carries the four functionals `(f, ∂x f, ∂y f, ∂x∂y f)`. Inside a
//! cell the interpolant is the tensor product of the cubic Hermite basis
//! `Q₀(s) = 1 - 3s² + 2s³`, `Q₁(s) = s - 2s² + s³`, with derivative
//! functionals scaled by `Δx^α Δy^β`. The result is globally C¹ and fourth
//! order accurate in L∞.

use super::grid::{wrap, Grid, PeriodicField};
use super::spectrum::{dft, differentiate, idft_values, Spectrum};
use crate::error::{Error, Result};

/// Cell lookup plus tensor-basis weights at one query point.
#[derive(Debug, Clone, Copy)]
pub(crate) struct HermiteCell {
    /// Node indices `[(i0,j0), (i1,j0), (i0,j1), (i1,j1)]`.
    pub idx: [usize; 4],
    /// Value weights along x for the left/right node.
    pub wx: [f64; 2],
    /// Slope weights along x (already scaled by Δx).
    pub sx: [f64; 2],
    pub wy: [f64; 2],
    pub sy: [f64; 2],
    /// x-derivatives of `wx` and `sx`.
    pub dwx: [f64; 2],
    pub dsx: [f64; 2],
    pub dwy: [f64; 2],
    pub dsy: [f64; 2],
}

#[inline]
fn axis(coord: f64, n: usize, h: f64) -> (usize, usize, f64) {
    let s = wrap(coord) / h;
    let mut i = s.floor() as usize;
    if i >= n {
        i = n - 1;
    }
    let t = s - i as f64;
    (i, if i + 1 == n { 0 } else { i + 1 }, t)
}

impl HermiteCell {
    #[inline]
    pub fn locate(grid: &Grid, p: [f64; 2]) -> Self {
        let (nx, ny) = (grid.nx(), grid.ny());
        let (dx, dy) = (grid.dx(), grid.dy());
        let (i0, i1, s) = axis(p[0], nx, dx);
        let (j0, j1, t) = axis(p[1], ny, dy);
        let (wx, sx, dwx, dsx) = basis(s, dx);
        let (wy, sy, dwy, dsy) = basis(t, dy);
        Self {
            idx: [j0 * nx + i0, j0 * nx + i1, j1 * nx + i0, j1 * nx + i1],
            wx,
            sx,
            wy,
            sy,
            dwx,
            dsx,
            dwy,
            dsy,
        }
    }

    #[inline]
    pub fn value(&self, nodes: &[[f64; 4]]) -> f64 {
        // values enter relative to the first node so constants are exact
        let base = nodes[self.idx[0]][0];
        let mut acc = 0.0;
        for b in 0..2 {
            for a in 0..2 {
                let n = &nodes[self.idx[2 * b + a]];
                acc += (n[0] - base) * self.wx[a] * self.wy[b]
                    + n[1] * self.sx[a] * self.wy[b]
                    + n[2] * self.wx[a] * self.sy[b]
                    + n[3] * self.sx[a] * self.sy[b];
            }
        }
        base + acc
    }

    /// Value and gradient of the interpolant.
    #[inline]
    pub fn value_grad(&self, nodes: &[[f64; 4]]) -> (f64, [f64; 2]) {
        let base = nodes[self.idx[0]][0];
        let (mut v, mut gx, mut gy) = (0.0, 0.0, 0.0);
        for b in 0..2 {
            for a in 0..2 {
                let n = &nodes[self.idx[2 * b + a]];
                let f = n[0] - base;
                v += f * self.wx[a] * self.wy[b]
                    + n[1] * self.sx[a] * self.wy[b]
                    + n[2] * self.wx[a] * self.sy[b]
                    + n[3] * self.sx[a] * self.sy[b];
                gx += f * self.dwx[a] * self.wy[b]
                    + n[1] * self.dsx[a] * self.wy[b]
                    + n[2] * self.dwx[a] * self.sy[b]
                    + n[3] * self.dsx[a] * self.sy[b];
                gy += f * self.wx[a] * self.dwy[b]
                    + n[1] * self.sx[a] * self.dwy[b]
                    + n[2] * self.wx[a] * self.dsy[b]
                    + n[3] * self.sx[a] * self.dsy[b];
            }
        }
        (base + v, [gx, gy])
    }
}

/// Hermite basis on `[0,1]` for the left and right node and its derivative in
/// physical units.
#[inline]
fn basis(s: f64, h: f64) -> ([f64; 2], [f64; 2], [f64; 2], [f64; 2]) {
    let s2 = s * s;
    let s3 = s2 * s;
    let q0 = 1.0 - 3.0 * s2 + 2.0 * s3;
    let q1 = s - 2.0 * s2 + s3;
    let r0 = 3.0 * s2 - 2.0 * s3;
    let r1 = s3 - s2;
    let dq0 = -6.0 * s + 6.0 * s2;
    let dq1 = 1.0 - 4.0 * s + 3.0 * s2;
    let dr0 = 6.0 * s - 6.0 * s2;
    let dr1 = 3.0 * s2 - 2.0 * s;
    (
        [q0, r0],
        [q1 * h, r1 * h],
        [dq0 / h, dr0 / h],
        [dq1, dr1],
    )
}

/// Scalar C¹ bicubic Hermite interpolant.
#[derive(Debug, Clone, PartialEq)]
pub struct HermiteField {
    grid: Grid,
    nodes: Vec<[f64; 4]>,
}

impl HermiteField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            nodes: vec![[0.0; 4]; grid.len()],
        }
    }

    pub fn from_nodes(grid: Grid, nodes: Vec<[f64; 4]>) -> Result<Self> {
        if nodes.len() != grid.len() {
            return Err(Error::InvalidField(format!(
                "expected {} Hermite nodes, got {}",
                grid.len(),
                nodes.len()
            )));
        }
        if nodes.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidField("non-finite Hermite data".into()));
        }
        Ok(Self { grid, nodes })
    }

    /// Assembles nodes from four planes `(f, ∂x f, ∂y f, ∂x∂y f)`.
    pub fn from_planes(grid: Grid, planes: [&[f64]; 4]) -> Result<Self> {
        if planes.iter().any(|p| p.len() != grid.len()) {
            return Err(Error::InvalidField("Hermite plane has the wrong length".into()));
        }
        let nodes = (0..grid.len())
            .map(|n| [planes[0][n], planes[1][n], planes[2][n], planes[3][n]])
            .collect();
        Self::from_nodes(grid, nodes)
    }

    /// Samples `f` and its analytic derivatives at the vertices.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> [f64; 4]) -> Self {
        let nodes = grid.vertices().into_iter().map(|[x, y]| f(x, y)).collect();
        Self { grid, nodes }
    }

    /// Interpolant whose derivative data come from spectral differentiation.
    pub fn from_field_spectral(field: &PeriodicField) -> Result<Self> {
        let grid = field.grid();
        let spec = dft(field)?;
        let fx = idft_values(&differentiate(&spec, 1, 0));
        let fy = idft_values(&differentiate(&spec, 0, 1));
        let fxy = idft_values(&differentiate(&spec, 1, 1));
        Self::from_planes(grid, [field.data(), &fx, &fy, &fxy])
    }

    /// Interpolant of the inverse transform of `spec`, derivatives included.
    pub fn from_spectrum(spec: &Spectrum) -> Result<Self> {
        let v = idft_values(spec);
        let fx = idft_values(&differentiate(spec, 1, 0));
        let fy = idft_values(&differentiate(spec, 0, 1));
        let fxy = idft_values(&differentiate(spec, 1, 1));
        Self::from_planes(spec.grid(), [&v, &fx, &fy, &fxy])
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn nodes(&self) -> &[[f64; 4]] {
        &self.nodes
    }

    /// One of the four functional planes (0 value, 1 ∂x, 2 ∂y, 3 ∂x∂y).
    pub fn plane(&self, which: usize) -> Vec<f64> {
        self.nodes.iter().map(|n| n[which]).collect()
    }

    #[inline]
    pub fn eval(&self, p: [f64; 2]) -> f64 {
        HermiteCell::locate(&self.grid, p).value(&self.nodes)
    }

    #[inline]
    pub fn eval_grad(&self, p: [f64; 2]) -> (f64, [f64; 2]) {
        HermiteCell::locate(&self.grid, p).value_grad(&self.nodes)
    }

    /// Pointwise linear combination `a·self + b·other` of the nodal data.
    pub fn combine(&self, a: f64, other: &HermiteField, b: f64) -> Result<HermiteField> {
        self.grid.ensure_same(&other.grid)?;
        let nodes = self
            .nodes
            .iter()
            .zip(&other.nodes)
            .map(|(u, v)| {
                [
                    a * u[0] + b * v[0],
                    a * u[1] + b * v[1],
                    a * u[2] + b * v[2],
                    a * u[3] + b * v[3],
                ]
            })
            .collect();
        Ok(HermiteField {
            grid: self.grid,
            nodes,
        })
    }
}
