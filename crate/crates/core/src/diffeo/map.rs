use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{wrap, Grid, HermiteCell, HermiteField, PeriodicField};

/// Minimum number of points handed to one rayon task.
pub(crate) const PAR_CHUNK: usize = 1024;

/// One torus diffeomorphism `φ(p) = (p + v(p)) mod 2π` with a Hermite-cubic
/// displacement `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffeoMap {
    vx: HermiteField,
    vy: HermiteField,
}

impl DiffeoMap {
    pub fn identity(grid: Grid) -> Self {
        Self {
            vx: HermiteField::zeros(grid),
            vy: HermiteField::zeros(grid),
        }
    }

    /// Constant displacement `shift` with vanishing derivative data.
    pub fn translation(grid: Grid, shift: [f64; 2]) -> Result<Self> {
        if !shift.iter().all(|s| s.is_finite()) {
            return Err(Error::Domain("translation shift must be finite".into()));
        }
        let nodes = |s: f64| vec![[s, 0.0, 0.0, 0.0]; grid.len()];
        Ok(Self {
            vx: HermiteField::from_nodes(grid, nodes(shift[0]))?,
            vy: HermiteField::from_nodes(grid, nodes(shift[1]))?,
        })
    }

    pub fn from_components(vx: HermiteField, vy: HermiteField) -> Result<Self> {
        vx.grid().ensure_same(&vy.grid())?;
        Ok(Self { vx, vy })
    }

    /// Builds the map from analytic displacement data
    /// `f(x, y) -> [[vx, ∂x vx, ∂y vx, ∂x∂y vx], [vy, …]]`.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> [[f64; 4]; 2]) -> Self {
        let data: Vec<[[f64; 4]; 2]> = grid.vertices().into_iter().map(|[x, y]| f(x, y)).collect();
        let vx = data.iter().map(|d| d[0]).collect();
        let vy = data.iter().map(|d| d[1]).collect();
        Self {
            vx: HermiteField::from_nodes(grid, vx).expect("node count matches grid"),
            vy: HermiteField::from_nodes(grid, vy).expect("node count matches grid"),
        }
    }

    /// Displacement values at the vertices; derivative planes come from
    /// spectral differentiation.
    pub fn from_values_spectral(grid: Grid, vx: &[f64], vy: &[f64]) -> Result<Self> {
        let fx = PeriodicField::new(grid, 1, vx.to_vec())?;
        let fy = PeriodicField::new(grid, 1, vy.to_vec())?;
        Ok(Self {
            vx: HermiteField::from_field_spectral(&fx)?,
            vy: HermiteField::from_field_spectral(&fy)?,
        })
    }

    /// Eight planes `[vx, ∂x vx, ∂y vx, ∂x∂y vx, vy, ∂x vy, ∂y vy, ∂x∂y vy]`.
    pub fn from_planes(grid: Grid, planes: [&[f64]; 8]) -> Result<Self> {
        let vx = HermiteField::from_planes(grid, [planes[0], planes[1], planes[2], planes[3]])?;
        let vy = HermiteField::from_planes(grid, [planes[4], planes[5], planes[6], planes[7]])?;
        Ok(Self { vx, vy })
    }

    pub fn planes(&self) -> [Vec<f64>; 8] {
        [
            self.vx.plane(0),
            self.vx.plane(1),
            self.vx.plane(2),
            self.vx.plane(3),
            self.vy.plane(0),
            self.vy.plane(1),
            self.vy.plane(2),
            self.vy.plane(3),
        ]
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.vx.grid()
    }

    pub fn vx(&self) -> &HermiteField {
        &self.vx
    }

    pub fn vy(&self) -> &HermiteField {
        &self.vy
    }

    #[inline]
    pub fn displacement_at(&self, p: [f64; 2]) -> [f64; 2] {
        let cell = HermiteCell::locate(&self.vx.grid(), p);
        [cell.value(self.vx.nodes()), cell.value(self.vy.nodes())]
    }

    /// Displacement and its Jacobian `Dv` (rows are components).
    #[inline]
    pub fn displacement_grad_at(&self, p: [f64; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
        let cell = HermiteCell::locate(&self.vx.grid(), p);
        let (ux, gx) = cell.value_grad(self.vx.nodes());
        let (uy, gy) = cell.value_grad(self.vy.nodes());
        ([ux, uy], [gx, gy])
    }

    #[inline]
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let d = self.displacement_at(p);
        [wrap(p[0] + d[0]), wrap(p[1] + d[1])]
    }

    pub fn evaluate(&self, points: &[[f64; 2]]) -> Vec<[f64; 2]> {
        points
            .par_iter()
            .with_min_len(PAR_CHUNK)
            .map(|&p| self.apply(p))
            .collect()
    }

    #[inline]
    pub fn differential_at(&self, p: [f64; 2]) -> [[f64; 2]; 2] {
        let (_, g) = self.displacement_grad_at(p);
        [[1.0 + g[0][0], g[0][1]], [g[1][0], 1.0 + g[1][1]]]
    }

    pub fn differential(&self, points: &[[f64; 2]]) -> Vec<[[f64; 2]; 2]> {
        points.iter().map(|&p| self.differential_at(p)).collect()
    }

    #[inline]
    pub fn jacobian_det_at(&self, p: [f64; 2]) -> f64 {
        det2(&self.differential_at(p))
    }

    pub fn jacobian_det(&self, points: &[[f64; 2]]) -> Vec<f64> {
        points.iter().map(|&p| self.jacobian_det_at(p)).collect()
    }

    /// Smallest Jacobian determinant over the cell centers.
    pub fn min_jacobian_det(&self) -> f64 {
        self.grid()
            .cell_centers()
            .into_iter()
            .map(|p| self.jacobian_det_at(p))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_orientation_preserving(&self) -> bool {
        self.min_jacobian_det() > 0.0
    }

    /// Largest vertex displacement magnitude over both components.
    pub fn max_displacement(&self) -> f64 {
        self.vx
            .nodes()
            .iter()
            .chain(self.vy.nodes())
            .map(|n| n[0].abs())
            .fold(0.0, f64::max)
    }
}

#[inline]
pub(crate) fn det2(m: &[[f64; 2]; 2]) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}
