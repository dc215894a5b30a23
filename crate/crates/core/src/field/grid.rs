use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wraps a coordinate into `[0, 2π)`.
#[inline]
pub fn wrap(x: f64) -> f64 {
    if (0.0..TAU).contains(&x) {
        return x;
    }
    let r = x.rem_euclid(TAU);
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Deterministic pairwise summation.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if values.len() <= BLOCK {
        values.iter().sum()
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

/// Uniform periodic grid on `[0, 2π)²`. Vertex `(i, j)` sits at `(i·dx, j·dy)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    nx: usize,
    ny: usize,
}

impl Grid {
    pub fn new(nx: usize, ny: usize) -> Result<Self> {
        if nx < 4 || ny < 4 {
            return Err(Error::InvalidGrid(format!(
                "dimensions must be at least 4, got {nx}x{ny}"
            )));
        }
        if nx % 2 != 0 || ny % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "dimensions must be even, got {nx}x{ny}"
            )));
        }
        Ok(Self { nx, ny })
    }

    pub fn square(n: usize) -> Result<Self> {
        Self::new(n, n)
    }

    #[inline]
    pub fn nx(&self) -> usize {
        self.nx
    }

    #[inline]
    pub fn ny(&self) -> usize {
        self.ny
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        TAU / self.nx as f64
    }

    #[inline]
    pub fn dy(&self) -> f64 {
        TAU / self.ny as f64
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.dy()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Vertex coordinates in storage order (x fastest).
    pub fn vertices(&self) -> Vec<[f64; 2]> {
        let (dx, dy) = (self.dx(), self.dy());
        let mut out = Vec::with_capacity(self.len());
        for j in 0..self.ny {
            for i in 0..self.nx {
                out.push([i as f64 * dx, j as f64 * dy]);
            }
        }
        out
    }

    /// Cell-centre coordinates in storage order.
    pub fn cell_centers(&self) -> Vec<[f64; 2]> {
        let (dx, dy) = (self.dx(), self.dy());
        let mut out = Vec::with_capacity(self.len());
        for j in 0..self.ny {
            for i in 0..self.nx {
                out.push([(i as f64 + 0.5) * dx, (j as f64 + 0.5) * dy]);
            }
        }
        out
    }

    /// Integer refinement factor from `self` to `fine`, if the vertex sets are nested.
    pub fn refinement_factor(&self, fine: &Grid) -> Option<(usize, usize)> {
        if fine.nx % self.nx == 0 && fine.ny % self.ny == 0 {
            Some((fine.nx / self.nx, fine.ny / self.ny))
        } else {
            None
        }
    }

    pub fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch {
                expected_nx: self.nx,
                expected_ny: self.ny,
                nx: other.nx,
                ny: other.ny,
            });
        }
        Ok(())
    }
}

/// Uniformly sampled scalar or vector field on the torus.
///
/// Storage is `channels × ny × nx`, row-major with x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicField {
    grid: Grid,
    channels: usize,
    data: Vec<f64>,
}

impl PeriodicField {
    pub fn new(grid: Grid, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidField("channel count must be positive".into()));
        }
        if data.len() != channels * grid.len() {
            return Err(Error::InvalidField(format!(
                "expected {} values, got {}",
                channels * grid.len(),
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidField(format!(
                "non-finite value at index {pos}"
            )));
        }
        Ok(Self {
            grid,
            channels,
            data,
        })
    }

    pub fn zeros(grid: Grid, channels: usize) -> Self {
        Self {
            grid,
            channels: channels.max(1),
            data: vec![0.0; channels.max(1) * grid.len()],
        }
    }

    /// Samples a scalar function at the grid vertices.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let data = grid.vertices().into_iter().map(|[x, y]| f(x, y)).collect();
        Self {
            grid,
            channels: 1,
            data,
        }
    }

    /// Builds a multi-channel field from scalar components sharing one grid.
    pub fn stack(components: &[PeriodicField]) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidField("no components to stack".into()))?;
        let mut data = Vec::with_capacity(components.len() * first.grid.len());
        for c in components {
            first.grid.ensure_same(&c.grid)?;
            data.extend_from_slice(&c.data);
        }
        let channels = data.len() / first.grid.len();
        Self::new(first.grid, channels, data)
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.grid
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.grid.len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_field(&self, c: usize) -> PeriodicField {
        PeriodicField {
            grid: self.grid,
            channels: 1,
            data: self.channel(c).to_vec(),
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[self.grid.index(i, j)]
    }

    pub fn ensure_scalar(&self) -> Result<()> {
        if self.channels != 1 {
            return Err(Error::InvalidField(format!(
                "expected a scalar field, got {} channels",
                self.channels
            )));
        }
        Ok(())
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        pairwise_sum(&self.data) / self.data.len() as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> PeriodicField {
        PeriodicField {
            grid: self.grid,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Values at the vertices of `coarse`, which must be nested inside this grid.
    pub fn restrict(&self, coarse: Grid) -> Result<PeriodicField> {
        let (fx, fy) = coarse.refinement_factor(&self.grid).ok_or_else(|| {
            Error::Domain(format!(
                "grid {}x{} is not nested in {}x{}",
                coarse.nx(),
                coarse.ny(),
                self.grid.nx(),
                self.grid.ny()
            ))
        })?;
        let mut data = Vec::with_capacity(self.channels * coarse.len());
        for c in 0..self.channels {
            let src = self.channel(c);
            for j in 0..coarse.ny() {
                for i in 0..coarse.nx() {
                    data.push(src[self.grid.index(i * fx, j * fy)]);
                }
            }
        }
        Ok(PeriodicField {
            grid: coarse,
            channels: self.channels,
            data,
        })
    }
}

/// Composite 2D Simpson rule with periodic wrap-around.
///
/// On a periodic grid the end weights merge, so the 1D weights alternate
/// `2h/3, 4h/3` starting with `2h/3` at index 0.
pub fn simpson_integral(field: &PeriodicField) -> Result<f64> {
    field.ensure_scalar()?;
    simpson_of(field.grid(), field.data())
}

pub(crate) fn simpson_of(grid: Grid, values: &[f64]) -> Result<f64> {
    if grid.nx() % 2 != 0 || grid.ny() % 2 != 0 {
        return Err(Error::Domain("Simpson's rule requires even grid dimensions".into()));
    }
    let wx = simpson_weights(grid.nx(), grid.dx());
    let wy = simpson_weights(grid.ny(), grid.dy());
    let rows: Vec<f64> = (0..grid.ny())
        .map(|j| {
            let row = &values[j * grid.nx()..(j + 1) * grid.nx()];
            let terms: Vec<f64> = row.iter().zip(&wx).map(|(v, w)| v * w).collect();
            wy[j] * pairwise_sum(&terms)
        })
        .collect();
    Ok(pairwise_sum(&rows))
}

fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    (0..n)
        .map(|i| if i % 2 == 0 { 2.0 * h / 3.0 } else { 4.0 * h / 3.0 })
        .collect()
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    #[test]
    fn grid_rejects_odd_and_small() {
        assert!(Grid::new(5, 8).is_err());
        assert!(Grid::new(2, 8).is_err());
        assert!(Grid::new(8, 6).is_ok());
    }

    #[test]
    fn vertices_do_not_duplicate_seam() {
        let g = Grid::square(8).unwrap();
        let v = g.vertices();
        assert_eq!(v.len(), 64);
        assert!(v.iter().all(|p| p[0] < TAU && p[1] < TAU));
    }

    #[test]
    fn wrap_stays_in_range() {
        assert_eq!(wrap(-1e-300), 0.0);
        assert_eq!(wrap(TAU), 0.0);
        assert!((wrap(-0.5) - (TAU - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn field_rejects_nan() {
        let g = Grid::square(4).unwrap();
        let mut d = vec![0.0; 16];
        d[3] = f64::NAN;
        assert!(matches!(
            PeriodicField::new(g, 1, d),
            Err(Error::InvalidField(_))
        ));
    }

    #[test]
    fn simpson_constant() {
        for n in [4, 8, 30] {
            let g = Grid::new(n, n + 2).unwrap();
            let f = PeriodicField::from_fn(g, |_, _| 1.0);
            let v = simpson_integral(&f).unwrap();
            assert!((v - 4.0 * PI * PI).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn simpson_odd_symmetry() {
        let g = Grid::square(16).unwrap();
        let f = PeriodicField::from_fn(g, |x, _| x.sin());
        assert!(simpson_integral(&f).unwrap().abs() < 1e-12);
    }

    #[test]
    fn simpson_product_of_squares() {
        let g = Grid::square(64).unwrap();
        let f = PeriodicField::from_fn(g, |x, y| x.sin().powi(2) * y.cos().powi(2));
        let v = simpson_integral(&f).unwrap();
        assert!((v - PI * PI).abs() < 1e-8, "{v}");
    }

    #[test]
    fn simpson_trig_polynomial_exact_below_half_band() {
        // degree < n/2 in each direction
        let g = Grid::square(16).unwrap();
        let f = PeriodicField::from_fn(g, |x, y| {
            2.0 + (7.0 * x).cos() * (3.0 * y).sin() + (5.0 * x + 7.0 * y).cos().powi(1)
        });
        let v = simpson_integral(&f).unwrap();
        let exact = 2.0 * 4.0 * PI * PI;
        assert!(((v - exact) / exact).abs() < 1e-10);
    }

    #[test]
    fn restrict_picks_shared_vertices() {
        let fine = Grid::square(16).unwrap();
        let coarse = Grid::square(4).unwrap();
        let f = PeriodicField::from_fn(fine, |x, y| x + 10.0 * y);
        let r = f.restrict(coarse).unwrap();
        for j in 0..4 {
            for i in 0..4 {
                assert_eq!(r.at(i, j), coarse.x(i) + 10.0 * coarse.y(j));
            }
        }
        assert!(f.restrict(Grid::square(6).unwrap()).is_err());
    }

    #[test]
    fn pairwise_sum_matches_naive_order_independent_of_blocking() {
        let v: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let naive: f64 = v.iter().sum();
        assert!((pairwise_sum(&v) - naive).abs() < 1e-10);
    }
}
