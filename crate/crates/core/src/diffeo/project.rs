use rayon::prelude::*;

use super::chain::MapChain;
use super::map::{DiffeoMap, PAR_CHUNK};
use crate::error::{Error, Result};
use crate::field::{Grid, HermiteField};

/// Hermite data `[f, ∂x f, ∂y f, ∂x∂y f]` of a vector function from its
/// values at the centre and at the four corners `(±ε, ±ε)`.
///
/// `corners` is ordered `[(+,+), (+,−), (−,+), (−,−)]`.
#[inline]
pub(crate) fn stencil_nodes(center: [f64; 2], corners: [[f64; 2]; 4], eps: f64) -> [[f64; 4]; 2] {
    let [pp, pm, mp, mm] = corners;
    let h = 1.0 / (4.0 * eps);
    let h2 = h / eps;
    std::array::from_fn(|c| {
        [
            center[c],
            (pp[c] + pm[c] - mp[c] - mm[c]) * h,
            (pp[c] - pm[c] + mp[c] - mm[c]) * h,
            (pp[c] - pm[c] - mp[c] + mm[c]) * h2,
        ]
    })
}

/// Offsets of the four stencil corners, in the order used by [`stencil_nodes`].
#[inline]
pub(crate) fn stencil_offsets(eps: f64) -> [[f64; 2]; 4] {
    [[eps, eps], [eps, -eps], [-eps, eps], [-eps, -eps]]
}

/// Collapses a chain into a single map on `grid`.
///
/// The displacement is the unwrapped sum of per-map displacements along the
/// evaluation path, so it stays continuous even when it exceeds `π`. Values
/// are taken at the vertex, derivatives by cross differences of width
/// `fd_eps` around it.
pub fn project(chain: &MapChain, grid: Grid, fd_eps: f64) -> Result<DiffeoMap> {
    if !(fd_eps > 0.0) || !fd_eps.is_finite() {
        return Err(Error::Domain(format!("fd_eps must be positive, got {fd_eps}")));
    }
    if chain.is_empty() {
        return Ok(DiffeoMap::identity(grid));
    }
    let offsets = stencil_offsets(fd_eps);
    let nodes: Vec<[[f64; 4]; 2]> = grid
        .vertices()
        .par_iter()
        .with_min_len(PAR_CHUNK / 8)
        .map(|&p| {
            let disp = |o: [f64; 2]| chain.apply_with_displacement([p[0] + o[0], p[1] + o[1]]).1;
            let center = disp([0.0, 0.0]);
            let corners = offsets.map(disp);
            stencil_nodes(center, corners, fd_eps)
        })
        .collect();
    let vx = HermiteField::from_nodes(grid, nodes.iter().map(|n| n[0]).collect())?;
    let vy = HermiteField::from_nodes(grid, nodes.iter().map(|n| n[1]).collect())?;
    DiffeoMap::from_components(vx, vy)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::TAU;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn v_map(g: Grid) -> DiffeoMap {
        DiffeoMap::from_fn(g, |x, y| {
            let (s, c) = (x + 2.0 * y).sin_cos();
            [[0.1 * s, 0.1 * c, 0.2 * c, -0.2 * s], [0.05 * y.cos(), 0.0, -0.05 * y.sin(), 0.0]]
        })
    }

    fn w_map(g: Grid) -> DiffeoMap {
        DiffeoMap::from_fn(g, |x, y| {
            [
                [0.08 * y.sin(), 0.0, 0.08 * y.cos(), 0.0],
                [0.1 * x.sin() * y.cos(), 0.1 * x.cos() * y.cos(), -0.1 * x.sin() * y.sin(), -0.1 * x.cos() * y.sin()],
            ]
        })
    }

    #[test]
    fn rejects_nonpositive_eps() {
        let g = Grid::square(8).unwrap();
        assert!(matches!(project(&MapChain::new(), g, 0.0), Err(Error::Domain(_))));
        assert!(matches!(project(&MapChain::new(), g, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn single_map_is_reproduced() {
        let g = Grid::square(32).unwrap();
        let m = v_map(g);
        let eps = g.dx() / 100.0;
        let p = project(&MapChain::from_maps(vec![m.clone()]).unwrap(), g, eps).unwrap();
        let (a, b) = (m.planes(), p.planes());
        for k in 0..8 {
            let tol = if k % 4 == 0 { 1e-10 } else { 1e-5 };
            let err = a[k].iter().zip(&b[k]).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(err < tol, "plane {k}: {err}");
        }
    }

    #[test]
    fn translations_sum() {
        let g = Grid::square(16).unwrap();
        let c = MapChain::from_maps(vec![
            DiffeoMap::translation(g, [0.4, -0.1]).unwrap(),
            DiffeoMap::translation(g, [3.5, 0.3]).unwrap(),
        ])
        .unwrap();
        let p = project(&c, g, g.dx() / 100.0).unwrap();
        let planes = p.planes();
        for k in 0..8 {
            let expect = match k {
                0 => 3.9,
                4 => 0.2,
                _ => 0.0,
            };
            let tol = if k % 4 == 0 { 1e-14 } else { 1e-12 };
            assert!(planes[k].iter().all(|v| (v - expect).abs() < tol), "plane {k}");
        }
    }

    fn projection_error(n: usize) -> f64 {
        let g = Grid::square(n).unwrap();
        let chain = MapChain::from_maps(vec![v_map(g), w_map(g)]).unwrap();
        let p = project(&chain, g, g.dx() / 100.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        (0..10_000)
            .map(|_| {
                let q = [rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU)];
                let a = p.apply(q);
                let b = chain.apply(q);
                let dx = (a[0] - b[0]).abs().min(TAU - (a[0] - b[0]).abs());
                let dy = (a[1] - b[1]).abs().min(TAU - (a[1] - b[1]).abs());
                dx.max(dy)
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn projection_converges_at_fourth_order() {
        let e: Vec<f64> = [32, 64, 128].iter().map(|&n| projection_error(n)).collect();
        assert!(e[0] / e[1] > 12.0 && e[1] / e[2] > 12.0, "{e:?}");
        assert!(e[2] < 1e-6, "{e:?}");
    }

    #[test]
    fn large_composite_displacement_is_unwrapped() {
        let g = Grid::square(16).unwrap();
        let shift = DiffeoMap::translation(g, [2.5, 0.0]).unwrap();
        let c = MapChain::from_maps(vec![shift.clone(), shift.clone(), shift]).unwrap();
        let p = project(&c, g, g.dx() / 100.0).unwrap();
        assert!(p.planes()[0].iter().all(|v| (v - 7.5).abs() < 1e-14));
    }
}
