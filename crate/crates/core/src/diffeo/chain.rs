use rayon::prelude::*;

use super::map::{det2, DiffeoMap, PAR_CHUNK};
use crate::error::{Error, Result};
use crate::field::{wrap, Grid};

/// Backward map `φ₁ ∘ φ₂ ∘ … ∘ φ_k`, stored oldest first. The newest map acts
/// on the query point first. An empty chain is the identity.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MapChain {
    maps: Vec<DiffeoMap>,
}

impl MapChain {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_maps(maps: Vec<DiffeoMap>) -> Result<Self> {
        let mut chain = Self::new();
        for m in maps {
            chain.push(m)?;
        }
        Ok(chain)
    }

    /// Appends a newer map (composed on the right).
    pub fn push(&mut self, map: DiffeoMap) -> Result<()> {
        if let Some(g) = self.grid() {
            if g != map.grid() {
                return Err(Error::Chain(format!(
                    "map on {}x{} cannot join a chain on {}x{}",
                    map.grid().nx(),
                    map.grid().ny(),
                    g.nx(),
                    g.ny()
                )));
            }
        }
        self.maps.push(map);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn maps(&self) -> &[DiffeoMap] {
        &self.maps
    }

    pub fn into_maps(self) -> Vec<DiffeoMap> {
        self.maps
    }

    pub fn grid(&self) -> Option<Grid> {
        self.maps.first().map(|m| m.grid())
    }

    /// The first `k` (oldest) maps.
    pub fn prefix(&self, k: usize) -> MapChain {
        MapChain {
            maps: self.maps[..k.min(self.maps.len())].to_vec(),
        }
    }

    /// Maps `k..`, i.e. the newest `len - k` maps.
    pub fn suffix(&self, k: usize) -> MapChain {
        MapChain {
            maps: self.maps[k.min(self.maps.len())..].to_vec(),
        }
    }

    #[inline]
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let mut q = [wrap(p[0]), wrap(p[1])];
        for m in self.maps.iter().rev() {
            q = m.apply(q);
        }
        q
    }

    /// Image point together with the unwrapped total displacement, summed
    /// along the evaluation path.
    #[inline]
    pub fn apply_with_displacement(&self, p: [f64; 2]) -> ([f64; 2], [f64; 2]) {
        let mut q = [wrap(p[0]), wrap(p[1])];
        let mut d = [0.0, 0.0];
        for m in self.maps.iter().rev() {
            let v = m.displacement_at(q);
            d[0] += v[0];
            d[1] += v[1];
            q = [wrap(q[0] + v[0]), wrap(q[1] + v[1])];
        }
        (q, d)
    }

    /// Image point and Jacobian determinant of the composite, accumulated as
    /// the product of per-map determinants along the path.
    #[inline]
    pub fn apply_with_det(&self, p: [f64; 2]) -> ([f64; 2], f64) {
        let mut q = [wrap(p[0]), wrap(p[1])];
        let mut det = 1.0;
        for m in self.maps.iter().rev() {
            let (v, g) = m.displacement_grad_at(q);
            det *= det2(&[[1.0 + g[0][0], g[0][1]], [g[1][0], 1.0 + g[1][1]]]);
            q = [wrap(q[0] + v[0]), wrap(q[1] + v[1])];
        }
        (q, det)
    }

    /// Images of `points`. Points are pushed through one map at a time so
    /// each map's nodes stay in cache; results equal [`MapChain::apply`].
    pub fn evaluate(&self, points: &[[f64; 2]]) -> Vec<[f64; 2]> {
        let mut q: Vec<[f64; 2]> = points.iter().map(|p| [wrap(p[0]), wrap(p[1])]).collect();
        push_through(&self.maps, &mut q);
        q
    }

    /// Images and accumulated determinants, equal to [`MapChain::apply_with_det`].
    pub fn evaluate_with_det(&self, points: &[[f64; 2]]) -> Vec<([f64; 2], f64)> {
        let mut q: Vec<([f64; 2], f64)> = points.iter().map(|p| ([wrap(p[0]), wrap(p[1])], 1.0)).collect();
        for m in self.maps.iter().rev() {
            q.par_iter_mut().with_min_len(PAR_CHUNK).for_each(|(p, det)| {
                let (v, g) = m.displacement_grad_at(*p);
                *det *= det2(&[[1.0 + g[0][0], g[0][1]], [g[1][0], 1.0 + g[1][1]]]);
                *p = [wrap(p[0] + v[0]), wrap(p[1] + v[1])];
            });
        }
        q
    }

    /// Unwrapped composite displacement at each point.
    pub fn displacement(&self, points: &[[f64; 2]]) -> Vec<[f64; 2]> {
        points
            .par_iter()
            .with_min_len(PAR_CHUNK)
            .map(|&p| self.apply_with_displacement(p).1)
            .collect()
    }
}

/// Applies `maps` to already wrapped points, newest map first.
pub(crate) fn push_through(maps: &[DiffeoMap], points: &mut [[f64; 2]]) {
    for m in maps.iter().rev() {
        points
            .par_iter_mut()
            .with_min_len(PAR_CHUNK)
            .for_each(|p| *p = m.apply(*p));
    }
}

/// Free-function form of [`MapChain::evaluate`].
pub fn chain_evaluate(chain: &MapChain, points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    chain.evaluate(points)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::TAU;

    use proptest::prelude::*;

    use super::*;

    fn wave(grid: Grid, a: f64, b: f64) -> DiffeoMap {
        DiffeoMap::from_fn(grid, |x, y| {
            [
                [a * y.sin(), 0.0, a * y.cos(), 0.0],
                [b * (x + 0.3).cos(), -b * (x + 0.3).sin(), 0.0, 0.0],
            ]
        })
    }

    #[test]
    fn empty_chain_wraps() {
        let c = MapChain::new();
        assert_eq!(c.apply([-1.0, 7.0]), [wrap(-1.0), wrap(7.0)]);
    }

    #[test]
    fn translations_commute() {
        let g = Grid::square(8).unwrap();
        let a = DiffeoMap::translation(g, [0.3, 0.0]).unwrap();
        let b = DiffeoMap::translation(g, [5.0, 0.0]).unwrap();
        let ab = MapChain::from_maps(vec![a.clone(), b.clone()]).unwrap();
        let ba = MapChain::from_maps(vec![b, a]).unwrap();
        for p in [[0.0, 0.0], [2.0, 1.0]] {
            let expect = wrap(p[0] + 5.3);
            for c in [&ab, &ba] {
                let q = c.apply(p);
                let diff = (q[0] - expect).abs();
                assert!(diff < 1e-14 || (diff - TAU).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn single_map_chain_matches_map() {
        let g = Grid::square(16).unwrap();
        let m = wave(g, 0.2, 0.1);
        let c = MapChain::from_maps(vec![m.clone()]).unwrap();
        for p in g.cell_centers() {
            assert_eq!(c.apply(p), m.apply(p));
        }
    }

    #[test]
    fn newest_map_applies_first() {
        let g = Grid::square(16).unwrap();
        let w = wave(g, 0.2, 0.0);
        let v = wave(g, 0.0, 0.3);
        let c = MapChain::from_maps(vec![w.clone(), v.clone()]).unwrap();
        let p = [1.1, 2.2];
        assert_eq!(c.apply(p), w.apply(v.apply(p)));
        assert_ne!(c.apply(p), v.apply(w.apply(p)));
    }

    #[test]
    fn rejects_mixed_grids() {
        let mut c = MapChain::new();
        c.push(DiffeoMap::identity(Grid::square(8).unwrap())).unwrap();
        assert!(matches!(
            c.push(DiffeoMap::identity(Grid::square(16).unwrap())),
            Err(Error::Chain(_))
        ));
    }

    #[test]
    fn accumulated_det_matches_finite_differences() {
        let g = Grid::square(32).unwrap();
        let c = MapChain::from_maps(vec![wave(g, 0.2, 0.1), wave(g, -0.1, 0.25)]).unwrap();
        let p = [0.9, 4.1];
        let h = 1e-5;
        let d = |dx: f64, dy: f64| c.apply_with_displacement([p[0] + dx, p[1] + dy]).1;
        let (xp, xm, yp, ym) = (d(h, 0.0), d(-h, 0.0), d(0.0, h), d(0.0, -h));
        let j = [
            [1.0 + (xp[0] - xm[0]) / (2.0 * h), (yp[0] - ym[0]) / (2.0 * h)],
            [(xp[1] - xm[1]) / (2.0 * h), 1.0 + (yp[1] - ym[1]) / (2.0 * h)],
        ];
        let (_, det) = c.apply_with_det(p);
        assert!((det - det2(&j)).abs() < 1e-8);
    }

    proptest! {
        #[test]
        fn composition_is_associative(x in 0.0f64..TAU, y in 0.0f64..TAU) {
            let g = Grid::square(16).unwrap();
            let a = wave(g, 0.2, 0.1);
            let b = wave(g, -0.15, 0.05);
            let cm = wave(g, 0.1, -0.2);
            let abc = MapChain::from_maps(vec![a.clone(), b.clone(), cm.clone()]).unwrap();
            let bc = MapChain::from_maps(vec![b, cm]).unwrap();
            let a_only = MapChain::from_maps(vec![a]).unwrap();
            let lhs = abc.apply([x, y]);
            let rhs = a_only.apply(bc.apply([x, y]));
            prop_assert!((lhs[0] - rhs[0]).abs() <= 1e-14 && (lhs[1] - rhs[1]).abs() <= 1e-14);
        }

        #[test]
        fn displacement_is_consistent_with_image(x in -5.0f64..10.0, y in -5.0f64..10.0) {
            let g = Grid::square(16).unwrap();
            let c = MapChain::from_maps(vec![wave(g, 1.5, 0.4), wave(g, 2.0, -1.0)]).unwrap();
            let (q, d) = c.apply_with_displacement([x, y]);
            let r = [wrap(x + d[0]), wrap(y + d[1])];
            for k in 0..2 {
                let e = (q[k] - r[k]).abs();
                prop_assert!(e < 1e-12 || (e - TAU).abs() < 1e-12);
            }
        }
    }
}
