//! Conservation, bandwidth, resolution-consistency, spectral and error
//! diagnostics, plus a CSV report container.

mod bandwidth;
mod report;

pub use bandwidth::{bandwidth_study, chain_constants, composite_bandwidth_bound, BandwidthPoint};
pub use report::DiagnosticsReport;

use log::warn;
use rayon::prelude::*;

use crate::diffeo::{MapChain, PAR_CHUNK};
use crate::error::{Error, Result};
use crate::field::{simpson_of, spectral_resample, Grid, PeriodicField, ScalarSampler};
use crate::solvers::pull_back;

/// `∫ (a0∘φ · det Dφ − a0) dx` by Simpson's rule on `quad_grid`, where `φ` is
/// the composite backward map of `chain`.
pub fn conservation_error(chain: &MapChain, a0: &dyn ScalarSampler, quad_grid: Grid) -> Result<f64> {
    let pts = quad_grid.vertices();
    let values: Vec<f64> = chain
        .evaluate_with_det(&pts)
        .par_iter()
        .zip(pts.par_iter())
        .with_min_len(PAR_CHUNK)
        .map(|(&(q, det), &p)| a0.sample(q) * det - a0.sample(p))
        .collect();
    simpson_of(quad_grid, &values)
}

/// Max deviation between the pullback on the `coarse` grid and the pullback
/// on the `fine` grid restricted to the shared vertices.
pub fn resolution_consistency_check(
    chain: &MapChain,
    u0: &dyn ScalarSampler,
    coarse: Grid,
    fine: Grid,
) -> Result<f64> {
    let (c, f) = nested_pullbacks(chain, u0, coarse, fine)?;
    let r = f.restrict(coarse)?;
    Ok(max_abs_diff(c.data(), r.data()))
}

/// Control for [`resolution_consistency_check`]: the deviation obtained when
/// the fine frame is brought to the coarse grid by spectral resampling
/// instead of pointwise evaluation.
pub fn spectral_resampling_deviation(
    chain: &MapChain,
    u0: &dyn ScalarSampler,
    coarse: Grid,
    fine: Grid,
) -> Result<f64> {
    let (c, f) = nested_pullbacks(chain, u0, coarse, fine)?;
    let r = spectral_resample(&f, coarse)?;
    Ok(max_abs_diff(c.data(), r.data()))
}

fn nested_pullbacks(
    chain: &MapChain,
    u0: &dyn ScalarSampler,
    coarse: Grid,
    fine: Grid,
) -> Result<(PeriodicField, PeriodicField)> {
    if coarse.refinement_factor(&fine).is_none() {
        return Err(Error::Domain(format!(
            "{}x{} is not nested in {}x{}",
            coarse.nx(),
            coarse.ny(),
            fine.nx(),
            fine.ny()
        )));
    }
    Ok((pull_back(u0, chain, coarse)?, pull_back(u0, chain, fine)?))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Least-squares slope of `ln E` against `ln k` over shells in `[k_min, k_max]`.
/// Shells with nonpositive energy are skipped.
pub fn spectrum_slope(series: &[(usize, f64)], k_min: usize, k_max: usize) -> Result<f64> {
    if k_min == 0 || k_min >= k_max {
        return Err(Error::Domain(format!("invalid fit range [{k_min}, {k_max}]")));
    }
    let mut pts = Vec::new();
    for &(k, e) in series {
        if k < k_min || k > k_max {
            continue;
        }
        if e > 0.0 && e.is_finite() {
            pts.push(((k as f64).ln(), e.ln()));
        } else {
            warn!("shell {k} has nonpositive energy {e:e}; excluded from the slope fit");
        }
    }
    if pts.len() < 2 {
        return Err(Error::Domain(format!(
            "fewer than two usable shells in [{k_min}, {k_max}]"
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Mean squared difference over all samples.
pub fn mse(u: &PeriodicField, reference: &PeriodicField) -> Result<f64> {
    u.grid().ensure_same(&reference.grid())?;
    if u.channels() != reference.channels() {
        return Err(Error::InvalidField("channel counts differ".into()));
    }
    let sq: Vec<f64> = u
        .data()
        .iter()
        .zip(reference.data())
        .map(|(a, b)| (a - b) * (a - b))
        .collect();
    Ok(crate::field::pairwise_sum(&sq) / sq.len() as f64)
}

/// `(max(0, min u0 − min u), max(0, max u − max u0))`.
pub fn extrema_error(u: &PeriodicField, u0: &PeriodicField) -> (f64, f64) {
    ((u0.min() - u.min()).max(0.0), (u.max() - u0.max()).max(0.0))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::diffeo::DiffeoMap;
    use crate::field::AnalyticSampler;

    fn wavy_chain(g: Grid) -> MapChain {
        let m = |a: f64, b: f64| {
            DiffeoMap::from_fn(g, move |x, y| {
                [
                    [a * y.sin(), 0.0, a * y.cos(), 0.0],
                    [b * (x + 0.4).cos(), -b * (x + 0.4).sin(), 0.0, 0.0],
                ]
            })
        };
        MapChain::from_maps(vec![m(0.2, 0.1), m(-0.15, 0.25), m(0.1, -0.1)]).unwrap()
    }

    #[test]
    fn conservation_trivial_chains() {
        let g = Grid::square(16).unwrap();
        let a0 = AnalyticSampler(|x: f64, y: f64| 1.0 + 0.5 * (x + 2.0 * y).sin());
        let q = Grid::square(64).unwrap();
        assert!(conservation_error(&MapChain::new(), &a0, q).unwrap().abs() < 1e-12);
        let t = MapChain::from_maps(vec![DiffeoMap::translation(g, [0.3, 1.1]).unwrap()]).unwrap();
        assert!(conservation_error(&t, &a0, q).unwrap().abs() < 1e-10);
    }

    #[test]
    fn conservation_error_shrinks_with_quadrature_refinement() {
        let g = Grid::square(16).unwrap();
        let chain = wavy_chain(g);
        let a0 = AnalyticSampler(|x: f64, y: f64| (x.cos() + y.sin()).exp());
        let e: Vec<f64> = [64, 128, 256]
            .iter()
            .map(|&n| conservation_error(&chain, &a0, Grid::square(n).unwrap()).unwrap().abs())
            .collect();
        assert!(e[1] < e[0] && e[2] < e[1], "{e:?}");
    }

    #[test]
    fn pointwise_action_is_resolution_consistent() {
        let g = Grid::square(16).unwrap();
        let u0 = AnalyticSampler(|x: f64, y: f64| (3.0 * x).sin() * (y - 1.0).abs());
        let c = Grid::square(32).unwrap();
        let f = Grid::square(128).unwrap();
        assert_eq!(resolution_consistency_check(&MapChain::new(), &u0, c, f).unwrap(), 0.0);
        assert!(resolution_consistency_check(&wavy_chain(g), &u0, c, f).unwrap() < 1e-13);
        assert!(spectral_resampling_deviation(&wavy_chain(g), &u0, c, f).unwrap() > 1e-6);
        assert!(resolution_consistency_check(&MapChain::new(), &u0, Grid::square(24).unwrap(), f).is_err());
    }

    #[test]
    fn slope_of_power_laws() {
        let cubic: Vec<(usize, f64)> = (1..60).map(|k| (k, (k as f64).powi(-3))).collect();
        assert!((spectrum_slope(&cubic, 8, 40).unwrap() + 3.0).abs() < 1e-10);
        let flat: Vec<(usize, f64)> = (1..60).map(|k| (k, 2.5)).collect();
        assert!(spectrum_slope(&flat, 8, 40).unwrap().abs() < 1e-12);
        assert!(spectrum_slope(&flat, 8, 8).is_err());
    }

    #[test]
    fn error_metrics() {
        let g = Grid::square(64).unwrap();
        let u = PeriodicField::from_fn(g, |x, _| x.cos());
        let shifted = PeriodicField::from_fn(g, |x, _| (x + PI).cos());
        assert_eq!(mse(&u, &u).unwrap(), 0.0);
        assert!((mse(&u, &shifted).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(extrema_error(&u, &u), (0.0, 0.0));
        let over = u.map(|v| 1.5 * v);
        let (lo, hi) = extrema_error(&over, &u);
        assert!((lo - 0.5).abs() < 1e-12 && (hi - 0.5).abs() < 1e-12);
    }
}
