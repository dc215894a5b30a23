use std::sync::Arc;

use diffeoflow::diagnostics::{conservation_error, mse};
use diffeoflow::diffeo::DiffeoMap;
use diffeoflow::field::{simpson_integral, Grid, HermiteField, SharedSampler};
use diffeoflow::lifting::{FixedLifter, OracleLifter};
use diffeoflow::rollout::{rollout, RolloutConfig};
use diffeoflow::solvers::{euler_cmm, random_vorticity, vorticity_sampler};

#[test]
fn oracle_rollout_reproduces_the_euler_solver() {
    let g = Grid::square(32).unwrap();
    let w0 = random_vorticity(g, 4, 2).unwrap();
    let traj = euler_cmm(&w0, 0.2, 0.01, 5, g).unwrap();
    let s: SharedSampler = Arc::new(vorticity_sampler(&w0).unwrap());
    let oracle = OracleLifter::from_trajectory(&traj, 0, 1).unwrap();
    let (out, chain) = rollout(s.clone(), &oracle, traj.len() - 1, &RolloutConfig::compose(g, traj.dt)).unwrap();
    assert_eq!(out.len(), traj.len());
    for (a, b) in out.frames.iter().zip(&traj.frames) {
        assert!(mse(a, b).unwrap() < 1e-24);
    }
    // the transported enstrophy density keeps its integral up to quadrature error
    let a0 = HermiteField::from_field_spectral(&w0.map(|v| v * v)).unwrap();
    let errs: Vec<f64> = [128, 256, 512]
        .iter()
        .map(|&n| conservation_error(&chain, &a0, Grid::square(n).unwrap()).unwrap().abs())
        .collect();
    let z0 = simpson_integral(&w0.map(|v| v * v)).unwrap();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    assert!(errs[2] / z0 < 1e-8, "{errs:?}");
}

#[test]
fn semi_lagrangian_matches_composition_for_translations() {
    let g = Grid::square(32).unwrap();
    let w0 = random_vorticity(g, 5, 8).unwrap();
    let s: SharedSampler = Arc::new(HermiteField::from_field_spectral(&w0).unwrap());
    let lifter = FixedLifter::new(DiffeoMap::translation(g, [-0.037, 0.021]).unwrap(), 1).unwrap();
    let (a, ca) = rollout(s.clone(), &lifter, 30, &RolloutConfig::compose(g, 0.01)).unwrap();
    let (b, cb) = rollout(s, &lifter, 30, &RolloutConfig::semi_lagrangian(g, 0.01, 7)).unwrap();
    assert_eq!(ca.len(), 30);
    assert_eq!(cb.len(), 5);
    for (x, y) in a.frames.iter().zip(&b.frames) {
        assert!(mse(x, y).unwrap() < 1e-24);
    }
}
