//! Learning the lifting from frames to maps with the spectral lifter, then
//! rolling it out with both time-stepping schemes.
//!
//! Usage: `cargo run --release --example spectral_lifter`

use std::f64::consts::TAU;
use std::sync::Arc;

use diffeoflow::diagnostics::extrema_error;
use diffeoflow::field::{BilinearSampler, Grid, HermiteField, PeriodicField, ScalarSampler, SharedSampler};
use diffeoflow::lifting::{build_dataset, fit_spectral_lifter, FitMode, Lifter};
use diffeoflow::rollout::{rollout, RolloutConfig};
use diffeoflow::solvers::{advect_cmm, random_vorticity, ConstantVelocity, SlottedCylinder};

fn main() -> diffeoflow::Result<()> {
    let grid = Grid::square(64)?;
    let dt = 0.01;
    let data = (0..4)
        .map(|s| {
            let f = random_vorticity(grid, 6, 40 + s)?;
            advect_cmm(&ConstantVelocity([TAU, 0.0]), &HermiteField::from_field_spectral(&f)?, 0.2, dt, 1, grid)
        })
        .collect::<diffeoflow::Result<Vec<_>>>()?;
    let ds = build_dataset(data, 1, 0.75, 7)?;
    let (lifter, report) = fit_spectral_lifter(&ds, 16, 1e-8, FitMode::MapSupervised)?;
    println!(
        "{} train / {} test samples, test map MSE {:.3e}",
        report.train_samples,
        report.test_samples,
        report.test_map_mse.unwrap_or(f64::NAN)
    );
    let d = lifter.lift(&[ds.trajectories()[0].frames[0].clone()], 0)?.displacement_at([1.0, 1.0]);
    println!("predicted displacement [{:.6}, {:.6}], expected [{:.6}, 0]", d[0], d[1], -TAU * dt);

    let cyl = SlottedCylinder::default();
    let u0 = PeriodicField::from_fn(grid, |x, y| cyl.sample([x, y]));
    let sampler: SharedSampler = Arc::new(BilinearSampler::new(u0.clone())?);
    for config in [RolloutConfig::compose(grid, dt), RolloutConfig::semi_lagrangian(grid, dt, 20)] {
        let (traj, chain) = rollout(sampler.clone(), &lifter, 100, &config)?;
        println!(
            "{:>8}: {} frames, final chain length {}, extrema error {:?}",
            config.scheme.to_string(),
            traj.len(),
            chain.len(),
            extrema_error(traj.last(), &u0)
        );
    }
    Ok(())
}
