//! Transporting a density with the Jacobian of the backward map, and the
//! conservation error under quadrature refinement.
//!
//! Usage: `cargo run --release --example density_transport`

use diffeoflow::diagnostics::conservation_error;
use diffeoflow::field::{simpson_integral, AnalyticSampler, Grid};
use diffeoflow::rollout::transport_density;
use diffeoflow::solvers::{euler_cmm, random_vorticity};

fn main() -> diffeoflow::Result<()> {
    let grid = Grid::square(64)?;
    let traj = euler_cmm(&random_vorticity(grid, 6, 4)?, 0.5, 5e-3, 10, grid)?;
    let chain = traj.submaps.expect("solver stores submaps");
    let rho0 = AnalyticSampler(|x: f64, y: f64| (-(x - 3.0).powi(2) - (y - 3.0).powi(2)).exp() + 0.1);
    let out = Grid::square(256)?;
    let moved = transport_density(&chain, &rho0, out)?;
    let m0 = simpson_integral(&diffeoflow::field::PeriodicField::from_fn(out, |x, y| rho0.0(x, y)))?;
    let m1 = simpson_integral(&moved.density)?;
    println!("mass {m0:.10} -> {m1:.10}, min det {:.4}", moved.min_det);
    for n in [128, 256, 512] {
        println!("conservation error on {n}²: {:.3e}", conservation_error(&chain, &rho0, Grid::square(n)?)?);
    }
    Ok(())
}
