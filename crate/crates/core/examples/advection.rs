//! Characteristic-mapping advection of a slotted cylinder by a uniform
//! velocity. Extrema survive exactly; the map carries all the motion.
//!
//! Usage: `cargo run --release --example advection -- [n] [T]`

use std::f64::consts::TAU;

use diffeoflow::diagnostics::{conservation_error, extrema_error};
use diffeoflow::field::{BilinearSampler, Grid, PeriodicField, ScalarSampler};
use diffeoflow::rollout::pullback_field;
use diffeoflow::solvers::{advect_cmm, ConstantVelocity, SlottedCylinder};

fn main() -> diffeoflow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n: usize = args.first().map_or(64, |s| s.parse().expect("grid size"));
    let t_final: f64 = args.get(1).map_or(1.0, |s| s.parse().expect("final time"));

    let grid = Grid::square(n)?;
    let cyl = SlottedCylinder::default();
    let u0 = PeriodicField::from_fn(grid, |x, y| cyl.sample([x, y]));
    let sampler = BilinearSampler::new(u0.clone())?;
    let traj = advect_cmm(&ConstantVelocity([TAU, 0.0]), &sampler, t_final, 0.01, 10, grid)?;
    let chain = traj.submaps.clone().expect("advection stores its submaps");
    println!("{} frames, {} maps", traj.len(), chain.len());

    let (dmin, dmax) = extrema_error(traj.last(), &u0);
    println!("extrema error at T: ({dmin:e}, {dmax:e})");
    let quad = Grid::square(256)?;
    println!("conservation error on 256²: {:.3e}", conservation_error(&chain, &sampler, quad)?);

    // one full period brings the cylinder back
    if (t_final - t_final.round()).abs() < 1e-12 {
        let back = pullback_field(&chain, &sampler, grid)?;
        let dev = back.data().iter().zip(u0.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        println!("after an integer number of periods, max |u − u0| = {dev:.3e}");
    }
    Ok(())
}
