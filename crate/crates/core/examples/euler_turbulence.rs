//! Decaying 2D turbulence with the characteristic-mapping Euler solver.
//!
//! Usage: `cargo run --release --example euler_turbulence -- [n] [T] [dt] [K] [seed]`

use std::time::Instant;

use diffeoflow::diagnostics::spectrum_slope;
use diffeoflow::field::{energy_spectrum, simpson_integral, Grid};
use diffeoflow::solvers::{euler_cmm, random_vorticity};

fn main() -> diffeoflow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, d: &str| args.get(i).cloned().unwrap_or_else(|| d.to_string());
    let n: usize = arg(0, "64").parse().expect("grid size");
    let t_final: f64 = arg(1, "1").parse().expect("final time");
    let dt: f64 = arg(2, "0.005").parse().expect("time step");
    let k_max: usize = arg(3, "10").parse().expect("band limit");
    let seed: u64 = arg(4, "1").parse().expect("seed");

    let grid = Grid::square(n)?;
    let omega0 = random_vorticity(grid, k_max, seed)?;
    let start = Instant::now();
    let traj = euler_cmm(&omega0, t_final, dt, 10, grid)?;
    println!("solved {} frames in {:.1?}", traj.len(), start.elapsed());

    let sq = |f: &diffeoflow::field::PeriodicField| simpson_integral(&f.map(|v| v * v));
    let z0 = sq(&traj.frames[0])?;
    let z1 = sq(traj.last())?;
    println!("enstrophy drift on the solver grid: {:.3e}", (z1 - z0) / z0);

    let spec = energy_spectrum(traj.last())?;
    let hi = (n / 2 - 1).min(40);
    if hi > 8 {
        println!("spectrum slope over k in [8, {hi}]: {:.3}", spectrum_slope(&spec, 8, hi)?);
    }
    Ok(())
}
