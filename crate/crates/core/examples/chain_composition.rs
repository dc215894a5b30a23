//! Composing maps: chain evaluation, projection onto one map, and
//! resolution consistency of pullbacks.
//!
//! Usage: `cargo run --release --example chain_composition`

use diffeoflow::diagnostics::resolution_consistency_check;
use diffeoflow::diffeo::{project, DiffeoMap, MapChain};
use diffeoflow::field::{AnalyticSampler, Grid, PeriodicField};

fn shear(grid: Grid, a: f64, phase: f64) -> diffeoflow::Result<DiffeoMap> {
    let vx = PeriodicField::from_fn(grid, |_, y| a * (y + phase).sin()).into_data();
    let vy = PeriodicField::from_fn(grid, |x, _| a * (2.0 * x - phase).cos()).into_data();
    DiffeoMap::from_values_spectral(grid, &vx, &vy)
}

fn main() -> diffeoflow::Result<()> {
    let grid = Grid::square(32)?;
    let maps = (0..6)
        .map(|i| shear(grid, 0.08, 0.7 * i as f64))
        .collect::<diffeoflow::Result<Vec<_>>>()?;
    let chain = MapChain::from_maps(maps)?;
    println!("chain of {} maps on {}²", chain.len(), grid.nx());

    let p = [1.0, 2.0];
    let (q, det) = chain.apply_with_det(p);
    println!("φ({p:?}) = [{:.6}, {:.6}], det Dφ = {det:.6}", q[0], q[1]);

    let single = project(&chain, grid, grid.dx() / 100.0)?;
    let pts = Grid::square(200)?.vertices();
    let dev = chain
        .evaluate(&pts)
        .iter()
        .zip(single.evaluate(&pts))
        .map(|(a, b)| (a[0] - b[0]).abs().max((a[1] - b[1]).abs()))
        .fold(0.0, f64::max);
    println!("projected map vs chain, max deviation: {dev:.3e}");
    println!("projected map orientation preserving: {}", single.is_orientation_preserving());

    let u0 = AnalyticSampler(|x: f64, y: f64| (x + 2.0 * y).sin() + (3.0 * x).cos());
    let gap = resolution_consistency_check(&chain, &u0, Grid::square(64)?, Grid::square(256)?)?;
    println!("pullback on 64² vs restricted 256²: {gap:.3e}");
    Ok(())
}
