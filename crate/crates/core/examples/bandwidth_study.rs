//! Effective bandwidth of composite maps against the composition bound.
//!
//! Maps are Hermite splines, so their spectra carry an algebraic tail from
//! the C¹ cell boundaries. Modes must be well resolved by the map grid for a
//! single map to measure near its nominal bandwidth.
//!
//! Usage: `cargo run --release --example bandwidth_study -- [depth]`

use diffeoflow::diagnostics::bandwidth_study;
use diffeoflow::diffeo::{DiffeoMap, MapChain};
use diffeoflow::field::{Grid, PeriodicField};

fn main() -> diffeoflow::Result<()> {
    let depth: usize = std::env::args().nth(1).map_or(6, |s| s.parse().expect("depth"));
    let grid = Grid::square(128)?;
    // each map has bandwidth 4
    let maps = (0..depth)
        .map(|i| {
            let a = 0.08;
            let s = i as f64;
            let vx = PeriodicField::from_fn(grid, |x, y| a * (4.0 * y + s).sin() + a * (x - s).cos()).into_data();
            let vy = PeriodicField::from_fn(grid, |x, y| a * (4.0 * x + 2.0 * s).cos() + a * (y + s).sin()).into_data();
            DiffeoMap::from_values_spectral(grid, &vx, &vy)
        })
        .collect::<diffeoflow::Result<Vec<_>>>()?;
    let chain = MapChain::from_maps(maps)?;
    for p in bandwidth_study(&chain, 1e-6, 4.0, Grid::square(512)?)? {
        let ok = p.measured as f64 <= p.bound;
        println!("depth {:2}  measured {:4}  bound {:10.1}  within: {ok}  (C1 {:.3e}, C2 {:.3e})", p.depth, p.measured, p.bound, p.c1, p.c2);
    }
    Ok(())
}
