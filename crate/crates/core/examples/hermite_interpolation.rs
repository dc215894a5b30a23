//! Bicubic Hermite interpolation: fourth-order convergence on smooth data.
//!
//! Usage: `cargo run --release --example hermite_interpolation`

use diffeoflow::field::{Grid, HermiteField, PeriodicField};

fn main() -> diffeoflow::Result<()> {
    let exact = |x: f64, y: f64| x.sin() * (2.0 * y).cos();
    let probe = Grid::square(256)?.vertices();
    let mut previous: Option<f64> = None;
    for n in [8, 16, 32, 64, 128] {
        let grid = Grid::square(n)?;
        // derivative planes from the spectral derivative of the samples
        let h = HermiteField::from_field_spectral(&PeriodicField::from_fn(grid, exact))?;
        let err = probe
            .iter()
            .map(|&p| {
                let q = [p[0] + 0.011, p[1] + 0.007];
                (h.eval(q) - exact(q[0], q[1])).abs()
            })
            .fold(0.0, f64::max);
        match previous {
            Some(e) => println!("n = {n:4}  L∞ error {err:.3e}  ratio {:.2}", e / err),
            None => println!("n = {n:4}  L∞ error {err:.3e}"),
        }
        previous = Some(err);
    }
    Ok(())
}
