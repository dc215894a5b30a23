//! Recovering a deformation from a pair of frames by regularized
//! registration.
//!
//! Usage: `cargo run --release --example registration -- [lambda]`

use diffeoflow::field::{Grid, PeriodicField};
use diffeoflow::lifting::{register_pair, RegistrationConfig};

fn main() -> diffeoflow::Result<()> {
    let lambda: f64 = std::env::args().nth(1).map_or(1e-3, |s| s.parse().expect("lambda"));
    let grid = Grid::square(64)?;
    let src_fn = |x: f64, y: f64| (16.0 * x).sin() * (16.0 * y).sin() + 0.3 * (x + 2.0 * y).sin();
    let v_true = |x: f64, y: f64| [0.05 * x.sin() * y.sin(), 0.05 * x.cos() * y.sin()];
    let src = PeriodicField::from_fn(grid, src_fn);
    let tgt = PeriodicField::from_fn(grid, |x, y| {
        let v = v_true(x, y);
        src_fn(x + v[0], y + v[1])
    });

    let cfg = RegistrationConfig { lambda_reg: lambda, ..RegistrationConfig::default() };
    let (map, report) = register_pair(&src, &tgt, &cfg)?;
    let objective = &report.levels.last().expect("one level").objective;
    println!(
        "{} iterations, objective {:.3e} -> {:.3e}",
        report.iterations(),
        objective[0],
        objective[objective.len() - 1]
    );
    let err = grid
        .vertices()
        .iter()
        .map(|&p| {
            let d = map.displacement_at(p);
            let v = v_true(p[0], p[1]);
            (d[0] - v[0]).abs().max((d[1] - v[1]).abs())
        })
        .fold(0.0, f64::max);
    println!("displacement L∞ error: {err:.3e}");
    Ok(())
}
