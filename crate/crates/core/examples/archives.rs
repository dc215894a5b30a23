//! Writing and reading `.dflo` archives.
//!
//! Usage: `cargo run --release --example archives -- [dir]`

use std::path::PathBuf;

use diffeoflow::field::Grid;
use diffeoflow::io::{load_trajectory, peek_header, save_chain, save_field, save_trajectory};
use diffeoflow::solvers::{euler_cmm, random_vorticity};

fn main() -> diffeoflow::Result<()> {
    let dir = std::env::args().nth(1).map_or_else(std::env::temp_dir, PathBuf::from);
    let grid = Grid::square(32)?;
    let omega0 = random_vorticity(grid, 4, 9)?;
    let traj = euler_cmm(&omega0, 0.1, 0.01, 5, grid)?;

    let paths = [dir.join("omega0.dflo"), dir.join("chain.dflo"), dir.join("traj.dflo")];
    save_field(&paths[0], &omega0)?;
    save_chain(&paths[1], traj.submaps.as_ref().expect("solver stores submaps"))?;
    save_trajectory(&paths[2], &traj)?;
    for p in &paths {
        let h = peek_header(p)?;
        println!("{}: {:?} {}x{}, {} channels, {} payload bytes", p.display(), h.kind, h.nx, h.ny, h.channels, h.payload_len);
    }
    let back = load_trajectory(&paths[2])?;
    println!("trajectory round trip exact: {}", back == traj);
    Ok(())
}
