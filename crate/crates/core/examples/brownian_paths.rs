//! Brownian grids: coarse views that reuse fine increments, windows,
//! path shifts, and the binary dump format.
//!
//! `cargo run --release --example brownian_paths`

use projected_milstein::noise::BrownianGrid;

fn main() -> projected_milstein::Result<()> {
    let grid = BrownianGrid::sample(5, -2.0, 2.0, 0.25, 1)?;
    let fine = grid.view();
    let coarse = grid.aggregate(4)?;
    println!("fine steps {}, coarse steps {}", fine.len(), coarse.len());
    println!("W(2) - W(-2): fine {:.6}, coarse {:.6}", fine.total()[0], coarse.total()[0]);

    let window = fine.window(0.0, 1.0)?;
    let shifted = fine.window(-1.0, 1.0)?.theta_shift(1.0)?;
    println!("window [0,1] starts at t = {}, first increment {:.6}", window.t0(), window.cumulative()[1]);
    println!("path shifted by 1 at t = {}, first increment {:.6}", shifted.t0(), shifted.cumulative()[1]);

    let mut bytes = Vec::new();
    grid.write_dump(&mut bytes)?;
    let back = BrownianGrid::read_dump(bytes.as_slice())?;
    println!("dump: {} bytes, round trip equal: {}", bytes.len(), back.increments() == grid.increments());
    Ok(())
}
