//! One Brownian path, three schemes: PMM, PEM and EM on the benchmark
//! equation, all driven by the same increments.
//!
//! `cargo run --release --example simulate_benchmark`

use projected_milstein::noise::BrownianGrid;
use projected_milstein::problem::registry;
use projected_milstein::schemes::{simulate_strided, SchemeConfig, SchemeKind};

fn main() -> projected_milstein::Result<()> {
    let problem = registry::benchmark();
    let h = 0.01;
    let grid = BrownianGrid::sample(42, -4.0, 0.0, h, problem.noise_dim())?;
    let runs: Vec<_> = [SchemeKind::Pmm, SchemeKind::Pem, SchemeKind::Em]
        .into_iter()
        .map(|kind| {
            let cfg = SchemeConfig::for_problem(kind, h, &problem)?;
            simulate_strided(&problem, &cfg, &grid.view(), &[0.5], 50).map(|t| (kind, t))
        })
        .collect::<Result<_, _>>()?;

    println!("{:>6} {:>12} {:>12} {:>12}", "t", "PMM", "PEM", "EM");
    let traj = &runs[0].1;
    for n in 0..traj.len() {
        print!("{:>6.2}", traj.time(n));
        for (_, t) in &runs {
            print!(" {:>12.6}", t.state(n)[0]);
        }
        println!();
    }
    Ok(())
}
