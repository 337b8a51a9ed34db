//! Pull-back approximation of the random periodic solution: runs started
//! at -k tau for growing k, observed on [0, 4] along one noise realisation.
//!
//! `cargo run --release --example pullback`

use projected_milstein::problem::registry;
use projected_milstein::rps::{pullback_limit, PullbackConfig};
use projected_milstein::schemes::{SchemeConfig, SchemeKind};

fn main() -> projected_milstein::Result<()> {
    let problem = registry::benchmark();
    let config = PullbackConfig {
        scheme: SchemeConfig::for_problem(SchemeKind::Pmm, 0.01, &problem)?,
        problem,
        k_list: vec![1, 2, 3, 5, 10],
        window: (0.0, 4.0),
        xi_list: vec![vec![0.5], vec![-2.0]],
        seed: 17,
    };
    let report = pullback_limit(&config, 100)?;
    for c in &report.cauchy {
        println!("D({:>2} -> {:>2}) = {:.3e} +/- {:.1e}", c.k, c.k_next, c.msq, c.stderr);
    }
    println!("random periodic solution, sample 0:");
    for n in (0..report.times.len()).step_by(50) {
        println!("  t = {:>4.1}  x = {:.6}", report.times[n], report.rps_sample[n]);
    }
    Ok(())
}
