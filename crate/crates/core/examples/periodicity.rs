//! Compares the pulled-back solution on [2, 6] with the one driven by the
//! path shifted back one period and observed on [4, 8].
//!
//! `cargo run --release --example periodicity`

use projected_milstein::problem::registry;
use projected_milstein::rps::{periodicity_check, PeriodicityConfig};
use projected_milstein::schemes::{SchemeConfig, SchemeKind};

fn main() -> projected_milstein::Result<()> {
    let problem = registry::benchmark();
    for depth_k in [10, 20] {
        let config = PeriodicityConfig {
            scheme: SchemeConfig::for_problem(SchemeKind::Pmm, 0.01, &problem)?,
            problem: problem.clone(),
            depth_k,
            window: (2.0, 6.0),
            xi: vec![0.5],
            seed: 13,
        };
        let r = periodicity_check(&config, 1, 50)?;
        println!("depth {depth_k:>2}: rms residual {:.3e} +/- {:.1e}", r.rms_mean, r.rms_stderr);
        if depth_k == 10 {
            for n in (0..r.times.len()).step_by(80) {
                println!("  t = {:.1}: {:+.6} vs {:+.6}", r.times[n], r.original[n], r.shifted[n]);
            }
        }
    }
    Ok(())
}
