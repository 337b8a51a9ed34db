//! Running supremum of the second moment over a long horizon.
//!
//! `cargo run --release --example second_moment`

use projected_milstein::problem::registry;
use projected_milstein::rps::{second_moment_watch, MomentConfig};
use projected_milstein::schemes::{SchemeConfig, SchemeKind};

fn main() -> projected_milstein::Result<()> {
    let problem = registry::benchmark();
    let config = MomentConfig {
        scheme: SchemeConfig::for_problem(SchemeKind::Pmm, 0.01, &problem)?,
        problem,
        t0: 0.0,
        xi: vec![0.5],
        seed: 21,
    };
    let r = second_moment_watch(&config, 100_000, 200)?;
    println!(
        "sup E|X|^2 = {:.4} +/- {:.4} at node {} (failures: {})",
        r.sup, r.sup_stderr, r.sup_node, r.failures
    );
    for (t, m) in r.curve.iter().step_by(100) {
        println!("  t = {t:>7.1}  E|X|^2 = {m:.4}");
    }
    Ok(())
}
