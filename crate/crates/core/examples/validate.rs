//! Sampling-based checks of the structural assumptions and the advisory
//! stepsize window.
//!
//! `cargo run --release --example validate`

use projected_milstein::problem::{registry, HybridSampler};
use projected_milstein::schemes::{admissible_stepsize, estimate_beta, StepBoundParams};

fn main() -> projected_milstein::Result<()> {
    let problem = registry::benchmark();
    let sampler = HybridSampler::new(10.0, 3);
    let points = sampler.points(1, problem.period(), 50_000);
    let pairs = sampler.pairs(1, problem.period(), 50_000);

    let k1 = problem.estimate_coercivity_constant(1.0, &points)?;
    let k2 = problem.estimate_monotonicity_constant(1.0, &pairs)?;
    println!("K1_hat = {:?}, K2_hat = {:?}, lambda1 = {:.4}", k1.k1_hat, k2.k2_hat, k2.lambda1);
    println!("commutative: {}", problem.check_commutativity(&points, 1e-10)?.passed);
    println!("periodic:    {}", problem.check_periodicity(&points)?.passed);

    let l = problem.linear();
    for h in [0.1, 0.01, 0.001] {
        let (bf, bl) = estimate_beta(&problem, h, problem.gamma(), &pairs)?;
        let w = admissible_stepsize(&StepBoundParams::new(
            l.lambda_min(),
            l.lambda_max(),
            k2.k2_hat.unwrap(),
            bf,
            bl,
            problem.gamma(),
        ));
        println!("h = {h}: beta_f = {bf:.3}, beta_L = {bl:.3}, window vacuous = {}, upper = {:.3e}", w.vacuous, w.upper);
    }
    Ok(())
}
