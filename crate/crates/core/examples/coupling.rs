//! Two initial values on identical noise: the mean-square gap decays
//! exponentially, next to the theoretical contraction bound.
//!
//! `cargo run --release --example coupling`

use projected_milstein::problem::{registry, HybridSampler};
use projected_milstein::rps::{initial_condition_coupling, ContractionConstants, CouplingConfig};
use projected_milstein::schemes::{estimate_beta, SchemeConfig, SchemeKind};

fn main() -> projected_milstein::Result<()> {
    let problem = registry::benchmark();
    let scheme = SchemeConfig::for_problem(SchemeKind::Pmm, 0.01, &problem)?;
    let pairs = HybridSampler::new(10.0, 1).pairs(1, problem.period(), 20_000);
    let k2 = problem.estimate_monotonicity_constant(1.0, &pairs)?.k2_hat.expect("finite K2");
    let (_, beta_l) = estimate_beta(&problem, scheme.h(), scheme.gamma(), &pairs)?;
    let rate = problem.linear().lambda_min() - k2 - beta_l * beta_l;
    println!("K2_hat = {k2:.4}, beta_L = {beta_l:.4}, bound rate lambda1 - K2 - beta_L^2 = {rate:.3}");
    let config = CouplingConfig {
        problem,
        scheme,
        t0: -20.0,
        t_end: 0.0,
        xi: vec![0.8],
        eta: vec![-0.5],
        seed: 11,
    };
    let r = initial_condition_coupling(&config, 100, 20, Some(ContractionConstants { k2, beta_l }))?;
    let bound = r.bound.as_ref().unwrap();
    for ((t, m), b) in r.times.iter().zip(&r.msq_diff).zip(bound).take(12) {
        println!("t = {t:>6.2}  E|X-Y|^2 = {m:.3e}  bound {b:.3e}");
    }
    println!("at t = 0: {:.3e}", r.msq_diff.last().unwrap());
    if let Some(fit) = r.decay {
        println!("fitted log decay rate {:.3} +/- {:.3}", fit.slope, fit.ci95);
    }
    Ok(())
}
