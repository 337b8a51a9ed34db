//! Mean-square errors of PMM and PEM on the benchmark equation over
//! [-20, 0], against a fine PMM reference.
//!
//! `cargo run --release --example convergence -- [samples] [seed]`

use projected_milstein::msq::{run_study, slope_fit, ConvergenceStudy, ErrorMetric, Reference};
use projected_milstein::problem::registry;
use projected_milstein::schemes::SchemeKind;

fn main() -> projected_milstein::Result<()> {
    let arg = |i: usize| std::env::args().nth(i).and_then(|s| s.parse::<u64>().ok());
    let samples = arg(1).unwrap_or(1000) as usize;
    let seed = arg(2).unwrap_or(2024);
    let study = ConvergenceStudy {
        problem: registry::benchmark(),
        schemes: vec![SchemeKind::Pmm, SchemeKind::Pem],
        ladder: (8..=12).map(|i| 20.0 * 2f64.powi(-i)).collect(),
        h_ref: 20.0 * 2f64.powi(-15),
        reference: Reference::FinestPmm,
        t0: -20.0,
        t_end: 0.0,
        samples,
        seed,
        xi: vec![0.5],
        metric: ErrorMetric::Endpoint,
        gamma: None,
    };
    let started = std::time::Instant::now();
    let table = run_study(&study)?;
    println!("scheme      h           e_h         stderr      failures");
    for r in &table.rows {
        println!("{:<6} {:>11.6e} {:>11.4e} {:>11.4e} {:>5}", r.scheme.to_string(), r.h, r.e_h, r.stderr, r.failures);
    }
    for f in slope_fit(&table, false)? {
        println!("{} slope {:.3} +/- {:.3}", f.scheme, f.fit.slope, f.fit.ci95);
    }
    println!("{} samples in {:.1?}", samples, started.elapsed());
    Ok(())
}
