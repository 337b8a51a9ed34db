//! Strong orders of PMM and EM on geometric Brownian motion, measured
//! against the closed-form solution on the same paths.
//!
//! `cargo run --release --example gbm_oracle -- [samples] [a] [b]`

use projected_milstein::msq::{run_study, slope_fit, ConvergenceStudy, ErrorMetric, Reference};
use projected_milstein::problem::registry;
use projected_milstein::schemes::SchemeKind;

fn main() -> projected_milstein::Result<()> {
    let arg = |i: usize, default: f64| std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default);
    let samples = arg(1, 2000.0) as usize;
    let (a, b) = (arg(2, -1.0), arg(3, 0.25));
    let study = ConvergenceStudy {
        problem: registry::gbm(a, b)?,
        schemes: vec![SchemeKind::Pmm, SchemeKind::Em],
        ladder: (4..=8).map(|i| 2f64.powi(-i)).collect(),
        h_ref: 2f64.powi(-8),
        reference: Reference::ExactLinear { a, b },
        t0: 0.0,
        t_end: 1.0,
        samples,
        seed: 7,
        xi: vec![1.0],
        metric: ErrorMetric::Endpoint,
        gamma: None,
    };
    let table = run_study(&study)?;
    for r in &table.rows {
        println!("{:<4} h={:<10} e_h={:.4e} (+/- {:.1e})", r.scheme.to_string(), r.h, r.e_h, r.stderr);
    }
    for f in slope_fit(&table, false)? {
        println!("{} slope {:.3} +/- {:.3}", f.scheme, f.fit.slope, f.fit.ci95);
    }
    Ok(())
}
