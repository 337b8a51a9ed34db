//! A user-defined two-dimensional problem with diagonal noise, plugged in
//! through closures and simulated with PMM.
//!
//! `cargo run --release --example custom_problem`

use std::f64::consts::PI;

use projected_milstein::noise::BrownianGrid;
use projected_milstein::problem::{FnField, HybridSampler, LinearPart, SdeProblem};
use projected_milstein::schemes::{simulate, SchemeConfig, SchemeKind};

fn main() -> projected_milstein::Result<()> {
    // dX_i = (-(A X)_i - X_i^3 + sin(pi t)) dt + (1 + 0.5 sin X_i) dW_i
    let field = FnField::new(
        2,
        2,
        |t, x, out| {
            for i in 0..2 {
                out[i] = -x[i].powi(3) + (PI * t).sin();
            }
        },
        |_, x, r, out| {
            out.fill(0.0);
            out[r] = 1.0 + 0.5 * x[r].sin();
        },
    )
    .with_jacobian(|_, x, r, out| {
        out.fill(0.0);
        out[r * 2 + r] = 0.5 * x[r].cos();
    });
    let linear = LinearPart::new(2, vec![-4.0, 1.0, 1.0, -3.0])?;
    // each g_r depends on x_r alone, so the noise commutes
    let problem = SdeProblem::new("diagonal", linear, field, 2.0, 3.0)?.with_commutative(true);

    let points = HybridSampler::new(5.0, 1).points(2, 2.0, 2_000);
    println!("commutative: {}", problem.check_commutativity(&points, 1e-10)?.passed);

    let grid = BrownianGrid::sample(8, 0.0, 4.0, 0.01, 2)?;
    let cfg = SchemeConfig::for_problem(SchemeKind::Pmm, 0.01, &problem)?;
    let traj = simulate(&problem, &cfg, &grid.view(), &[1.0, -1.0])?;
    for n in (0..traj.len()).step_by(traj.len() / 8) {
        println!("t = {:.2}  x = {:?}", traj.time(n), traj.state(n));
    }
    Ok(())
}
