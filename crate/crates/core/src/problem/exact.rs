use crate::error::{Error, Result};
use crate::noise::PathView;

/// Strong solution of `dX = a X dt + b X dW`, `X(t0) = x0`, on every node of
/// `path` up to `t_end`:
/// `X_t = x0 exp((a - b^2/2)(t - t0) + b (W_t - W_t0))`.
///
/// The path must carry a single noise column.
pub fn exact_linear_solution(a: f64, b: f64, x0: f64, path: &PathView<'_>, t_end: f64) -> Result<Vec<f64>> {
    if path.grid().noise_dim() != 1 {
        return Err(Error::Config("exact linear solution needs a scalar path".into()));
    }
    let view = path.window(path.t0(), t_end)?;
    let w = view.cumulative();
    let rate = a - 0.5 * b * b;
    Ok(w
        .iter()
        .enumerate()
        .map(|(j, wj)| x0 * (rate * (view.time(j) - view.t0()) + b * wj).exp())
        .collect())
}
