//! Built-in problems, addressable by label.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use super::{FnField, LinearPart, SdeProblem};
use crate::error::{Error, Result};

pub const LABELS: [&str; 3] = ["benchmark", "gbm", "ou"];

/// `dX = (-2 pi X + X - X^3 + cos(pi t)) dt + (1 + X^2 + cos(pi t)) dW`,
/// period 2, growth exponent 3.
pub fn benchmark() -> SdeProblem {
    let field = FnField::scalar(
        |t, x| x - x * x * x + (PI * t).cos(),
        |t, x| 1.0 + x * x + (PI * t).cos(),
    )
    .with_scalar_jacobian(|_, x| 2.0 * x);
    SdeProblem::new("benchmark", LinearPart::scalar(-2.0 * PI).unwrap(), field, 2.0, 3.0)
        .expect("benchmark problem is well formed")
}

/// Scalar linear `dX = a X dt + b X dW` with `a < 0`. Its strong solution is
/// known in closed form, see [`super::exact_linear_solution`].
pub fn gbm(a: f64, b: f64) -> Result<SdeProblem> {
    let field = FnField::scalar(|_, _| 0.0, move |_, x| b * x).with_scalar_jacobian(move |_, _| b);
    SdeProblem::new("gbm", LinearPart::scalar(a)?, field, 1.0, 1.0)
}

/// Ornstein-Uhlenbeck process with periodic forcing and additive noise:
/// `dX = (-lambda X + amplitude cos(pi t)) dt + sigma dW`, period 2.
pub fn periodic_ou(lambda: f64, sigma: f64, amplitude: f64) -> Result<SdeProblem> {
    let field = FnField::scalar(move |t, _| amplitude * (PI * t).cos(), move |_, _| sigma)
        .with_scalar_jacobian(|_, _| 0.0);
    SdeProblem::new("ou", LinearPart::scalar(-lambda)?, field, 2.0, 1.0)
}

/// Looks a problem up by label. `params` overrides the defaults
/// (`gbm`: `a = -1`, `b = 0.25`; `ou`: `lambda = 1`, `sigma = 0.5`,
/// `amplitude = 1`); unknown parameter names are rejected.
pub fn lookup(label: &str, params: &BTreeMap<String, f64>) -> Result<SdeProblem> {
    let allowed: &[&str] = match label {
        "benchmark" => &[],
        "gbm" => &["a", "b"],
        "ou" => &["lambda", "sigma", "amplitude"],
        other => {
            return Err(Error::Config(format!(
                "unknown problem '{other}', expected one of {LABELS:?}"
            )))
        }
    };
    let unknown: Vec<&str> = params
        .keys()
        .map(String::as_str)
        .filter(|k| !allowed.contains(k))
        .collect();
    if !unknown.is_empty() {
        return Err(Error::Config(format!(
            "unknown parameters {unknown:?} for problem '{label}'"
        )));
    }
    let get = |k: &str, default: f64| params.get(k).copied().unwrap_or(default);
    match label {
        "benchmark" => Ok(benchmark()),
        "gbm" => gbm(get("a", -1.0), get("b", 0.25)),
        _ => periodic_ou(get("lambda", 1.0), get("sigma", 0.5), get("amplitude", 1.0)),
    }
}
