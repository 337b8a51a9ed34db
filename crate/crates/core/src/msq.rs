//! Mean-square convergence studies.
//!
//! Each Monte Carlo sample draws one Brownian path at the reference
//! stepsize. The reference solution (a fine PMM run or the closed-form
//! solution of a linear problem) and every coarse run are driven by that same
//! path, coarse increments being sums of fine ones, so the differences
//! measure discretisation error only.

use crate::error::{Error, Result};
use crate::linalg;
use crate::montecarlo::{self, NodeSums};
use crate::noise::{BrownianGrid, PathView};
use crate::problem::{exact_linear_solution, SdeProblem};
use crate::schemes::{self, SchemeConfig, SchemeKind};
use crate::stats::{self, LinearFit};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reference {
    /// PMM on the reference stepsize.
    FinestPmm,
    /// Closed form of `dX = a X dt + b X dW`.
    ExactLinear { a: f64, b: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorMetric {
    /// `sqrt(E|X_ref(T) - X_h(T)|^2)`
    Endpoint,
    /// `sqrt(max_j E|X_ref(t_j) - X_h(t_j)|^2)` over the coarse nodes.
    Sup,
}

#[derive(Debug, Clone)]
pub struct ConvergenceStudy {
    pub problem: SdeProblem,
    pub schemes: Vec<SchemeKind>,
    /// Coarse stepsizes, each an integer multiple of `h_ref`.
    pub ladder: Vec<f64>,
    pub h_ref: f64,
    pub reference: Reference,
    pub t0: f64,
    pub t_end: f64,
    pub samples: usize,
    pub seed: u64,
    pub xi: Vec<f64>,
    pub metric: ErrorMetric,
    /// Projection exponent; the problem's growth exponent when `None`.
    pub gamma: Option<f64>,
}

fn multiple_of(h: f64, base: f64) -> Option<usize> {
    let r = h / base;
    let n = r.round();
    (n >= 1.0 && (r - n).abs() <= 1e-9 * r).then_some(n as usize)
}

impl ConvergenceStudy {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.samples < 2 {
            problems.push(format!("sample count must be at least 2, got {}", self.samples));
        }
        if self.schemes.is_empty() {
            problems.push("no schemes selected".to_string());
        }
        if self.ladder.is_empty() {
            problems.push("stepsize ladder is empty".to_string());
        }
        if !(self.h_ref > 0.0 && self.h_ref < 1.0) {
            problems.push(format!("reference stepsize must lie in (0, 1), got {}", self.h_ref));
        }
        if self.xi.len() != self.problem.dim() {
            problems.push(format!("initial value has length {}, problem dimension is {}", self.xi.len(), self.problem.dim()));
        }
        let len = self.t_end - self.t0;
        if !(len > 0.0) {
            problems.push(format!("empty interval [{}, {}]", self.t0, self.t_end));
        } else if self.h_ref > 0.0 && multiple_of(len, self.h_ref).is_none() {
            problems.push(format!("interval length {len} is not a multiple of h_ref = {}", self.h_ref));
        }
        for &h in &self.ladder {
            match multiple_of(h, self.h_ref) {
                None => problems.push(format!("stepsize {h} is not an integer multiple of h_ref = {}", self.h_ref)),
                Some(_) if len > 0.0 && multiple_of(len, h).is_none() => {
                    problems.push(format!("interval length {len} is not a multiple of stepsize {h}"))
                }
                Some(_) if h >= 1.0 => problems.push(format!("stepsize {h} is not below 1")),
                _ => {}
            }
        }
        if let Reference::ExactLinear { .. } = self.reference {
            if self.problem.dim() != 1 || self.problem.noise_dim() != 1 {
                problems.push("the exact reference needs a scalar problem".to_string());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    fn gamma(&self) -> f64 {
        self.gamma.unwrap_or(self.problem.gamma())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub scheme: SchemeKind,
    pub h: f64,
    pub e_h: f64,
    pub stderr: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    pub scheme: SchemeKind,
    pub fit: LinearFit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTable {
    pub rows: Vec<ErrorRow>,
    pub samples: usize,
}

impl ErrorTable {
    pub fn rows_for(&self, scheme: SchemeKind) -> impl Iterator<Item = &ErrorRow> {
        self.rows.iter().filter(move |r| r.scheme == scheme)
    }

    pub fn row(&self, scheme: SchemeKind, h: f64) -> Option<&ErrorRow> {
        self.rows_for(scheme).find(|r| (r.h - h).abs() <= 1e-12 * h)
    }
}

/// Reference values at every node of the fine path.
fn reference_path(study: &ConvergenceStudy, fine: &PathView<'_>) -> Result<Vec<f64>> {
    let d = study.problem.dim();
    match study.reference {
        Reference::FinestPmm => {
            let cfg = SchemeConfig::new(SchemeKind::Pmm, study.h_ref, study.gamma())?;
            let mut out = Vec::with_capacity((fine.len() + 1) * d);
            schemes::simulate_with(&study.problem, &cfg, fine, &study.xi, |_, x| out.extend_from_slice(x))?;
            Ok(out)
        }
        Reference::ExactLinear { a, b } => exact_linear_solution(a, b, study.xi[0], fine, study.t_end),
    }
}

/// Squared error per coarse node (sup metric) or at the end (endpoint).
fn row_errors(
    study: &ConvergenceStudy,
    fine: &PathView<'_>,
    reference: &[f64],
    scheme: SchemeKind,
    h: f64,
) -> Result<Vec<f64>> {
    let d = study.problem.dim();
    let factor = multiple_of(h, study.h_ref).expect("validated ladder");
    let coarse = fine.aggregate(factor)?;
    let cfg = SchemeConfig::new(scheme, h, study.gamma())?;
    match study.metric {
        ErrorMetric::Endpoint => {
            let end = schemes::simulate_endpoint(&study.problem, &cfg, &coarse, &study.xi)?;
            let r = &reference[reference.len() - d..];
            Ok(vec![linalg::dist(&end, r).powi(2)])
        }
        ErrorMetric::Sup => {
            let mut errs = Vec::with_capacity(coarse.len() + 1);
            schemes::simulate_with(&study.problem, &cfg, &coarse, &study.xi, |j, x| {
                let r = &reference[j * factor * d..(j * factor + 1) * d];
                errs.push(linalg::dist(x, r).powi(2));
            })?;
            Ok(errs)
        }
    }
}

/// Row layout: scheme-major, ladder order within a scheme.
fn row_keys(study: &ConvergenceStudy) -> Vec<(SchemeKind, f64)> {
    study
        .schemes
        .iter()
        .flat_map(|&s| study.ladder.iter().map(move |&h| (s, h)))
        .collect()
}

fn endpoint_row(scheme: SchemeKind, h: f64, values: &[f64], failures: usize) -> ErrorRow {
    // sorting first makes the result independent of sample order
    let n = values.len();
    let (e_h, stderr) = if n == 0 {
        (f64::NAN, f64::NAN)
    } else {
        let mean = linalg::sorted_sum(values) / n as f64;
        let dev: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
        let var = if n > 1 { linalg::sorted_sum(&dev) / (n - 1) as f64 } else { 0.0 };
        let se_mean = (var / n as f64).sqrt();
        let e = mean.sqrt();
        (e, if e > 0.0 { se_mean / (2.0 * e) } else { 0.0 })
    };
    ErrorRow { scheme, h, e_h, stderr, failures }
}

fn run_endpoint(study: &ConvergenceStudy, keys: &[(SchemeKind, f64)]) -> Result<ErrorTable> {
    let m = study.problem.noise_dim();
    let per_sample: Vec<Result<Vec<Option<f64>>>> = montecarlo::map_samples(study.samples, |i| {
        let grid = BrownianGrid::sample_stream(study.seed, i as u64, study.t0, study.t_end, study.h_ref, m)?;
        let fine = grid.view();
        let reference = match reference_path(study, &fine) {
            Ok(r) => r,
            Err(Error::BlowUp { .. }) | Err(Error::Evaluation { .. }) => return Ok(vec![None; keys.len()]),
            Err(e) => return Err(e),
        };
        keys.iter()
            .map(|&(s, h)| match row_errors(study, &fine, &reference, s, h) {
                Ok(v) => Ok(Some(v[0])),
                Err(Error::BlowUp { .. }) | Err(Error::Evaluation { .. }) => Ok(None),
                Err(e) => Err(e),
            })
            .collect()
    });
    let per_sample: Vec<Vec<Option<f64>>> = per_sample.into_iter().collect::<Result<_>>()?;
    let rows = keys
        .iter()
        .enumerate()
        .map(|(k, &(s, h))| {
            let vals: Vec<f64> = per_sample.iter().filter_map(|v| v[k]).collect();
            endpoint_row(s, h, &vals, study.samples - vals.len())
        })
        .collect();
    Ok(ErrorTable { rows, samples: study.samples })
}

fn run_sup(study: &ConvergenceStudy, keys: &[(SchemeKind, f64)]) -> Result<ErrorTable> {
    let m = study.problem.noise_dim();
    let len = study.t_end - study.t0;
    let sizes: Vec<usize> = keys
        .iter()
        .map(|&(_, h)| multiple_of(len, h).expect("validated ladder") + 1)
        .collect();
    let init = || -> Result<Vec<NodeSums>> { Ok(sizes.iter().map(|&n| NodeSums::new(n)).collect()) };
    let sums = montecarlo::batched(
        study.samples,
        8,
        init,
        |i, slot| {
            let grid = match BrownianGrid::sample_stream(study.seed, i as u64, study.t0, study.t_end, study.h_ref, m) {
                Ok(g) => g,
                Err(e) => {
                    *slot = Err(e);
                    return;
                }
            };
            let Ok(acc) = slot else { return };
            let fine = grid.view();
            let reference = match reference_path(study, &fine) {
                Ok(r) => r,
                Err(_) => {
                    acc.iter_mut().for_each(|s| s.failures += 1);
                    return;
                }
            };
            for (k, &(s, h)) in keys.iter().enumerate() {
                match row_errors(study, &fine, &reference, s, h) {
                    Ok(v) => acc[k].add(&v),
                    Err(_) => acc[k].failures += 1,
                }
            }
        },
        |total, part| match (total, part) {
            (Ok(t), Ok(p)) => t.iter_mut().zip(p).for_each(|(a, b)| a.merge(b)),
            (t, Err(e)) => *t = Err(e),
            _ => {}
        },
    )?;
    let rows = keys
        .iter()
        .zip(&sums)
        .map(|(&(scheme, h), s)| {
            let (mut best, mut node) = (f64::NEG_INFINITY, 0);
            for n in 0..s.len() {
                if s.mean(n) > best {
                    best = s.mean(n);
                    node = n;
                }
            }
            let e = best.sqrt();
            let se = if e > 0.0 { s.stderr(node) / (2.0 * e) } else { 0.0 };
            ErrorRow { scheme, h, e_h: e, stderr: se, failures: s.failures }
        })
        .collect();
    Ok(ErrorTable { rows, samples: study.samples })
}

/// Full table over every scheme and stepsize, deterministic in the seed.
pub fn run_study(study: &ConvergenceStudy) -> Result<ErrorTable> {
    study.validate()?;
    let keys = row_keys(study);
    match study.metric {
        ErrorMetric::Endpoint => run_endpoint(study, &keys),
        ErrorMetric::Sup => run_sup(study, &keys),
    }
}

/// `(e_h, stderr, failures)` for a single scheme and stepsize.
pub fn mean_square_error(study: &ConvergenceStudy, scheme: SchemeKind, h: f64) -> Result<(f64, f64, usize)> {
    let single = ConvergenceStudy {
        schemes: vec![scheme],
        ladder: vec![h],
        ..study.clone()
    };
    let table = run_study(&single)?;
    let row = &table.rows[0];
    Ok((row.e_h, row.stderr, row.failures))
}

/// Least-squares slope of `log2 e_h` against `log2 h` per scheme. Rows with
/// failures are skipped unless `include_failed_rows` is set; rows with
/// `e_h = 0` are always skipped. Needs three usable rows per scheme.
pub fn slope_fit(table: &ErrorTable, include_failed_rows: bool) -> Result<Vec<SlopeFit>> {
    let mut kinds: Vec<SchemeKind> = Vec::new();
    for r in &table.rows {
        if !kinds.contains(&r.scheme) {
            kinds.push(r.scheme);
        }
    }
    kinds
        .into_iter()
        .map(|scheme| {
            let (xs, ys): (Vec<f64>, Vec<f64>) = table
                .rows_for(scheme)
                .filter(|r| (include_failed_rows || r.failures == 0) && r.e_h > 0.0 && r.e_h.is_finite())
                .map(|r| (r.h.log2(), r.e_h.log2()))
                .unzip();
            if xs.len() < 3 {
                return Err(Error::Fit(format!(
                    "{scheme}: {} usable rows, need at least 3",
                    xs.len()
                )));
            }
            Ok(SlopeFit { scheme, fit: stats::linear_fit(&xs, &ys, 3)? })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{registry, FnField, LinearPart};

    fn row(scheme: SchemeKind, h: f64, e_h: f64) -> ErrorRow {
        ErrorRow { scheme, h, e_h, stderr: 0.0, failures: 0 }
    }

    #[test]
    fn slope_of_exact_power_laws() {
        let hs = [0.5, 0.25, 0.125, 0.0625, 0.03125];
        let mut rows = Vec::new();
        for h in hs {
            rows.push(row(SchemeKind::Pmm, h, 3.0 * h));
            rows.push(row(SchemeKind::Em, h, 0.7 * h.sqrt()));
        }
        let fits = slope_fit(&ErrorTable { rows, samples: 10 }, false).unwrap();
        assert_eq!(fits[0].scheme, SchemeKind::Pmm);
        assert!((fits[0].fit.slope - 1.0).abs() < 1e-12);
        assert!((fits[1].fit.slope - 0.5).abs() < 1e-12);
    }

    #[test]
    fn slope_needs_three_clean_rows() {
        let mut rows = vec![row(SchemeKind::Pmm, 0.5, 0.5), row(SchemeKind::Pmm, 0.25, 0.25), row(SchemeKind::Pmm, 0.125, 0.0)];
        assert!(slope_fit(&ErrorTable { rows: rows.clone(), samples: 2 }, false).is_err());
        rows[2].e_h = 0.125;
        rows[2].failures = 1;
        assert!(slope_fit(&ErrorTable { rows: rows.clone(), samples: 2 }, false).is_err());
        assert!(slope_fit(&ErrorTable { rows, samples: 2 }, true).is_ok());
    }

    fn decay_study(metric: ErrorMetric) -> ConvergenceStudy {
        let p = SdeProblem::new(
            "decay",
            LinearPart::scalar(-1.0).unwrap(),
            FnField::scalar(|_, _| 0.0, |_, _| 0.0).with_scalar_jacobian(|_, _| 0.0),
            1.0,
            1.0,
        )
        .unwrap();
        ConvergenceStudy {
            problem: p,
            schemes: vec![SchemeKind::Pmm],
            ladder: vec![0.1],
            h_ref: 0.1,
            reference: Reference::ExactLinear { a: -1.0, b: 0.0 },
            t0: 0.0,
            t_end: 1.0,
            samples: 4,
            seed: 1,
            xi: vec![1.0],
            metric,
            gamma: None,
        }
    }

    #[test]
    fn deterministic_linear_error() {
        let study = decay_study(ErrorMetric::Endpoint);
        let (e, se, fails) = mean_square_error(&study, SchemeKind::Pmm, 0.1).unwrap();
        let expected = (0.9f64.powi(10) - (-1.0f64).exp()).abs();
        assert!((e - expected).abs() < 1e-12, "{e} vs {expected}");
        assert!((e - 0.019201).abs() < 1e-6);
        assert_eq!(se, 0.0);
        assert_eq!(fails, 0);
    }

    #[test]
    fn reference_scheme_at_reference_step_is_exact() {
        let study = ConvergenceStudy {
            problem: registry::benchmark(),
            schemes: vec![SchemeKind::Pmm],
            ladder: vec![0.125],
            h_ref: 0.125,
            reference: Reference::FinestPmm,
            t0: -2.0,
            t_end: 0.0,
            samples: 8,
            seed: 3,
            xi: vec![0.5],
            metric: ErrorMetric::Endpoint,
            gamma: None,
        };
        let table = run_study(&study).unwrap();
        assert_eq!(table.rows.len(), 1);
        assert_eq!(table.rows[0].e_h, 0.0);
        let sup = run_study(&ConvergenceStudy { metric: ErrorMetric::Sup, ..study }).unwrap();
        assert_eq!(sup.rows[0].e_h, 0.0);
    }

    #[test]
    fn sup_metric_dominates_endpoint() {
        let mut study = decay_study(ErrorMetric::Endpoint);
        study.ladder = vec![0.1, 0.2];
        study.h_ref = 0.05;
        study.schemes = vec![SchemeKind::Pmm, SchemeKind::Em];
        let end = run_study(&study).unwrap();
        let sup = run_study(&ConvergenceStudy { metric: ErrorMetric::Sup, ..study }).unwrap();
        for (a, b) in end.rows.iter().zip(&sup.rows) {
            assert!(b.e_h >= a.e_h);
        }
    }

    #[test]
    fn validation_collects_all_problems() {
        let mut study = decay_study(ErrorMetric::Endpoint);
        study.samples = 1;
        study.ladder = vec![0.15];
        let err = study.validate().unwrap_err().to_string();
        assert!(err.contains("sample count"), "{err}");
        assert!(err.contains("0.15"), "{err}");
    }

    #[test]
    fn blown_up_rows_count_failures() {
        let mut study = decay_study(ErrorMetric::Endpoint);
        study.problem = registry::benchmark();
        study.reference = Reference::FinestPmm;
        study.schemes = vec![SchemeKind::Em];
        study.h_ref = 0.03125;
        study.ladder = vec![0.5];
        study.t0 = -8.0;
        study.t_end = 0.0;
        study.xi = vec![8.0];
        let table = run_study(&study).unwrap();
        assert_eq!(table.rows[0].failures, study.samples);
        assert!(table.rows[0].e_h.is_nan());
    }
}
