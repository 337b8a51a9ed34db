//! Random periodic solutions by pull-back.
//!
//! A run of depth `k` starts at `-k tau` and is observed on a fixed target
//! window. All depths of one Monte Carlo sample share one Brownian path
//! allocated at the largest depth; shallower runs start part-way into it,
//! which is exactly the pull-back of a single `omega`. As `k` grows the
//! observed values converge to the random periodic solution.

use crate::error::{Error, Result};
use crate::linalg;
use crate::montecarlo::{self, NodeSums};
use crate::noise::{BrownianGrid, PathView};
use crate::problem::SdeProblem;
use crate::schemes::{self, SchemeConfig};
use crate::stats::{self, LinearFit};

fn steps_between(from: f64, to: f64, h: f64, what: &str) -> Result<usize> {
    let ratio = (to - from) / h;
    let n = ratio.round();
    if n < 0.0 || (ratio - n).abs() > 1e-9 * ratio.abs().max(1.0) {
        return Err(Error::Config(format!(
            "{what}: {} is not a non-negative multiple of the stepsize {h}",
            to - from
        )));
    }
    Ok(n as usize)
}

fn check_period_alignment(problem: &SdeProblem, h: f64) -> Result<usize> {
    let tau = problem.period();
    let ratio = tau / h;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio {
        return Err(Error::Config(format!(
            "period {tau} is not an integer multiple of the stepsize {h}"
        )));
    }
    Ok(n as usize)
}

fn check_initial(problem: &SdeProblem, xi: &[f64]) -> Result<()> {
    if xi.len() != problem.dim() || !linalg::all_finite(xi) {
        return Err(Error::Config(format!(
            "initial value {xi:?} does not fit a problem of dimension {}",
            problem.dim()
        )));
    }
    Ok(())
}

/// Runs the scheme over `path` and stores every node from `first` on,
/// `count` nodes in total, row-major.
fn record_nodes(
    problem: &SdeProblem,
    scheme: &SchemeConfig,
    path: &PathView<'_>,
    xi: &[f64],
    first: usize,
    count: usize,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(count * xi.len());
    schemes::simulate_with(problem, scheme, path, xi, |j, x| {
        if j >= first && j < first + count {
            out.extend_from_slice(x);
        }
    })?;
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct PullbackConfig {
    pub problem: SdeProblem,
    pub scheme: SchemeConfig,
    /// Start depths in units of the period, non-decreasing.
    pub k_list: Vec<usize>,
    /// Target window `[t_lo, t_hi]`.
    pub window: (f64, f64),
    pub xi_list: Vec<Vec<f64>>,
    pub seed: u64,
}

impl PullbackConfig {
    fn validate(&self) -> Result<()> {
        let h = self.scheme.h();
        check_period_alignment(&self.problem, h)?;
        if self.k_list.is_empty() || self.k_list[0] == 0 {
            return Err(Error::Config("k_list must hold positive depths".into()));
        }
        if self.k_list.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config(format!("k_list {:?} is not ascending", self.k_list)));
        }
        if self.xi_list.is_empty() {
            return Err(Error::Config("xi_list is empty".into()));
        }
        for xi in &self.xi_list {
            check_initial(&self.problem, xi)?;
        }
        let (lo, hi) = self.window;
        let tau = self.problem.period();
        let start = -(self.k_list[0] as f64) * tau;
        steps_between(start, lo, h, "window start relative to shallowest start time")?;
        steps_between(lo, hi, h, "window length")?;
        Ok(())
    }
}

/// Mean-square distance between two consecutive depths on the window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CauchyDifference {
    pub k: usize,
    pub k_next: usize,
    pub msq: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PullbackReport {
    pub k_list: Vec<usize>,
    /// Window node times.
    pub times: Vec<f64>,
    /// Per depth and window node: sample mean and variance of the first
    /// state component (over samples and initial values).
    pub mean: Vec<Vec<f64>>,
    pub variance: Vec<Vec<f64>>,
    /// Per depth: mean first component at the window end.
    pub endpoints: Vec<f64>,
    pub cauchy: Vec<CauchyDifference>,
    /// Deepest-run window trajectory (first component) of the first
    /// surviving sample, i.e. one realisation of the numerical random
    /// periodic solution.
    pub rps_sample: Vec<f64>,
    pub samples: usize,
    pub failures: usize,
}

/// Pull-back runs at every depth of `config.k_list` on `samples`
/// independent paths. Samples that blow up are dropped and counted.
pub fn pullback_limit(config: &PullbackConfig, samples: usize) -> Result<PullbackReport> {
    config.validate()?;
    if samples == 0 {
        return Err(Error::Config("need at least one sample".into()));
    }
    let p = &config.problem;
    let h = config.scheme.h();
    let tau = p.period();
    let d = p.dim();
    let (lo, hi) = config.window;
    let k_max = *config.k_list.last().unwrap();
    let grid_start = -(k_max as f64) * tau;
    let count = steps_between(lo, hi, h, "window length")? + 1;
    let n_k = config.k_list.len();
    let n_xi = config.xi_list.len();

    // per sample: [k][xi] -> count x d values
    let runs: Vec<Result<Vec<Vec<Vec<f64>>>>> = montecarlo::map_samples(samples, |i| {
        let grid = BrownianGrid::sample_stream(config.seed, i as u64, grid_start, hi, h, p.noise_dim())?;
        config
            .k_list
            .iter()
            .map(|&k| {
                let start = -(k as f64) * tau;
                let view = grid.view().window(start, hi)?;
                let first = steps_between(start, lo, h, "window start")?;
                config
                    .xi_list
                    .iter()
                    .map(|xi| record_nodes(p, &config.scheme, &view, xi, first, count))
                    .collect()
            })
            .collect()
    });

    let mut failures = 0;
    let mut sums: Vec<NodeSums> = (0..n_k).map(|_| NodeSums::new(count)).collect();
    let mut cauchy_vals: Vec<Vec<f64>> = vec![Vec::new(); n_k.saturating_sub(1)];
    let mut rps_sample = Vec::new();
    let mut first_component = vec![0.0; count];
    for run in runs {
        let run = match run {
            Ok(r) => r,
            Err(Error::BlowUp { .. }) | Err(Error::Evaluation { .. }) => {
                failures += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        for (ki, per_xi) in run.iter().enumerate() {
            for vals in per_xi {
                for (n, v) in first_component.iter_mut().enumerate() {
                    *v = vals[n * d];
                }
                sums[ki].add(&first_component);
            }
        }
        for ki in 0..n_k.saturating_sub(1) {
            let mut acc = 0.0;
            for xi in 0..n_xi {
                let (a, b) = (&run[ki][xi], &run[ki + 1][xi]);
                acc += a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>() / count as f64;
            }
            cauchy_vals[ki].push(acc / n_xi as f64);
        }
        if rps_sample.is_empty() {
            rps_sample = run[n_k - 1][0].iter().step_by(d).copied().collect();
        }
    }
    montecarlo::check_failures(failures, samples)?;

    let cauchy = cauchy_vals
        .iter()
        .enumerate()
        .map(|(ki, vals)| {
            let mut s = NodeSums::new(1);
            for v in vals {
                s.add(&[*v]);
            }
            CauchyDifference {
                k: config.k_list[ki],
                k_next: config.k_list[ki + 1],
                msq: s.mean(0),
                stderr: s.stderr(0),
            }
        })
        .collect();

    Ok(PullbackReport {
        k_list: config.k_list.clone(),
        times: (0..count).map(|n| lo + n as f64 * h).collect(),
        mean: sums.iter().map(|s| (0..count).map(|n| s.mean(n)).collect()).collect(),
        variance: sums.iter().map(|s| (0..count).map(|n| s.variance(n)).collect()).collect(),
        endpoints: sums.iter().map(|s| s.mean(count - 1)).collect(),
        cauchy,
        rps_sample,
        samples,
        failures,
    })
}

#[derive(Debug, Clone)]
pub struct CouplingConfig {
    pub problem: SdeProblem,
    pub scheme: SchemeConfig,
    pub t0: f64,
    pub t_end: f64,
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingReport {
    pub times: Vec<f64>,
    /// `E|X_t - Y_t|^2` at each stored node.
    pub msq_diff: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Fit of `ln E|X_t - Y_t|^2` against `t` over nodes with a positive
    /// difference; `None` when fewer than three such nodes exist.
    pub decay: Option<LinearFit>,
    /// `exp(-(lambda1 - K2 - beta_L^2)(j + 1) h) |xi - eta|^2` when the
    /// constants were supplied.
    pub bound: Option<Vec<f64>>,
    pub samples: usize,
    pub failures: usize,
}

/// Contraction constants for the theoretical decay bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionConstants {
    pub k2: f64,
    pub beta_l: f64,
}

/// Runs `xi` and `eta` on identical paths and tracks their mean-square
/// distance. Every `stride`-th node is stored (plus the last).
pub fn initial_condition_coupling(
    config: &CouplingConfig,
    samples: usize,
    stride: usize,
    constants: Option<ContractionConstants>,
) -> Result<CouplingReport> {
    let p = &config.problem;
    check_initial(p, &config.xi)?;
    check_initial(p, &config.eta)?;
    if samples == 0 {
        return Err(Error::Config("need at least one sample".into()));
    }
    let h = config.scheme.h();
    let steps = steps_between(config.t0, config.t_end, h, "coupling interval")?;
    let stride = stride.max(1);
    let nodes: Vec<usize> = (0..=steps).filter(|j| j % stride == 0 || *j == steps).collect();
    let n_nodes = nodes.len();

    let sums = montecarlo::batched(
        samples,
        8,
        || NodeSums::new(n_nodes),
        |i, acc| {
            let run = || -> Result<Vec<f64>> {
                let grid = BrownianGrid::sample_stream(config.seed, i as u64, config.t0, config.t_end, h, p.noise_dim())?;
                let view = grid.view();
                let a = schemes::simulate_strided(p, &config.scheme, &view, &config.xi, stride)?;
                let b = schemes::simulate_strided(p, &config.scheme, &view, &config.eta, stride)?;
                Ok((0..a.len()).map(|n| linalg::dist(a.state(n), b.state(n)).powi(2)).collect())
            };
            match run() {
                Ok(v) => acc.add(&v),
                Err(_) => acc.failures += 1,
            }
        },
        |a, b| a.merge(b),
    );
    montecarlo::check_failures(sums.failures, samples)?;

    let times: Vec<f64> = nodes.iter().map(|&j| config.t0 + j as f64 * h).collect();
    let msq: Vec<f64> = (0..n_nodes).map(|n| sums.mean(n)).collect();
    let (fx, fy): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(&msq)
        .filter(|(_, m)| **m > 0.0 && m.is_finite())
        .map(|(t, m)| (*t, m.ln()))
        .unzip();
    let decay = stats::linear_fit(&fx, &fy, 3).ok();
    let bound = constants.map(|c| {
        let rate = p.linear().lambda_min() - c.k2 - c.beta_l * c.beta_l;
        let d0 = linalg::dist(&config.xi, &config.eta).powi(2);
        nodes
            .iter()
            .map(|&j| if j == 0 { d0 } else { (-rate * j as f64 * h).exp() * d0 })
            .collect()
    });

    Ok(CouplingReport {
        times,
        msq_diff: msq,
        stderr: (0..n_nodes).map(|n| sums.stderr(n)).collect(),
        decay,
        bound,
        samples,
        failures: sums.failures,
    })
}

#[derive(Debug, Clone)]
pub struct PeriodicityConfig {
    pub problem: SdeProblem,
    pub scheme: SchemeConfig,
    /// Pull-back depth in periods.
    pub depth_k: usize,
    pub window: (f64, f64),
    pub xi: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicityReport {
    /// Times `t` of the original segment.
    pub times: Vec<f64>,
    /// First-sample segment `X(t, omega)` on the window.
    pub original: Vec<f64>,
    /// First-sample segment `X(t + n tau, theta_{-n tau} omega)`.
    pub shifted: Vec<f64>,
    /// Per-sample root-mean-square of `shifted - original` over the window.
    pub rms: Vec<f64>,
    pub rms_mean: f64,
    pub rms_stderr: f64,
    pub samples: usize,
    pub failures: usize,
}

/// Compares the depth-`k` solution on the window with the solution driven
/// by the path shifted back `shift_count` periods, observed `shift_count`
/// periods later. For a random periodic solution the two coincide.
pub fn periodicity_check(config: &PeriodicityConfig, shift_count: usize, samples: usize) -> Result<PeriodicityReport> {
    let p = &config.problem;
    let h = config.scheme.h();
    let tau = p.period();
    check_period_alignment(p, h)?;
    check_initial(p, &config.xi)?;
    if config.depth_k == 0 || samples == 0 {
        return Err(Error::Config("depth and sample count must be positive".into()));
    }
    let (lo, hi) = config.window;
    if hi - lo < tau - 1e-9 * tau {
        return Err(Error::Config(format!(
            "window [{lo}, {hi}] is shorter than the period {tau}"
        )));
    }
    let start = -(config.depth_k as f64) * tau;
    let shift = shift_count as f64 * tau;
    let first = steps_between(start, lo, h, "window start relative to start time")?;
    let first_shifted = steps_between(start, lo + shift, h, "shifted window start")?;
    let count = steps_between(lo, hi, h, "window length")? + 1;
    let d = p.dim();

    let runs: Vec<Result<(Vec<f64>, Vec<f64>)>> = montecarlo::map_samples(samples, |i| {
        let grid = BrownianGrid::sample_stream(config.seed, i as u64, start - shift, hi + shift, h, p.noise_dim())?;
        let base = grid.view().window(start, hi)?;
        let shifted = grid.view().window(start, hi + shift)?.theta_shift(-shift)?;
        let s1 = record_nodes(p, &config.scheme, &base, &config.xi, first, count)?;
        let s2 = record_nodes(p, &config.scheme, &shifted, &config.xi, first_shifted, count)?;
        Ok((s1, s2))
    });

    let mut failures = 0;
    let mut rms = Vec::with_capacity(samples);
    let mut original = Vec::new();
    let mut shifted = Vec::new();
    for run in runs {
        match run {
            Ok((s1, s2)) => {
                let ms = s1.iter().zip(&s2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / count as f64;
                rms.push(ms.sqrt());
                if original.is_empty() {
                    original = s1.iter().step_by(d).copied().collect();
                    shifted = s2.iter().step_by(d).copied().collect();
                }
            }
            Err(Error::BlowUp { .. }) | Err(Error::Evaluation { .. }) => failures += 1,
            Err(e) => return Err(e),
        }
    }
    montecarlo::check_failures(failures, samples)?;
    let mut s = NodeSums::new(1);
    for r in &rms {
        s.add(&[*r]);
    }
    Ok(PeriodicityReport {
        times: (0..count).map(|n| lo + n as f64 * h).collect(),
        original,
        shifted,
        rms,
        rms_mean: s.mean(0),
        rms_stderr: s.stderr(0),
        samples,
        failures,
    })
}

#[derive(Debug, Clone)]
pub struct MomentConfig {
    pub problem: SdeProblem,
    pub scheme: SchemeConfig,
    pub t0: f64,
    pub xi: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    /// `sup_j` of the Monte Carlo estimate of `E|X_j|^2`.
    pub sup: f64,
    pub sup_node: usize,
    pub sup_stderr: f64,
    /// Whether the supremum was reached within the first half of the horizon.
    pub attained_early: bool,
    /// Thinned `(t, E|X_t|^2)` curve.
    pub curve: Vec<(f64, f64)>,
    pub samples: usize,
    pub failures: usize,
}

/// Running supremum of the second moment over `horizon` steps.
pub fn second_moment_watch(config: &MomentConfig, horizon: usize, samples: usize) -> Result<MomentReport> {
    let p = &config.problem;
    check_initial(p, &config.xi)?;
    if horizon == 0 || samples == 0 {
        return Err(Error::Config("horizon and sample count must be positive".into()));
    }
    let h = config.scheme.h();
    let t_end = config.t0 + horizon as f64 * h;
    let n_nodes = horizon + 1;
    let sums = montecarlo::batched(
        samples,
        8,
        || NodeSums::new(n_nodes),
        |i, acc| {
            let mut sq = Vec::with_capacity(n_nodes);
            let run = BrownianGrid::sample_stream(config.seed, i as u64, config.t0, t_end, h, p.noise_dim()).and_then(|grid| {
                schemes::simulate_with(p, &config.scheme, &grid.view(), &config.xi, |_, x| sq.push(linalg::norm_sq(x)))
            });
            match run {
                Ok(_) => acc.add(&sq),
                Err(_) => acc.failures += 1,
            }
        },
        |a, b| a.merge(b),
    );
    montecarlo::check_failures(sums.failures, samples)?;
    let (mut sup, mut sup_node) = (f64::NEG_INFINITY, 0);
    for n in 0..n_nodes {
        let m = sums.mean(n);
        if m > sup {
            sup = m;
            sup_node = n;
        }
    }
    let stride = n_nodes.div_ceil(1000).max(1);
    let curve = (0..n_nodes)
        .filter(|n| n % stride == 0 || *n == n_nodes - 1)
        .map(|n| (config.t0 + n as f64 * h, sums.mean(n)))
        .collect();
    Ok(MomentReport {
        sup,
        sup_node,
        sup_stderr: sums.stderr(sup_node),
        attained_early: sup_node <= horizon / 2,
        curve,
        samples,
        failures: sums.failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{registry, FnField, LinearPart};
    use crate::schemes::SchemeKind;

    fn decay(lambda: f64, tau: f64) -> SdeProblem {
        SdeProblem::new(
            "decay",
            LinearPart::scalar(-lambda).unwrap(),
            FnField::scalar(|_, _| 0.0, |_, _| 0.0).with_scalar_jacobian(|_, _| 0.0),
            tau,
            1.0,
        )
        .unwrap()
    }

    fn pullback(problem: SdeProblem, h: f64, k_list: Vec<usize>, window: (f64, f64), xi: f64) -> PullbackConfig {
        PullbackConfig {
            scheme: SchemeConfig::for_problem(SchemeKind::Pmm, h, &problem).unwrap(),
            problem,
            k_list,
            window,
            xi_list: vec![vec![xi]],
            seed: 11,
        }
    }

    #[test]
    fn noiseless_pullback_endpoints() {
        let cfg = pullback(decay(1.0, 1.0), 0.25, vec![1, 2, 3], (-1.0, 0.0), 1.5);
        let r = pullback_limit(&cfg, 3).unwrap();
        for (i, k) in [1, 2, 3].into_iter().enumerate() {
            let exact = 0.75f64.powi(4 * k) * 1.5;
            assert!((r.endpoints[i] - exact).abs() < 1e-14, "k={k}");
            assert_eq!(r.variance[i][4], 0.0);
        }
        assert_eq!(r.times, vec![-1.0, -0.75, -0.5, -0.25, 0.0]);
        assert!(r.cauchy[1].msq < r.cauchy[0].msq);
        assert_eq!(r.rps_sample.len(), 5);
    }

    #[test]
    fn duplicated_depth_has_zero_difference() {
        let cfg = pullback(registry::benchmark(), 0.01, vec![2, 2], (0.0, 2.0), 0.3);
        let r = pullback_limit(&cfg, 4).unwrap();
        assert_eq!(r.cauchy.len(), 1);
        assert_eq!(r.cauchy[0].msq, 0.0);
    }

    #[test]
    fn pullback_rejects_bad_configs() {
        let mut cfg = pullback(decay(1.0, 1.0), 0.3, vec![1], (0.0, 0.0), 1.0);
        assert!(pullback_limit(&cfg, 1).is_err());
        cfg = pullback(decay(1.0, 1.0), 0.25, vec![2, 1], (0.0, 0.0), 1.0);
        assert!(pullback_limit(&cfg, 1).is_err());
        cfg = pullback(decay(1.0, 1.0), 0.25, vec![1], (0.1, 0.5), 1.0);
        assert!(pullback_limit(&cfg, 1).is_err());
    }

    #[test]
    fn benchmark_cauchy_differences_shrink() {
        let cfg = pullback(registry::benchmark(), 0.01, vec![1, 2, 3, 4], (0.0, 2.0), 0.5);
        let r = pullback_limit(&cfg, 40).unwrap();
        assert_eq!(r.failures, 0);
        for w in r.cauchy.windows(2) {
            assert!(w[1].msq <= w[0].msq + 3.0 * (w[0].stderr + w[1].stderr), "{w:?}");
        }
        assert!(r.cauchy.iter().all(|c| c.msq >= 0.0));
    }

    fn coupling(problem: SdeProblem, h: f64, t0: f64, t_end: f64, xi: f64, eta: f64) -> CouplingConfig {
        CouplingConfig {
            scheme: SchemeConfig::for_problem(SchemeKind::Pmm, h, &problem).unwrap(),
            problem,
            t0,
            t_end,
            xi: vec![xi],
            eta: vec![eta],
            seed: 5,
        }
    }

    #[test]
    fn equal_starts_stay_together() {
        let cfg = coupling(registry::benchmark(), 0.01, -2.0, 0.0, 0.4, 0.4);
        let r = initial_condition_coupling(&cfg, 6, 10, None).unwrap();
        assert!(r.msq_diff.iter().all(|v| *v == 0.0));
        assert!(r.decay.is_none());
    }

    #[test]
    fn noiseless_coupling_closed_form() {
        let cfg = coupling(decay(1.0, 1.0), 0.1, 0.0, 2.0, 1.0, -0.5);
        let r = initial_condition_coupling(&cfg, 2, 1, Some(ContractionConstants { k2: 0.0, beta_l: 0.0 })).unwrap();
        assert_eq!(r.times.len(), 21);
        for (n, v) in r.msq_diff.iter().enumerate() {
            let exact = 0.9f64.powi(2 * n as i32) * 2.25;
            assert!((v - exact).abs() <= 1e-13 * exact.max(1.0), "n={n}");
        }
        let fit = r.decay.unwrap();
        assert!((fit.slope - 2.0 * 0.9f64.ln() / 0.1).abs() < 1e-9);
        let bound = r.bound.unwrap();
        assert!(r.msq_diff.iter().zip(&bound).all(|(v, b)| *v <= *b + 1e-12));
    }

    #[test]
    fn coupling_stride_keeps_last_node() {
        let cfg = coupling(decay(1.0, 1.0), 0.1, 0.0, 1.0, 1.0, 0.0);
        let r = initial_condition_coupling(&cfg, 2, 3, None).unwrap();
        assert_eq!(r.times.len(), 5);
        assert!((r.times[4] - 1.0).abs() < 1e-12);
    }

    fn periodicity(depth_k: usize, window: (f64, f64)) -> PeriodicityConfig {
        let problem = registry::benchmark();
        PeriodicityConfig {
            scheme: SchemeConfig::for_problem(SchemeKind::Pmm, 0.01, &problem).unwrap(),
            problem,
            depth_k,
            window,
            xi: vec![0.5],
            seed: 9,
        }
    }

    #[test]
    fn zero_shift_is_exact() {
        let r = periodicity_check(&periodicity(2, (0.0, 2.0)), 0, 3).unwrap();
        assert_eq!(r.rms_mean, 0.0);
        assert_eq!(r.original, r.shifted);
    }

    #[test]
    fn constant_fixed_point_is_periodic() {
        let problem = decay(1.0, 1.0);
        let cfg = PeriodicityConfig {
            scheme: SchemeConfig::for_problem(SchemeKind::Pmm, 0.25, &problem).unwrap(),
            problem,
            depth_k: 3,
            window: (0.0, 1.0),
            xi: vec![0.0],
            seed: 1,
        };
        let r = periodicity_check(&cfg, 2, 2).unwrap();
        assert_eq!(r.rms_mean, 0.0);
    }

    #[test]
    fn shifted_segments_agree_and_deepen() {
        let shallow = periodicity_check(&periodicity(5, (2.0, 4.0)), 1, 8).unwrap();
        let deep = periodicity_check(&periodicity(10, (2.0, 4.0)), 1, 8).unwrap();
        assert!(shallow.rms_mean < 1e-3, "{}", shallow.rms_mean);
        // both sit at rounding level once the pull-back has converged
        assert!(deep.rms_mean <= shallow.rms_mean + 3.0 * (shallow.rms_stderr + deep.rms_stderr) + 1e-12);
        assert_eq!(shallow.times.len(), 201);
    }

    #[test]
    fn periodicity_rejects_short_window_and_misalignment() {
        assert!(periodicity_check(&periodicity(2, (0.0, 1.0)), 1, 1).is_err());
        let mut cfg = periodicity(2, (0.0, 2.0));
        cfg.scheme = SchemeConfig::for_problem(SchemeKind::Pmm, 0.3, &cfg.problem).unwrap();
        assert!(periodicity_check(&cfg, 1, 1).is_err());
    }

    #[test]
    fn moment_of_frozen_state() {
        let problem = SdeProblem::new(
            "frozen",
            LinearPart::scalar(-1e-300).unwrap(),
            FnField::scalar(|_, _| 0.0, |_, _| 0.0).with_scalar_jacobian(|_, _| 0.0),
            1.0,
            1.0,
        )
        .unwrap();
        let cfg = MomentConfig {
            scheme: SchemeConfig::for_problem(SchemeKind::Pmm, 0.1, &problem).unwrap(),
            problem,
            t0: 0.0,
            xi: vec![0.7],
            seed: 0,
        };
        let r = second_moment_watch(&cfg, 50, 2).unwrap();
        assert_eq!(r.sup, 0.7 * 0.7);
        assert!(r.attained_early);
    }

    #[test]
    fn ou_second_moment() {
        let problem = registry::periodic_ou(1.0, 1.0, 0.0).unwrap();
        let cfg = MomentConfig {
            scheme: SchemeConfig::for_problem(SchemeKind::Pmm, 0.01, &problem).unwrap(),
            problem,
            t0: 0.0,
            xi: vec![0.0],
            seed: 2,
        };
        let r = second_moment_watch(&cfg, 1000, 2000).unwrap();
        // stationary variance of the Euler chain is sigma^2 / (2 - h)
        let target = 1.0 / (2.0 - 0.01);
        let mut tail = r.curve.iter().rev().take(100).map(|c| c.1);
        assert!(tail.all(|v| (v - target).abs() < 0.1), "{:?}", &r.curve[r.curve.len() - 3..]);
        assert!((r.sup - target).abs() < 3.0 * r.sup_stderr + 0.05, "{} {}", r.sup, r.sup_stderr);
        assert_eq!(r.failures, 0);
    }
}
