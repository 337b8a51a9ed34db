//! Sampling-based validators for the structural assumptions on a problem:
//! commutativity of the noise, time periodicity, and the coercivity and
//! monotonicity constants. All estimates are suprema over the supplied
//! sample set, so growing the set can only raise them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SdeProblem;
use crate::error::{Error, Result};
use crate::linalg;

/// A state together with the time at which coefficients are evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePoint {
    pub t: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointPair {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Random-plus-lattice sampler over the ball of a given radius.
///
/// Even indices are uniform random points in the ball, odd indices walk a
/// Halton sequence, and index 0 is the origin. The sequence for a given
/// seed is fixed, so a smaller request is always a prefix of a larger one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridSampler {
    pub radius: f64,
    pub seed: u64,
}

const HALTON_BASES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % b) as f64;
        i /= b;
        f *= inv;
    }
    r
}

impl Default for HybridSampler {
    fn default() -> Self {
        Self {
            radius: 10.0,
            seed: 0,
        }
    }
}

impl HybridSampler {
    pub fn new(radius: f64, seed: u64) -> Self {
        Self { radius, seed }
    }

    fn random_in_ball(&self, rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        let mut dir: Vec<f64> = (0..d)
            .map(|_| {
                let u1: f64 = 1.0 - rng.random::<f64>();
                let u2: f64 = rng.random();
                (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            })
            .collect();
        let n = linalg::norm(&dir);
        if n == 0.0 {
            dir[0] = 1.0;
        } else {
            dir.iter_mut().for_each(|v| *v /= n);
        }
        let r = self.radius * rng.random::<f64>().powf(1.0 / d as f64);
        dir.into_iter().map(|v| v * r).collect()
    }

    fn lattice_point(&self, i: u64, d: usize) -> Option<Vec<f64>> {
        if d + 1 > HALTON_BASES.len() {
            return None;
        }
        let mut x: Vec<f64> = (0..d)
            .map(|k| self.radius * (2.0 * radical_inverse(i, HALTON_BASES[k + 1]) - 1.0))
            .collect();
        let n = linalg::norm(&x);
        if n > self.radius {
            x.iter_mut().for_each(|v| *v *= self.radius / n);
        }
        Some(x)
    }

    /// `n` evaluation points for a problem of dimension `d` and period `period`.
    pub fn points(&self, d: usize, period: f64, n: usize) -> Vec<SamplePoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let point = if i == 0 {
                SamplePoint {
                    t: 0.0,
                    x: vec![0.0; d],
                }
            } else if i % 2 == 1 {
                let j = (i / 2 + 1) as u64;
                match self.lattice_point(j, d) {
                    Some(x) => SamplePoint {
                        t: period * radical_inverse(j, HALTON_BASES[0]),
                        x,
                    },
                    None => SamplePoint {
                        t: period * rng.random::<f64>(),
                        x: self.random_in_ball(&mut rng, d),
                    },
                }
            } else {
                SamplePoint {
                    t: period * rng.random::<f64>(),
                    x: self.random_in_ball(&mut rng, d),
                }
            };
            out.push(point);
        }
        out
    }

    /// `n` pairs: even indices are independent points, odd indices put `y`
    /// within `1e-3 * radius` of `x` to probe local slopes.
    pub fn pairs(&self, d: usize, period: f64, n: usize) -> Vec<PointPair> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let t = period * rng.random::<f64>();
            let x = self.random_in_ball(&mut rng, d);
            let y = if i % 2 == 0 {
                self.random_in_ball(&mut rng, d)
            } else {
                let delta = HybridSampler::new(1e-3 * self.radius, 0).random_in_ball(&mut rng, d);
                x.iter().zip(&delta).map(|(a, b)| a + b).collect()
            };
            out.push(PointPair { t, x, y });
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommutativityReport {
    /// Largest `|L^{r1} g_{k,r2} - L^{r2} g_{k,r1}|` over all samples.
    pub max_residual: f64,
    /// Largest residual divided by `1 + |x|^gamma`.
    pub max_scaled_residual: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicityReport {
    /// Largest `|c(t + period, x) - c(t, x)| / (1 + |c(t, x)|)` over drift and
    /// every diffusion column.
    pub max_relative_residual: f64,
    pub passed: bool,
}

/// Result of a coercivity or monotonicity constant estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct DissipativityEstimate {
    /// Coercivity constant, when estimated.
    pub k1_hat: Option<f64>,
    /// Monotonicity constant, when estimated.
    pub k2_hat: Option<f64>,
    pub q: f64,
    pub p_star: f64,
    /// Smallest eigenvalue of `-A`.
    pub lambda1: f64,
    /// Samples that entered the supremum.
    pub samples: usize,
    /// Samples skipped as degenerate.
    pub skipped: usize,
    /// Largest state norm among the samples.
    pub radius: f64,
}

impl DissipativityEstimate {
    /// `lambda1 - K2_hat`
    pub fn margin(&self) -> Option<f64> {
        self.k2_hat.map(|k2| self.lambda1 - k2)
    }

    /// Whether `K1_hat < lambda1`.
    pub fn coercive_below_gap(&self) -> Option<bool> {
        self.k1_hat.map(|k1| k1 < self.lambda1)
    }
}

impl SdeProblem {
    pub fn check_commutativity(&self, samples: &[SamplePoint], tol: f64) -> Result<CommutativityReport> {
        if samples.is_empty() {
            return Err(Error::Config("commutativity check needs at least one sample".into()));
        }
        let m = self.noise_dim();
        let mut max_residual = 0.0f64;
        let mut max_scaled = 0.0f64;
        let mut passed = true;
        for s in samples {
            let bound = 1.0 + linalg::norm(&s.x).powf(self.gamma());
            for r1 in 0..m {
                for r2 in (r1 + 1)..m {
                    let a = self.eval_levy_coefficient(r1, r2, s.t, &s.x)?;
                    let b = self.eval_levy_coefficient(r2, r1, s.t, &s.x)?;
                    for (u, v) in a.iter().zip(&b) {
                        let res = (u - v).abs();
                        max_residual = max_residual.max(res);
                        max_scaled = max_scaled.max(res / bound);
                        if res > tol * bound {
                            passed = false;
                        }
                    }
                }
            }
        }
        Ok(CommutativityReport {
            max_residual,
            max_scaled_residual: max_scaled,
            passed,
        })
    }

    /// Compares every coefficient at `t` and `t + period`; passes when the
    /// relative residual stays below `1e-10`.
    pub fn check_periodicity(&self, samples: &[SamplePoint]) -> Result<PeriodicityReport> {
        let d = self.dim();
        let mut a = vec![0.0; d];
        let mut b = vec![0.0; d];
        let mut worst = 0.0f64;
        for s in samples {
            let tp = s.t + self.period();
            self.eval_drift(s.t, &s.x, &mut a)?;
            self.eval_drift(tp, &s.x, &mut b)?;
            worst = worst.max(linalg::dist(&a, &b) / (1.0 + linalg::norm(&a)));
            for r in 0..self.noise_dim() {
                self.eval_diffusion(s.t, &s.x, r, &mut a)?;
                self.eval_diffusion(tp, &s.x, r, &mut b)?;
                worst = worst.max(linalg::dist(&a, &b) / (1.0 + linalg::norm(&a)));
            }
        }
        Ok(PeriodicityReport {
            max_relative_residual: worst,
            passed: worst <= 1e-10,
        })
    }

    /// Empirical supremum of
    /// `(<x - y, f(x) - f(y)> + (2q - 1)/2 |g(x) - g(y)|_F^2) / |x - y|^2`.
    pub fn estimate_monotonicity_constant(&self, q: f64, pairs: &[PointPair]) -> Result<DissipativityEstimate> {
        if !(q >= 1.0) {
            return Err(Error::Config(format!("q must be >= 1, got {q}")));
        }
        let d = self.dim();
        let (mut fx, mut fy) = (vec![0.0; d], vec![0.0; d]);
        let (mut gx, mut gy) = (vec![0.0; d], vec![0.0; d]);
        let mut diff = vec![0.0; d];
        let mut sup = f64::NEG_INFINITY;
        let (mut used, mut skipped) = (0usize, 0usize);
        let mut radius = 0.0f64;

        for p in pairs {
            for k in 0..d {
                diff[k] = p.x[k] - p.y[k];
            }
            let dist_sq = linalg::norm_sq(&diff);
            if dist_sq.sqrt() < 1e-12 {
                skipped += 1;
                continue;
            }
            self.eval_drift(p.t, &p.x, &mut fx)?;
            self.eval_drift(p.t, &p.y, &mut fy)?;
            let mut num: f64 = (0..d).map(|k| diff[k] * (fx[k] - fy[k])).sum();
            let mut g_sq = 0.0;
            for r in 0..self.noise_dim() {
                self.eval_diffusion(p.t, &p.x, r, &mut gx)?;
                self.eval_diffusion(p.t, &p.y, r, &mut gy)?;
                g_sq += linalg::dist(&gx, &gy).powi(2);
            }
            num += 0.5 * (2.0 * q - 1.0) * g_sq;
            sup = sup.max(num / dist_sq);
            used += 1;
            radius = radius.max(linalg::norm(&p.x)).max(linalg::norm(&p.y));
        }
        if used == 0 {
            return Err(Error::Estimation("all sampled pairs were degenerate".into()));
        }
        Ok(DissipativityEstimate {
            k1_hat: None,
            k2_hat: Some(sup),
            q,
            p_star: self.p_star(),
            lambda1: self.linear().lambda_min(),
            samples: used,
            skipped,
            radius,
        })
    }

    /// Empirical supremum of
    /// `(<x, f(x)> + (2 p_star - 1)/2 |g(x)|_F^2) / (1 + |x|^2)`.
    pub fn estimate_coercivity_constant(&self, p_star: f64, points: &[SamplePoint]) -> Result<DissipativityEstimate> {
        if !(p_star >= 1.0) {
            return Err(Error::Config(format!("p_star must be >= 1, got {p_star}")));
        }
        if points.is_empty() {
            return Err(Error::Estimation("no sample points".into()));
        }
        let d = self.dim();
        let mut f = vec![0.0; d];
        let mut g = vec![0.0; d];
        let mut sup = f64::NEG_INFINITY;
        let mut radius = 0.0f64;
        for p in points {
            self.eval_drift(p.t, &p.x, &mut f)?;
            let mut num = linalg::dot(&p.x, &f);
            let mut g_sq = 0.0;
            for r in 0..self.noise_dim() {
                self.eval_diffusion(p.t, &p.x, r, &mut g)?;
                g_sq += linalg::norm_sq(&g);
            }
            num += 0.5 * (2.0 * p_star - 1.0) * g_sq;
            let nx_sq = linalg::norm_sq(&p.x);
            sup = sup.max(num / (1.0 + nx_sq));
            radius = radius.max(nx_sq.sqrt());
        }
        Ok(DissipativityEstimate {
            k1_hat: Some(sup),
            k2_hat: None,
            q: 1.0,
            p_star,
            lambda1: self.linear().lambda_min(),
            samples: points.len(),
            skipped: 0,
            radius,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{registry, FnField, LinearPart};

    fn scalar(field: FnField) -> SdeProblem {
        SdeProblem::new("t", LinearPart::scalar(-1.0).unwrap(), field, 1.0, 1.0).unwrap()
    }

    fn pt(t: f64, x: f64) -> SamplePoint {
        SamplePoint { t, x: vec![x] }
    }

    #[test]
    fn sampler_is_prefix_stable() {
        let s = HybridSampler::new(10.0, 7);
        let short = s.points(2, 2.0, 50);
        let long = s.points(2, 2.0, 200);
        assert_eq!(short[..], long[..50]);
        let sp = s.pairs(3, 1.0, 40);
        let lp = s.pairs(3, 1.0, 90);
        assert_eq!(sp[..], lp[..40]);
        assert!(long.iter().all(|p| linalg::norm(&p.x) <= 10.0 + 1e-12));
        assert!(long.iter().all(|p| (0.0..2.0).contains(&p.t)));
    }

    #[test]
    fn single_noise_column_commutes() {
        let p = registry::benchmark();
        let pts = HybridSampler::default().points(1, 2.0, 100);
        let rep = p.check_commutativity(&pts, 1e-12).unwrap();
        assert_eq!(rep.max_residual, 0.0);
        assert!(rep.passed);
    }

    #[test]
    fn diagonal_noise_commutes() {
        let field = FnField::new(
            2,
            2,
            |_, _, out| out.fill(0.0),
            |_, x, r, out| {
                out.fill(0.0);
                out[r] = x[r].sin() + x[r] * x[r];
            },
        )
        .with_jacobian(|_, x, r, out| {
            out.fill(0.0);
            out[r * 2 + r] = x[r].cos() + 2.0 * x[r];
        });
        let p = SdeProblem::new("diag", LinearPart::diagonal(&[-1.0, -2.0]).unwrap(), field, 1.0, 2.0).unwrap();
        let pts = HybridSampler::new(5.0, 3).points(2, 1.0, 200);
        let rep = p.check_commutativity(&pts, 1e-12).unwrap();
        assert!(rep.passed);
        assert_eq!(rep.max_residual, 0.0);
    }

    #[test]
    fn non_commuting_pair_fails() {
        let field = FnField::new(
            1,
            2,
            |_, _, out| out[0] = 0.0,
            |_, x, r, out| out[0] = if r == 0 { x[0] } else { x[0] * x[0] },
        )
        .with_jacobian(|_, x, r, out| out[0] = if r == 0 { 1.0 } else { 2.0 * x[0] });
        let p = SdeProblem::new("nc", LinearPart::scalar(-1.0).unwrap(), field, 1.0, 1.0).unwrap();
        let rep = p.check_commutativity(&[pt(0.0, 1.0)], 1e-6).unwrap();
        assert!(!rep.passed);
        assert!((rep.max_residual - 1.0).abs() < 1e-12);
        assert!(p.check_commutativity(&[], 1e-6).is_err());
    }

    #[test]
    fn benchmark_is_periodic() {
        let p = registry::benchmark();
        let pts = HybridSampler::default().points(1, 2.0, 1000);
        let rep = p.check_periodicity(&pts).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!(rep.max_relative_residual < 1e-13);
    }

    #[test]
    fn monotonicity_of_linear_decay() {
        let p = scalar(FnField::scalar(|_, x| -x, |_, _| 0.0));
        let pairs = HybridSampler::default().pairs(1, 1.0, 1000);
        let est = p.estimate_monotonicity_constant(1.0, &pairs).unwrap();
        assert!((est.k2_hat.unwrap() + 1.0).abs() < 1e-9);
        assert!((est.margin().unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn monotonicity_of_zero_field() {
        let p = scalar(FnField::scalar(|_, _| 0.0, |_, _| 0.0));
        let pairs = HybridSampler::default().pairs(1, 1.0, 100);
        assert_eq!(p.estimate_monotonicity_constant(1.0, &pairs).unwrap().k2_hat, Some(0.0));
    }

    #[test]
    fn monotonicity_all_degenerate() {
        let p = scalar(FnField::scalar(|_, x| -x, |_, _| 0.0));
        let pairs = vec![PointPair { t: 0.0, x: vec![1.0], y: vec![1.0] }];
        assert!(matches!(
            p.estimate_monotonicity_constant(1.0, &pairs),
            Err(Error::Estimation(_))
        ));
        assert!(p.estimate_monotonicity_constant(0.5, &pairs).is_err());
    }

    #[test]
    fn benchmark_monotonicity_below_one() {
        let p = registry::benchmark();
        let pairs = HybridSampler::new(10.0, 11).pairs(1, 2.0, 20_000);
        let k2 = p.estimate_monotonicity_constant(1.0, &pairs).unwrap().k2_hat.unwrap();
        assert!(k2 <= 1.0 + 1e-6, "{k2}");
        // near pairs around the origin push the supremum close to the bound
        assert!(k2 > 0.9, "{k2}");
    }

    #[test]
    fn estimates_grow_with_nested_samples() {
        let p = registry::benchmark();
        let s = HybridSampler::new(10.0, 5);
        let mut last = f64::NEG_INFINITY;
        for n in [10, 100, 1000, 5000] {
            let k2 = p.estimate_monotonicity_constant(1.0, &s.pairs(1, 2.0, n)).unwrap().k2_hat.unwrap();
            assert!(k2 >= last);
            last = k2;
        }
        let mut last = f64::NEG_INFINITY;
        for n in [1, 10, 100, 1000] {
            let k1 = p.estimate_coercivity_constant(1.0, &s.points(1, 2.0, n)).unwrap().k1_hat.unwrap();
            assert!(k1 >= last);
            last = k1;
        }
    }

    #[test]
    fn coercivity_examples() {
        let decay = scalar(FnField::scalar(|_, x| -x, |_, _| 0.0));
        let pts = HybridSampler::default().points(1, 1.0, 500);
        assert!(decay.estimate_coercivity_constant(1.0, &pts).unwrap().k1_hat.unwrap() <= 0.0);

        let c = 1.25;
        let constant = scalar(FnField::scalar(|_, _| 0.0, move |_, _| c));
        let est = constant.estimate_coercivity_constant(1.0, &pts).unwrap();
        assert!((est.k1_hat.unwrap() - c * c / 2.0).abs() < 1e-15);
        // 1.25^2 / 2 = 0.78125 sits below lambda1 = 1
        assert_eq!(est.coercive_below_gap(), Some(true));
    }

    #[test]
    fn benchmark_coercivity_matches_grid_maximum() {
        // brute-force oracle over x in [-50, 50], t in [0, 2)
        let p = registry::benchmark();
        let mut oracle = f64::NEG_INFINITY;
        for i in 0..=20_000 {
            let x = -50.0 + 100.0 * i as f64 / 20_000.0;
            for j in 0..40 {
                let t = 2.0 * j as f64 / 40.0;
                let c = (std::f64::consts::PI * t).cos();
                let f = x - x * x * x + c;
                let g = 1.0 + x * x + c;
                oracle = oracle.max((x * f + 0.5 * g * g) / (1.0 + x * x));
            }
        }
        assert!(oracle.is_finite());
        let pts = HybridSampler::new(50.0, 1).points(1, 2.0, 100_000);
        let k1 = p.estimate_coercivity_constant(1.0, &pts).unwrap().k1_hat.unwrap();
        assert!(k1.is_finite());
        assert!((k1 - oracle).abs() < 1e-2 * oracle.abs().max(1.0), "{k1} vs {oracle}");
    }
}
