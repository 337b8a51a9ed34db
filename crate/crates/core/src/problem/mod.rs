//! The semi-linear SDE problem class
//!
//! ```text
//! dX = (A X + f(t, X)) dt + sum_r g_r(t, X) dW_r
//! ```
//!
//! with `A` symmetric negative definite and `f`, `g_r` periodic in time.
//! Coefficients are supplied through [`CoefficientField`]; the linear part
//! is held separately in [`LinearPart`] together with its spectrum.

mod estimate;
mod exact;
pub mod registry;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg;

pub use estimate::{
    CommutativityReport, DissipativityEstimate, HybridSampler, PeriodicityReport, PointPair,
    SamplePoint,
};
pub use exact::exact_linear_solution;

/// Drift and diffusion coefficients of the nonlinear part.
///
/// Noise columns are indexed `0..noise_dim()`. Implementations write into
/// caller-provided buffers so the time-stepping loop never allocates.
pub trait CoefficientField: Send + Sync {
    fn dim(&self) -> usize;

    fn noise_dim(&self) -> usize;

    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]);

    /// Column `r` of the diffusion matrix.
    fn diffusion(&self, t: f64, x: &[f64], r: usize, out: &mut [f64]);

    /// Row-major `d x d` Jacobian of column `r` with respect to `x`.
    ///
    /// The default is a central finite difference; override it when the
    /// derivative is known in closed form.
    fn diffusion_jacobian(&self, t: f64, x: &[f64], r: usize, out: &mut [f64]) {
        fd_diffusion_jacobian(self, t, x, r, out);
    }
}

/// Central finite-difference Jacobian of diffusion column `r`, with step
/// `1e-6 * (1 + |x|)`.
pub fn fd_diffusion_jacobian<F: CoefficientField + ?Sized>(
    field: &F,
    t: f64,
    x: &[f64],
    r: usize,
    out: &mut [f64],
) {
    let d = x.len();
    let step = 1e-6 * (1.0 + linalg::norm(x));
    let mut xp = x.to_vec();
    let mut plus = vec![0.0; d];
    let mut minus = vec![0.0; d];
    for k in 0..d {
        xp[k] = x[k] + step;
        field.diffusion(t, &xp, r, &mut plus);
        xp[k] = x[k] - step;
        field.diffusion(t, &xp, r, &mut minus);
        xp[k] = x[k];
        for i in 0..d {
            out[i * d + k] = (plus[i] - minus[i]) / (2.0 * step);
        }
    }
}

type DriftFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;
type DiffusionFn = dyn Fn(f64, &[f64], usize, &mut [f64]) + Send + Sync;

/// Closure-backed coefficient field, the plugin point for user problems.
pub struct FnField {
    dim: usize,
    noise_dim: usize,
    drift: Box<DriftFn>,
    diffusion: Box<DiffusionFn>,
    jacobian: Option<Box<DiffusionFn>>,
}

impl FnField {
    pub fn new(
        dim: usize,
        noise_dim: usize,
        drift: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
        diffusion: impl Fn(f64, &[f64], usize, &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            noise_dim,
            drift: Box::new(drift),
            diffusion: Box::new(diffusion),
            jacobian: None,
        }
    }

    /// Supplies the analytic Jacobian of each diffusion column.
    pub fn with_jacobian(
        mut self,
        jacobian: impl Fn(f64, &[f64], usize, &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.jacobian = Some(Box::new(jacobian));
        self
    }

    /// One-dimensional field with a single noise column.
    pub fn scalar(
        drift: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        diffusion: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self::new(
            1,
            1,
            move |t, x, out| out[0] = drift(t, x[0]),
            move |t, x, _, out| out[0] = diffusion(t, x[0]),
        )
    }

    /// Scalar analytic derivative of the single diffusion column.
    pub fn with_scalar_jacobian(
        self,
        jacobian: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.with_jacobian(move |t, x, _, out| out[0] = jacobian(t, x[0]))
    }
}

impl CoefficientField for FnField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.drift)(t, x, out)
    }

    fn diffusion(&self, t: f64, x: &[f64], r: usize, out: &mut [f64]) {
        (self.diffusion)(t, x, r, out)
    }

    fn diffusion_jacobian(&self, t: f64, x: &[f64], r: usize, out: &mut [f64]) {
        match &self.jacobian {
            Some(jac) => jac(t, x, r, out),
            None => fd_diffusion_jacobian(self, t, x, r, out),
        }
    }
}

/// Symmetric negative definite matrix `A` with the spectrum of `-A`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPart {
    dim: usize,
    matrix: Vec<f64>,
    eigenvalues: Vec<f64>,
    eigenvectors: Vec<Vec<f64>>,
}

impl LinearPart {
    /// Builds the linear part from a row-major `d x d` matrix.
    pub fn new(dim: usize, matrix: Vec<f64>) -> Result<Self> {
        if dim == 0 || matrix.len() != dim * dim {
            return Err(Error::Config(format!(
                "linear part needs a {dim}x{dim} matrix, got {} entries",
                matrix.len()
            )));
        }
        if !linalg::all_finite(&matrix) {
            return Err(Error::Config("linear part has non-finite entries".into()));
        }
        let scale = matrix.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        for i in 0..dim {
            for j in 0..i {
                let (a, b) = (matrix[i * dim + j], matrix[j * dim + i]);
                if (a - b).abs() > 1e-12 * scale {
                    return Err(Error::Config(format!(
                        "linear part is not symmetric: A[{i}][{j}] = {a}, A[{j}][{i}] = {b}"
                    )));
                }
            }
        }

        let neg = DMatrix::from_row_slice(dim, dim, &matrix).map(|v| -v);
        let eig = SymmetricEigen::new(neg);
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let eigenvectors: Vec<Vec<f64>> = order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
            .collect();

        if eigenvalues[0] <= 0.0 {
            return Err(Error::Config(format!(
                "linear part is not negative definite: smallest eigenvalue of -A is {}",
                eigenvalues[0]
            )));
        }
        let mut image = vec![0.0; dim];
        for (lambda, e) in eigenvalues.iter().zip(&eigenvectors) {
            linalg::mat_vec(&matrix, e, &mut image);
            let resid: f64 = image
                .iter()
                .zip(e)
                .map(|(ae, ei)| (ae + lambda * ei).powi(2))
                .sum::<f64>()
                .sqrt();
            if resid > 1e-10 * lambda {
                return Err(Error::Config(format!(
                    "eigen-decomposition residual {resid} too large for eigenvalue {lambda}"
                )));
            }
        }

        Ok(Self {
            dim,
            matrix,
            eigenvalues,
            eigenvectors,
        })
    }

    /// `A = a` in one dimension.
    pub fn scalar(a: f64) -> Result<Self> {
        Self::new(1, vec![a])
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        let d = diag.len();
        let mut m = vec![0.0; d * d];
        for (i, v) in diag.iter().enumerate() {
            m[i * d + i] = *v;
        }
        Self::new(d, m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    /// Eigenvalues of `-A`, ascending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &[Vec<f64>] {
        &self.eigenvectors
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[self.dim - 1]
    }

    /// `out = A x`
    #[inline]
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        linalg::mat_vec(&self.matrix, x, out);
    }
}

/// A complete problem: linear part, nonlinear coefficients and the
/// structural constants the schemes and validators need.
#[derive(Clone)]
pub struct SdeProblem {
    label: String,
    linear: LinearPart,
    coeffs: Arc<dyn CoefficientField>,
    period: f64,
    gamma: f64,
    p_star: f64,
    commutative: bool,
}

impl fmt::Debug for SdeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SdeProblem")
            .field("label", &self.label)
            .field("dim", &self.dim())
            .field("noise_dim", &self.noise_dim())
            .field("period", &self.period)
            .field("gamma", &self.gamma)
            .field("p_star", &self.p_star)
            .field("commutative", &self.commutative)
            .finish()
    }
}

impl SdeProblem {
    /// Creates a problem with `p_star = 1` and the commutative flag set
    /// for a single noise column.
    pub fn new(
        label: impl Into<String>,
        linear: LinearPart,
        coeffs: impl CoefficientField + 'static,
        period: f64,
        gamma: f64,
    ) -> Result<Self> {
        let coeffs: Arc<dyn CoefficientField> = Arc::new(coeffs);
        if coeffs.dim() != linear.dim() {
            return Err(Error::Config(format!(
                "coefficient dimension {} does not match linear part dimension {}",
                coeffs.dim(),
                linear.dim()
            )));
        }
        if coeffs.noise_dim() == 0 {
            return Err(Error::Config("noise dimension must be positive".into()));
        }
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::Config(format!("period must be positive, got {period}")));
        }
        if !(gamma >= 1.0 && gamma.is_finite()) {
            return Err(Error::Config(format!("growth exponent must be >= 1, got {gamma}")));
        }
        let commutative = coeffs.noise_dim() == 1;
        Ok(Self {
            label: label.into(),
            linear,
            coeffs,
            period,
            gamma,
            p_star: 1.0,
            commutative,
        })
    }

    pub fn with_p_star(mut self, p_star: f64) -> Result<Self> {
        if !(p_star >= 1.0) {
            return Err(Error::Config(format!("p_star must be >= 1, got {p_star}")));
        }
        self.p_star = p_star;
        Ok(self)
    }

    /// Declares the noise commutative. Callers should back this with
    /// [`SdeProblem::check_commutativity`].
    pub fn with_commutative(mut self, commutative: bool) -> Self {
        self.commutative = commutative;
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn linear(&self) -> &LinearPart {
        &self.linear
    }

    pub fn coeffs(&self) -> &dyn CoefficientField {
        self.coeffs.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.linear.dim()
    }

    pub fn noise_dim(&self) -> usize {
        self.coeffs.noise_dim()
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn p_star(&self) -> f64 {
        self.p_star
    }

    pub fn is_commutative(&self) -> bool {
        self.commutative
    }

    /// Reduces `t` into `[0, period)`.
    #[inline]
    pub fn reduce_time(&self, t: f64) -> f64 {
        let r = t.rem_euclid(self.period);
        // rem_euclid can round up to exactly `period` for tiny negative t
        if r >= self.period {
            0.0
        } else {
            r
        }
    }

    /// `L^{r1} g_{r2}(t, x) = (d g_{r2} / dx)(t, x) g_{r1}(t, x)`.
    pub fn eval_levy_coefficient(&self, r1: usize, r2: usize, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let (d, m) = (self.dim(), self.noise_dim());
        if r1 >= m || r2 >= m {
            return Err(Error::Config(format!(
                "noise index out of range: ({r1}, {r2}) with m = {m}"
            )));
        }
        let mut col = vec![0.0; d];
        let mut jac = vec![0.0; d * d];
        let mut out = vec![0.0; d];
        self.coeffs.diffusion(t, x, r1, &mut col);
        self.coeffs.diffusion_jacobian(t, x, r2, &mut jac);
        linalg::mat_vec(&jac, &col, &mut out);
        if !linalg::all_finite(&out) {
            return Err(Error::Evaluation { t, x: x.to_vec() });
        }
        Ok(out)
    }

    pub(crate) fn eval_drift(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.coeffs.drift(t, x, out);
        if linalg::all_finite(out) {
            Ok(())
        } else {
            Err(Error::Evaluation { t, x: x.to_vec() })
        }
    }

    pub(crate) fn eval_diffusion(&self, t: f64, x: &[f64], r: usize, out: &mut [f64]) -> Result<()> {
        self.coeffs.diffusion(t, x, r, out);
        if linalg::all_finite(out) {
            Ok(())
        } else {
            Err(Error::Evaluation { t, x: x.to_vec() })
        }
    }
}
