//! Ordinary least squares for log-log and log-linear rate fits.

use crate::error::{Error, Result};

/// Two-sided 97.5% quantiles of Student's t for 1..=30 degrees of freedom.
const T975: [f64; 30] = [
    12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179, 2.160,
    2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064, 2.060, 2.056,
    2.052, 2.048, 2.045, 2.042,
];

pub fn t_quantile_975(df: usize) -> f64 {
    match df {
        0 => f64::INFINITY,
        1..=30 => T975[df - 1],
        _ => 1.96,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope from the residuals; zero for an exact fit.
    pub slope_stderr: f64,
    /// Half-width of the 95% confidence band on the slope.
    pub ci95: f64,
    pub points: usize,
}

/// Least-squares line through `(xs, ys)`. Needs at least `min_points`
/// points and two distinct abscissae.
pub fn linear_fit(xs: &[f64], ys: &[f64], min_points: usize) -> Result<LinearFit> {
    let n = xs.len();
    if n != ys.len() {
        return Err(Error::Fit("abscissa and ordinate lengths differ".into()));
    }
    if n < min_points.max(2) {
        return Err(Error::Fit(format!(
            "need at least {} points, got {n}",
            min_points.max(2)
        )));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all abscissae coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let (slope_stderr, ci95) = if n > 2 {
        let rss: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum();
        let se = (rss / (nf - 2.0) / sxx).sqrt();
        (se, t_quantile_975(n - 2) * se)
    } else {
        (0.0, f64::INFINITY)
    };
    Ok(LinearFit {
        slope,
        intercept,
        slope_stderr,
        ci95,
        points: n,
    })
}
