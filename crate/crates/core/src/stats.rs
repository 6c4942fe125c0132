//! Small statistical helpers shared by the estimators and the test suites:
//! sample moments, Kolmogorov-Smirnov distances, Wilson score intervals and
//! weighted least-squares lines.

use crate::error::{Error, Result};

/// Sample mean and standard error of the mean.
pub fn mean_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    assert!(n >= 2.0, "need at least two samples");
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Two-sided Kolmogorov-Smirnov statistic of `samples` against the CDF `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &mut [f64], cdf: F) -> f64 {
    let n = samples.len();
    assert!(n > 0);
    samples.sort_by(|a, b| a.total_cmp(b));
    let mut d = 0.0f64;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        let hi = (i + 1) as f64 / n as f64 - f;
        let lo = f - i as f64 / n as f64;
        d = d.max(hi).max(lo);
    }
    d
}

/// Wilson score interval for a binomial proportion at ~95% (z = 1.96).
///
/// Returns (center, half_width); the interval is `center ± half_width`.
pub fn wilson_interval(successes: u64, n: u64) -> (f64, f64) {
    assert!(n > 0);
    let z = 1.959963984540054_f64;
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    (center, half)
}

/// Weighted least-squares line `y = a + b x`.
#[derive(Debug, Clone, Copy)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub slope_stderr: f64,
    /// Weighted residual sum of squares.
    pub rss: f64,
    pub n: usize,
}

/// Fit `y = a + b x` minimizing sum of `w_i (y_i - a - b x_i)^2`.
pub fn weighted_line_fit(x: &[f64], y: &[f64], w: &[f64]) -> Result<LineFit> {
    let n = x.len();
    if n < 3 || y.len() != n || w.len() != n {
        return Err(Error::InsufficientData(format!(
            "weighted fit needs >= 3 matched points, got {n}"
        )));
    }
    let sw: f64 = w.iter().sum();
    if !(sw > 0.0) {
        return Err(Error::InvalidParam("weights must have positive sum".into()));
    }
    let xbar = x.iter().zip(w).map(|(xi, wi)| wi * xi).sum::<f64>() / sw;
    let ybar = y.iter().zip(w).map(|(yi, wi)| wi * yi).sum::<f64>() / sw;
    let sxx: f64 = x
        .iter()
        .zip(w)
        .map(|(xi, wi)| wi * (xi - xbar).powi(2))
        .sum();
    if sxx <= 0.0 {
        return Err(Error::InvalidParam("degenerate abscissae in fit".into()));
    }
    let sxy: f64 = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((xi, yi), wi)| wi * (xi - xbar) * (yi - ybar))
        .sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let rss: f64 = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((xi, yi), wi)| wi * (yi - intercept - slope * xi).powi(2))
        .sum();
    // residual variance scaled back through the weights
    let dof = (n - 2) as f64;
    let sigma2 = rss / dof;
    let slope_stderr = (sigma2 / sxx).sqrt();
    Ok(LineFit {
        intercept,
        slope,
        slope_stderr,
        rss,
        n,
    })
}
