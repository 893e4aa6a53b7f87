use crate::error::{Error, Result};
use crate::math::{mean, sample_variance};

/// Effective sample size by non-overlapping batch means with batch size
/// `floor(sqrt(n))`.
///
/// `ESS = n * var(x) / sigma2`, where `sigma2 = b / (a - 1) * sum_k (ybar_k - mean)^2`
/// over the `a = floor(n / b)` full batches. The result is clipped below at 1
/// but not above at `n`.
pub fn ess_batch_means(series: &[f64]) -> Result<f64> {
    let n = series.len();
    if n < 10 {
        return Err(Error::invalid(format!("batch-means ESS needs at least 10 values, got {n}")));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("series contains a non-finite value"));
    }
    if series.iter().all(|&v| v == series[0]) {
        return Err(Error::DegenerateInput("series is constant".into()));
    }
    let b = (n as f64).sqrt().floor() as usize;
    let a = n / b;
    let mu = mean(series);
    let ss: f64 = series
        .chunks_exact(b)
        .take(a)
        .map(|chunk| {
            let ybar = mean(chunk);
            (ybar - mu) * (ybar - mu)
        })
        .sum();
    let sigma2 = b as f64 * ss / (a - 1) as f64;
    let var = sample_variance(series);
    if sigma2 == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((n as f64 * var / sigma2).max(1.0))
}
