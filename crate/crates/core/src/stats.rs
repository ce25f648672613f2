//! Ensemble statistics: batch-means confidence intervals, binomial intervals,
//! trimmed moments and least-squares fits.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

pub const MIN_BATCHES: usize = 30;

/// Point estimate with a two-sided 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ci {
    pub value: f64,
    pub se: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Ci {
    pub fn exact(value: f64) -> Self {
        Self { value, se: 0.0, lo: value, hi: value }
    }

    /// Pushes the interval through a monotone increasing map, with a
    /// delta-method standard error.
    pub fn map_increasing(&self, f: impl Fn(f64) -> f64) -> Self {
        let h = (self.se * 1e-3).max(1e-12 * self.value.abs().max(1e-300));
        let slope = (f(self.value + h) - f(self.value - h)) / (2.0 * h);
        Self { value: f(self.value), se: slope.abs() * self.se, lo: f(self.lo), hi: f(self.hi) }
    }
}

fn t_quantile(df: usize) -> f64 {
    StudentsT::new(0.0, 1.0, df as f64).map(|t| t.inverse_cdf(0.975)).unwrap_or(1.96)
}

/// Mean with a batch-means interval; `values` in replica order.
pub fn batch_mean(values: &[f64], batches: usize) -> Result<Ci> {
    let batches = batches.max(MIN_BATCHES);
    if values.len() < batches {
        return Err(Error::domain(format!("{} replicas cannot fill {batches} batches", values.len())));
    }
    let n = values.len();
    let means: Vec<f64> = (0..batches)
        .map(|b| {
            let (lo, hi) = (b * n / batches, (b + 1) * n / batches);
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
    let se = (var / batches as f64).sqrt();
    let q = t_quantile(batches - 1);
    Ok(Ci { value: mean, se, lo: mean - q * se, hi: mean + q * se })
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson(k: usize, n: usize) -> Ci {
    let z = Normal::new(0.0, 1.0).unwrap().inverse_cdf(0.975);
    let nf = n as f64;
    let p = k as f64 / nf;
    let denom = 1.0 + z * z / nf;
    let centre = (p + z * z / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt() / denom;
    Ci { value: p, se: (p * (1.0 - p) / nf).sqrt(), lo: (centre - half).max(0.0), hi: (centre + half).min(1.0) }
}

/// Mean after removing the `frac` largest and smallest values.
pub fn trimmed_mean(values: &[f64], frac: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let cut = ((v.len() as f64) * frac).floor() as usize;
    let kept = &v[cut..v.len() - cut];
    kept.iter().sum::<f64>() / kept.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub slope_se: f64,
    pub n: usize,
}

/// Ordinary least squares `y ≈ intercept + slope·x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n != y.len() || n < 2 {
        return Err(Error::domain(format!("regression needs two equal-length samples of size >= 2, got {n}/{}", y.len())));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::domain("regression abscissae are all equal"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let slope_se = if n > 2 { (sse / (nf - 2.0) / sxx).sqrt() } else { f64::NAN };
    Ok(LinearFit { slope, intercept, r2, slope_se, n })
}

pub fn is_strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}
