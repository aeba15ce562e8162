//! Small statistics helpers shared by the experiment campaigns.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::replica_rng;
use rand::Rng;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Ordinary least squares fit `y ≈ slope·x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InsufficientData(format!("regression needs >= 2 points (got {})", xs.len())));
    }
    let mx = mean(xs);
    let my = mean(ys);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("regression abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(LinearFit { slope, intercept, r_squared })
}

/// Quantile of sorted data with linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap interval for a statistic of i.i.d. data.
///
/// Resample `k` uses stream `k` of `seed`, so the interval is reproducible.
/// Resamples on which the statistic fails are skipped; if more than half
/// fail the whole interval is reported as insufficient data.
pub fn bootstrap_interval(
    data: &[f64],
    resamples: usize,
    level: f64,
    seed: u64,
    statistic: impl Fn(&[f64]) -> Result<f64> + Sync,
) -> Result<(f64, f64)> {
    use rayon::prelude::*;
    let values: Vec<f64> = (0..resamples)
        .into_par_iter()
        .filter_map(|k| {
            let mut rng = replica_rng(seed, k as u64);
            let sample: Vec<f64> = (0..data.len()).map(|_| data[rng.random_range(0..data.len())]).collect();
            statistic(&sample).ok()
        })
        .collect();
    if values.len() * 2 < resamples.max(1) {
        return Err(Error::InsufficientData(format!(
            "bootstrap statistic failed on {} of {resamples} resamples",
            resamples - values.len()
        )));
    }
    let mut sorted = values;
    sorted.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok((quantile_sorted(&sorted, tail), quantile_sorted(&sorted, 1.0 - tail)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exact_line_fit() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x - 1.0).collect();
        let fit = linear_fit(&xs, &ys).unwrap();
        assert_relative_eq!(fit.slope, 2.5, epsilon = 1e-14);
        assert_relative_eq!(fit.intercept, -1.0, epsilon = 1e-14);
        assert_relative_eq!(fit.r_squared, 1.0, epsilon = 1e-14);
        assert!(linear_fit(&[1.0], &[1.0]).is_err());
        assert!(linear_fit(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn quantiles_interpolate() {
        let s = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.5), 2.0);
        assert_eq!(quantile_sorted(&s, 0.125), 0.5);
        assert_eq!(quantile_sorted(&s, 1.0), 4.0);
    }

    #[test]
    fn bootstrap_of_mean_brackets_the_mean() {
        let data: Vec<f64> = (0..200).map(|i| (i % 10) as f64).collect();
        let (lo, hi) = bootstrap_interval(&data, 200, 0.9, 3, |s| Ok(mean(s))).unwrap();
        assert!(lo < 4.5 && 4.5 < hi, "{lo} {hi}");
        let again = bootstrap_interval(&data, 200, 0.9, 3, |s| Ok(mean(s))).unwrap();
        assert_eq!((lo, hi), again);
    }
}
