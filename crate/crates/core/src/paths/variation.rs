use super::{GridPath, IncrementNorm};
use crate::error::{invalid, Result};

fn check_exponent(p: f64) -> Result<()> {
    if p >= 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("variation exponent must be >= 1 (got {p})")))
    }
}

/// Exact discrete p-variation over the node window `[start, end]`:
/// `(max over node subsequences of Σ |Δ|^p)^{1/p}`.
///
/// For piecewise-linear paths this is the continuous p-variation.
pub fn p_variation(path: &GridPath, p: f64, window: (usize, usize), norm: IncrementNorm) -> Result<f64> {
    Ok(p_variation_power(path, p, window, norm)?.powf(1.0 / p))
}

/// `p_variation(..)^p`, the value of the optimal partition sum itself.
pub fn p_variation_power(path: &GridPath, p: f64, window: (usize, usize), norm: IncrementNorm) -> Result<f64> {
    check_exponent(p)?;
    path.check_window(window)?;
    if let IncrementNorm::Component(c) = norm {
        if c >= path.dim() {
            return Err(invalid(format!("component {c} out of range for dimension {}", path.dim())));
        }
    }
    let (start, end) = window;
    let scalar = match norm {
        IncrementNorm::Component(c) => Some(c),
        IncrementNorm::Euclidean if path.dim() == 1 => Some(0),
        IncrementNorm::Euclidean => None,
    };
    if p == 1.0 {
        return Ok((start..end).map(|i| path.increment(i, i + 1, norm)).sum());
    }
    Ok(match scalar {
        Some(c) => {
            let xs: Vec<f64> = (start..=end).map(|i| path.value(i, c)).collect();
            let pruned = prune_to_extrema(&xs);
            best_partition_sum(pruned.len(), p, |i, j| (pruned[j] - pruned[i]).abs())
        }
        None => best_partition_sum(end - start + 1, p, |i, j| path.increment(start + i, start + j, norm)),
    })
}

/// Drops interior nodes through which a scalar sequence passes monotonically.
///
/// Such nodes never increase a partition sum for `p >= 1`, so the p-variation
/// of the pruned sequence equals that of the original. Endpoints are kept.
pub fn prune_to_extrema(xs: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(xs.len());
    for &x in xs {
        while let [.., a, b] = out[..] {
            if (b - a) * (x - b) >= 0.0 {
                out.pop();
            } else {
                break;
            }
        }
        out.push(x);
    }
    out
}

/// `max_{subsequences 0 = i_0 < … < i_m = n-1} Σ dist(i_k, i_{k+1})^p` by dynamic
/// programming over the last visited node.
fn best_partition_sum(n: usize, p: f64, dist: impl Fn(usize, usize) -> f64) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let mut best = vec![0.0_f64; n];
    for j in 1..n {
        let mut b = f64::NEG_INFINITY;
        for (i, &bi) in best[..j].iter().enumerate() {
            let v = bi + dist(i, j).powf(p);
            if v > b {
                b = v;
            }
        }
        best[j] = b;
    }
    best[n - 1]
}

/// Best partition sums from node `start` to every later node, in one pass.
pub(super) fn best_partition_sums_from(path: &GridPath, start: usize, p: f64, norm: IncrementNorm) -> Vec<f64> {
    let n = path.len() - start;
    let mut best = vec![0.0_f64; n];
    for j in 1..n {
        let mut b = f64::NEG_INFINITY;
        for (i, &bi) in best[..j].iter().enumerate() {
            let v = bi + path.increment(start + i, start + j, norm).powf(p);
            if v > b {
                b = v;
            }
        }
        best[j] = b;
    }
    best
}

/// `max_{i < j in window} |X_{t_i t_j}| / (t_j - t_i)^γ`.
pub fn holder_norm(path: &GridPath, gamma: f64, window: (usize, usize), norm: IncrementNorm) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(invalid(format!("Hölder exponent must lie in (0,1] (got {gamma})")));
    }
    path.check_window(window)?;
    let (start, end) = window;
    let mut best = 0.0_f64;
    for i in start..end {
        for j in i + 1..=end {
            let lag = (j - i) as f64 * path.dt();
            best = best.max(path.increment(i, j, norm) / lag.powf(gamma));
        }
    }
    Ok(best)
}
