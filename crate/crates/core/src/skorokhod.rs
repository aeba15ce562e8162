//! The Skorokhod map on boxes `D = Π [a_i, b_i]` with normal reflection.
//!
//! On piecewise-linear inputs the map acts exactly through the one-step clamp
//! recursion `x_{n+1} = clamp(x_n + Δw_n, a, b)`: over one linear step the
//! input moves monotonically and can push against at most one face.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fbm::{FbmSampler, FbmSpec};
use crate::paths::{oscillation_count, GridPath};
use crate::stats::{bootstrap_interval, linear_fit};

/// Relative tolerance (of the face width) for deciding that a node touches a face.
pub const TOUCH_TOLERANCE: f64 = 1e-12;

/// A box with possibly infinite faces. In JSON an infinite face is `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDomain", into = "RawDomain")]
pub struct Domain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawDomain {
    lower: Vec<Option<f64>>,
    upper: Vec<Option<f64>>,
}

impl TryFrom<RawDomain> for Domain {
    type Error = Error;

    fn try_from(raw: RawDomain) -> Result<Self> {
        Domain::new(
            raw.lower.into_iter().map(|a| a.unwrap_or(f64::NEG_INFINITY)).collect(),
            raw.upper.into_iter().map(|b| b.unwrap_or(f64::INFINITY)).collect(),
        )
    }
}

impl From<Domain> for RawDomain {
    fn from(d: Domain) -> Self {
        let finite = |v: f64| v.is_finite().then_some(v);
        RawDomain { lower: d.lower.into_iter().map(finite).collect(), upper: d.upper.into_iter().map(finite).collect() }
    }
}

impl Domain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(invalid("domain bounds must be non-empty and of equal length"));
        }
        for (i, (&a, &b)) in lower.iter().zip(&upper).enumerate() {
            if a.is_nan() || b.is_nan() || a == f64::INFINITY || b == f64::NEG_INFINITY || a >= b {
                return Err(invalid(format!("face {i}: need lower < upper (got [{a}, {b}])")));
            }
        }
        Ok(Self { lower, upper })
    }

    /// `[a, b]^dim`.
    pub fn uniform(dim: usize, a: f64, b: f64) -> Result<Self> {
        Self::new(vec![a; dim], vec![b; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, component: usize) -> f64 {
        self.upper[component] - self.lower[component]
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.iter().zip(self.lower.iter().zip(&self.upper)).all(|(x, (a, b))| a <= x && x <= b)
    }

    /// Projection onto the box (the one-step reflection).
    pub fn clamp(&self, component: usize, x: f64) -> f64 {
        x.max(self.lower[component]).min(self.upper[component])
    }

    fn touch_tolerance(&self, component: usize) -> f64 {
        let w = self.width(component);
        TOUCH_TOLERANCE * if w.is_finite() { w } else { 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionResult {
    pub reflected: GridPath,
    /// Constraining term `k = reflected − input`.
    pub k: GridPath,
    /// Total variation of each component of `k`.
    pub k_onevar: Vec<f64>,
}

impl ReflectionResult {
    /// Sum of the componentwise 1-variations.
    pub fn total_onevar(&self) -> f64 {
        self.k_onevar.iter().sum()
    }

    /// Largest violation of the sign condition: `k` may only increase at the
    /// lower face and only decrease at the upper face.
    pub fn sign_condition_violation(&self, domain: &Domain) -> f64 {
        let mut worst = 0.0_f64;
        for c in 0..domain.dim() {
            let tol = domain.touch_tolerance(c);
            for i in 0..self.k.steps() {
                let dk = self.k.value(i + 1, c) - self.k.value(i, c);
                let x = self.reflected.value(i + 1, c);
                if dk > 0.0 && (x - domain.lower()[c]).abs() > tol {
                    worst = worst.max(dk);
                }
                if dk < 0.0 && (x - domain.upper()[c]).abs() > tol {
                    worst = worst.max(-dk);
                }
            }
        }
        worst
    }
}

/// Componentwise Skorokhod map of the piecewise-linear path on `domain`.
pub fn reflect(path: &GridPath, domain: &Domain) -> Result<ReflectionResult> {
    let dim = path.dim();
    if domain.dim() != dim {
        return Err(Error::InvalidInput(format!("domain has dimension {} but the path has {dim}", domain.dim())));
    }
    if !domain.contains(path.point(0)) {
        return Err(Error::InvalidInitialCondition(format!("path starts at {:?}, outside the domain", path.point(0))));
    }
    let n = path.len();
    let input = path.values();
    let mut reflected = input.to_vec();
    let mut k = vec![0.0; input.len()];
    let mut k_onevar = vec![0.0; dim];
    for i in 1..n {
        for c in 0..dim {
            let free = reflected[(i - 1) * dim + c] + (input[i * dim + c] - input[(i - 1) * dim + c]);
            let x = domain.clamp(c, free);
            reflected[i * dim + c] = x;
            let push = x - free;
            k[i * dim + c] = k[(i - 1) * dim + c] + push;
            k_onevar[c] += push.abs();
        }
    }
    Ok(ReflectionResult {
        reflected: GridPath::new(path.t0(), path.dt(), dim, reflected)?,
        k: GridPath::new(path.t0(), path.dt(), dim, k)?,
        k_onevar,
    })
}

/// Outcome of comparing `‖K‖_{1-var}` with `N_{1,T}(W) + 1`, per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnevarBound {
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub holds: bool,
}

impl OnevarBound {
    /// Largest `lhs/rhs` over components.
    pub fn max_ratio(&self) -> f64 {
        self.lhs.iter().zip(&self.rhs).map(|(l, r)| l / r).fold(0.0, f64::max)
    }
}

/// Checks `‖K‖_{1-var,[0,T]} ≤ N_{1,T}(W) + 1` on a box of unit width.
pub fn reflection_onevar_bound_check(path: &GridPath, domain: &Domain) -> Result<OnevarBound> {
    for c in 0..domain.dim() {
        if (domain.width(c) - 1.0).abs() > 1e-12 {
            return Err(invalid(format!(
                "component {c} has width {}; rescale the problem to unit width first",
                domain.width(c)
            )));
        }
    }
    let result = reflect(path, domain)?;
    let rhs = (0..path.dim())
        .map(|c| oscillation_count(path, c, 1.0).map(|o| o.count as f64 + 1.0))
        .collect::<Result<Vec<_>>>()?;
    let holds = result.k_onevar.iter().zip(&rhs).all(|(l, r)| l <= r);
    Ok(OnevarBound { lhs: result.k_onevar, rhs, holds })
}

/// Weibull-type tail fit `P(X > x) ≈ exp(−c·x^κ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub exponent: f64,
    pub r_squared: f64,
    /// Bootstrap percentile interval for the exponent.
    pub interval: (f64, f64),
    pub level: f64,
    pub tail_points: usize,
    pub samples: usize,
}

/// Fraction of the sample (its upper part) used by [`weibull_tail_exponent`].
pub const TAIL_FRACTION: f64 = 0.1;
const MIN_TAIL_POINTS: usize = 20;

/// Regression slope of `log(−log Ŝ(x))` on `log x` over the upper decile,
/// with plotting positions `Ŝ(x_(i)) = (n − i − ½)/n` for 0-based order
/// statistics.
pub fn weibull_tail_exponent(samples: &[f64]) -> Result<(f64, f64)> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let first = ((1.0 - TAIL_FRACTION) * n as f64).floor() as usize;
    let mut xs = Vec::with_capacity(n - first);
    let mut ys = Vec::with_capacity(n - first);
    for (i, &x) in sorted.iter().enumerate().skip(first) {
        if x <= 0.0 {
            continue;
        }
        let survival = (n as f64 - i as f64 - 0.5) / n as f64;
        xs.push(x.ln());
        ys.push((-survival.ln()).ln());
    }
    if xs.len() < MIN_TAIL_POINTS {
        return Err(Error::InsufficientData(format!(
            "only {} positive tail points (need {MIN_TAIL_POINTS})",
            xs.len()
        )));
    }
    let fit = linear_fit(&xs, &ys)?;
    Ok((fit.slope, fit.r_squared))
}

/// Tail fit with a bootstrap interval, for arbitrary positive samples.
pub fn fit_weibull_tail(samples: &[f64], resamples: usize, level: f64, seed: u64) -> Result<TailFit> {
    let (exponent, r_squared) = weibull_tail_exponent(samples)?;
    let interval = bootstrap_interval(samples, resamples, level, seed, |s| weibull_tail_exponent(s).map(|f| f.0))?;
    let tail_points = samples.len() - ((1.0 - TAIL_FRACTION) * samples.len() as f64).floor() as usize;
    Ok(TailFit { exponent, r_squared, interval, level, tail_points, samples: samples.len() })
}

/// Samples `‖K‖_{1-var}` of reflected fBm paths (first component) on `domain`.
pub fn sample_reflection_onevar(spec: &FbmSpec, domain: &Domain, samples: usize) -> Result<Vec<f64>> {
    let sampler = FbmSampler::new(spec.clone())?;
    (0..samples as u64)
        .into_par_iter()
        .map(|k| {
            let w = sampler.sample(k);
            reflect(&w, domain).map(|r| r.k_onevar[0])
        })
        .collect()
}

/// Fits the Weibull tail exponent of `‖K‖_{1-var}` for reflected fBm.
pub fn tail_exponent_experiment(
    spec: &FbmSpec,
    domain: &Domain,
    samples: usize,
    resamples: usize,
    level: f64,
) -> Result<TailFit> {
    if !(spec.hurst < 0.5) {
        return Err(invalid("the tail experiment targets H < 1/2"));
    }
    if samples < 10_000 {
        return Err(Error::InsufficientData(format!("tail experiment needs >= 10^4 samples (got {samples})")));
    }
    let onevar = sample_reflection_onevar(spec, domain, samples)?;
    fit_weibull_tail(&onevar, resamples, level, crate::rng::derive_seed(spec.seed, "bootstrap"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn half_line() -> Domain {
        Domain::new(vec![0.0], vec![f64::INFINITY]).unwrap()
    }

    #[test]
    fn pushes_a_falling_path_back_to_zero() {
        let w = GridPath::from_fn(0.0, 1.0, 16, |t| -t).unwrap();
        let r = reflect(&w, &half_line()).unwrap();
        assert!(r.reflected.values().iter().all(|&x| x == 0.0));
        for i in 0..w.len() {
            assert_relative_eq!(r.k.value(i, 0), w.time(i), epsilon = 1e-15);
        }
        assert_relative_eq!(r.k_onevar[0], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn leaves_an_admissible_path_alone() {
        let w = GridPath::from_fn(0.0, 1.0, 16, |t| t).unwrap();
        let r = reflect(&w, &half_line()).unwrap();
        assert_eq!(r.reflected, w);
        assert!(r.k.values().iter().all(|&k| k == 0.0));
    }

    #[test]
    fn two_sided_ramp() {
        let w = GridPath::from_fn(0.0, 1.0, 1024, |t| 2.0 * t).unwrap();
        let r = reflect(&w, &Domain::uniform(1, 0.0, 1.0).unwrap()).unwrap();
        for i in 0..w.len() {
            assert_relative_eq!(r.reflected.value(i, 0), (2.0 * w.time(i)).min(1.0), epsilon = 1e-14);
        }
        assert_relative_eq!(r.k_onevar[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn start_outside_is_rejected() {
        let w = GridPath::from_fn(0.0, 1.0, 4, |t| t - 1.0).unwrap();
        assert!(matches!(reflect(&w, &half_line()), Err(Error::InvalidInitialCondition(_))));
    }

    #[test]
    fn domain_validation() {
        assert!(Domain::new(vec![1.0], vec![1.0]).is_err());
        assert!(Domain::new(vec![f64::INFINITY], vec![f64::INFINITY]).is_err());
        assert!(Domain::new(vec![0.0, 0.0], vec![1.0]).is_err());
        assert!(Domain::new(vec![f64::NEG_INFINITY], vec![f64::INFINITY]).is_ok());
    }

    #[test]
    fn onevar_bound_for_constant_path() {
        let w = GridPath::constant(0.0, 0.01, 101, &[0.5]).unwrap();
        let b = reflection_onevar_bound_check(&w, &Domain::uniform(1, 0.0, 1.0).unwrap()).unwrap();
        assert_eq!(b.lhs, vec![0.0]);
        assert_eq!(b.rhs, vec![1.0]);
        assert!(b.holds);
    }

    #[test]
    fn onevar_bound_requires_unit_width() {
        let w = GridPath::constant(0.0, 0.01, 11, &[0.5]).unwrap();
        assert!(reflection_onevar_bound_check(&w, &Domain::uniform(1, 0.0, 2.0).unwrap()).is_err());
    }

    #[test]
    fn sign_condition_holds_for_oscillating_input() {
        let w = GridPath::from_fn(0.0, 1.0, 2048, |t| 0.5 + 3.0 * (20.0 * t).sin()).unwrap();
        let d = Domain::uniform(1, 0.0, 1.0).unwrap();
        let r = reflect(&w, &d).unwrap();
        assert_eq!(r.sign_condition_violation(&d), 0.0);
    }

    #[test]
    fn weibull_fit_on_exact_quantiles() {
        // deterministic plotting-position quantiles of Weibull(κ = 1.7)
        let kappa = 1.7;
        let n = 20_000;
        let xs: Vec<f64> = (0..n)
            .map(|i| {
                let s = (n as f64 - i as f64 - 0.5) / n as f64;
                (-s.ln()).powf(1.0 / kappa)
            })
            .collect();
        let (k, r2) = weibull_tail_exponent(&xs).unwrap();
        assert_relative_eq!(k, kappa, epsilon = 1e-10);
        assert!(r2 > 0.999_999);
    }

    #[test]
    fn tail_experiment_guards() {
        let d = Domain::uniform(1, 0.0, 1.0).unwrap();
        let spec = FbmSpec::new(0.25, 1.0, 64, 1, 0);
        assert!(matches!(tail_exponent_experiment(&spec, &d, 100, 10, 0.9), Err(Error::InsufficientData(_))));
        let spec = FbmSpec::new(0.75, 1.0, 64, 1, 0);
        assert!(tail_exponent_experiment(&spec, &d, 20_000, 10, 0.9).is_err());
        assert!(matches!(weibull_tail_exponent(&[1.0; 50]), Err(Error::InsufficientData(_))));
    }
}
