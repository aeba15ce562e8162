//! Fractional Brownian motion: analytic fixtures and exact grid samplers.
//!
//! Node values are drawn exactly from the Gaussian law with covariance
//! `½(s^{2H} + t^{2H} − |t−s|^{2H})`, either through a Cholesky factor of the
//! node covariance or by circulant embedding of the stationary increment
//! covariance (Davies–Harte).

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::paths::GridPath;
use crate::rng::{fill_standard_normal, replica_rng, standard_normal};

/// Largest step count sampled by Cholesky unless the caller raises the cap.
pub const DEFAULT_CHOLESKY_CAP: usize = 1 << 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMethod {
    Cholesky,
    Circulant,
}

impl std::str::FromStr for SamplingMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cholesky" => Ok(Self::Cholesky),
            "circulant" => Ok(Self::Circulant),
            other => Err(invalid(format!("unknown sampling method `{other}` (cholesky|circulant)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbmSpec {
    pub hurst: f64,
    pub horizon: f64,
    pub steps: usize,
    pub dim: usize,
    pub method: SamplingMethod,
    pub seed: u64,
}

impl FbmSpec {
    /// Picks Cholesky for small grids and circulant embedding otherwise.
    pub fn new(hurst: f64, horizon: f64, steps: usize, dim: usize, seed: u64) -> Self {
        let method = if steps <= DEFAULT_CHOLESKY_CAP { SamplingMethod::Cholesky } else { SamplingMethod::Circulant };
        Self { hurst, horizon, steps, dim, method, seed }
    }

    pub fn with_method(mut self, method: SamplingMethod) -> Self {
        self.method = method;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hurst > 0.0 && self.hurst < 1.0) {
            return Err(invalid("Hurst index must lie in (0,1)"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid(format!("horizon must be positive (got {})", self.horizon)));
        }
        if self.steps == 0 {
            return Err(invalid("fBm grid needs at least one step"));
        }
        if self.dim == 0 {
            return Err(invalid("fBm dimension must be at least 1"));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }
}

fn check_hurst(hurst: f64) -> Result<()> {
    if hurst > 0.0 && hurst < 1.0 {
        Ok(())
    } else {
        Err(invalid("Hurst index must lie in (0,1)"))
    }
}

/// `E[W_s W_t] = ½(s^{2H} + t^{2H} − |t−s|^{2H})`.
pub fn fbm_covariance(s: f64, t: f64, hurst: f64) -> Result<f64> {
    check_hurst(hurst)?;
    if s < 0.0 || t < 0.0 {
        return Err(invalid(format!("covariance needs non-negative times (got {s}, {t})")));
    }
    let h2 = 2.0 * hurst;
    Ok(0.5 * (s.powf(h2) + t.powf(h2) - (t - s).abs().powf(h2)))
}

/// Normalising constant `c_H = 1/Γ(H + ½)` of the Mandelbrot–Van Ness kernel.
pub fn kernel_constant(hurst: f64) -> Result<f64> {
    check_hurst(hurst)?;
    Ok(1.0 / statrs::function::gamma::gamma(hurst + 0.5))
}

fn positive_power(x: f64, exponent: f64) -> f64 {
    if x > 0.0 {
        x.powf(exponent)
    } else {
        0.0
    }
}

/// `k(t,r) = c_H((t−r)_+^{H−½} − (−r)_+^{H−½})`, with `(x)_+^a = 0` for `x ≤ 0`.
pub fn mandelbrot_kernel(t: f64, r: f64, hurst: f64) -> Result<f64> {
    let c = kernel_constant(hurst)?;
    let a = hurst - 0.5;
    Ok(c * (positive_power(t - r, a) - positive_power(-r, a)))
}

/// Variance of `W_t` given the driving noise up to `s`: `c_H²/(2H)·(t−s)^{2H}`.
pub fn conditional_variance(s: f64, t: f64, hurst: f64) -> Result<f64> {
    let c = kernel_constant(hurst)?;
    if s > t {
        return Err(invalid(format!("conditional variance needs s <= t (got s={s}, t={t})")));
    }
    Ok(c * c / (2.0 * hurst) * (t - s).powf(2.0 * hurst))
}

/// Autocovariance of fractional Gaussian noise with unit step, at integer lag `k`.
fn fgn_autocovariance(k: usize, hurst: f64) -> f64 {
    let h2 = 2.0 * hurst;
    let k = k as f64;
    0.5 * ((k + 1.0).powf(h2) - 2.0 * k.powf(h2) + (k - 1.0).abs().powf(h2))
}

enum Factor {
    /// Row-major lower-triangular Cholesky factor of the node covariance.
    Cholesky(Vec<f64>),
    /// Square roots of the circulant eigenvalues divided by the embedding size.
    Circulant { scale: Vec<f64>, fft: Arc<dyn Fft<f64>> },
}

/// Precomputed sampler for one [`FbmSpec`]; draws are keyed by replica index.
pub struct FbmSampler {
    spec: FbmSpec,
    factor: Factor,
}

impl FbmSampler {
    pub fn new(spec: FbmSpec) -> Result<Self> {
        Self::with_cholesky_cap(spec, DEFAULT_CHOLESKY_CAP)
    }

    pub fn with_cholesky_cap(spec: FbmSpec, cap: usize) -> Result<Self> {
        spec.validate()?;
        let n = spec.steps;
        let factor = match spec.method {
            SamplingMethod::Cholesky => {
                if n > cap {
                    return Err(Error::Resource(format!(
                        "{n} steps exceed the Cholesky cap of {cap}; use the circulant method"
                    )));
                }
                let dt = spec.dt();
                let cov = DMatrix::from_fn(n, n, |i, j| {
                    fbm_covariance((i + 1) as f64 * dt, (j + 1) as f64 * dt, spec.hurst).expect("validated")
                });
                let chol =
                    cov.cholesky().ok_or_else(|| Error::Internal("fBm covariance is not positive definite".into()))?;
                let l = chol.l();
                let mut lower = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..=i {
                        lower[i * n + j] = l[(i, j)];
                    }
                }
                Factor::Cholesky(lower)
            }
            SamplingMethod::Circulant => {
                let m = 2 * n;
                let mut row: Vec<Complex64> = (0..m)
                    .map(|k| {
                        let lag = if k <= n { k } else { m - k };
                        Complex64::new(fgn_autocovariance(lag, spec.hurst), 0.0)
                    })
                    .collect();
                let fft = FftPlanner::new().plan_fft_forward(m);
                fft.process(&mut row);
                let largest = row.iter().fold(0.0_f64, |a, z| a.max(z.re));
                let tolerance = 1e-10 * largest.max(1.0);
                let mut scale = Vec::with_capacity(m);
                for z in &row {
                    if z.re < -tolerance {
                        return Err(Error::Internal(format!(
                            "circulant embedding has eigenvalue {} below tolerance",
                            z.re
                        )));
                    }
                    scale.push((z.re.max(0.0) / m as f64).sqrt());
                }
                Factor::Circulant { scale, fft }
            }
        };
        Ok(Self { spec, factor })
    }

    pub fn spec(&self) -> &FbmSpec {
        &self.spec
    }

    /// Path number `replica` of this sampler's seed. Components are independent.
    pub fn sample(&self, replica: u64) -> GridPath {
        let n = self.spec.steps;
        let dim = self.spec.dim;
        let mut rng = replica_rng(self.spec.seed, replica);
        let mut values = vec![0.0; (n + 1) * dim];
        let mut z = vec![0.0; n];
        let mut buffer: Vec<Complex64> = Vec::new();
        for c in 0..dim {
            match &self.factor {
                Factor::Cholesky(lower) => {
                    fill_standard_normal(&mut rng, &mut z);
                    for i in 0..n {
                        let row = &lower[i * n..i * n + i + 1];
                        let v: f64 = row.iter().zip(&z[..=i]).map(|(l, z)| l * z).sum();
                        values[(i + 1) * dim + c] = v;
                    }
                }
                Factor::Circulant { scale, fft } => {
                    buffer.clear();
                    buffer.extend(
                        scale
                            .iter()
                            .map(|s| Complex64::new(s * standard_normal(&mut rng), s * standard_normal(&mut rng))),
                    );
                    fft.process(&mut buffer);
                    // unit-step noise rescaled to the grid by self-similarity
                    let step_scale = self.spec.dt().powf(self.spec.hurst);
                    let mut acc = 0.0;
                    for i in 0..n {
                        acc += step_scale * buffer[i].re;
                        values[(i + 1) * dim + c] = acc;
                    }
                }
            }
        }
        GridPath::new(0.0, self.spec.dt(), dim, values).expect("sampled path is well formed")
    }

    /// Replicas `first..first + count`, in replica order, sampled in parallel.
    pub fn sample_range(&self, first: u64, count: usize) -> Vec<GridPath> {
        (0..count as u64).into_par_iter().map(|k| self.sample(first + k)).collect()
    }
}

/// `count` independent paths of `spec`, replica `k` drawn from stream `k`.
pub fn sample_fbm(spec: &FbmSpec, count: usize) -> Result<Vec<GridPath>> {
    let sampler = FbmSampler::new(spec.clone())?;
    Ok(sampler.sample_range(0, count))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn covariance_examples() {
        for h in [0.1, 0.5, 0.75, 0.9] {
            assert_relative_eq!(fbm_covariance(1.0, 1.0, h).unwrap(), 1.0, epsilon = 1e-15);
        }
        assert_relative_eq!(fbm_covariance(1.0, 2.0, 0.5).unwrap(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(fbm_covariance(2.0, 2.0, 0.75).unwrap(), 2f64.powf(1.5), epsilon = 1e-14);
        assert!(fbm_covariance(-1.0, 1.0, 0.5).is_err());
        assert!(fbm_covariance(1.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn brownian_kernel_constants() {
        assert_relative_eq!(kernel_constant(0.5).unwrap(), 1.0, epsilon = 1e-14);
        assert_relative_eq!(conditional_variance(0.25, 1.0, 0.5).unwrap(), 0.75, epsilon = 1e-14);
        assert!(conditional_variance(1.0, 0.5, 0.5).is_err());
    }

    #[test]
    fn kernel_vanishes_before_its_support() {
        // r > t > 0: both positive parts are zero
        assert_eq!(mandelbrot_kernel(1.0, 2.0, 0.3).unwrap(), 0.0);
        // r < 0 < t: both parts contribute
        let c = kernel_constant(0.3).unwrap();
        let expected = c * (1.5f64.powf(-0.2) - 0.5f64.powf(-0.2));
        assert_relative_eq!(mandelbrot_kernel(1.0, -0.5, 0.3).unwrap(), expected, epsilon = 1e-14);
    }

    #[test]
    fn paths_start_at_zero_and_are_deterministic() {
        for method in [SamplingMethod::Cholesky, SamplingMethod::Circulant] {
            let spec = FbmSpec::new(0.3, 2.0, 32, 2, 11).with_method(method);
            let a = sample_fbm(&spec, 3).unwrap();
            let b = sample_fbm(&spec, 3).unwrap();
            assert_eq!(a, b);
            assert_ne!(a[0], a[1]);
            for p in &a {
                assert_eq!(p.point(0), &[0.0, 0.0]);
                assert_eq!(p.len(), 33);
                assert_relative_eq!(p.horizon(), 2.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn cholesky_cap_is_enforced() {
        let spec = FbmSpec::new(0.3, 1.0, 64, 1, 0).with_method(SamplingMethod::Cholesky);
        assert!(matches!(FbmSampler::with_cholesky_cap(spec, 32), Err(Error::Resource(_))));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(FbmSpec::new(1.5, 1.0, 8, 1, 0).validate().is_err());
        assert!(FbmSpec::new(0.5, 0.0, 8, 1, 0).validate().is_err());
        assert!(FbmSpec::new(0.5, 1.0, 0, 1, 0).validate().is_err());
        assert!(FbmSpec::new(0.5, 1.0, 8, 0, 0).validate().is_err());
    }

    #[test]
    fn single_step_circulant() {
        let spec = FbmSpec::new(0.7, 1.0, 1, 1, 5).with_method(SamplingMethod::Circulant);
        let p = sample_fbm(&spec, 1).unwrap();
        assert_eq!(p[0].len(), 2);
    }
}
