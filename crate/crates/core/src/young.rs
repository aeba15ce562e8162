//! Sewing of two-parameter germs into paths.
//!
//! A germ `A_{st}(x)` is integrated along a path `θ` as the limit of
//! left-point sums `Σ A_{uv}(θ_u)` over dyadic partitions. The finest
//! partition is the grid itself; coarser levels merge `2^ℓ` grid steps and
//! are used to estimate the discretization error.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fields::{window_quadrature, DriftField};
use crate::paths::{p_variation, Control, GridPath, IncrementNorm};

/// Claimed regularity of a germ:
/// `|A_{st}(x) − A_{st}(y)| ≤ lipschitz · |t−s|^{1/q} · |x−y|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GermMetadata {
    pub q: f64,
    pub lipschitz: f64,
}

/// A two-parameter field `A_{t_i t_j}(x)` on the nodes of a uniform grid.
pub trait Germ: Sync {
    fn dim(&self) -> usize;

    /// Number of grid nodes.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `A_{t_i t_j}(x)` into `out`; must vanish for `i == j`.
    fn eval(&self, i: usize, j: usize, x: &[f64], out: &mut [f64]);

    /// Spatial Jacobian `∂A_c/∂x_e`, row-major `dim × dim`.
    fn jacobian(&self, _i: usize, _j: usize, _x: &[f64], _out: &mut [f64]) -> Result<()> {
        Err(Error::ContractViolation("germ provides no spatial derivative".into()))
    }

    fn metadata(&self) -> GermMetadata;
}

/// `A_{st}(x) = g(x) · (h_t − h_s)` for a scalar path `h`.
pub struct ProductGerm<G, J = fn(&[f64], &mut [f64])> {
    h: GridPath,
    dim: usize,
    g: G,
    jac: Option<J>,
    metadata: GermMetadata,
}

impl<G> ProductGerm<G>
where
    G: Fn(&[f64], &mut [f64]) + Sync,
{
    pub fn new(h: GridPath, dim: usize, g: G, metadata: GermMetadata) -> Result<Self> {
        if h.dim() != 1 {
            return Err(invalid("product germ needs a scalar time path"));
        }
        Ok(Self { h, dim, g, jac: None, metadata })
    }
}

impl<G, J> ProductGerm<G, J>
where
    G: Fn(&[f64], &mut [f64]) + Sync,
    J: Fn(&[f64], &mut [f64]) + Sync,
{
    pub fn with_jacobian<K>(self, jac: K) -> ProductGerm<G, K>
    where
        K: Fn(&[f64], &mut [f64]) + Sync,
    {
        ProductGerm { h: self.h, dim: self.dim, g: self.g, jac: Some(jac), metadata: self.metadata }
    }
}

impl<G, J> Germ for ProductGerm<G, J>
where
    G: Fn(&[f64], &mut [f64]) + Sync,
    J: Fn(&[f64], &mut [f64]) + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn len(&self) -> usize {
        self.h.len()
    }

    fn eval(&self, i: usize, j: usize, x: &[f64], out: &mut [f64]) {
        (self.g)(x, out);
        let dh = self.h.value(j, 0) - self.h.value(i, 0);
        out.iter_mut().for_each(|v| *v *= dh);
    }

    fn jacobian(&self, i: usize, j: usize, x: &[f64], out: &mut [f64]) -> Result<()> {
        let jac =
            self.jac.as_ref().ok_or_else(|| Error::ContractViolation("germ provides no spatial derivative".into()))?;
        jac(x, out);
        let dh = self.h.value(j, 0) - self.h.value(i, 0);
        out.iter_mut().for_each(|v| *v *= dh);
        Ok(())
    }

    fn metadata(&self) -> GermMetadata {
        self.metadata
    }
}

/// The averaged-field germ `A_{st}(x) = T^w f_t(x) − T^w f_s(x)`, evaluated
/// by trapezoid quadrature over the window `[s, t]`.
pub struct AveragedFieldGerm {
    w: GridPath,
    field: DriftField,
}

impl AveragedFieldGerm {
    pub fn new(w: GridPath, field: DriftField) -> Result<Self> {
        field.require_evaluable()?;
        if w.dim() != field.dim() {
            return Err(Error::InvalidInput(format!("path dimension {} != field dimension {}", w.dim(), field.dim())));
        }
        Ok(Self { w, field })
    }

    pub fn path(&self) -> &GridPath {
        &self.w
    }

    pub fn field(&self) -> &DriftField {
        &self.field
    }
}

impl Germ for AveragedFieldGerm {
    fn dim(&self) -> usize {
        self.w.dim()
    }

    fn len(&self) -> usize {
        self.w.len()
    }

    fn eval(&self, i: usize, j: usize, x: &[f64], out: &mut [f64]) {
        window_quadrature(&self.w, &self.field, x, i, j, out);
    }

    fn jacobian(&self, i: usize, j: usize, x: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.dim();
        let mut y = vec![0.0; d];
        let mut jac = vec![0.0; d * d];
        out.iter_mut().for_each(|v| *v = 0.0);
        if i == j {
            return Ok(());
        }
        let half = 0.5 * self.w.dt();
        for r in i..=j {
            let weight = if r == i || r == j { half } else { 2.0 * half };
            for (e, ye) in y.iter_mut().enumerate() {
                *ye = self.w.value(r, e) + x[e];
            }
            self.field.jacobian_unchecked(&y, self.w.time(r), &mut jac);
            for (o, v) in out.iter_mut().zip(&jac) {
                *o += weight * v;
            }
        }
        Ok(())
    }

    fn metadata(&self) -> GermMetadata {
        GermMetadata { q: 1.0, lipschitz: self.field.lipschitz_bound() }
    }
}

/// Supplies a central-difference Jacobian for a germ that has none.
pub struct FiniteDifference<G> {
    inner: G,
    step: f64,
}

impl<G: Germ> FiniteDifference<G> {
    /// Step `1e-6 · spatial_scale`.
    pub fn new(inner: G, spatial_scale: f64) -> Self {
        Self { inner, step: 1e-6 * spatial_scale.abs().max(f64::MIN_POSITIVE) }
    }
}

impl<G: Germ> Germ for FiniteDifference<G> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn len(&self) -> usize {
        self.inner.len()
    }

    fn eval(&self, i: usize, j: usize, x: &[f64], out: &mut [f64]) {
        self.inner.eval(i, j, x, out)
    }

    fn jacobian(&self, i: usize, j: usize, x: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.dim();
        let mut y = x.to_vec();
        let mut hi = vec![0.0; d];
        let mut lo = vec![0.0; d];
        for e in 0..d {
            y[e] = x[e] + self.step;
            self.inner.eval(i, j, &y, &mut hi);
            y[e] = x[e] - self.step;
            self.inner.eval(i, j, &y, &mut lo);
            y[e] = x[e];
            for c in 0..d {
                out[c * d + e] = (hi[c] - lo[c]) / (2.0 * self.step);
            }
        }
        Ok(())
    }

    fn metadata(&self) -> GermMetadata {
        self.inner.metadata()
    }
}

/// Result of a dyadic sewing computation.
#[derive(Debug, Clone, PartialEq)]
pub struct YoungIntegral {
    /// Finest-level (grid) left-point sums.
    pub path: GridPath,
    /// Sup distance between the two finest levels, if more than one level ran.
    pub error_estimate: Option<f64>,
    /// Grid steps per interval at each level, coarse to fine.
    pub level_steps: Vec<usize>,
    /// Sup distance between consecutive levels, coarse to fine.
    pub level_distances: Vec<f64>,
    /// Set when three consecutive inter-level distances fail to decrease.
    pub divergence_warning: bool,
}

/// Runs left-point sums at steps `2^{levels−1}, …, 2, 1` (capped by the grid)
/// and compares consecutive levels on the coarser level's nodes.
fn dyadic_sums<F>(t0: f64, dt: f64, n_nodes: usize, dim: usize, levels: usize, increment: F) -> Result<YoungIntegral>
where
    F: Fn(usize, usize, &mut [f64]) + Sync,
{
    if levels == 0 {
        return Err(invalid("at least one level is required"));
    }
    if n_nodes == 0 {
        return Err(invalid("empty grid"));
    }
    let n = n_nodes - 1;
    let mut level_steps: Vec<usize> = (0..levels).map(|l| 1usize << l.min(62)).filter(|&s| s <= n.max(1)).collect();
    level_steps.reverse();
    let sums: Vec<Vec<f64>> = level_steps.iter().map(|&s| level_sum(n, dim, s, &increment)).collect();
    let mut level_distances = Vec::with_capacity(sums.len().saturating_sub(1));
    for l in 1..sums.len() {
        let (coarse, fine) = (&sums[l - 1], &sums[l]);
        let step = level_steps[l - 1];
        let ratio = step / level_steps[l];
        let mut dist = 0.0_f64;
        for (m, chunk) in coarse.chunks(dim).enumerate() {
            let node = (m * step).min(n);
            let fine_index = if node == n { fine.len() / dim - 1 } else { m * ratio };
            for c in 0..dim {
                dist = dist.max((chunk[c] - fine[fine_index * dim + c]).abs());
            }
        }
        level_distances.push(dist);
    }
    let scale = sums.last().map_or(0.0, |s| s.iter().fold(0.0_f64, |a, v| a.max(v.abs()))).max(1.0);
    let divergence_warning = level_distances.windows(3).any(|w| w[0] > 1e-13 * scale && w[1] >= w[0] && w[2] >= w[1]);
    let path = GridPath::new(t0, dt, dim, sums.last().cloned().unwrap_or_default())?;
    Ok(YoungIntegral {
        path,
        error_estimate: level_distances.last().copied(),
        level_steps,
        level_distances,
        divergence_warning,
    })
}

/// Cumulative left-point sums over intervals of `step` grid steps; the last
/// interval ends at node `n`. Returns values at the partition nodes.
fn level_sum<F>(n: usize, dim: usize, step: usize, increment: &F) -> Vec<f64>
where
    F: Fn(usize, usize, &mut [f64]) + Sync,
{
    let count = n.div_ceil(step);
    let pieces: Vec<Vec<f64>> = (0..count)
        .into_par_iter()
        .map(|m| {
            let mut out = vec![0.0; dim];
            increment(m * step, ((m + 1) * step).min(n), &mut out);
            out
        })
        .collect();
    let mut acc = vec![0.0; (count + 1) * dim];
    for (m, piece) in pieces.iter().enumerate() {
        for c in 0..dim {
            acc[(m + 1) * dim + c] = acc[m * dim + c] + piece[c];
        }
    }
    acc
}

/// `∫ A(dr, θ_r)` as the limit of `Σ A_{uv}(θ_u)` over dyadic refinements.
pub fn nonlinear_young_integral<A: Germ + ?Sized>(germ: &A, theta: &GridPath, levels: usize) -> Result<YoungIntegral> {
    if germ.len() != theta.len() || germ.dim() != theta.dim() {
        return Err(Error::InvalidInput(format!(
            "germ on {} nodes × {} dims does not match path on {} nodes × {} dims",
            germ.len(),
            germ.dim(),
            theta.len(),
            theta.dim()
        )));
    }
    dyadic_sums(theta.t0(), theta.dt(), theta.len(), theta.dim(), levels, |u, v, out| {
        germ.eval(u, v, theta.point(u), out)
    })
}

/// `∫ B dW` as the limit of left-point sums `Σ B_u (W_v − W_u)`. `W` is
/// either scalar or of the same dimension as `B` (then componentwise).
pub fn linear_young_integral(b: &GridPath, w: &GridPath, levels: usize) -> Result<YoungIntegral> {
    if !(b.len() == w.len() && b.t0() == w.t0() && b.dt() == w.dt()) {
        return Err(Error::InvalidInput("integrand and integrator must share a grid".into()));
    }
    if w.dim() != 1 && w.dim() != b.dim() {
        return Err(Error::InvalidInput("integrator must be scalar or match the integrand dimension".into()));
    }
    let scalar = w.dim() == 1;
    dyadic_sums(b.t0(), b.dt(), b.len(), b.dim(), levels, |u, v, out| {
        for (c, o) in out.iter_mut().enumerate() {
            let wc = if scalar { 0 } else { c };
            *o = b.value(u, c) * (w.value(v, wc) - w.value(u, wc));
        }
    })
}

/// Deterministic sewing constant `1 / (1 − 2^{1−2/q})` for two `q`-variation
/// factors.
pub fn sewing_constant(q: f64) -> Result<f64> {
    if !(1.0..2.0).contains(&q) {
        return Err(invalid(format!("sewing requires 1 <= q < 2 (got {q})")));
    }
    Ok(1.0 / (1.0 - 2f64.powf(1.0 - 2.0 / q)))
}

/// Worst local sewing remainder relative to its bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SewingBoundCheck {
    /// `|∫_u^v A(dr,θ_r) − A_{uv}(θ_u)|` on the worst interval.
    pub lhs: f64,
    /// `2C · lipschitz · |v−u|^{1/q} · ‖θ‖_{q-var,[u,v]}` on the same interval.
    pub rhs: f64,
    pub worst_interval: (usize, usize),
    pub max_ratio: f64,
    pub intervals_checked: usize,
    pub holds: bool,
}

/// Checks the local remainder bound on every dyadic subinterval spanning at
/// least two grid steps, with the germ's claimed metadata.
pub fn sewing_bound_check<A: Germ + ?Sized>(
    germ: &A,
    theta: &GridPath,
    result: &YoungIntegral,
) -> Result<SewingBoundCheck> {
    let meta = germ.metadata();
    let constant = 2.0 * sewing_constant(meta.q)?;
    if !result.path.same_grid(theta) || germ.len() != theta.len() {
        return Err(Error::InvalidInput("result, germ and path must share a grid".into()));
    }
    let n = theta.len() - 1;
    let d = theta.dim();
    let mut intervals = Vec::new();
    let mut step = 2;
    while step <= n {
        let mut u = 0;
        while u < n {
            intervals.push((u, (u + step).min(n)));
            u += step;
        }
        step *= 2;
    }
    let rows: Vec<(f64, f64, (usize, usize))> = intervals
        .par_iter()
        .map(|&(u, v)| {
            let mut a = vec![0.0; d];
            germ.eval(u, v, theta.point(u), &mut a);
            let lhs =
                (0..d).map(|c| (result.path.value(v, c) - result.path.value(u, c) - a[c]).powi(2)).sum::<f64>().sqrt();
            let theta_norm = p_variation(theta, meta.q, (u, v), IncrementNorm::Euclidean).unwrap_or(f64::INFINITY);
            let span = (v - u) as f64 * theta.dt();
            let rhs = constant * meta.lipschitz * span.powf(1.0 / meta.q) * theta_norm;
            (lhs, rhs, (u, v))
        })
        .collect();
    let ratio = |l: f64, r: f64| {
        if l == 0.0 {
            0.0
        } else if r == 0.0 {
            f64::INFINITY
        } else {
            l / r
        }
    };
    let worst =
        rows.iter().copied().max_by(|a, b| ratio(a.0, a.1).total_cmp(&ratio(b.0, b.1))).unwrap_or((0.0, 0.0, (0, n)));
    let max_ratio = ratio(worst.0, worst.1);
    Ok(SewingBoundCheck {
        lhs: worst.0,
        rhs: worst.1,
        worst_interval: worst.2,
        max_ratio,
        intervals_checked: rows.len(),
        holds: max_ratio <= 1.0,
    })
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(points: usize) -> Vec<(f64, f64)> {
    let n = points;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Newton iteration for the i-th root of P_n on [−1, 1]
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            dp = n as f64 * (x * p - p0) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (1.0 - x), 0.5 * w));
    }
    out
}

pub const DEFAULT_GL_POINTS: usize = 8;

/// Output of [`linearize_difference`].
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    /// `V_t = Σ_{t_i < t} ∫_0^1 ∇A_{t_i t_{i+1}}(θ_i + x(θ̄_i − θ_i)) dx`,
    /// row-major `dim × dim` per node.
    pub v: GridPath,
    /// `∫A(dr, θ) − ∫A(dr, θ̄)` at grid resolution.
    pub difference: GridPath,
    /// `∫ dV (θ − θ̄)` at grid resolution.
    pub linearized: GridPath,
    /// Sup distance between the two sides.
    pub defect: f64,
}

/// Expresses the difference of two nonlinear integrals as a linear integral
/// against the path `V`.
pub fn linearize_difference<A: Germ + ?Sized>(
    germ: &A,
    theta: &GridPath,
    theta_bar: &GridPath,
    gl_points: usize,
) -> Result<Linearization> {
    if !theta.same_grid(theta_bar) || germ.len() != theta.len() || germ.dim() != theta.dim() {
        return Err(Error::InvalidInput("germ and both paths must share a grid and dimension".into()));
    }
    if gl_points == 0 {
        return Err(invalid("at least one quadrature point is required"));
    }
    let d = theta.dim();
    let n = theta.len();
    let rule = gauss_legendre(gl_points);
    let steps: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..n - 1)
        .into_par_iter()
        .map(|i| {
            let (a, b) = (theta.point(i), theta_bar.point(i));
            let mut dv = vec![0.0; d * d];
            let mut jac = vec![0.0; d * d];
            let mut x = vec![0.0; d];
            for &(node, weight) in &rule {
                for e in 0..d {
                    x[e] = a[e] + node * (b[e] - a[e]);
                }
                germ.jacobian(i, i + 1, &x, &mut jac)?;
                for (o, v) in dv.iter_mut().zip(&jac) {
                    *o += weight * v;
                }
            }
            let mut fa = vec![0.0; d];
            let mut fb = vec![0.0; d];
            germ.eval(i, i + 1, a, &mut fa);
            germ.eval(i, i + 1, b, &mut fb);
            let diff: Vec<f64> = fa.iter().zip(&fb).map(|(p, q)| p - q).collect();
            Ok((dv, diff))
        })
        .collect();
    let mut v = vec![0.0; n * d * d];
    let mut difference = vec![0.0; n * d];
    let mut linearized = vec![0.0; n * d];
    for (i, step) in steps.into_iter().enumerate() {
        let (dv, diff) = step?;
        for k in 0..d * d {
            v[(i + 1) * d * d + k] = v[i * d * d + k] + dv[k];
        }
        for c in 0..d {
            let applied: f64 = (0..d).map(|e| dv[c * d + e] * (theta.value(i, e) - theta_bar.value(i, e))).sum();
            difference[(i + 1) * d + c] = difference[i * d + c] + diff[c];
            linearized[(i + 1) * d + c] = linearized[i * d + c] + applied;
        }
    }
    let defect = difference.iter().zip(&linearized).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(Linearization {
        v: GridPath::new(theta.t0(), theta.dt(), d * d, v)?,
        difference: GridPath::new(theta.t0(), theta.dt(), d, difference)?,
        linearized: GridPath::new(theta.t0(), theta.dt(), d, linearized)?,
        defect,
    })
}

/// Constants of the a-priori envelope `C₁ exp(C₂ ‖A‖^{q(1+ε)}) (|y₀| + K)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GronwallConstants {
    pub c1: f64,
    pub c2: f64,
    pub eps: f64,
}

impl Default for GronwallConstants {
    fn default() -> Self {
        Self { c1: 2.0, c2: 2.0, eps: 0.01 }
    }
}

/// Envelope with `‖A‖_{q-var} = ω(0, T)^{1/q}` read off a control.
pub fn gronwall_bound(a_control: &Control, q: f64, k: f64, y0: f64) -> Result<f64> {
    if a_control.is_empty() {
        return Err(invalid("control is empty"));
    }
    let omega = a_control.eval(0, a_control.len() - 1);
    gronwall_bound_from_norm(omega.max(0.0).powf(1.0 / q), q, k, y0, GronwallConstants::default())
}

pub fn gronwall_bound_from_norm(a_norm: f64, q: f64, k: f64, y0: f64, constants: GronwallConstants) -> Result<f64> {
    if !(1.0..2.0).contains(&q) {
        return Err(invalid(format!("Gronwall envelope requires 1 <= q < 2 (got {q})")));
    }
    if !(a_norm >= 0.0) || !(k >= 0.0) {
        return Err(invalid("norms must be non-negative"));
    }
    let GronwallConstants { c1, c2, eps } = constants;
    Ok(c1 * (c2 * a_norm.powf(q * (1.0 + eps))).exp() * (y0.abs() + k))
}
