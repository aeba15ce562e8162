//! The perturbation map `w ↦ f` solving
//! `f(t) = w(t) + α·max_{s≤t} f(s) + β·min_{s≤t} f(s)` componentwise.
//!
//! After the affine reduction to `w(0) = 0`, the running maximum `m⁺` of the
//! solution is the fixed point of
//!
//! ```text
//! φ⁺(w,m)(t) = 1/(1−α) · sup_{s≤t} ( w(s) − β/(1−β) · sup_{u≤s} (−w(u) − α m(u)) )
//! ```
//!
//! which contracts in the sup norm with rate `ρ(α,β) = |αβ| / ((1−α)(1−β))`.
//! The running minimum is then read off as
//! `m⁻(t) = 1/(1−β) · inf_{s≤t} (w(s) + α m⁺(s))`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::paths::{p_variation, prefix_max, prefix_min, running_max, GridPath, IncrementNorm};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// Updates smaller than this are treated as round-off when estimating
/// contraction factors.
const RATIO_FLOOR: f64 = 1e-12;

/// Contraction rate `|αβ| / ((1−α)(1−β))`.
pub fn rho(alpha: f64, beta: f64) -> Result<f64> {
    if !(alpha < 1.0) || !(beta < 1.0) || !alpha.is_finite() || !beta.is_finite() {
        return Err(invalid(format!("perturbation weights must satisfy α < 1 and β < 1 (got α={alpha}, β={beta})")));
    }
    Ok((alpha * beta).abs() / ((1.0 - alpha) * (1.0 - beta)))
}

/// Per-coordinate weights `(αᵢ, βᵢ)` with `ρ(αᵢ, βᵢ) < 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct PerturbParams {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    rho: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

impl TryFrom<RawParams> for PerturbParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        PerturbParams::new(raw.alpha, raw.beta)
    }
}

impl From<PerturbParams> for RawParams {
    fn from(p: PerturbParams) -> Self {
        RawParams { alpha: p.alpha, beta: p.beta }
    }
}

impl PerturbParams {
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        if alpha.len() != beta.len() || alpha.is_empty() {
            return Err(invalid("α and β must be non-empty and of equal length"));
        }
        let rho = alpha.iter().zip(&beta).map(|(&a, &b)| rho(a, b)).collect::<Result<Vec<_>>>()?;
        if let Some(i) = rho.iter().position(|&r| r >= 1.0) {
            return Err(invalid(format!("component {i}: ρ(α,β) = {} is not < 1; the map is not contractive", rho[i])));
        }
        Ok(Self { alpha, beta, rho })
    }

    pub fn uniform(dim: usize, alpha: f64, beta: f64) -> Result<Self> {
        Self::new(vec![alpha; dim], vec![beta; dim])
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }
}

/// `φ⁺(w, m)` on node sequences.
pub fn phi_plus(w: &[f64], m: &[f64], alpha: f64, beta: f64) -> Vec<f64> {
    let inner: Vec<f64> = w.iter().zip(m).map(|(w, m)| -w - alpha * m).collect();
    let inner = prefix_max(&inner);
    let outer: Vec<f64> = w.iter().zip(&inner).map(|(w, s)| w - beta / (1.0 - beta) * s).collect();
    prefix_max(&outer).into_iter().map(|v| v / (1.0 - alpha)).collect()
}

/// `φ⁻(w, m)(t) = 1/(1−β) · inf_{s≤t} ( w(s) + α/(1−α) · sup_{u≤s} (w(u) + β m(u)) )`.
pub fn phi_minus(w: &[f64], m: &[f64], alpha: f64, beta: f64) -> Vec<f64> {
    let inner: Vec<f64> = w.iter().zip(m).map(|(w, m)| w + beta * m).collect();
    let inner = prefix_max(&inner);
    let outer: Vec<f64> = w.iter().zip(&inner).map(|(w, s)| w + alpha / (1.0 - alpha) * s).collect();
    prefix_min(&outer).into_iter().map(|v| v / (1.0 - beta)).collect()
}

/// One step of the perturbation map: the unique `f` with
/// `f = y + α·max(run_max, f) + β·min(run_min, f)`.
pub fn perturb_step(y: f64, run_max: f64, run_min: f64, alpha: f64, beta: f64) -> f64 {
    let candidate = y + alpha * run_max + beta * run_min;
    if candidate > run_max {
        (y + beta * run_min) / (1.0 - alpha)
    } else if candidate < run_min {
        (y + alpha * run_max) / (1.0 - beta)
    } else {
        candidate
    }
}

/// Solves the relation node by node with [`perturb_step`]. On the grid this
/// is exact and agrees with the fixed point of [`perturb`] to round-off.
pub fn perturb_sequential(path: &GridPath, params: &PerturbParams) -> Result<GridPath> {
    if params.dim() != path.dim() {
        return Err(Error::InvalidInput(format!(
            "parameters have dimension {} but the path has {}",
            params.dim(),
            path.dim()
        )));
    }
    let d = path.dim();
    let mut out = path.values().to_vec();
    for c in 0..d {
        let (a, b) = (params.alpha[c], params.beta[c]);
        let mut f = initial_value(out[c], a, b);
        out[c] = f;
        let (mut hi, mut lo) = (f, f);
        for i in 1..path.len() {
            f = perturb_step(out[i * d + c], hi, lo, a, b);
            out[i * d + c] = f;
            hi = hi.max(f);
            lo = lo.min(f);
        }
    }
    GridPath::new(path.t0(), path.dt(), d, out)
}

/// Value at time 0: `f(0) = w(0) / (1 − α − β)`.
pub fn initial_value(w0: f64, alpha: f64, beta: f64) -> f64 {
    w0 / (1.0 - alpha - beta)
}

/// Diagnostics of the fixed-point iteration for one coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentReport {
    pub rho: f64,
    pub iterations: usize,
    /// Sup-norm size of each φ⁺ update.
    pub updates: Vec<f64>,
    /// Largest observed ratio of successive updates (above round-off).
    pub max_contraction: Option<f64>,
    /// Iteration count predicted by the contraction rate from the first update.
    pub budget: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbResult {
    pub f: GridPath,
    /// Largest iteration count over components.
    pub iterations: usize,
    /// Sup-norm defect of the defining relation at the nodes.
    pub residual: f64,
    pub components: Vec<ComponentReport>,
}

/// Sup-norm defect of `f = w + α max f + β min f` for one coordinate.
pub fn relation_residual(w: &[f64], f: &[f64], alpha: f64, beta: f64) -> f64 {
    let hi = prefix_max(f);
    let lo = prefix_min(f);
    (0..w.len()).map(|i| (f[i] - w[i] - alpha * hi[i] - beta * lo[i]).abs()).fold(0.0, f64::max)
}

/// Iterations needed to shrink `first_update` below `tol·(1−ρ)` at rate `ρ`.
pub fn iteration_budget(rho: f64, tol: f64, first_update: f64) -> usize {
    if rho == 0.0 || first_update <= tol * (1.0 - rho) {
        return 1;
    }
    let k = ((tol * (1.0 - rho) / first_update).ln() / rho.ln()).ceil();
    k as usize + 2
}

fn reconstruct(w: &[f64], m_plus: &[f64], alpha: f64, beta: f64, shift: f64) -> Vec<f64> {
    let inner: Vec<f64> = w.iter().zip(m_plus).map(|(w, m)| w + alpha * m).collect();
    let m_minus: Vec<f64> = prefix_min(&inner).into_iter().map(|v| v / (1.0 - beta)).collect();
    (0..w.len()).map(|i| w[i] + alpha * m_plus[i] + beta * m_minus[i] + shift).collect()
}

fn solve_component(
    w: &[f64],
    alpha: f64,
    beta: f64,
    rho: f64,
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, ComponentReport) {
    let shift = initial_value(w[0], alpha, beta);
    let reduced: Vec<f64> = w.iter().map(|v| v - w[0]).collect();
    let mut m = vec![0.0; w.len()];
    let mut updates = Vec::new();
    let mut iterations = 0;
    let mut f;
    let mut residual;
    loop {
        let next = phi_plus(&reduced, &m, alpha, beta);
        let update = next.iter().zip(&m).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        m = next;
        iterations += 1;
        updates.push(update);
        // when ρ = 0 the map ignores m and one application is exact
        let settled = rho == 0.0 || update <= tol * (1.0 - rho);
        if settled || iterations >= max_iter {
            f = reconstruct(&reduced, &m, alpha, beta, shift);
            residual = relation_residual(w, &f, alpha, beta);
            if residual <= tol || iterations >= max_iter || update == 0.0 {
                break;
            }
        }
    }
    let max_contraction = updates.windows(2).filter(|u| u[0] > RATIO_FLOOR).map(|u| u[1] / u[0]).reduce(f64::max);
    let budget = iteration_budget(rho, tol, updates[0]);
    let report = ComponentReport { rho, iterations, updates, max_contraction, budget, residual };
    (f, report)
}

fn check_tolerance(tol: f64, max_iter: usize) -> Result<()> {
    if !(tol > 0.0) {
        return Err(invalid(format!("tolerance must be positive (got {tol})")));
    }
    if max_iter == 0 {
        return Err(invalid("max_iter must be at least 1"));
    }
    Ok(())
}

/// Solves the perturbed relation by iterating `φ⁺` on the running maximum.
pub fn perturb(path: &GridPath, params: &PerturbParams, tol: f64, max_iter: usize) -> Result<PerturbResult> {
    check_tolerance(tol, max_iter)?;
    if params.dim() != path.dim() {
        return Err(Error::InvalidInput(format!(
            "parameters have dimension {} but the path has {}",
            params.dim(),
            path.dim()
        )));
    }
    let mut components = Vec::with_capacity(path.dim());
    let mut solved = Vec::with_capacity(path.dim());
    for c in 0..path.dim() {
        let w = path.component_values(c);
        let (f, report) = solve_component(&w, params.alpha[c], params.beta[c], params.rho[c], tol, max_iter);
        solved.push(f);
        components.push(report);
    }
    let residual = components.iter().map(|r| r.residual).fold(0.0, f64::max);
    let iterations = components.iter().map(|r| r.iterations).max().unwrap_or(0);
    if residual > tol {
        return Err(Error::NonConvergence { iterations, residual });
    }
    Ok(PerturbResult { f: GridPath::from_components(path.t0(), path.dt(), &solved)?, iterations, residual, components })
}

/// Cross-check mode: iterates `φ⁺` and `φ⁻` independently and rebuilds `f`
/// from both running extrema. Returns the solution and the sup distance to
/// the running minimum implied by the `φ⁺` fixed point.
pub fn perturb_joint(path: &GridPath, params: &PerturbParams, tol: f64, max_iter: usize) -> Result<(GridPath, f64)> {
    check_tolerance(tol, max_iter)?;
    let mut solved = Vec::with_capacity(path.dim());
    let mut gap = 0.0_f64;
    for c in 0..path.dim() {
        let (alpha, beta) = (params.alpha[c], params.beta[c]);
        let w = path.component_values(c);
        let shift = initial_value(w[0], alpha, beta);
        let reduced: Vec<f64> = w.iter().map(|v| v - w[0]).collect();
        let mut hi = vec![0.0; w.len()];
        let mut lo = vec![0.0; w.len()];
        let mut iterations = 0;
        loop {
            let next_hi = phi_plus(&reduced, &hi, alpha, beta);
            let next_lo = phi_minus(&reduced, &lo, alpha, beta);
            let update =
                next_hi.iter().zip(&hi).chain(next_lo.iter().zip(&lo)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            hi = next_hi;
            lo = next_lo;
            iterations += 1;
            if update <= tol * (1.0 - params.rho[c]) || update == 0.0 {
                break;
            }
            if iterations >= max_iter {
                return Err(Error::NonConvergence { iterations, residual: update });
            }
        }
        let implied: Vec<f64> = {
            let inner: Vec<f64> = reduced.iter().zip(&hi).map(|(w, m)| w + alpha * m).collect();
            prefix_min(&inner).into_iter().map(|v| v / (1.0 - beta)).collect()
        };
        gap = gap.max(implied.iter().zip(&lo).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        solved.push((0..w.len()).map(|i| reduced[i] + alpha * hi[i] + beta * lo[i] + shift).collect());
    }
    Ok((GridPath::from_components(path.t0(), path.dt(), &solved)?, gap))
}

/// Outcome of comparing p-variation distances of running maxima and inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzCheck {
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub holds: bool,
}

/// Relative slack allowed in [`running_sup_lipschitz_check`].
pub const LIPSCHITZ_SLACK: f64 = 1e-12;

/// Checks `‖y¹ − y²‖_{p-var} ≤ ‖w¹ − w²‖_{p-var}` for running maxima `yⁱ` of
/// paths starting at 0, componentwise.
pub fn running_sup_lipschitz_check(w1: &GridPath, w2: &GridPath, p: f64) -> Result<LipschitzCheck> {
    if !w1.same_grid(w2) {
        return Err(Error::InvalidInput("paths do not share a grid".into()));
    }
    if w1.point(0).iter().chain(w2.point(0)).any(|&v| v != 0.0) {
        return Err(Error::InvalidInput("running-sup comparison needs paths starting at 0".into()));
    }
    let dy = running_max(w1).sub(&running_max(w2))?;
    let dw = w1.sub(w2)?;
    let window = w1.full_window();
    let mut lhs = Vec::with_capacity(w1.dim());
    let mut rhs = Vec::with_capacity(w1.dim());
    for c in 0..w1.dim() {
        lhs.push(p_variation(&dy, p, window, IncrementNorm::Component(c))?);
        rhs.push(p_variation(&dw, p, window, IncrementNorm::Component(c))?);
    }
    let holds = lhs.iter().zip(&rhs).all(|(l, r)| *l <= r * (1.0 + LIPSCHITZ_SLACK));
    Ok(LipschitzCheck { lhs, rhs, holds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rho_examples() {
        assert_eq!(rho(0.0, 0.7).unwrap(), 0.0);
        assert_relative_eq!(rho(0.5, -1.0).unwrap(), 0.5, epsilon = 1e-15);
        assert_relative_eq!(rho(0.5, 0.5).unwrap(), 1.0, epsilon = 1e-15);
        assert!(PerturbParams::uniform(1, 0.5, 0.5).is_err());
        assert!(rho(1.0, 0.0).is_err());
        assert!(rho(0.0, 1.2).is_err());
    }

    #[test]
    fn unperturbed_map_is_identity_in_one_iteration() {
        let w = GridPath::from_fn(0.0, 1.0, 64, |t| (7.0 * t).sin()).unwrap();
        let r = perturb(&w, &PerturbParams::uniform(1, 0.0, 0.0).unwrap(), DEFAULT_TOL, 100).unwrap();
        assert_eq!(r.iterations, 1);
        assert!(r.f.sup_distance(&w).unwrap() < 1e-15);
    }

    #[test]
    fn increasing_input_only_feels_alpha() {
        for (a, b) in [(0.3, -0.5), (-0.8, 0.4), (0.6, 0.2)] {
            let w = GridPath::from_fn(0.0, 1.0, 128, |t| t).unwrap();
            let r = perturb(&w, &PerturbParams::uniform(1, a, b).unwrap(), DEFAULT_TOL, 1000).unwrap();
            for i in 0..w.len() {
                assert_relative_eq!(r.f.value(i, 0), w.time(i) / (1.0 - a), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn constant_input() {
        let w = GridPath::constant(0.0, 0.1, 11, &[2.0]).unwrap();
        let r = perturb(&w, &PerturbParams::uniform(1, 0.3, -0.6).unwrap(), DEFAULT_TOL, 100).unwrap();
        for i in 0..w.len() {
            assert_relative_eq!(r.f.value(i, 0), 2.0 / 1.3, epsilon = 1e-14);
        }
    }

    #[test]
    fn step_map_matches_fixed_point() {
        let w = GridPath::from_fn(0.0, 1.0, 300, |t| (9.0 * t).sin() - 0.5 * (23.0 * t).cos() + 0.5).unwrap();
        let (a, b) = (0.45, -0.7);
        let r = perturb(&w, &PerturbParams::uniform(1, a, b).unwrap(), DEFAULT_TOL, 1000).unwrap();
        let xs = w.component_values(0);
        let mut f = initial_value(xs[0], a, b);
        let (mut hi, mut lo) = (f, f);
        assert_relative_eq!(r.f.value(0, 0), f, epsilon = 1e-12);
        for (i, &y) in xs.iter().enumerate().skip(1) {
            f = perturb_step(y, hi, lo, a, b);
            hi = hi.max(f);
            lo = lo.min(f);
            assert_relative_eq!(r.f.value(i, 0), f, epsilon = 1e-9);
        }
    }

    #[test]
    fn sequential_solver_matches_iteration() {
        let w = GridPath::from_fn(0.0, 1.0, 500, |t| (13.0 * t).sin() + 0.4 * (3.0 * t).cos()).unwrap();
        let params = PerturbParams::uniform(1, -0.6, 0.5).unwrap();
        let a = perturb(&w, &params, DEFAULT_TOL, 1000).unwrap();
        let b = perturb_sequential(&w, &params).unwrap();
        assert!(a.f.sup_distance(&b).unwrap() < 1e-10);
        assert!(relation_residual(&w.component_values(0), &b.component_values(0), -0.6, 0.5) < 1e-13);
    }

    #[test]
    fn joint_iteration_agrees() {
        let w = GridPath::from_fn(0.0, 1.0, 200, |t| (5.0 * t).sin() * t - 0.3 * (31.0 * t).sin()).unwrap();
        let params = PerturbParams::uniform(1, -0.9, 0.6).unwrap();
        let single = perturb(&w, &params, DEFAULT_TOL, 5000).unwrap();
        let (joint, gap) = perturb_joint(&w, &params, DEFAULT_TOL, 5000).unwrap();
        assert!(gap < 1e-8, "gap {gap}");
        assert!(single.f.sup_distance(&joint).unwrap() < 1e-8);
    }

    #[test]
    fn lipschitz_check_guards() {
        let w = GridPath::from_fn(0.0, 1.0, 8, |t| t).unwrap();
        let other = GridPath::from_fn(0.0, 2.0, 8, |t| t).unwrap();
        assert!(running_sup_lipschitz_check(&w, &other, 2.0).is_err());
        let shifted = w.shift(&[1.0]);
        assert!(running_sup_lipschitz_check(&shifted, &shifted, 2.0).is_err());
        let c = running_sup_lipschitz_check(&w, &w, 1.5).unwrap();
        assert_eq!(c.lhs, vec![0.0]);
        assert!(c.holds);
    }

    #[test]
    fn bumped_node() {
        let w1 = GridPath::from_scalar(0.0, 0.1, vec![0.0, 0.4, 0.1, 0.7, 0.2, 0.9]).unwrap();
        let mut v = w1.values().to_vec();
        v[3] += 0.5;
        let w2 = GridPath::from_scalar(0.0, 0.1, v).unwrap();
        for p in [1.0, 1.5, 2.0] {
            let c = running_sup_lipschitz_check(&w1, &w2, p).unwrap();
            assert!(c.holds, "{c:?}");
        }
    }

    #[test]
    fn budget_is_one_for_rho_zero() {
        assert_eq!(iteration_budget(0.0, 1e-10, 3.0), 1);
        assert!(iteration_budget(0.5, 1e-10, 1.0) >= 34);
    }
}
