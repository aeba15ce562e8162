//! Solvers for `X = Γ(x₀ + ∫_0^· f(s, X_s) ds + w)` driven by a fixed noise
//! path `w`, with `Γ` the identity, the Skorokhod map of a box, or the
//! perturbation map.
//!
//! `picard_young` iterates on `θ = X − w` using the averaged-field germ
//! `A_{st}(x) = ∫_s^t f_r(w_r + x) dr`; `euler_split` advances with a
//! left-node drift and applies the one-step action of `Γ`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fbm::{FbmSampler, FbmSpec};
use crate::fields::{averaged_field, field_distance, DriftField};
use crate::paths::{p_variation, GridPath, IncrementNorm};
use crate::perturbed::{initial_value, perturb_sequential, perturb_step, relation_residual, PerturbParams};
use crate::skorokhod::{reflect, Domain};
use crate::young::{gronwall_bound_from_norm, nonlinear_young_integral, AveragedFieldGerm, Germ, GronwallConstants};

pub const DEFAULT_Q: f64 = 1.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GammaKind {
    Identity,
    Skorokhod { domain: Domain },
    Perturbed { params: PerturbParams },
}

impl GammaKind {
    fn dim(&self) -> Option<usize> {
        match self {
            GammaKind::Identity => None,
            GammaKind::Skorokhod { domain } => Some(domain.dim()),
            GammaKind::Perturbed { params } => Some(params.dim()),
        }
    }

    /// Applies the constraint to a whole input path.
    pub fn apply(&self, y: &GridPath) -> Result<GridPath> {
        match self {
            GammaKind::Identity => Ok(y.clone()),
            GammaKind::Skorokhod { domain } => Ok(reflect(y, domain)?.reflected),
            GammaKind::Perturbed { params } => perturb_sequential(y, params),
        }
    }

    /// Largest violation of the constraint by `x` relative to its input `y`.
    fn constraint_defect(&self, y: &GridPath, x: &GridPath) -> f64 {
        match self {
            GammaKind::Identity => 0.0,
            GammaKind::Skorokhod { domain } => {
                let mut worst = 0.0_f64;
                for i in 0..x.len() {
                    for (c, &v) in x.point(i).iter().enumerate() {
                        worst = worst.max(domain.lower()[c] - v).max(v - domain.upper()[c]);
                    }
                }
                worst
            }
            GammaKind::Perturbed { params } => (0..x.dim())
                .map(|c| {
                    relation_residual(
                        &y.component_values(c),
                        &x.component_values(c),
                        params.alpha()[c],
                        params.beta()[c],
                    )
                })
                .fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    PicardYoung,
    EulerSplit,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "picard_young" | "picard-young" => Ok(Scheme::PicardYoung),
            "euler_split" | "euler-split" => Ok(Scheme::EulerSplit),
            other => Err(invalid(format!("unknown scheme `{other}` (expected picard_young or euler_split)"))),
        }
    }
}

fn default_tol() -> f64 {
    1e-10
}

fn default_max_iter() -> usize {
    200
}

fn default_q() -> f64 {
    DEFAULT_Q
}

fn default_levels() -> usize {
    8
}

fn default_true() -> bool {
    true
}

/// Everything but the noise path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSpec {
    pub x0: Vec<f64>,
    pub gamma: GammaKind,
    pub field: DriftField,
    pub scheme: Scheme,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Variation exponent for diagnostics.
    #[serde(default = "default_q")]
    pub q: f64,
    /// Dyadic levels used for the sewing error estimate.
    #[serde(default = "default_levels")]
    pub levels: usize,
    /// Compute variation norms and the Gronwall envelope (costly on long grids).
    #[serde(default = "default_true")]
    pub diagnostics: bool,
}

impl SolveSpec {
    pub fn new(x0: Vec<f64>, gamma: GammaKind, field: DriftField, scheme: Scheme) -> Self {
        Self {
            x0,
            gamma,
            field,
            scheme,
            tol: default_tol(),
            max_iter: default_max_iter(),
            q: DEFAULT_Q,
            levels: default_levels(),
            diagnostics: true,
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn without_diagnostics(mut self) -> Self {
        self.diagnostics = false;
        self
    }

    fn validate(&self, noise: &GridPath) -> Result<()> {
        let d = self.x0.len();
        if d == 0 || self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInitialCondition("x0 must be a non-empty finite vector".into()));
        }
        if noise.dim() != d || self.field.dim() != d || self.gamma.dim().is_some_and(|g| g != d) {
            return Err(invalid(format!(
                "dimension mismatch: x0 {d}, noise {}, field {}, gamma {:?}",
                noise.dim(),
                self.field.dim(),
                self.gamma.dim()
            )));
        }
        self.field.require_evaluable()?;
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(invalid("tol must be positive and max_iter at least 1"));
        }
        if let GammaKind::Skorokhod { domain } = &self.gamma {
            let start: Vec<f64> = self.x0.iter().zip(noise.point(0)).map(|(a, b)| a + b).collect();
            if !domain.contains(&start) {
                return Err(Error::InvalidInitialCondition(format!("x0 + w(0) = {start:?} lies outside the domain")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub scheme: Scheme,
    pub q: f64,
    /// Sup-norm Picard updates, in order.
    pub updates: Vec<f64>,
    /// Constraint violation: distance outside the domain, or the perturbation
    /// relation residual.
    pub constraint_defect: f64,
    pub sewing_error_estimate: Option<f64>,
    pub divergence_warning: bool,
    pub theta_qvar: Option<f64>,
    /// Claimed `q`-variation norm of the averaged-field germ.
    pub germ_norm: Option<f64>,
    pub gronwall_k: Option<f64>,
    pub gronwall_envelope: Option<f64>,
    pub envelope_holds: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub x: GridPath,
    /// `θ = x − w`.
    pub theta: GridPath,
    pub iterations: usize,
    /// Sup-norm defect of the fixed-point relation.
    pub residual: f64,
    pub diagnostics: SolveDiagnostics,
}

/// Input path `x₀ + drift + w`; the sum is formed in this order so that a
/// zero drift reproduces `x₀ + w` bit for bit.
fn input_path(x0: &[f64], drift: &GridPath, noise: &GridPath) -> Result<GridPath> {
    let d = x0.len();
    let values = drift.values().iter().zip(noise.values()).enumerate().map(|(k, (a, w))| (x0[k % d] + a) + w).collect();
    GridPath::new(noise.t0(), noise.dt(), d, values)
}

/// Drift integral `∫ A(dr, θ_r)` at grid resolution.
fn drift_integral(germ: &AveragedFieldGerm, theta: &GridPath) -> Result<GridPath> {
    Ok(nonlinear_young_integral(germ, theta, 1)?.path)
}

pub fn solve(spec: &SolveSpec, noise: &GridPath) -> Result<SolveResult> {
    spec.validate(noise)?;
    let germ = AveragedFieldGerm::new(noise.clone(), spec.field.clone())?;
    let (x, y, iterations, residual, updates) = match spec.scheme {
        Scheme::PicardYoung => picard(spec, noise, &germ)?,
        Scheme::EulerSplit => euler(spec, noise)?,
    };
    let theta = x.sub(noise)?;
    let diagnostics = diagnose(spec, noise, &germ, &x, &y, &theta, updates)?;
    Ok(SolveResult { x, theta, iterations, residual, diagnostics })
}

type SchemeOutput = (GridPath, GridPath, usize, f64, Vec<f64>);

fn picard(spec: &SolveSpec, noise: &GridPath, germ: &AveragedFieldGerm) -> Result<SchemeOutput> {
    let zero = GridPath::constant(noise.t0(), noise.dt(), noise.len(), &vec![0.0; noise.dim()])?;
    let mut y = input_path(&spec.x0, &zero, noise)?;
    let mut x = spec.gamma.apply(&y)?;
    let mut theta = x.sub(noise)?;
    let mut updates = Vec::new();
    for iteration in 1..=spec.max_iter {
        let drift = drift_integral(germ, &theta)?;
        y = input_path(&spec.x0, &drift, noise)?;
        let next = spec.gamma.apply(&y)?;
        let update = next.sup_distance(&x)?;
        updates.push(update);
        x = next;
        theta = x.sub(noise)?;
        if update < spec.tol {
            // one more evaluation of the relation at the accepted iterate
            let check = spec.gamma.apply(&input_path(&spec.x0, &drift_integral(germ, &theta)?, noise)?)?;
            let residual = check.sup_distance(&x)?;
            if residual <= spec.tol {
                return Ok((x, y, iteration, residual, updates));
            }
        }
    }
    let residual = *updates.last().unwrap_or(&f64::INFINITY);
    Err(Error::NonConvergence { iterations: spec.max_iter, residual })
}

fn euler(spec: &SolveSpec, noise: &GridPath) -> Result<SchemeOutput> {
    let d = noise.dim();
    let n = noise.len();
    let dt = noise.dt();
    let mut drift = vec![0.0; n * d];
    let mut x = vec![0.0; n * d];
    let mut y = vec![0.0; n * d];
    let mut f = vec![0.0; d];
    let mut hi = vec![0.0; d];
    let mut lo = vec![0.0; d];
    for c in 0..d {
        y[c] = (spec.x0[c] + 0.0) + noise.value(0, c);
        x[c] = match &spec.gamma {
            GammaKind::Perturbed { params } => initial_value(y[c], params.alpha()[c], params.beta()[c]),
            _ => y[c],
        };
        hi[c] = x[c];
        lo[c] = x[c];
    }
    for i in 0..n - 1 {
        spec.field.eval_unchecked(&x[i * d..(i + 1) * d], noise.time(i), &mut f);
        for c in 0..d {
            let k = (i + 1) * d + c;
            drift[k] = drift[k - d] + f[c] * dt;
            y[k] = (spec.x0[c] + drift[k]) + noise.value(i + 1, c);
            x[k] = match &spec.gamma {
                GammaKind::Identity => y[k],
                GammaKind::Skorokhod { domain } => domain.clamp(c, x[k - d] + (y[k] - y[k - d])),
                GammaKind::Perturbed { params } => {
                    let v = perturb_step(y[k], hi[c], lo[c], params.alpha()[c], params.beta()[c]);
                    hi[c] = hi[c].max(v);
                    lo[c] = lo[c].min(v);
                    v
                }
            };
        }
    }
    let x = GridPath::new(noise.t0(), dt, d, x)?;
    let y = GridPath::new(noise.t0(), dt, d, y)?;
    // defect of the discrete relation, re-evaluated from x
    let mut again = vec![0.0; n * d];
    for i in 0..n - 1 {
        spec.field.eval_unchecked(x.point(i), noise.time(i), &mut f);
        for c in 0..d {
            again[(i + 1) * d + c] = again[i * d + c] + f[c] * dt;
        }
    }
    let rebuilt = spec.gamma.apply(&input_path(&spec.x0, &GridPath::new(noise.t0(), dt, d, again)?, noise)?)?;
    let residual = rebuilt.sup_distance(&x)?;
    Ok((x, y, 1, residual, Vec::new()))
}

fn diagnose(
    spec: &SolveSpec,
    noise: &GridPath,
    germ: &AveragedFieldGerm,
    x: &GridPath,
    y: &GridPath,
    theta: &GridPath,
    updates: Vec<f64>,
) -> Result<SolveDiagnostics> {
    let mut diag = SolveDiagnostics {
        scheme: spec.scheme,
        q: spec.q,
        updates,
        constraint_defect: spec.gamma.constraint_defect(y, x),
        sewing_error_estimate: None,
        divergence_warning: false,
        theta_qvar: None,
        germ_norm: None,
        gronwall_k: None,
        gronwall_envelope: None,
        envelope_holds: None,
    };
    if !spec.diagnostics {
        return Ok(diag);
    }
    let sewn = nonlinear_young_integral(germ, theta, spec.levels.max(1))?;
    diag.sewing_error_estimate = sewn.error_estimate;
    diag.divergence_warning = sewn.divergence_warning;
    let window = theta.full_window();
    let theta_qvar = p_variation(theta, spec.q, window, IncrementNorm::Euclidean)?;
    // the germ is Lipschitz in time, so its q-variation norm is at most L·T^{1/q}
    let germ_norm = germ.metadata().lipschitz * (noise.horizon() - noise.t0()).powf(1.0 / spec.q);
    // K = ‖θ − ∫Ã(dr,θ)‖ with Ã(x) = A(x) − A(0)
    let at_zero = averaged_field(noise, &spec.field, &[vec![0.0; noise.dim()]])?;
    let d = noise.dim();
    let mut remainder = theta.sub(&sewn.path)?.into_values();
    for i in 0..noise.len() {
        for c in 0..d {
            remainder[i * d + c] += at_zero.value(i, 0)[c];
        }
    }
    let remainder = GridPath::new(noise.t0(), noise.dt(), d, remainder)?;
    let k = p_variation(&remainder, spec.q, window, IncrementNorm::Euclidean)?;
    let y0 = theta.point(0).iter().map(|v| v * v).sum::<f64>().sqrt();
    if spec.q < 2.0 {
        let envelope = gronwall_bound_from_norm(germ_norm, spec.q, k, y0, GronwallConstants::default())?;
        diag.gronwall_envelope = Some(envelope);
        diag.envelope_holds = Some(theta_qvar <= envelope);
    }
    diag.theta_qvar = Some(theta_qvar);
    diag.germ_norm = Some(germ_norm);
    diag.gronwall_k = Some(k);
    Ok(diag)
}

/// Sup distance between the two schemes on the same noise.
pub fn cross_scheme_check(spec: &SolveSpec, noise: &GridPath) -> Result<f64> {
    let quiet = spec.clone().without_diagnostics();
    let a = solve(&quiet.clone().with_scheme(Scheme::PicardYoung), noise)?;
    let b = solve(&quiet.with_scheme(Scheme::EulerSplit), noise)?;
    a.x.sup_distance(&b.x)
}

/// Monte Carlo comparison of two solves on shared noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityEstimate {
    /// `E[sup_t |X¹_t − X²_t|^m]^{1/m}`.
    pub lhs: f64,
    /// `|x¹₀ − x²₀| + ‖f¹ − f²‖` on the reference window.
    pub rhs_scale: f64,
    pub x0_distance: f64,
    pub field_distance: f64,
    pub m: u32,
    pub samples: usize,
}

/// Reference window for field distances: one period of the synthesized series.
pub const FIELD_WINDOW: (f64, f64) = (-std::f64::consts::PI, std::f64::consts::PI);
pub const FIELD_WINDOW_POINTS: usize = 4097;

pub fn stability_experiment(
    spec1: &SolveSpec,
    spec2: &SolveSpec,
    noise: &FbmSpec,
    m: u32,
    samples: usize,
) -> Result<StabilityEstimate> {
    if samples < 2 {
        return Err(Error::InsufficientData(format!("stability estimate needs >= 2 samples (got {samples})")));
    }
    if m == 0 {
        return Err(invalid("moment order m must be at least 1"));
    }
    if spec1.gamma != spec2.gamma || spec1.scheme != spec2.scheme || spec1.x0.len() != spec2.x0.len() {
        return Err(invalid("stability specs may differ only in x0 and the field"));
    }
    let sampler = FbmSampler::new(noise.clone())?;
    let a = spec1.clone().without_diagnostics();
    let b = spec2.clone().without_diagnostics();
    let distances: Vec<f64> = (0..samples as u64)
        .into_par_iter()
        .map(|k| {
            let w = sampler.sample(k);
            let x1 = solve(&a, &w)?.x;
            let x2 = solve(&b, &w)?.x;
            x1.sup_distance(&x2)
        })
        .collect::<Result<_>>()?;
    let moment = distances.iter().map(|d| d.powi(m as i32)).sum::<f64>() / samples as f64;
    let x0_distance = spec1.x0.iter().zip(&spec2.x0).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    let field_distance = field_distance(&spec1.field, &spec2.field, FIELD_WINDOW, FIELD_WINDOW_POINTS)?;
    Ok(StabilityEstimate {
        lhs: moment.powf(1.0 / m as f64),
        rhs_scale: x0_distance + field_distance,
        x0_distance,
        field_distance,
        m,
        samples,
    })
}
