//! Drift fields with prescribed Hölder regularity and their averages along a
//! path, `T^w f_t(x) = ∫_0^t f_r(w_r + x) dr`.
//!
//! Rough fields are lacunary cosine series `Σ_j 2^{−jα} cos(2^j x + φ_j)`,
//! one series per coordinate (component `c` of the field depends on `x_c`
//! only). Such a series is `C^α` for `α ∈ (0, 1)`; for `α ≤ 0` it only
//! defines a distribution and is evaluable after Gaussian mollification,
//! which damps the mode at frequency `k` by `exp(−ε k²/2)`.

use std::f64::consts::TAU;
use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::paths::GridPath;
use crate::rng::{derive_seed, replica_rng};
use crate::stats::{linear_fit, LinearFit};

/// Largest table (nodes × x points × dim) built by [`averaged_field`].
pub const MAX_TABLE_ENTRIES: usize = 50_000_000;

/// One term `amplitude · cos(frequency · x + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourierMode {
    pub frequency: f64,
    pub amplitude: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FieldForm {
    /// `f(x) = value`.
    Constant { value: Vec<f64> },
    /// `f(x) = matrix · x + offset`, matrix given row by row.
    Affine { matrix: Vec<Vec<f64>>, offset: Vec<f64> },
    /// Component `c` is `Σ_modes a cos(k x_c + φ)`.
    FourierSeries { components: Vec<Vec<FourierMode>> },
}

/// Smooth time factor `m(r) = mean + amplitude · cos(frequency · r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeModulation {
    pub mean: f64,
    pub amplitude: f64,
    pub frequency: f64,
}

impl TimeModulation {
    pub fn eval(&self, r: f64) -> f64 {
        self.mean + self.amplitude * (self.frequency * r).cos()
    }

    fn sup(&self) -> f64 {
        self.mean.abs() + self.amplitude.abs()
    }
}

/// A drift field `f_r(x) = f(x) · m(r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftField {
    #[serde(flatten)]
    pub form: FieldForm,
    /// Nominal Hölder exponent. Closed forms are smooth and carry 1.
    pub target_alpha: f64,
    #[serde(default)]
    pub mollification_eps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_modulation: Option<TimeModulation>,
}

/// Lacunary series with modes `j = 0..=bandwidth`, amplitude `2^{−jα}` at
/// frequency `2^j` and independent uniform phases, one series per coordinate.
pub fn synthesize_field(target_alpha: f64, seed: u64, bandwidth: u32, dim: usize) -> Result<DriftField> {
    if !target_alpha.is_finite() {
        return Err(invalid("target_alpha must be finite"));
    }
    if dim == 0 {
        return Err(invalid("field dimension must be positive"));
    }
    if bandwidth > 40 {
        return Err(invalid(format!("bandwidth {bandwidth} exceeds the supported maximum of 40")));
    }
    let phase_seed = derive_seed(seed, "field-phases");
    let components = (0..dim)
        .map(|c| {
            let mut rng = replica_rng(phase_seed, c as u64);
            (0..=bandwidth)
                .map(|j| {
                    let k = 2f64.powi(j as i32);
                    FourierMode { frequency: k, amplitude: k.powf(-target_alpha), phase: rng.random::<f64>() * TAU }
                })
                .collect()
        })
        .collect();
    Ok(DriftField {
        form: FieldForm::FourierSeries { components },
        target_alpha,
        mollification_eps: 0.0,
        seed: Some(seed),
        bandwidth: Some(bandwidth),
        time_modulation: None,
    })
}

/// Gaussian smoothing by `eps`; repeated smoothing accumulates exactly.
pub fn mollify(field: &DriftField, eps: f64) -> Result<DriftField> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(invalid(format!("mollification scale must be positive (got {eps})")));
    }
    let mut out = field.clone();
    out.mollification_eps += eps;
    Ok(out)
}

/// Splits a series into modes with frequency `≤ 2^level` and the rest.
/// Closed forms are smooth and go entirely into the low part.
pub fn frequency_truncate(field: &DriftField, level: u32) -> (DriftField, DriftField) {
    let cut = 2f64.powi(level as i32);
    let mut low = field.clone();
    let mut high = field.clone();
    match &field.form {
        FieldForm::FourierSeries { components } => {
            let split = |keep: &dyn Fn(f64) -> bool| FieldForm::FourierSeries {
                components: components
                    .iter()
                    .map(|modes| modes.iter().copied().filter(|m| keep(m.frequency)).collect())
                    .collect(),
            };
            low.form = split(&|k| k <= cut);
            high.form = split(&|k| k > cut);
        }
        _ => high.form = FieldForm::FourierSeries { components: vec![Vec::new(); field.dim()] },
    }
    (low, high)
}

impl DriftField {
    pub fn constant(value: Vec<f64>) -> Self {
        Self::closed(FieldForm::Constant { value })
    }

    pub fn affine(matrix: Vec<Vec<f64>>, offset: Vec<f64>) -> Result<Self> {
        let d = offset.len();
        if d == 0 || matrix.len() != d || matrix.iter().any(|row| row.len() != d) {
            return Err(invalid("affine field needs a square matrix matching the offset length"));
        }
        Ok(Self::closed(FieldForm::Affine { matrix, offset }))
    }

    /// Scalar series with the given modes.
    pub fn from_modes(modes: Vec<FourierMode>, target_alpha: f64) -> Self {
        Self {
            form: FieldForm::FourierSeries { components: vec![modes] },
            target_alpha,
            mollification_eps: 0.0,
            seed: None,
            bandwidth: None,
            time_modulation: None,
        }
    }

    fn closed(form: FieldForm) -> Self {
        Self { form, target_alpha: 1.0, mollification_eps: 0.0, seed: None, bandwidth: None, time_modulation: None }
    }

    pub fn with_time_modulation(mut self, modulation: TimeModulation) -> Self {
        self.time_modulation = Some(modulation);
        self
    }

    pub fn dim(&self) -> usize {
        match &self.form {
            FieldForm::Constant { value } => value.len(),
            FieldForm::Affine { offset, .. } => offset.len(),
            FieldForm::FourierSeries { components } => components.len(),
        }
    }

    pub fn is_evaluable(&self) -> bool {
        self.target_alpha > 0.0 || self.mollification_eps > 0.0
    }

    /// Checks the descriptor and that pointwise evaluation is permitted.
    pub fn require_evaluable(&self) -> Result<()> {
        if !(self.mollification_eps >= 0.0) || !self.mollification_eps.is_finite() {
            return Err(invalid("mollification_eps must be finite and non-negative"));
        }
        if self.dim() == 0 {
            return Err(invalid("field dimension must be positive"));
        }
        if !self.is_evaluable() {
            return Err(Error::ContractViolation(format!(
                "field with target_alpha = {} is a distribution; mollify before evaluating",
                self.target_alpha
            )));
        }
        Ok(())
    }

    pub fn modulation(&self, r: f64) -> f64 {
        self.time_modulation.map_or(1.0, |m| m.eval(r))
    }

    fn damping(&self, k: f64) -> f64 {
        if self.mollification_eps == 0.0 {
            1.0
        } else {
            (-0.5 * self.mollification_eps * k * k).exp()
        }
    }

    /// `f_r(x)` into `out`.
    pub fn eval(&self, x: &[f64], r: f64, out: &mut [f64]) -> Result<()> {
        self.require_evaluable()?;
        if x.len() != self.dim() || out.len() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "field of dimension {} evaluated at a {}-vector",
                self.dim(),
                x.len()
            )));
        }
        self.eval_unchecked(x, r, out);
        Ok(())
    }

    /// Convenience scalar evaluation of component 0 at time 0.
    pub fn eval_scalar(&self, x: f64) -> Result<f64> {
        let mut out = [0.0];
        self.eval(&[x], 0.0, &mut out)?;
        Ok(out[0])
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64], r: f64, out: &mut [f64]) {
        self.spatial(x, out);
        let m = self.modulation(r);
        if m != 1.0 {
            out.iter_mut().for_each(|v| *v *= m);
        }
    }

    fn spatial(&self, x: &[f64], out: &mut [f64]) {
        match &self.form {
            FieldForm::Constant { value } => out.copy_from_slice(value),
            FieldForm::Affine { matrix, offset } => {
                for (c, o) in out.iter_mut().enumerate() {
                    *o = offset[c] + matrix[c].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            FieldForm::FourierSeries { components } => {
                for (c, modes) in components.iter().enumerate() {
                    out[c] = modes
                        .iter()
                        .map(|m| m.amplitude * self.damping(m.frequency) * (m.frequency * x[c] + m.phase).cos())
                        .sum();
                }
            }
        }
    }

    /// Spatial Jacobian `∂f_c/∂x_e` at time `r`, row-major `d × d`.
    pub(crate) fn jacobian_unchecked(&self, x: &[f64], r: f64, out: &mut [f64]) {
        let d = self.dim();
        out.iter_mut().for_each(|v| *v = 0.0);
        match &self.form {
            FieldForm::Constant { .. } => {}
            FieldForm::Affine { matrix, .. } => {
                for c in 0..d {
                    out[c * d..(c + 1) * d].copy_from_slice(&matrix[c]);
                }
            }
            FieldForm::FourierSeries { components } => {
                for (c, modes) in components.iter().enumerate() {
                    out[c * d + c] = modes
                        .iter()
                        .map(|m| {
                            -m.amplitude
                                * m.frequency
                                * self.damping(m.frequency)
                                * (m.frequency * x[c] + m.phase).sin()
                        })
                        .sum();
                }
            }
        }
        let m = self.modulation(r);
        if m != 1.0 {
            out.iter_mut().for_each(|v| *v *= m);
        }
    }

    /// Upper bound on the spatial Lipschitz constant over all times.
    pub fn lipschitz_bound(&self) -> f64 {
        let spatial = match &self.form {
            FieldForm::Constant { .. } => 0.0,
            FieldForm::Affine { matrix, .. } => matrix.iter().flatten().map(|a| a * a).sum::<f64>().sqrt(),
            FieldForm::FourierSeries { components } => components
                .iter()
                .map(|modes| modes.iter().map(|m| (m.amplitude * m.frequency).abs() * self.damping(m.frequency)).sum())
                .fold(0.0, f64::max),
        };
        spatial * self.time_modulation.map_or(1.0, |m| m.sup())
    }

    /// Evaluates component `c` along a uniform grid `x_c = start + i·spacing`,
    /// other coordinates fixed at 0.
    pub fn sample_component(&self, component: usize, start: f64, spacing: f64, points: usize) -> Result<Vec<f64>> {
        self.require_evaluable()?;
        if component >= self.dim() {
            return Err(invalid(format!("component {component} out of range")));
        }
        let d = self.dim();
        Ok((0..points)
            .into_par_iter()
            .map_init(
                || (vec![0.0; d], vec![0.0; d]),
                |(x, out), i| {
                    x[component] = start + i as f64 * spacing;
                    self.spatial(x, out);
                    out[component]
                },
            )
            .collect())
    }

    /// Increment-scaling exponent of component `c` over one period `[0, 2π)`
    /// sampled at `points` nodes; see [`increment_scaling`].
    pub fn measured_exponent(&self, component: usize, points: usize, shifts: &[usize]) -> Result<ScalingFit> {
        let spacing = TAU / points as f64;
        let values = self.sample_component(component, 0.0, spacing, points)?;
        increment_scaling(&values, spacing, shifts)
    }
}

/// `sup_x |f(x) − g(x)|` over `points` nodes of `[lo, hi]` in every
/// coordinate direction (other coordinates 0), at time 0.
pub fn field_distance(f: &DriftField, g: &DriftField, window: (f64, f64), points: usize) -> Result<f64> {
    f.require_evaluable()?;
    g.require_evaluable()?;
    if f.dim() != g.dim() {
        return Err(invalid("fields have different dimensions"));
    }
    if points < 2 || !(window.1 > window.0) {
        return Err(invalid("distance window needs lo < hi and at least two points"));
    }
    let d = f.dim();
    let spacing = (window.1 - window.0) / (points - 1) as f64;
    let mut worst = 0.0_f64;
    let (mut x, mut a, mut b) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    for e in 0..d {
        for i in 0..points {
            x.iter_mut().for_each(|v| *v = 0.0);
            x[e] = window.0 + i as f64 * spacing;
            f.eval_unchecked(&x, 0.0, &mut a);
            g.eval_unchecked(&x, 0.0, &mut b);
            worst = worst.max(a.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt());
        }
    }
    Ok(worst)
}

/// Log-log regression of sup-increments against spatial scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub scales: Vec<f64>,
    pub sup_increments: Vec<f64>,
    pub fit: LinearFit,
}

impl ScalingFit {
    pub fn exponent(&self) -> f64 {
        self.fit.slope
    }
}

/// Fits `log sup_i |v_{i+s} − v_i| ≈ ξ · log(s · spacing) + c` for periodic
/// samples `v` over the given shifts `s`.
pub fn increment_scaling(values: &[f64], spacing: f64, shifts: &[usize]) -> Result<ScalingFit> {
    let n = values.len();
    if shifts.len() < 2 || shifts.iter().any(|&s| s == 0 || s >= n) {
        return Err(invalid("increment scaling needs at least two shifts in 1..len"));
    }
    let sup_increments: Vec<f64> =
        shifts.iter().map(|&s| (0..n).map(|i| (values[(i + s) % n] - values[i]).abs()).fold(0.0, f64::max)).collect();
    if sup_increments.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::InsufficientData("zero increments at some scale; exponent undefined".into()));
    }
    let scales: Vec<f64> = shifts.iter().map(|&s| s as f64 * spacing).collect();
    let lx: Vec<f64> = scales.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = sup_increments.iter().map(|v| v.ln()).collect();
    let fit = linear_fit(&lx, &ly)?;
    Ok(ScalingFit { scales, sup_increments, fit })
}

/// Largest observed `|f(x−a) − f(x−b) − f(y−a) + f(y−b)| / (|x−y|^ζ |a−b|^η)`
/// over `samples` random quadruples.
pub fn double_difference_check(field: &DriftField, zeta: f64, eta: f64, samples: usize, seed: u64) -> Result<f64> {
    for (name, v) in [("zeta", zeta), ("eta", eta)] {
        if !(v > 0.0 && v <= 1.0) {
            return Err(invalid(format!("{name} must lie in (0,1] (got {v})")));
        }
    }
    field.require_evaluable()?;
    if field.mollification_eps == 0.0 && field.target_alpha < zeta + eta {
        return Err(Error::ContractViolation(format!(
            "field regularity {} is below ζ+η = {}",
            field.target_alpha,
            zeta + eta
        )));
    }
    let d = field.dim();
    let stream = derive_seed(seed, "double-difference");
    let chunks = samples.div_ceil(1024);
    let best = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = replica_rng(stream, chunk as u64);
            let mut pts = vec![vec![0.0; d]; 4];
            let mut vals = vec![vec![0.0; d]; 4];
            let mut worst = 0.0_f64;
            let count = 1024.min(samples - chunk * 1024);
            for _ in 0..count {
                let x: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * TAU).collect();
                let a: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * TAU).collect();
                let hx = random_offset(&mut rng, d);
                let ha = random_offset(&mut rng, d);
                for e in 0..d {
                    pts[0][e] = x[e] - a[e];
                    pts[1][e] = x[e] - a[e] - ha[e];
                    pts[2][e] = x[e] + hx[e] - a[e];
                    pts[3][e] = x[e] + hx[e] - a[e] - ha[e];
                }
                for (p, v) in pts.iter().zip(vals.iter_mut()) {
                    field.spatial(p, v);
                }
                let num =
                    (0..d).map(|e| (vals[0][e] - vals[1][e] - vals[2][e] + vals[3][e]).powi(2)).sum::<f64>().sqrt();
                let den = norm(&hx).powf(zeta) * norm(&ha).powf(eta);
                worst = worst.max(num / den);
            }
            worst
        })
        .reduce(|| 0.0, f64::max);
    Ok(best)
}

fn random_offset<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    // log-uniform magnitudes in [1e-4, 1] probe small and large separations
    (0..d)
        .map(|_| {
            let mag = 10f64.powf(-4.0 * rng.random::<f64>());
            if rng.random::<bool>() {
                mag
            } else {
                -mag
            }
        })
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// How `T^w f` is computed. Both routes apply the same trapezoid rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AveragingRoute {
    /// Evaluates `f_r(w_r + x)` node by node.
    Direct,
    /// For series, accumulates `∫ m(r) e^{i k w_r} dr` once per mode and
    /// recombines with the phases `e^{i k x}`.
    Spectral,
}

impl AveragingRoute {
    fn default_for(field: &DriftField) -> Self {
        match field.form {
            FieldForm::FourierSeries { .. } => AveragingRoute::Spectral,
            _ => AveragingRoute::Direct,
        }
    }
}

/// Identifies the inputs of an averaged field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedSource {
    pub path_t0: f64,
    pub path_dt: f64,
    pub path_len: usize,
    pub path_dim: usize,
    pub field: DriftField,
    pub route: AveragingRoute,
}

/// `T^w f_{t_i}(x_j)` on the path grid times an explicit set of points.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedField {
    source: AveragedSource,
    x_grid: Vec<Vec<f64>>,
    /// Indexed `[(i · nx + j) · dim + c]`.
    values: Vec<f64>,
}

impl AveragedField {
    pub fn source(&self) -> &AveragedSource {
        &self.source
    }

    pub fn x_grid(&self) -> &[Vec<f64>] {
        &self.x_grid
    }

    pub fn times(&self) -> usize {
        self.source.path_len
    }

    pub fn dim(&self) -> usize {
        self.source.path_dim
    }

    pub fn time(&self, i: usize) -> f64 {
        self.source.path_t0 + i as f64 * self.source.path_dt
    }

    /// `T^w f_{t_i}(x_j)`.
    pub fn value(&self, i: usize, j: usize) -> &[f64] {
        let d = self.dim();
        let k = (i * self.x_grid.len() + j) * d;
        &self.values[k..k + d]
    }

    /// CSV with one row per time node: `t` followed by a column `x{j}_{c}`
    /// for each point `j` and component `c`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        for j in 0..self.x_grid.len() {
            for c in 0..self.dim() {
                header.push(format!("x{j}_{c}"));
            }
        }
        w.write_record(&header)?;
        let mut row = Vec::with_capacity(header.len());
        for i in 0..self.times() {
            row.clear();
            row.push(self.time(i).to_string());
            for j in 0..self.x_grid.len() {
                row.extend(self.value(i, j).iter().map(|v| v.to_string()));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Metadata sidecar: the source descriptor and the spatial points.
    pub fn metadata_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Meta<'a> {
            source: &'a AveragedSource,
            x_grid: &'a [Vec<f64>],
            time_modulation_note: &'static str,
        }
        Ok(serde_json::to_string_pretty(&Meta {
            source: &self.source,
            x_grid: &self.x_grid,
            time_modulation_note: "time dependence restricted to separable f(x)·m(r)",
        })?)
    }

    /// Writes `<stem>.csv` and its `<stem>.json` sidecar.
    pub fn write_files(&self, csv_path: impl AsRef<std::path::Path>) -> Result<()> {
        let csv_path = csv_path.as_ref();
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(csv_path)?))?;
        std::fs::write(csv_path.with_extension("json"), self.metadata_json()?)?;
        Ok(())
    }
}

fn check_inputs(w: &GridPath, field: &DriftField, x_grid: &[Vec<f64>]) -> Result<()> {
    field.require_evaluable()?;
    if w.dim() != field.dim() {
        return Err(Error::InvalidInput(format!("path dimension {} != field dimension {}", w.dim(), field.dim())));
    }
    if x_grid.is_empty() {
        return Err(invalid("x grid is empty"));
    }
    if x_grid.iter().any(|x| x.len() != w.dim() || x.iter().any(|v| !v.is_finite())) {
        return Err(invalid("x grid points must be finite and match the path dimension"));
    }
    Ok(())
}

/// Full table of `T^w f_t(x)` for every grid time.
pub fn averaged_field(w: &GridPath, field: &DriftField, x_grid: &[Vec<f64>]) -> Result<AveragedField> {
    averaged_field_with(w, field, x_grid, AveragingRoute::default_for(field))
}

pub fn averaged_field_with(
    w: &GridPath,
    field: &DriftField,
    x_grid: &[Vec<f64>],
    route: AveragingRoute,
) -> Result<AveragedField> {
    check_inputs(w, field, x_grid)?;
    let d = w.dim();
    let (n, nx) = (w.len(), x_grid.len());
    if n.saturating_mul(nx).saturating_mul(d) > MAX_TABLE_ENTRIES {
        return Err(Error::Resource(format!(
            "averaged-field table of {n}×{nx}×{d} entries is too large; use averaged_increment for single times"
        )));
    }
    // column-major by x so the work splits over spatial points
    let columns: Vec<Vec<f64>> = match route {
        AveragingRoute::Direct => x_grid.par_iter().map(|x| direct_cumulative(w, field, x)).collect(),
        AveragingRoute::Spectral => {
            let cumulative = spectral_cumulative(w, field)?;
            x_grid.par_iter().map(|x| spectral_combine_all(field, &cumulative, x, n)).collect()
        }
    };
    let mut values = vec![0.0; n * nx * d];
    for (j, col) in columns.iter().enumerate() {
        for i in 0..n {
            let dst = (i * nx + j) * d;
            values[dst..dst + d].copy_from_slice(&col[i * d..(i + 1) * d]);
        }
    }
    Ok(AveragedField { source: source(w, field, route), x_grid: x_grid.to_vec(), values })
}

fn source(w: &GridPath, field: &DriftField, route: AveragingRoute) -> AveragedSource {
    AveragedSource {
        path_t0: w.t0(),
        path_dt: w.dt(),
        path_len: w.len(),
        path_dim: w.dim(),
        field: field.clone(),
        route,
    }
}

/// `T_{t_j} − T_{t_i}` at each point of `x_grid`, flattened `[j·dim + c]`.
pub fn averaged_increment(
    w: &GridPath,
    field: &DriftField,
    x_grid: &[Vec<f64>],
    window: (usize, usize),
    route: AveragingRoute,
) -> Result<Vec<f64>> {
    check_inputs(w, field, x_grid)?;
    w.check_window(window)?;
    let window_path = window_of(w, window)?;
    let d = w.dim();
    let per_point: Vec<Vec<f64>> = match route {
        AveragingRoute::Direct => x_grid
            .par_iter()
            .map(|x| {
                let mut out = vec![0.0; d];
                window_quadrature(&window_path, field, x, 0, window_path.len() - 1, &mut out);
                out
            })
            .collect(),
        AveragingRoute::Spectral => {
            let totals = spectral_totals(&window_path, field)?;
            x_grid.par_iter().map(|x| spectral_combine(field, &totals, x)).collect()
        }
    };
    Ok(per_point.concat())
}

fn window_of(w: &GridPath, (a, b): (usize, usize)) -> Result<GridPath> {
    let d = w.dim();
    GridPath::new(w.time(a), w.dt(), d, w.values()[a * d..(b + 1) * d].to_vec())
}

/// Trapezoid sum of `f_r(w_r + x)` over nodes `a..=b` into `out`.
pub(crate) fn window_quadrature(w: &GridPath, field: &DriftField, x: &[f64], a: usize, b: usize, out: &mut [f64]) {
    let d = w.dim();
    let half = 0.5 * w.dt();
    let mut y = vec![0.0; d];
    let mut f = vec![0.0; d];
    out.iter_mut().for_each(|v| *v = 0.0);
    for i in a..=b {
        let weight = if i == a || i == b { half } else { 2.0 * half };
        if a == b {
            break;
        }
        for (e, ye) in y.iter_mut().enumerate() {
            *ye = w.value(i, e) + x[e];
        }
        field.eval_unchecked(&y, w.time(i), &mut f);
        for (o, v) in out.iter_mut().zip(&f) {
            *o += weight * v;
        }
    }
}

fn direct_cumulative(w: &GridPath, field: &DriftField, x: &[f64]) -> Vec<f64> {
    let d = w.dim();
    let n = w.len();
    let half = 0.5 * w.dt();
    let mut out = vec![0.0; n * d];
    let mut y = vec![0.0; d];
    let mut prev = vec![0.0; d];
    let mut cur = vec![0.0; d];
    for (e, ye) in y.iter_mut().enumerate() {
        *ye = w.value(0, e) + x[e];
    }
    field.eval_unchecked(&y, w.time(0), &mut prev);
    for i in 1..n {
        for (e, ye) in y.iter_mut().enumerate() {
            *ye = w.value(i, e) + x[e];
        }
        field.eval_unchecked(&y, w.time(i), &mut cur);
        for c in 0..d {
            out[i * d + c] = out[(i - 1) * d + c] + half * (prev[c] + cur[c]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    out
}

fn series(field: &DriftField) -> Result<&[Vec<FourierMode>]> {
    match &field.form {
        FieldForm::FourierSeries { components } => Ok(components),
        _ => Err(invalid("the spectral route applies to Fourier-series fields only")),
    }
}

/// Per component and mode, the cumulative trapezoid sums of
/// `m(r) e^{i k w_r}` at every node, flattened `[(mode) · n + i]`.
fn spectral_cumulative(w: &GridPath, field: &DriftField) -> Result<Vec<Vec<Complex64>>> {
    let components = series(field)?;
    let n = w.len();
    let half = 0.5 * w.dt();
    let weights: Vec<f64> = (0..n).map(|i| field.modulation(w.time(i))).collect();
    Ok(components
        .par_iter()
        .enumerate()
        .map(|(c, modes)| {
            let mut table = vec![Complex64::new(0.0, 0.0); modes.len() * n];
            for (k, mode) in modes.iter().enumerate() {
                let row = &mut table[k * n..(k + 1) * n];
                let mut prev = Complex64::from_polar(weights[0], mode.frequency * w.value(0, c));
                for i in 1..n {
                    let cur = Complex64::from_polar(weights[i], mode.frequency * w.value(i, c));
                    row[i] = row[i - 1] + half * (prev + cur);
                    prev = cur;
                }
            }
            table
        })
        .collect())
}

fn spectral_totals(w: &GridPath, field: &DriftField) -> Result<Vec<Vec<Complex64>>> {
    let components = series(field)?;
    let n = w.len();
    let half = 0.5 * w.dt();
    Ok(components
        .par_iter()
        .enumerate()
        .map(|(c, modes)| {
            modes
                .iter()
                .map(|mode| {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for i in 0..n {
                        let weight = if i == 0 || i == n - 1 { half } else { 2.0 * half };
                        acc +=
                            weight * Complex64::from_polar(field.modulation(w.time(i)), mode.frequency * w.value(i, c));
                    }
                    if n == 1 {
                        Complex64::new(0.0, 0.0)
                    } else {
                        acc
                    }
                })
                .collect()
        })
        .collect())
}

fn mode_coefficient(field: &DriftField, mode: &FourierMode, x: f64) -> Complex64 {
    Complex64::from_polar(mode.amplitude * field.damping(mode.frequency), mode.frequency * x + mode.phase)
}

fn spectral_combine(field: &DriftField, totals: &[Vec<Complex64>], x: &[f64]) -> Vec<f64> {
    let components = series(field).expect("checked by caller");
    components
        .iter()
        .enumerate()
        .map(|(c, modes)| {
            modes.iter().zip(&totals[c]).map(|(mode, t)| (mode_coefficient(field, mode, x[c]) * t).re).sum()
        })
        .collect()
}

fn spectral_combine_all(field: &DriftField, cumulative: &[Vec<Complex64>], x: &[f64], n: usize) -> Vec<f64> {
    let components = series(field).expect("checked by caller");
    let d = components.len();
    let mut out = vec![0.0; n * d];
    for (c, modes) in components.iter().enumerate() {
        for (k, mode) in modes.iter().enumerate() {
            let coef = mode_coefficient(field, mode, x[c]);
            let row = &cumulative[c][k * n..(k + 1) * n];
            for i in 0..n {
                out[i * d + c] += (coef * row[i]).re;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cosine() -> DriftField {
        DriftField::from_modes(vec![FourierMode { frequency: 1.0, amplitude: 1.0, phase: 0.0 }], 1.0)
    }

    #[test]
    fn distributions_are_not_evaluable() {
        let f = synthesize_field(-0.2, 3, 6, 1).unwrap();
        assert!(matches!(f.eval_scalar(0.3), Err(Error::ContractViolation(_))));
        let g = mollify(&f, 0.01).unwrap();
        assert!(g.eval_scalar(0.3).unwrap().is_finite());
        assert!(mollify(&f, 0.0).is_err());
    }

    #[test]
    fn mollified_cosine_and_semigroup() {
        let f = cosine();
        let g = mollify(&f, 0.3).unwrap();
        assert_relative_eq!(g.eval_scalar(0.7).unwrap(), (-0.15f64).exp() * 0.7f64.cos(), epsilon = 1e-15);
        let f = synthesize_field(0.4, 9, 8, 1).unwrap();
        let a = mollify(&mollify(&f, 0.01).unwrap(), 0.02).unwrap();
        let b = mollify(&f, 0.03).unwrap();
        for x in [0.0, 0.5, 2.0] {
            assert_relative_eq!(a.eval_scalar(x).unwrap(), b.eval_scalar(x).unwrap(), epsilon = 1e-13);
        }
    }

    #[test]
    fn truncation_splits_exactly() {
        let f = synthesize_field(0.3, 1, 8, 2).unwrap();
        let (low, high) = frequency_truncate(&f, 3);
        let mut a = [0.0; 2];
        let mut b = [0.0; 2];
        let mut c = [0.0; 2];
        for x in [[0.1, 0.2], [1.3, -2.0]] {
            f.eval(&x, 0.0, &mut a).unwrap();
            low.eval(&x, 0.0, &mut b).unwrap();
            high.eval(&x, 0.0, &mut c).unwrap();
            for e in 0..2 {
                assert_relative_eq!(a[e], b[e] + c[e], epsilon = 1e-13);
            }
        }
        let (_, none) = frequency_truncate(&f, 8);
        assert!(matches!(&none.form, FieldForm::FourierSeries { components } if components.iter().all(Vec::is_empty)));
        let (only, _) = frequency_truncate(&f, 0);
        if let FieldForm::FourierSeries { components } = &only.form {
            assert!(components.iter().all(|m| m.len() == 1 && m[0].frequency == 1.0));
        }
    }

    #[test]
    fn averaged_constant_and_linear() {
        let w = GridPath::from_fn(0.0, 1.0, 50, |t| (3.0 * t).sin()).unwrap();
        let one = DriftField::constant(vec![1.0]);
        let t = averaged_field(&w, &one, &[vec![0.0], vec![5.0]]).unwrap();
        for i in 0..w.len() {
            assert_relative_eq!(t.value(i, 1)[0], w.time(i), epsilon = 1e-13);
        }
        let id = DriftField::affine(vec![vec![1.0]], vec![0.0]).unwrap();
        let t = averaged_field(&w, &id, &[vec![2.0]]).unwrap();
        let mut integral = 0.0;
        for i in 1..w.len() {
            integral += 0.5 * w.dt() * (w.value(i - 1, 0) + w.value(i, 0));
            assert_relative_eq!(t.value(i, 0)[0], integral + 2.0 * w.time(i), epsilon = 1e-12);
        }
    }

    #[test]
    fn spectral_route_matches_direct() {
        let w = GridPath::from_fn(0.0, 2.0, 400, |t| (5.0 * t).sin() + t).unwrap();
        let f = synthesize_field(0.5, 4, 6, 1).unwrap().with_time_modulation(TimeModulation {
            mean: 1.0,
            amplitude: 0.5,
            frequency: 3.0,
        });
        let xs: Vec<Vec<f64>> = (0..7).map(|j| vec![j as f64 * 0.9]).collect();
        let a = averaged_field_with(&w, &f, &xs, AveragingRoute::Direct).unwrap();
        let b = averaged_field_with(&w, &f, &xs, AveragingRoute::Spectral).unwrap();
        for i in 0..w.len() {
            for j in 0..xs.len() {
                assert_relative_eq!(a.value(i, j)[0], b.value(i, j)[0], epsilon = 1e-11);
            }
        }
        let inc = averaged_increment(&w, &f, &xs, (100, 300), AveragingRoute::Spectral).unwrap();
        for (j, v) in inc.iter().enumerate() {
            assert_relative_eq!(*v, a.value(300, j)[0] - a.value(100, j)[0], epsilon = 1e-11);
        }
    }

    #[test]
    fn averaged_field_rejects_distribution() {
        let w = GridPath::from_fn(0.0, 1.0, 10, |t| t).unwrap();
        let f = synthesize_field(-0.5, 0, 4, 1).unwrap();
        assert!(matches!(averaged_field(&w, &f, &[vec![0.0]]), Err(Error::ContractViolation(_))));
    }

    #[test]
    fn serde_roundtrip() {
        let f = synthesize_field(0.3, 11, 5, 2).unwrap();
        let s = serde_json::to_string(&f).unwrap();
        assert!(s.contains("\"mode\":\"fourier_series\""));
        let g: DriftField = serde_json::from_str(&s).unwrap();
        assert_eq!(f, g);
        let h: DriftField =
            serde_json::from_str(r#"{"mode":"affine","matrix":[[-1.0]],"offset":[0.0],"target_alpha":1.0}"#).unwrap();
        assert_eq!(h.eval_scalar(2.0).unwrap(), -2.0);
    }

    #[test]
    fn double_difference_trivial_cases() {
        let lin = DriftField::affine(vec![vec![2.0]], vec![1.0]).unwrap();
        // round-off only: numerator ~1e-15 over separations down to 1e-4
        assert!(double_difference_check(&lin, 0.5, 0.5, 2000, 1).unwrap() < 1e-9);
        let c = DriftField::constant(vec![3.0]);
        assert_eq!(double_difference_check(&c, 0.5, 0.5, 100, 1).unwrap(), 0.0);
    }
}
