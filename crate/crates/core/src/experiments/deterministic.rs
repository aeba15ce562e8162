use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::maps::{cosine_injection, unit_domain};
use super::{default_seed, ExperimentReport, Status, Verdict};
use crate::error::{invalid, Result};
use crate::fbm::{FbmSampler, FbmSpec};
use crate::fields::{DriftField, FourierMode};
use crate::paths::{p_variation_power, GridPath, IncrementNorm};
use crate::rng::{derive_seed, replica_rng};
use crate::skorokhod::reflect;
use crate::stats::linear_fit;
use crate::young::{
    linearize_difference, nonlinear_young_integral, AveragedFieldGerm, Germ, GermMetadata, ProductGerm,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SharpnessConfig {
    pub frequencies: Vec<usize>,
    pub steps: usize,
    pub horizon: f64,
    /// Allowed relative spread `max/min − 1` of `‖K‖/N`.
    pub tolerance: f64,
}

impl Default for SharpnessConfig {
    fn default() -> Self {
        Self { frequencies: vec![4, 8, 16, 32], steps: 1 << 14, horizon: 1.0, tolerance: 0.1 }
    }
}

pub(super) fn run_sharpness(cfg: &SharpnessConfig) -> Result<ExperimentReport> {
    if cfg.frequencies.is_empty() {
        return Err(invalid("at least one frequency is required"));
    }
    let mut report = ExperimentReport::new("sharpness", cfg, 0)?;
    let domain = unit_domain();
    let mut ratios = Vec::new();
    for &n in &cfg.frequencies {
        let k = reflect(&cosine_injection(n, cfg.horizon, cfg.steps)?, &domain)?.k_onevar[0];
        ratios.push(k / n as f64);
        report.point("onevar_over_n", n as f64, k / n as f64);
    }
    let max = ratios.iter().copied().fold(f64::MIN, f64::max);
    let min = ratios.iter().copied().fold(f64::MAX, f64::min);
    let spread = max / min - 1.0;
    report.verdicts.push(Verdict::new(
        2,
        "‖K(h_N)‖_1-var / N constant across N",
        spread <= cfg.tolerance,
        spread,
        format!("max/min − 1 ≤ {}", cfg.tolerance),
    ));
    report.measurements = json!({ "frequencies": cfg.frequencies, "onevar_over_n": ratios, "spread": spread });
    Ok(report)
}

/// `max over partitions Σ |x_{t_{k+1}} − x_{t_k}|^p` by enumerating every
/// subset of interior nodes. Exponential; for short paths only.
pub fn brute_force_p_variation_power(xs: &[f64], p: f64) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let interior = n - 2;
    let mut best = 0.0_f64;
    for mask in 0u64..(1u64 << interior) {
        let mut prev = xs[0];
        let mut total = 0.0;
        for (k, &x) in xs.iter().enumerate().skip(1) {
            if k == n - 1 || mask >> (k - 1) & 1 == 1 {
                total += (x - prev).abs().powf(p);
                prev = x;
            }
        }
        best = best.max(total);
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PvarConfig {
    pub draws: usize,
    pub max_nodes: usize,
    pub value_range: (i32, i32),
    pub ps: Vec<f64>,
    pub seed: u64,
}

impl Default for PvarConfig {
    fn default() -> Self {
        Self { draws: 10_000, max_nodes: 12, value_range: (-2, 2), ps: vec![1.0, 1.5, 2.0, 3.0], seed: default_seed() }
    }
}

pub(super) fn run_pvar(cfg: &PvarConfig) -> Result<ExperimentReport> {
    if !(2..=24).contains(&cfg.max_nodes) || cfg.value_range.0 > cfg.value_range.1 {
        return Err(invalid("max_nodes must lie in 2..=24 and the value range must be ordered"));
    }
    let mut report = ExperimentReport::new("pvar-exact", cfg, cfg.seed)?;
    let stream = derive_seed(cfg.seed, "pvar-draws");
    let (lo, hi) = cfg.value_range;
    let rows: Vec<Vec<f64>> = (0..cfg.draws)
        .into_par_iter()
        .map(|k| {
            let mut rng = replica_rng(stream, k as u64);
            let len = rng.random_range(2..=cfg.max_nodes);
            let xs: Vec<f64> = (0..len).map(|_| f64::from(rng.random_range(lo..=hi))).collect();
            let path = GridPath::from_scalar(0.0, 1.0, xs.clone())?;
            cfg.ps
                .iter()
                .map(|&p| {
                    let dp = p_variation_power(&path, p, path.full_window(), IncrementNorm::Euclidean)?;
                    let bf = brute_force_p_variation_power(&xs, p);
                    Ok((dp - bf).abs() / bf.max(1.0))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    report.samples = cfg.draws;
    let mut per_p = Vec::new();
    for (j, &p) in cfg.ps.iter().enumerate() {
        let mismatches = rows.iter().filter(|r| r[j] > 1e-12).count();
        let worst = rows.iter().map(|r| r[j]).fold(0.0, f64::max);
        report.verdicts.push(Verdict::new(
            6,
            format!("dynamic programme equals brute force at p={p}"),
            mismatches == 0,
            worst,
            "relative difference ≤ 1e-12 on every draw",
        ));
        per_p.push(json!({ "p": p, "mismatches": mismatches, "max_relative_difference": worst }));
    }
    report.measurements = json!({ "per_p": per_p });
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SewingConfig {
    /// Grid used to resolve the integral for the local remainder study.
    pub fine_steps: usize,
    /// Dyadic interval lengths `2^{−k}` for `k` in this range.
    pub remainder_levels: (u32, u32),
    pub min_order: f64,
    /// Grids for the global left-point convergence study.
    pub global_levels: (u32, u32),
    pub linearization_steps: usize,
    pub linearization_tol: f64,
    pub seed: u64,
}

impl Default for SewingConfig {
    fn default() -> Self {
        Self {
            fine_steps: 1 << 16,
            remainder_levels: (3, 8),
            min_order: 1.9,
            global_levels: (6, 12),
            linearization_steps: 1 << 10,
            linearization_tol: 1e-6,
            seed: default_seed(),
        }
    }
}

type Scalar = fn(&[f64], &mut [f64]);

/// A closed-form case `A_{st}(x) = g(x)(h_t − h_s)` along `θ` with the exact
/// classical value of `∫_0^1 g(θ_r) dh_r`.
struct ClosedCase {
    name: &'static str,
    g: Scalar,
    h: fn(f64) -> f64,
    theta: fn(f64) -> f64,
    exact: f64,
}

fn closed_cases() -> Vec<ClosedCase> {
    vec![
        ClosedCase { name: "(t−s)x², θ=r", g: |x, o| o[0] = x[0] * x[0], h: |t| t, theta: |t| t, exact: 1.0 / 3.0 },
        ClosedCase { name: "x(W_t−W_s), W=t, θ=r", g: |x, o| o[0] = x[0], h: |t| t, theta: |t| t, exact: 0.5 },
        ClosedCase {
            name: "cos(x)(sin 3t − sin 3s), θ=2r",
            g: |x, o| o[0] = x[0].cos(),
            h: |t| (3.0 * t).sin(),
            theta: |t| 2.0 * t,
            // ∫_0^1 3cos(2r)cos(3r) dr = 3/2 (sin 5/5 + sin 1)
            exact: 1.5 * (5f64.sin() / 5.0 + 1f64.sin()),
        },
    ]
}

fn product_germ(case: &ClosedCase, steps: usize) -> Result<(ProductGerm<Scalar>, GridPath)> {
    let h = GridPath::from_fn(0.0, 1.0, steps, case.h)?;
    let theta = GridPath::from_fn(0.0, 1.0, steps, case.theta)?;
    let meta = GermMetadata { q: 1.0, lipschitz: f64::NAN };
    Ok((ProductGerm::new(h, 1, case.g, meta)?, theta))
}

pub(super) fn run_sewing(cfg: &SewingConfig) -> Result<ExperimentReport> {
    let (k0, k1) = cfg.remainder_levels;
    if k0 >= k1 || (1usize << k1) > cfg.fine_steps || !cfg.fine_steps.is_multiple_of(1usize << k1) {
        return Err(invalid("remainder levels must be increasing and divide the fine grid"));
    }
    let mut report = ExperimentReport::new("sewing", cfg, cfg.seed)?;
    let mut cases_json = Vec::new();
    for case in closed_cases() {
        let (germ, theta) = product_germ(&case, cfg.fine_steps)?;
        let integral = nonlinear_young_integral(&germ, &theta, 1)?.path;
        let mut log_h = Vec::new();
        let mut log_r = Vec::new();
        for k in k0..=k1 {
            let stride = cfg.fine_steps >> k;
            let mut worst = 0.0_f64;
            let mut a = [0.0];
            for u in (0..cfg.fine_steps).step_by(stride) {
                let v = u + stride;
                germ.eval(u, v, theta.point(u), &mut a);
                worst = worst.max((integral.value(v, 0) - integral.value(u, 0) - a[0]).abs());
            }
            log_h.push(-(k as f64) * 2f64.ln());
            log_r.push(worst.ln());
            report.point(format!("remainder {}", case.name), 2f64.powi(-(k as i32)), worst);
        }
        let fit = linear_fit(&log_h, &log_r)?;
        report.verdicts.push(
            Verdict::new(
                7,
                format!("local sewing remainder order for {}", case.name),
                fit.slope >= cfg.min_order,
                fit.slope,
                format!("≥ {}", cfg.min_order),
            )
            .with_detail(format!("R² = {:.6}", fit.r_squared)),
        );
        // global convergence of the left-point sums to the classical value
        let (g0, g1) = cfg.global_levels;
        let mut lx = Vec::new();
        let mut ly = Vec::new();
        let mut estimates = Vec::new();
        for k in g0..=g1 {
            let (germ, theta) = product_germ(&case, 1 << k)?;
            let r = nonlinear_young_integral(&germ, &theta, k as usize + 1)?;
            let err = (r.path.value(1 << k, 0) - case.exact).abs();
            lx.push(-(k as f64) * 2f64.ln());
            ly.push(err.ln());
            estimates.push(json!({ "steps": 1u64 << k, "error": err, "error_estimate": r.error_estimate }));
            report.point(format!("global error {}", case.name), 2f64.powi(-(k as i32)), err);
        }
        let global = linear_fit(&lx, &ly)?;
        report.verdicts.push(Verdict::info(7, format!("global left-point order for {}", case.name), global.slope));
        cases_json.push(json!({ "case": case.name, "remainder_order": fit.slope, "remainder_r2": fit.r_squared,
            "global_order": global.slope, "global": estimates }));
    }

    let n = cfg.linearization_steps;
    let mut lin_json = Vec::new();
    let t = GridPath::from_fn(0.0, 1.0, n, |s| s)?;
    let zero = GridPath::constant(0.0, 1.0 / n as f64, n + 1, &[0.0])?;
    let meta = GermMetadata { q: 1.0, lipschitz: f64::NAN };
    let quadratic = ProductGerm::new(t.clone(), 1, |x: &[f64], o: &mut [f64]| o[0] = x[0] * x[0], meta)?
        .with_jacobian(|x: &[f64], o: &mut [f64]| o[0] = 2.0 * x[0]);
    let linear = ProductGerm::new(t.clone(), 1, |x: &[f64], o: &mut [f64]| o[0] = 2.0 * x[0] + 1.0, meta)?
        .with_jacobian(|_: &[f64], o: &mut [f64]| o[0] = 2.0);
    let noise = FbmSampler::new(FbmSpec::new(0.75, 1.0, n, 1, derive_seed(cfg.seed, "sewing-noise")))?.sample(0);
    let smooth = DriftField::from_modes(
        vec![
            FourierMode { frequency: 1.0, amplitude: 1.0, phase: 0.3 },
            FourierMode { frequency: 2.0, amplitude: 0.5, phase: -1.1 },
        ],
        1.0,
    );
    let averaged = AveragedFieldGerm::new(noise, smooth)?;
    let wavy = GridPath::from_fn(0.0, 1.0, n, |s| 0.3 * (std::f64::consts::TAU * s).sin())?;
    let ramp = GridPath::from_fn(0.0, 1.0, n, |s| -0.2 * s)?;
    let cases: Vec<(&str, &dyn Germ, &GridPath, &GridPath)> = vec![
        ("(t−s)x², θ=r, θ̄=0", &quadratic, &t, &zero),
        ("(t−s)(2x+1), θ=r, θ̄=0", &linear, &t, &zero),
        ("averaged smooth field along fBm(0.75)", &averaged, &wavy, &ramp),
    ];
    for (name, germ, a, b) in cases {
        let lin = linearize_difference(germ, a, b, crate::young::DEFAULT_GL_POINTS)?;
        report.verdicts.push(Verdict::new(
            7,
            format!("linearization identity for {name}"),
            lin.defect <= cfg.linearization_tol,
            lin.defect,
            format!("≤ {:e}", cfg.linearization_tol),
        ));
        lin_json.push(json!({ "case": name, "defect": lin.defect }));
    }
    report.measurements = json!({ "closed_forms": cases_json, "linearization": lin_json });
    if report.verdicts.iter().any(|v| v.status == Status::Fail) {
        report.notes.push("see per-case measurements".into());
    }
    Ok(report)
}
