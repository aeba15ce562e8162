use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{budgeted_samples, default_seed, ExperimentReport, Status, Verdict};
use crate::error::{invalid, Result};
use crate::fbm::{fbm_covariance, FbmSampler, FbmSpec, SamplingMethod};
use crate::fields::{
    averaged_increment, increment_scaling, mollify, synthesize_field, AveragingRoute, DriftField, FourierMode,
};
use crate::paths::GridPath;
use crate::perturbed::PerturbParams;
use crate::rng::{derive_seed, replica_rng};
use crate::skorokhod::{fit_weibull_tail, reflect, tail_exponent_experiment, weibull_tail_exponent, Domain};
use crate::solver::{cross_scheme_check, stability_experiment, GammaKind, Scheme, SolveSpec};
use crate::stats::{linear_fit, mean};

const CHUNK: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CovarianceConfig {
    pub hursts: Vec<f64>,
    /// Grid steps; the covariance is checked at nodes `t_1..t_nodes`.
    pub nodes: usize,
    pub horizon: f64,
    pub samples: usize,
    pub se_multiplier: f64,
    /// Steps of the grid used to compare the two samplers.
    pub compare_steps: usize,
    pub variance_tolerance: f64,
    pub seed: u64,
    pub budget_seconds: Option<f64>,
}

impl Default for CovarianceConfig {
    fn default() -> Self {
        Self {
            hursts: vec![0.25, 0.5, 0.75],
            nodes: 16,
            horizon: 1.0,
            samples: 100_000,
            se_multiplier: 3.0,
            compare_steps: 64,
            variance_tolerance: 0.01,
            seed: default_seed(),
            budget_seconds: None,
        }
    }
}

/// Sums of `X_i X_j` and `(X_i X_j)²` over the upper triangle, accumulated
/// in fixed chunks so that the result does not depend on scheduling.
fn product_moments(sampler: &FbmSampler, samples: usize, nodes: usize) -> (Vec<f64>, Vec<f64>) {
    let entries = nodes * (nodes + 1) / 2;
    let chunks: Vec<(Vec<f64>, Vec<f64>)> = (0..samples.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut s1 = vec![0.0; entries];
            let mut s2 = vec![0.0; entries];
            for k in c * CHUNK..((c + 1) * CHUNK).min(samples) {
                let w = sampler.sample(k as u64);
                let mut e = 0;
                for i in 1..=nodes {
                    for j in i..=nodes {
                        let p = w.value(i, 0) * w.value(j, 0);
                        s1[e] += p;
                        s2[e] += p * p;
                        e += 1;
                    }
                }
            }
            (s1, s2)
        })
        .collect();
    let mut s1 = vec![0.0; entries];
    let mut s2 = vec![0.0; entries];
    for (a, b) in chunks {
        s1.iter_mut().zip(&a).for_each(|(x, y)| *x += y);
        s2.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
    }
    (s1, s2)
}

/// Mean squared increment over all steps and samples.
fn pooled_increment_variance(sampler: &FbmSampler, samples: usize) -> f64 {
    let partial: Vec<f64> = (0..samples.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = 0.0;
            for k in c * CHUNK..((c + 1) * CHUNK).min(samples) {
                let w = sampler.sample(k as u64);
                for i in 0..w.steps() {
                    acc += (w.value(i + 1, 0) - w.value(i, 0)).powi(2);
                }
            }
            acc
        })
        .collect();
    partial.iter().sum::<f64>() / (samples * sampler.spec().steps) as f64
}

pub(super) fn run_covariance(cfg: &CovarianceConfig) -> Result<ExperimentReport> {
    if cfg.nodes == 0 || cfg.compare_steps == 0 {
        return Err(invalid("nodes and compare_steps must be positive"));
    }
    let mut report = ExperimentReport::new("fbm-covariance", cfg, cfg.seed)?;
    let mut per_h = Vec::new();
    for &h in &cfg.hursts {
        let spec = FbmSpec::new(h, cfg.horizon, cfg.nodes, 1, derive_seed(cfg.seed, &format!("cov-{h}")));
        let sampler = FbmSampler::new(spec.clone())?;
        let samples = budgeted_samples(cfg.samples, cfg.budget_seconds, &format!("H={h}"), &mut report.notes, |n| {
            product_moments(&sampler, n, cfg.nodes);
            Ok(())
        })?;
        if samples < 2 {
            return Err(crate::Error::InsufficientData("covariance check needs >= 2 samples".into()));
        }
        let (s1, s2) = product_moments(&sampler, samples, cfg.nodes);
        let nf = samples as f64;
        let dt = spec.dt();
        let mut e = 0;
        let mut worst_z = 0.0_f64;
        let mut outside = 0;
        for i in 1..=cfg.nodes {
            for j in i..=cfg.nodes {
                let m = s1[e] / nf;
                let var = (s2[e] / nf - m * m) * nf / (nf - 1.0);
                let se = (var / nf).sqrt();
                let exact = fbm_covariance(i as f64 * dt, j as f64 * dt, h)?;
                let z = (m - exact).abs() / se;
                worst_z = worst_z.max(z);
                if z > cfg.se_multiplier {
                    outside += 1;
                }
                e += 1;
            }
        }
        report.samples += samples;
        report.point("max_z", h, worst_z);
        report.verdicts.push(
            Verdict::new(
                5,
                format!("empirical covariance within {} SE entrywise at H={h}", cfg.se_multiplier),
                outside == 0,
                worst_z,
                format!("all |z| ≤ {}", cfg.se_multiplier),
            )
            .with_detail(format!("{outside} of {e} entries outside")),
        );

        let base = FbmSpec::new(h, cfg.horizon, cfg.compare_steps, 1, derive_seed(cfg.seed, &format!("cmp-{h}")));
        let chol = FbmSampler::new(base.clone().with_method(SamplingMethod::Cholesky))?;
        let circ = FbmSampler::new(
            base.with_method(SamplingMethod::Circulant).tap_seed(derive_seed(cfg.seed, &format!("cmp-circ-{h}"))),
        )?;
        let v_chol = pooled_increment_variance(&chol, samples);
        let v_circ = pooled_increment_variance(&circ, samples);
        let rel = (v_chol - v_circ).abs() / v_chol;
        let exact = (cfg.horizon / cfg.compare_steps as f64).powf(2.0 * h);
        report.verdicts.push(
            Verdict::new(
                5,
                format!("Cholesky vs circulant increment variance at H={h}"),
                rel < cfg.variance_tolerance,
                rel,
                format!("relative difference < {}", cfg.variance_tolerance),
            )
            .with_detail(format!("cholesky {v_chol:.6e}, circulant {v_circ:.6e}, exact {exact:.6e}")),
        );
        per_h.push(json!({ "hurst": h, "samples": samples, "max_z": worst_z, "entries_outside": outside,
            "increment_variance": { "cholesky": v_chol, "circulant": v_circ, "exact": exact, "relative_difference": rel } }));
    }
    report.measurements = json!({ "per_hurst": per_h });
    Ok(report)
}

trait TapSeed {
    fn tap_seed(self, seed: u64) -> Self;
}

impl TapSeed for FbmSpec {
    fn tap_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TailConfig {
    pub hurst: f64,
    pub samples: usize,
    pub steps: usize,
    pub horizon: f64,
    pub resamples: usize,
    pub level: f64,
    pub calibration_exponents: Vec<f64>,
    pub calibration_samples: usize,
    pub calibration_tolerance: f64,
    pub seed: u64,
    pub budget_seconds: Option<f64>,
}

impl Default for TailConfig {
    fn default() -> Self {
        Self {
            hurst: 0.25,
            samples: 100_000,
            steps: 1024,
            horizon: 1.0,
            resamples: 500,
            level: 0.9,
            calibration_exponents: vec![1.5, 2.0, 3.0],
            calibration_samples: 100_000,
            calibration_tolerance: 0.05,
            seed: default_seed(),
            budget_seconds: None,
        }
    }
}

pub(super) fn run_tail(cfg: &TailConfig) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new("tail", cfg, cfg.seed)?;
    let domain = super::maps::unit_domain();
    let spec = FbmSpec::new(cfg.hurst, cfg.horizon, cfg.steps, 1, derive_seed(cfg.seed, "tail"));
    let samples = budgeted_samples(cfg.samples, cfg.budget_seconds, "tail", &mut report.notes, |n| {
        let sampler = FbmSampler::new(spec.clone())?;
        (0..n as u64).into_par_iter().try_for_each(|k| reflect(&sampler.sample(k), &domain).map(|_| ()))
    })?;
    let fit = tail_exponent_experiment(&spec, &domain, samples, cfg.resamples, cfg.level)?;
    let target = 1.0 + 2.0 * cfg.hurst;
    let contains = fit.interval.0 <= target && target <= fit.interval.1;
    report.samples = samples;
    report.verdicts.push(
        Verdict::new(
            8,
            format!("{}% bootstrap interval of the Weibull exponent contains 1+2H", cfg.level * 100.0),
            contains,
            fit.exponent,
            format!("interval ∋ {target}"),
        )
        .with_interval(fit.interval)
        .with_detail(format!("R² = {:.4}, {} tail points", fit.r_squared, fit.tail_points)),
    );
    let stream = derive_seed(cfg.seed, "weibull-calibration");
    let mut calibration = Vec::new();
    for (idx, &kappa) in cfg.calibration_exponents.iter().enumerate() {
        let mut rng = replica_rng(stream, idx as u64);
        let draws: Vec<f64> = (0..cfg.calibration_samples)
            .map(|_| {
                let u: f64 = 1.0 - rng.random::<f64>();
                (-u.ln()).powf(1.0 / kappa)
            })
            .collect();
        let (fitted, r2) = weibull_tail_exponent(&draws)?;
        let rel = (fitted - kappa).abs() / kappa;
        report.verdicts.push(
            Verdict::new(
                8,
                format!("synthetic Weibull calibration recovers exponent {kappa}"),
                rel <= cfg.calibration_tolerance,
                fitted,
                format!("within {}% of {kappa}", cfg.calibration_tolerance * 100.0),
            )
            .with_detail(format!("relative error {rel:.4}, R² = {r2:.4}")),
        );
        calibration.push(json!({ "exponent": kappa, "fitted": fitted, "relative_error": rel, "r_squared": r2 }));
    }
    let _ = fit_weibull_tail; // re-exported entry point for ad hoc samples
    report.measurements = json!({
        "target": target,
        "fit": { "exponent": fit.exponent, "interval": fit.interval, "r_squared": fit.r_squared, "tail_points": fit.tail_points },
        "calibration": calibration,
    });
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    /// `φ = K`, the reflection measure of the same fBm path on a box.
    Reflected,
    /// `φ_t = sin(2πt/T)`, a smooth bounded-variation path.
    BoundedVariation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegularityConfig {
    pub hurst: f64,
    pub target_alpha: f64,
    pub bandwidth: u32,
    pub steps: usize,
    pub horizon: f64,
    pub x_points: usize,
    /// Spatial scales `2π·2^{−k}` for `k` in this range.
    pub scale_levels: (u32, u32),
    pub samples: usize,
    pub perturbations: Vec<Perturbation>,
    /// Half-width of the reflecting box `[−a, a]`.
    pub domain_half_width: f64,
    pub floor_margin: f64,
    pub min_r_squared: f64,
    pub pair_tolerance: f64,
    pub field_seed: u64,
    pub seed: u64,
    pub budget_seconds: Option<f64>,
}

impl Default for RegularityConfig {
    fn default() -> Self {
        Self {
            hurst: 0.1,
            target_alpha: 0.3,
            bandwidth: 10,
            steps: 1 << 16,
            horizon: 1.0,
            x_points: 1024,
            scale_levels: (2, 9),
            samples: 16,
            perturbations: vec![Perturbation::Reflected],
            domain_half_width: 1.0,
            floor_margin: 0.15,
            min_r_squared: 0.9,
            pair_tolerance: 0.15,
            field_seed: 7,
            seed: default_seed(),
            budget_seconds: None,
        }
    }
}

/// `α − 1/(pH) + min(1/(2H), β/H − 1)` with `p = ∞` (time-independent field).
fn predicted_gain(alpha: f64, hurst: f64, beta: Option<f64>) -> f64 {
    let cap = 1.0 / (2.0 * hurst);
    alpha + beta.map_or(cap, |b| cap.min(b / hurst - 1.0))
}

pub(super) fn run_regularity(cfg: &RegularityConfig) -> Result<ExperimentReport> {
    let (k0, k1) = cfg.scale_levels;
    if k0 >= k1 || (1usize << k1) > cfg.x_points || !cfg.x_points.is_multiple_of(1usize << k1) {
        return Err(invalid("scale levels must be increasing and divide x_points"));
    }
    let mut report = ExperimentReport::new("regularity", cfg, cfg.seed)?;
    let field = synthesize_field(cfg.target_alpha, cfg.field_seed, cfg.bandwidth, 1)?;
    let spacing = std::f64::consts::TAU / cfg.x_points as f64;
    let xs: Vec<Vec<f64>> = (0..cfg.x_points).map(|j| vec![j as f64 * spacing]).collect();
    let shifts: Vec<usize> = (k0..=k1).map(|k| cfg.x_points >> k).collect();
    let sampler =
        FbmSampler::new(FbmSpec::new(cfg.hurst, cfg.horizon, cfg.steps, 1, derive_seed(cfg.seed, "regularity")))?;
    let domain = Domain::uniform(1, -cfg.domain_half_width, cfg.domain_half_width)?;
    let exponent = |path: &GridPath| -> Result<(f64, f64)> {
        let values = averaged_increment(path, &field, &xs, path.full_window(), AveragingRoute::Spectral)?;
        let fit = increment_scaling(&values, spacing, &shifts)?;
        Ok((fit.exponent(), fit.fit.r_squared))
    };
    let perturbed_path = |w: &GridPath, kind: Perturbation| -> Result<GridPath> {
        match kind {
            Perturbation::Reflected => Ok(reflect(w, &domain)?.reflected),
            Perturbation::BoundedVariation => {
                let phi = GridPath::from_fn(0.0, cfg.horizon, cfg.steps, |t| {
                    (std::f64::consts::TAU * t / cfg.horizon).sin()
                })?;
                w.add(&phi)
            }
        }
    };
    let run_one = |k: u64| -> Result<Vec<(f64, f64)>> {
        let w = sampler.sample(k);
        let mut out = vec![exponent(&w)?];
        for &kind in &cfg.perturbations {
            out.push(exponent(&perturbed_path(&w, kind)?)?);
        }
        Ok(out)
    };
    let samples = budgeted_samples(cfg.samples, cfg.budget_seconds, "regularity", &mut report.notes, |n| {
        (0..n as u64).into_par_iter().try_for_each(|k| run_one(k).map(|_| ()))
    })?;
    let rows: Vec<Vec<(f64, f64)>> = (0..samples as u64).into_par_iter().map(run_one).collect::<Result<_>>()?;
    report.samples = samples;
    let column = |c: usize| -> (f64, f64) {
        let e: Vec<f64> = rows.iter().map(|r| r[c].0).collect();
        (mean(&e), rows.iter().map(|r| r[c].1).fold(1.0, f64::min))
    };
    let floor = predicted_gain(cfg.target_alpha, cfg.hurst, None).min(1.0) - cfg.floor_margin;
    let (base, base_r2) = column(0);
    let status = |ok: bool, r2: f64| {
        if r2 < cfg.min_r_squared {
            Status::Inconclusive
        } else if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    };
    report.verdicts.push(
        Verdict::new(
            9,
            "spatial scaling exponent of T^W f clears the predicted floor",
            true,
            base,
            format!("≥ {floor:.2}"),
        )
        .with_status(status(base >= floor, base_r2))
        .with_detail(format!("min R² = {base_r2:.4}")),
    );
    let mut measured = vec![json!({ "perturbation": "none", "mean_exponent": base, "min_r_squared": base_r2,
        "predicted": predicted_gain(cfg.target_alpha, cfg.hurst, None) })];
    for (idx, &kind) in cfg.perturbations.iter().enumerate() {
        let (value, r2) = column(idx + 1);
        let gap = (value - base).abs();
        let name = match kind {
            Perturbation::Reflected => "reflected",
            Perturbation::BoundedVariation => "bounded_variation",
        };
        report.verdicts.push(
            Verdict::new(
                9,
                format!("{name} perturbation stays within tolerance of the unperturbed exponent"),
                true,
                value,
                format!("|Δ| ≤ {}", cfg.pair_tolerance),
            )
            .with_status(status(gap <= cfg.pair_tolerance && value >= floor, r2.min(base_r2)))
            .with_detail(format!("|Δ| = {gap:.4}, min R² = {r2:.4}")),
        );
        measured.push(json!({ "perturbation": name, "mean_exponent": value, "min_r_squared": r2,
            "predicted": predicted_gain(cfg.target_alpha, cfg.hurst, Some(1.0)) }));
    }
    for (k, r) in rows.iter().enumerate() {
        for (c, (e, _)) in r.iter().enumerate() {
            report.point(
                if c == 0 { "none".to_string() } else { format!("{:?}", cfg.perturbations[c - 1]) },
                k as f64,
                *e,
            );
        }
    }
    report.measurements = json!({ "floor": floor, "campaigns": measured });
    Ok(report)
}

fn default_stability_field() -> (f64, u32, u64) {
    (-0.2, 2, 11)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityConfig {
    pub hurst: f64,
    pub steps: usize,
    pub horizon: f64,
    pub samples: usize,
    pub target_alpha: f64,
    pub bandwidth: u32,
    pub field_seed: u64,
    /// Mollification scales `ε`; each is compared with `ε/2`.
    pub eps_ladder: Vec<f64>,
    pub moments: Vec<u32>,
    pub x0: f64,
    pub scheme: Scheme,
    pub gamma: GammaKind,
    pub slope_range: (f64, f64),
    pub seed: u64,
    pub budget_seconds: Option<f64>,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        let (alpha, bandwidth, field_seed) = default_stability_field();
        Self {
            hurst: 0.25,
            steps: 256,
            horizon: 1.0,
            samples: 1000,
            target_alpha: alpha,
            bandwidth,
            field_seed,
            eps_ladder: (4..=9).map(|k| 2f64.powi(-k)).collect(),
            moments: vec![1, 2],
            x0: 0.0,
            scheme: Scheme::PicardYoung,
            gamma: GammaKind::Identity,
            slope_range: (0.8, 1.2),
            seed: default_seed(),
            budget_seconds: None,
        }
    }
}

pub(super) fn run_stability(cfg: &StabilityConfig) -> Result<ExperimentReport> {
    if cfg.eps_ladder.len() < 2 {
        return Err(invalid("the mollification ladder needs at least two rungs"));
    }
    let mut report = ExperimentReport::new("stability", cfg, cfg.seed)?;
    let rough = synthesize_field(cfg.target_alpha, cfg.field_seed, cfg.bandwidth, 1)?;
    let noise = FbmSpec::new(cfg.hurst, cfg.horizon, cfg.steps, 1, derive_seed(cfg.seed, "stability"));
    let spec_for = |f: DriftField| SolveSpec::new(vec![cfg.x0], cfg.gamma.clone(), f, cfg.scheme);
    let first = spec_for(mollify(&rough, cfg.eps_ladder[0])?);
    let samples = budgeted_samples(cfg.samples, cfg.budget_seconds, "stability", &mut report.notes, |n| {
        let second = spec_for(mollify(&rough, cfg.eps_ladder[0] / 2.0)?);
        stability_experiment(&first, &second, &noise, 1, n.max(2)).map(|_| ())
    })?;
    let same = stability_experiment(&first, &first, &noise, 1, samples.clamp(2, 16))?;
    report.verdicts.push(Verdict::new(10, "identical inputs give zero distance", same.lhs == 0.0, same.lhs, "0"));
    let mut rungs = Vec::new();
    for &m in &cfg.moments {
        let mut lx = Vec::new();
        let mut ly = Vec::new();
        for &eps in &cfg.eps_ladder {
            let a = spec_for(mollify(&rough, eps)?);
            let b = spec_for(mollify(&rough, eps / 2.0)?);
            let est = stability_experiment(&a, &b, &noise, m, samples)?;
            lx.push(est.field_distance.ln());
            ly.push(est.lhs.ln());
            report.point(format!("m={m}"), est.field_distance, est.lhs);
            rungs.push(json!({ "m": m, "eps": eps, "lhs": est.lhs, "field_distance": est.field_distance }));
        }
        let fit = linear_fit(&lx, &ly)?;
        let (lo, hi) = cfg.slope_range;
        report.verdicts.push(
            Verdict::new(
                10,
                format!("log-log slope of solution distance vs field distance, m={m}"),
                lo <= fit.slope && fit.slope <= hi,
                fit.slope,
                format!("in [{lo}, {hi}]"),
            )
            .with_detail(format!("R² = {:.4}", fit.r_squared)),
        );
    }
    report.samples = samples;
    report.measurements = json!({ "rungs": rungs });
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossSchemeConfig {
    pub hurst: f64,
    pub horizon: f64,
    /// Grids `2^k` for `k` in this range; noise is sampled on the finest.
    pub levels: (u32, u32),
    pub samples: usize,
    pub field: DriftField,
    pub x0: f64,
    pub domain: Domain,
    pub alpha: f64,
    pub beta: f64,
    pub min_order: f64,
    pub tol: f64,
    pub seed: u64,
}

impl Default for CrossSchemeConfig {
    fn default() -> Self {
        Self {
            hurst: 0.75,
            horizon: 1.0,
            levels: (6, 12),
            samples: 8,
            field: DriftField::from_modes(
                vec![
                    FourierMode { frequency: 1.0, amplitude: 1.0, phase: -std::f64::consts::FRAC_PI_2 },
                    FourierMode { frequency: 2.0, amplitude: 0.5, phase: 1.0 },
                ],
                1.0,
            ),
            x0: 0.0,
            domain: Domain::uniform(1, -0.5, 0.5).expect("valid box"),
            alpha: 0.3,
            beta: -0.4,
            min_order: 0.9,
            tol: 1e-11,
            seed: default_seed(),
        }
    }
}

pub(super) fn run_cross_scheme(cfg: &CrossSchemeConfig) -> Result<ExperimentReport> {
    let (k0, k1) = cfg.levels;
    if k0 >= k1 || k1 > 20 {
        return Err(invalid("levels must be increasing and at most 20"));
    }
    let mut report = ExperimentReport::new("cross-scheme", cfg, cfg.seed)?;
    let finest = 1usize << k1;
    let sampler =
        FbmSampler::new(FbmSpec::new(cfg.hurst, cfg.horizon, finest, 1, derive_seed(cfg.seed, "cross-scheme")))?;
    let cases = [
        ("reflected", GammaKind::Skorokhod { domain: cfg.domain.clone() }),
        ("perturbed", GammaKind::Perturbed { params: PerturbParams::uniform(1, cfg.alpha, cfg.beta)? }),
    ];
    let mut measured = Vec::new();
    for (name, gamma) in &cases {
        let mut spec = SolveSpec::new(vec![cfg.x0], gamma.clone(), cfg.field.clone(), Scheme::PicardYoung);
        spec.tol = cfg.tol;
        spec.max_iter = 1000;
        let rows: Vec<Vec<f64>> = (0..cfg.samples as u64)
            .into_par_iter()
            .map(|k| {
                let w = sampler.sample(k);
                (k0..=k1).map(|level| cross_scheme_check(&spec, &w.subsample(finest >> level)?)).collect()
            })
            .collect::<Result<_>>()?;
        let mut lx = Vec::new();
        let mut ly = Vec::new();
        let mut distances = Vec::new();
        for (j, level) in (k0..=k1).enumerate() {
            let d = mean(&rows.iter().map(|r| r[j]).collect::<Vec<_>>());
            let dt = cfg.horizon / (1u64 << level) as f64;
            lx.push(dt.ln());
            ly.push(d.ln());
            distances.push(json!({ "steps": 1u64 << level, "mean_distance": d }));
            report.point(*name, dt, d);
        }
        let fit = linear_fit(&lx, &ly)?;
        report.verdicts.push(
            Verdict::new(
                11,
                format!("{name}: picard_young vs euler_split distance decays under refinement"),
                fit.slope >= cfg.min_order,
                fit.slope,
                format!("order ≥ {}", cfg.min_order),
            )
            .with_detail(format!("R² = {:.4}", fit.r_squared)),
        );
        let zero = SolveSpec { field: DriftField::constant(vec![0.0]), ..spec.clone() };
        let d0 = cross_scheme_check(&zero, &sampler.sample(0))?;
        report.verdicts.push(Verdict::new(11, format!("{name}: schemes coincide when f ≡ 0"), d0 == 0.0, d0, "0"));
        measured.push(json!({ "case": name, "order": fit.slope, "r_squared": fit.r_squared, "distances": distances, "zero_drift_distance": d0 }));
    }
    report.samples = cfg.samples;
    report.measurements = json!({ "cases": measured });
    Ok(report)
}
