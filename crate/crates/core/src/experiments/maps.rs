use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{budgeted_samples, default_seed, ExperimentReport, Verdict};
use crate::error::{invalid, Result};
use crate::fbm::{FbmSampler, FbmSpec};
use crate::paths::GridPath;
use crate::perturbed::{perturb, running_sup_lipschitz_check, PerturbParams, DEFAULT_MAX_ITER};
use crate::rng::{derive_seed, replica_rng};
use crate::skorokhod::{reflection_onevar_bound_check, Domain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KOneVarConfig {
    pub hursts: Vec<f64>,
    pub steps: usize,
    pub horizon: f64,
    pub samples: usize,
    /// Frequencies `N` of the injected paths `2cos(2πNt/T) − 1`.
    pub injections: Vec<usize>,
    pub seed: u64,
    pub budget_seconds: Option<f64>,
}

impl Default for KOneVarConfig {
    fn default() -> Self {
        Self {
            hursts: vec![0.25, 0.5, 0.75],
            steps: 1 << 12,
            horizon: 1.0,
            samples: 10_000,
            injections: vec![4, 8, 16, 32],
            seed: default_seed(),
            budget_seconds: None,
        }
    }
}

/// Unit-width box used by the reflection-measure campaigns.
pub(super) fn unit_domain() -> Domain {
    Domain::uniform(1, 0.0, 1.0).expect("valid box")
}

/// `2cos(2πNt/T) − 1`, which starts on the upper face of `[0, 1]`.
pub(super) fn cosine_injection(n: usize, horizon: f64, steps: usize) -> Result<GridPath> {
    GridPath::from_fn(0.0, horizon, steps, |t| 2.0 * (std::f64::consts::TAU * n as f64 * t / horizon).cos() - 1.0)
}

pub(super) fn run_konevar(cfg: &KOneVarConfig) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new("konevar", cfg, cfg.seed)?;
    let domain = unit_domain();
    let mut per_h = Vec::new();
    for &h in &cfg.hursts {
        let spec = FbmSpec::new(h, cfg.horizon, cfg.steps, 1, derive_seed(cfg.seed, &format!("konevar-{h}")));
        let sampler = FbmSampler::new(spec)?;
        let check = |k: u64| reflection_onevar_bound_check(&sampler.sample(k), &domain);
        let samples = budgeted_samples(cfg.samples, cfg.budget_seconds, &format!("H={h}"), &mut report.notes, |n| {
            (0..n as u64).into_par_iter().try_for_each(|k| check(k).map(|_| ()))
        })?;
        let outcomes: Vec<(f64, bool)> = (0..samples as u64)
            .into_par_iter()
            .map(|k| check(k).map(|b| (b.max_ratio(), b.holds)))
            .collect::<Result<_>>()?;
        let violations: Vec<usize> = outcomes.iter().enumerate().filter(|(_, o)| !o.1).map(|(k, _)| k).collect();
        let max_ratio = outcomes.iter().map(|o| o.0).fold(0.0, f64::max);
        report.samples += samples;
        report.point("max_ratio", h, max_ratio);
        let mut verdict = Verdict::new(
            1,
            format!("‖K‖_1-var ≤ N_1,T(W) + 1 for all fBm samples at H={h}"),
            violations.is_empty(),
            violations.len() as f64,
            "0 violations",
        );
        if !violations.is_empty() {
            let shown: Vec<String> = violations.iter().take(10).map(|k| k.to_string()).collect();
            verdict = verdict.with_detail(format!("violating replicas: {}", shown.join(", ")));
        }
        report.verdicts.push(verdict);
        per_h.push(json!({ "hurst": h, "samples": samples, "violations": violations.len(), "max_ratio": max_ratio }));
    }
    let constant = GridPath::constant(0.0, cfg.horizon / cfg.steps as f64, cfg.steps + 1, &[0.5])?;
    let constant_ratio = reflection_onevar_bound_check(&constant, &domain)?.max_ratio();
    report.verdicts.push(Verdict::new(1, "constant path has ratio 0", constant_ratio == 0.0, constant_ratio, "0"));
    let mut injections = Vec::new();
    for &n in &cfg.injections {
        let bound = reflection_onevar_bound_check(&cosine_injection(n, cfg.horizon, cfg.steps)?, &domain)?;
        report.verdicts.push(Verdict::new(
            1,
            format!("bound holds for 2cos(2π·{n}t/T) − 1"),
            bound.holds,
            bound.max_ratio(),
            "ratio ≤ 1",
        ));
        injections.push(json!({ "n": n, "lhs": bound.lhs[0], "rhs": bound.rhs[0] }));
    }
    report.measurements = json!({ "per_hurst": per_h, "constant_ratio": constant_ratio, "injections": injections });
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunsupConfig {
    pub pairs: usize,
    pub steps: usize,
    pub ps: Vec<f64>,
    pub hursts: Vec<f64>,
    pub seed: u64,
}

impl Default for RunsupConfig {
    fn default() -> Self {
        Self { pairs: 1000, steps: 128, ps: vec![1.0, 1.5, 2.0], hursts: vec![0.25, 0.5, 0.75], seed: default_seed() }
    }
}

pub(super) fn run_runsup(cfg: &RunsupConfig) -> Result<ExperimentReport> {
    if cfg.hursts.is_empty() {
        return Err(invalid("at least one Hurst index is required"));
    }
    let mut report = ExperimentReport::new("runsup-lipschitz", cfg, cfg.seed)?;
    let samplers = cfg
        .hursts
        .iter()
        .map(|&h| FbmSampler::new(FbmSpec::new(h, 1.0, cfg.steps, 1, derive_seed(cfg.seed, &format!("runsup-{h}")))))
        .collect::<Result<Vec<_>>>()?;
    // pairs alternate between independent paths and nearby perturbations
    let rows: Vec<Vec<(f64, bool)>> = (0..cfg.pairs)
        .into_par_iter()
        .map(|k| {
            let sampler = &samplers[k % samplers.len()];
            let w1 = sampler.sample(2 * k as u64);
            let other = sampler.sample(2 * k as u64 + 1);
            let w2 = if k % 2 == 0 { other } else { w1.add(&other.scale(0.1))? };
            cfg.ps
                .iter()
                .map(|&p| {
                    let c = running_sup_lipschitz_check(&w1, &w2, p)?;
                    let ratio = if c.rhs[0] > 0.0 { c.lhs[0] / c.rhs[0] } else { 0.0 };
                    Ok((ratio, c.holds))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    report.samples = cfg.pairs;
    let mut per_p = Vec::new();
    for (j, &p) in cfg.ps.iter().enumerate() {
        let failures = rows.iter().filter(|r| !r[j].1).count();
        let max_ratio = rows.iter().map(|r| r[j].0).fold(0.0, f64::max);
        report.point("max_ratio", p, max_ratio);
        report.verdicts.push(Verdict::new(
            3,
            format!("‖y¹−y²‖_p-var ≤ ‖w¹−w²‖_p-var for all pairs at p={p}"),
            failures == 0,
            max_ratio,
            "ratio ≤ 1 + 1e-12 for every pair",
        ));
        per_p.push(json!({ "p": p, "failures": failures, "max_ratio": max_ratio }));
    }
    report.measurements = json!({ "per_p": per_p });
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContractionConfig {
    pub instances: usize,
    pub rho_max: f64,
    pub slack: f64,
    pub steps: usize,
    pub hurst: f64,
    pub tol: f64,
    /// Range for α and β before rejection on ρ.
    pub weight_range: (f64, f64),
    pub seed: u64,
}

impl Default for ContractionConfig {
    fn default() -> Self {
        Self {
            instances: 100,
            rho_max: 0.9,
            slack: 0.05,
            steps: 1024,
            hurst: 0.5,
            tol: 1e-10,
            weight_range: (-3.0, 0.95),
            seed: default_seed(),
        }
    }
}

pub(super) fn run_contraction(cfg: &ContractionConfig) -> Result<ExperimentReport> {
    let (lo, hi) = cfg.weight_range;
    if !(lo < hi && hi < 1.0) {
        return Err(invalid("weight_range must satisfy lo < hi < 1"));
    }
    let mut report = ExperimentReport::new("contraction", cfg, cfg.seed)?;
    let sampler =
        FbmSampler::new(FbmSpec::new(cfg.hurst, 1.0, cfg.steps, 1, derive_seed(cfg.seed, "contraction-noise")))?;
    let weight_seed = derive_seed(cfg.seed, "contraction-weights");
    let rows: Vec<(f64, f64, f64, Option<f64>, f64, usize)> = (0..cfg.instances)
        .into_par_iter()
        .map(|k| {
            let mut rng = replica_rng(weight_seed, k as u64);
            let (alpha, beta, rho) = loop {
                let a = rng.random_range(lo..hi);
                let b = rng.random_range(lo..hi);
                let r = crate::perturbed::rho(a, b)?;
                if r < cfg.rho_max && (1.0 - a - b).abs() > 1e-3 {
                    break (a, b, r);
                }
            };
            let params = PerturbParams::new(vec![alpha], vec![beta])?;
            let w = sampler.sample(k as u64);
            let r = perturb(&w, &params, cfg.tol, DEFAULT_MAX_ITER)?;
            let c = &r.components[0];
            Ok((alpha, beta, rho, c.max_contraction, r.residual, r.iterations))
        })
        .collect::<Result<_>>()?;
    report.samples = cfg.instances;
    let excess = rows
        .iter()
        .filter_map(|r| r.3.map(|f| f - r.2))
        // factors are ≥ 0 and ρ < 1, so −1 is below every excess
        .fold(-1.0, f64::max);
    let worst_residual = rows.iter().map(|r| r.4).fold(0.0, f64::max);
    for r in &rows {
        if let Some(f) = r.3 {
            report.point("observed_vs_rho", r.2, f);
        }
    }
    report.verdicts.push(Verdict::new(
        4,
        "observed φ⁺ contraction factor ≤ ρ(α,β) + slack",
        excess <= cfg.slack,
        excess,
        format!("max(factor − ρ) ≤ {}", cfg.slack),
    ));
    report.verdicts.push(Verdict::new(
        4,
        "fixed-point residual ≤ tol",
        worst_residual <= cfg.tol,
        worst_residual,
        format!("≤ {:e}", cfg.tol),
    ));
    report.measurements = json!({
        "instances": rows.iter().map(|r| json!({
            "alpha": r.0, "beta": r.1, "rho": r.2, "max_contraction": r.3, "residual": r.4, "iterations": r.5
        })).collect::<Vec<_>>(),
        "max_excess": excess,
        "max_residual": worst_residual,
    });
    Ok(report)
}
