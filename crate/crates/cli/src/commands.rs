//! Subcommand arguments, resolved configurations and handlers.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use fracsde::experiments::{run_campaign_timed, Status, CAMPAIGNS};
use fracsde::fbm::{FbmSampler, FbmSpec, SamplingMethod};
use fracsde::fields::{averaged_field_with, AveragingRoute, DriftField};
use fracsde::paths::io::{read_paths_file, write_paths_file};
use fracsde::paths::{p_variation, IncrementNorm};
use fracsde::perturbed::{perturb as perturb_paths, PerturbParams, DEFAULT_MAX_ITER, DEFAULT_TOL};
use fracsde::skorokhod::{reflect as reflect_path, reflection_onevar_bound_check, Domain};
use fracsde::solver::{solve as solve_path, SolveSpec};
use fracsde::GridPath;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{io_error, parse_list, read_json, resolve, write_json, write_text, CliError, CliResult};
use crate::GlobalArgs;

/// Flags of one subcommand plus the global seed, as merged over a config file.
#[derive(Serialize)]
struct WithSeed<'a, A: Serialize> {
    #[serde(flatten)]
    args: &'a A,
    seed: Option<u64>,
}

fn with_seed<'a, A: Serialize>(args: &'a A, global: &GlobalArgs) -> WithSeed<'a, A> {
    WithSeed { args, seed: global.seed }
}

fn read_paths(path: &Path) -> CliResult<Vec<GridPath>> {
    if !path.exists() {
        return Err(io_error(path, "no such file"));
    }
    Ok(read_paths_file(path)?)
}

fn write_paths(path: &Path, paths: &[GridPath]) -> CliResult<()> {
    write_paths_file(path, paths).map_err(|e| match e {
        fracsde::Error::Io(io) => io_error(path, io),
        other => other.into(),
    })
}

/// Tidy long-format CSV `series,replica,t,component,value`.
fn write_path_plot(file: &Path, series: &[(&str, &[GridPath])]) -> CliResult<()> {
    let f = std::fs::File::create(file).map_err(|e| io_error(file, e))?;
    let mut w = std::io::BufWriter::new(f);
    let mut body = String::from("series,replica,t,component,value\n");
    for (name, paths) in series {
        for (k, p) in paths.iter().enumerate() {
            for i in 0..p.len() {
                for (c, v) in p.point(i).iter().enumerate() {
                    body.push_str(&format!("{name},{k},{},{},{v}\n", p.time(i), c + 1));
                }
            }
        }
    }
    w.write_all(body.as_bytes()).map_err(|e| io_error(file, e))
}

fn maybe_plot(global: &GlobalArgs, series: &[(&str, &[GridPath])]) -> CliResult<()> {
    match &global.emit_plot_data {
        Some(file) => write_path_plot(file, series),
        None => Ok(()),
    }
}

fn default_horizon() -> f64 {
    1.0
}

fn one() -> usize {
    1
}

// ---------------------------------------------------------------- sample-fbm

#[derive(Debug, Args, Serialize)]
pub struct SampleFbmArgs {
    /// JSON file with any of the settings below; flags take precedence
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Hurst index H in (0,1)
    #[arg(long, allow_negative_numbers = true)]
    hurst: Option<f64>,
    /// Number of grid steps N
    #[arg(long)]
    steps: Option<usize>,
    /// Time horizon T [default: 1]
    #[arg(long)]
    horizon: Option<f64>,
    /// Dimension d (independent components) [default: 1]
    #[arg(long)]
    dim: Option<usize>,
    /// Number of paths M [default: 1]
    #[arg(long)]
    count: Option<usize>,
    /// Sampler [default: cholesky up to 1024 steps, circulant above]
    #[arg(long, value_parser = ["cholesky", "circulant"])]
    method: Option<String>,
    /// Output CSV
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleFbmConfig {
    hurst: f64,
    steps: usize,
    #[serde(default = "default_horizon")]
    horizon: f64,
    #[serde(default = "one")]
    dim: usize,
    #[serde(default = "one")]
    count: usize,
    #[serde(default)]
    method: Option<SamplingMethod>,
    #[serde(default)]
    seed: u64,
    out: PathBuf,
}

pub fn sample_fbm(args: SampleFbmArgs, global: &GlobalArgs) -> CliResult<()> {
    let cfg: SampleFbmConfig = resolve(args.config.as_deref(), &with_seed(&args, global))?;
    let mut spec = FbmSpec::new(cfg.hurst, cfg.horizon, cfg.steps, cfg.dim, cfg.seed);
    if let Some(m) = cfg.method {
        spec = spec.with_method(m);
    }
    let sampler = FbmSampler::new(spec)?;
    if cfg.count == 0 {
        return Err(CliError::Config("count must be at least 1".into()));
    }
    let paths = sampler.sample_range(0, cfg.count);
    write_paths(&cfg.out, &paths)?;
    maybe_plot(global, &[("fbm", &paths)])
}

// ------------------------------------------------------------------- reflect

#[derive(Debug, Args, Serialize)]
pub struct ReflectArgs {
    /// JSON file with any of the settings below; flags take precedence
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Input path CSV
    #[arg(long = "in", value_name = "FILE")]
    #[serde(rename = "input")]
    input: Option<PathBuf>,
    /// Lower faces a1,...,ad (use -inf for an open side)
    #[arg(long, value_parser = parse_faces, allow_hyphen_values = true)]
    lower: Option<Faces>,
    /// Upper faces b1,...,bd (use inf for an open side)
    #[arg(long, value_parser = parse_faces, allow_hyphen_values = true)]
    upper: Option<Faces>,
    /// Output CSV of reflected paths
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// JSON report with reflection-measure statistics
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
}

/// Box faces; infinite entries serialize as `null`.
#[derive(Debug, Clone, Serialize)]
struct Faces(Vec<Option<f64>>);

fn parse_faces(s: &str) -> Result<Faces, String> {
    Ok(Faces(parse_list(s)?.into_iter().map(|v| v.is_finite().then_some(v)).collect()))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReflectConfig {
    input: PathBuf,
    lower: Vec<Option<f64>>,
    upper: Vec<Option<f64>>,
    out: PathBuf,
    #[serde(default)]
    report: Option<PathBuf>,
}

pub fn reflect(args: ReflectArgs, global: &GlobalArgs) -> CliResult<()> {
    let cfg: ReflectConfig = resolve(args.config.as_deref(), &args)?;
    let domain: Domain = serde_json::from_value(json!({ "lower": cfg.lower, "upper": cfg.upper }))
        .map_err(|e| CliError::Config(format!("domain: {e}")))?;
    let paths = read_paths(&cfg.input)?;
    let results = paths.par_iter().map(|p| reflect_path(p, &domain)).collect::<fracsde::Result<Vec<_>>>()?;
    let reflected: Vec<GridPath> = results.iter().map(|r| r.reflected.clone()).collect();
    write_paths(&cfg.out, &reflected)?;
    if let Some(report) = &cfg.report {
        let per_path: Vec<Value> = paths
            .iter()
            .zip(&results)
            .map(|(p, r)| {
                let bound = reflection_onevar_bound_check(p, &domain).ok();
                json!({
                    "k_onevar": r.k_onevar,
                    "total_onevar": r.total_onevar(),
                    "sign_condition_violation": r.sign_condition_violation(&domain),
                    "onevar_bound": bound.map(|b| json!({ "lhs": b.lhs, "rhs": b.rhs, "holds": b.holds, "max_ratio": b.max_ratio() })),
                })
            })
            .collect();
        write_json(report, &json!({ "config": cfg, "paths": per_path }))?;
    }
    let ks: Vec<GridPath> = results.iter().map(|r| r.k.clone()).collect();
    maybe_plot(global, &[("input", &paths), ("reflected", &reflected), ("k", &ks)])
}

// ------------------------------------------------------------------- perturb

#[derive(Debug, Args, Serialize)]
pub struct PerturbArgs {
    /// JSON file with any of the settings below; flags take precedence
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Input path CSV
    #[arg(long = "in", value_name = "FILE")]
    #[serde(rename = "input")]
    input: Option<PathBuf>,
    /// Running-maximum weights α (one value, or one per component)
    #[arg(long, value_parser = parse_numbers, allow_hyphen_values = true)]
    alpha: Option<Numbers>,
    /// Running-minimum weights β (one value, or one per component)
    #[arg(long, value_parser = parse_numbers, allow_hyphen_values = true)]
    beta: Option<Numbers>,
    /// Sup-norm tolerance of the fixed-point iteration [default: 1e-10]
    #[arg(long)]
    tol: Option<f64>,
    /// Iteration cap [default: 10000]
    #[arg(long)]
    max_iter: Option<usize>,
    /// Output CSV of perturbed paths
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// JSON report with fixed-point diagnostics
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
}

/// Comma-separated numbers given as one flag value.
#[derive(Debug, Clone, Serialize)]
#[serde(transparent)]
struct Numbers(Vec<f64>);

fn parse_numbers(s: &str) -> Result<Numbers, String> {
    parse_list(s).map(Numbers)
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PerturbConfig {
    input: PathBuf,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    #[serde(default = "default_tol")]
    tol: f64,
    #[serde(default = "default_max_iter")]
    max_iter: usize,
    out: PathBuf,
    #[serde(default)]
    report: Option<PathBuf>,
}

fn broadcast(v: &[f64], dim: usize, name: &str) -> CliResult<Vec<f64>> {
    match v.len() {
        1 => Ok(vec![v[0]; dim]),
        n if n == dim => Ok(v.to_vec()),
        n => Err(CliError::Config(format!("{name} has {n} entries for dimension {dim}"))),
    }
}

pub fn perturb(args: PerturbArgs, global: &GlobalArgs) -> CliResult<()> {
    let cfg: PerturbConfig = resolve(args.config.as_deref(), &args)?;
    let paths = read_paths(&cfg.input)?;
    let dim = paths[0].dim();
    let params = PerturbParams::new(broadcast(&cfg.alpha, dim, "alpha")?, broadcast(&cfg.beta, dim, "beta")?)?;
    let results = paths
        .par_iter()
        .map(|p| perturb_paths(p, &params, cfg.tol, cfg.max_iter))
        .collect::<fracsde::Result<Vec<_>>>()?;
    let out: Vec<GridPath> = results.iter().map(|r| r.f.clone()).collect();
    write_paths(&cfg.out, &out)?;
    if let Some(report) = &cfg.report {
        let per_path: Vec<Value> = results
            .iter()
            .map(|r| json!({ "iterations": r.iterations, "residual": r.residual, "components": r.components }))
            .collect();
        write_json(report, &json!({ "config": cfg, "rho": params.rho(), "paths": per_path }))?;
    }
    maybe_plot(global, &[("input", &paths), ("perturbed", &out)])
}

// ---------------------------------------------------------------------- pvar

#[derive(Debug, Args, Serialize)]
pub struct PvarArgs {
    /// JSON file with any of the settings below; flags take precedence
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Input path CSV
    #[arg(long = "in", value_name = "FILE")]
    #[serde(rename = "input")]
    input: Option<PathBuf>,
    /// Variation exponent p ≥ 1
    #[arg(long)]
    p: Option<f64>,
    /// Measure only this component (1-based) instead of Euclidean increments
    #[arg(long)]
    component: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PvarConfig {
    input: PathBuf,
    p: f64,
    #[serde(default)]
    component: Option<usize>,
}

pub fn pvar(args: PvarArgs, _global: &GlobalArgs) -> CliResult<()> {
    let cfg: PvarConfig = resolve(args.config.as_deref(), &args)?;
    let norm = match cfg.component {
        None => IncrementNorm::Euclidean,
        Some(0) => return Err(CliError::Config("component is 1-based".into())),
        Some(c) => IncrementNorm::Component(c - 1),
    };
    let paths = read_paths(&cfg.input)?;
    let mut out = String::new();
    for p in &paths {
        if let IncrementNorm::Component(c) = norm {
            if c >= p.dim() {
                return Err(CliError::Config(format!("component {} out of range for dimension {}", c + 1, p.dim())));
            }
        }
        out.push_str(&format!("{}\n", p_variation(p, cfg.p, p.full_window(), norm)?));
    }
    print!("{out}");
    Ok(())
}

// ------------------------------------------------------------------ avgfield

#[derive(Debug, Args, Serialize)]
pub struct AvgfieldArgs {
    /// JSON file with any of the settings below (a `field` object may be
    /// given inline); flags take precedence
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Input path CSV (the integrating path w)
    #[arg(long = "in", value_name = "FILE")]
    #[serde(rename = "input")]
    input: Option<PathBuf>,
    /// Which path of a multi-path file to use (0-based) [default: 0]
    #[arg(long)]
    path_index: Option<usize>,
    /// JSON file describing the drift field
    #[arg(long, value_name = "FILE")]
    field_file: Option<PathBuf>,
    /// First spatial point (all coordinates equal)
    #[arg(long, allow_negative_numbers = true)]
    x_min: Option<f64>,
    /// Last spatial point (all coordinates equal)
    #[arg(long, allow_negative_numbers = true)]
    x_max: Option<f64>,
    /// Number of spatial points
    #[arg(long)]
    x_points: Option<usize>,
    /// Quadrature route [default: spectral for Fourier fields, direct otherwise]
    #[arg(long, value_parser = ["direct", "spectral"])]
    route: Option<String>,
    /// Output CSV; a JSON metadata sidecar is written next to it
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AvgfieldConfig {
    input: PathBuf,
    #[serde(default)]
    path_index: usize,
    #[serde(default)]
    field: Option<DriftField>,
    #[serde(default)]
    field_file: Option<PathBuf>,
    x_min: f64,
    x_max: f64,
    x_points: usize,
    #[serde(default)]
    route: Option<AveragingRoute>,
    out: PathBuf,
}

pub fn avgfield(args: AvgfieldArgs, global: &GlobalArgs) -> CliResult<()> {
    let cfg: AvgfieldConfig = resolve(args.config.as_deref(), &args)?;
    let field: DriftField = match (&cfg.field_file, &cfg.field) {
        (Some(file), _) => serde_json::from_value(read_json(file)?)
            .map_err(|e| CliError::Config(format!("{}: {e}", file.display())))?,
        (None, Some(f)) => f.clone(),
        (None, None) => return Err(CliError::Config("a drift field is required (`--field-file` or `field`)".into())),
    };
    let paths = read_paths(&cfg.input)?;
    let w = paths.get(cfg.path_index).ok_or_else(|| {
        CliError::Config(format!("path index {} out of range ({} paths)", cfg.path_index, paths.len()))
    })?;
    if cfg.x_points == 0 || cfg.x_max.partial_cmp(&cfg.x_min).is_none_or(|o| o.is_lt()) {
        return Err(CliError::Config("x grid needs x_points ≥ 1 and x_max ≥ x_min".into()));
    }
    let step = if cfg.x_points > 1 { (cfg.x_max - cfg.x_min) / (cfg.x_points - 1) as f64 } else { 0.0 };
    let grid: Vec<Vec<f64>> = (0..cfg.x_points).map(|j| vec![cfg.x_min + j as f64 * step; w.dim()]).collect();
    let route = cfg.route.unwrap_or(match field.form {
        fracsde::fields::FieldForm::FourierSeries { .. } => AveragingRoute::Spectral,
        _ => AveragingRoute::Direct,
    });
    let table = averaged_field_with(w, &field, &grid, route)?;
    table.write_files(&cfg.out).map_err(|e| match e {
        fracsde::Error::Io(io) => io_error(&cfg.out, io),
        other => other.into(),
    })?;
    if let Some(file) = &global.emit_plot_data {
        let mut body = String::from("series,t,x,component,value\n");
        for i in 0..table.times() {
            for (j, x) in grid.iter().enumerate() {
                for (c, v) in table.value(i, j).iter().enumerate() {
                    body.push_str(&format!("averaged_field,{},{},{},{v}\n", table.time(i), x[0], c + 1));
                }
            }
        }
        write_text(file, &body)?;
    }
    Ok(())
}

// --------------------------------------------------------------------- solve

#[derive(Debug, Args, Serialize)]
pub struct SolveArgs {
    /// JSON file with the equation (x0, gamma, field, scheme, ...) and noise
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Scheme override
    #[arg(long, value_parser = ["picard_young", "euler_split"])]
    scheme: Option<String>,
    /// Read the noise path from this CSV instead of sampling it
    #[arg(long, value_name = "FILE")]
    noise_file: Option<PathBuf>,
    /// Output CSV of the solution path
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// JSON report with iteration counts and diagnostics
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseConfig {
    hurst: f64,
    steps: usize,
    #[serde(default = "default_horizon")]
    horizon: f64,
    #[serde(default)]
    method: Option<SamplingMethod>,
    /// Replica index within the seeded stream.
    #[serde(default)]
    replica: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct SolveConfig {
    #[serde(flatten)]
    spec: SolveSpec,
    #[serde(default)]
    noise: Option<NoiseConfig>,
    #[serde(default)]
    noise_file: Option<PathBuf>,
    #[serde(default)]
    seed: u64,
    out: PathBuf,
    #[serde(default)]
    report: Option<PathBuf>,
}

pub fn solve(args: SolveArgs, global: &GlobalArgs) -> CliResult<()> {
    let cfg: SolveConfig = resolve(args.config.as_deref(), &with_seed(&args, global))?;
    let noise = match (&cfg.noise_file, &cfg.noise) {
        (Some(file), _) => read_paths(file)?.swap_remove(0),
        (None, Some(n)) => {
            let mut spec = FbmSpec::new(n.hurst, n.horizon, n.steps, cfg.spec.x0.len(), cfg.seed);
            if let Some(m) = n.method {
                spec = spec.with_method(m);
            }
            FbmSampler::new(spec)?.sample(n.replica)
        }
        (None, None) => return Err(CliError::Config("either `noise` or `noise_file` is required".into())),
    };
    let result = solve_path(&cfg.spec, &noise)?;
    write_paths(&cfg.out, std::slice::from_ref(&result.x))?;
    if let Some(report) = &cfg.report {
        write_json(
            report,
            &json!({
                "config": cfg,
                "iterations": result.iterations,
                "residual": result.residual,
                "diagnostics": result.diagnostics,
            }),
        )?;
    }
    maybe_plot(
        global,
        &[
            ("noise", std::slice::from_ref(&noise)),
            ("solution", std::slice::from_ref(&result.x)),
            ("theta", std::slice::from_ref(&result.theta)),
        ],
    )
}

// ---------------------------------------------------------------- experiment

#[derive(Debug, Subcommand)]
pub enum ExperimentCommand {
    /// Run one campaign and write its JSON report
    Run(ExperimentRunArgs),
    /// List registered campaigns
    List,
}

#[derive(Debug, Args)]
pub struct ExperimentRunArgs {
    /// Campaign name (see `experiment list`)
    #[arg(long)]
    name: String,
    /// JSON campaign configuration; missing keys take their defaults
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output report JSON; wall-clock time goes to a `.timing.json` sidecar
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Exit with status 3 when any verdict fails or is inconclusive
    #[arg(long)]
    strict: bool,
}

pub fn experiment(command: ExperimentCommand, global: &GlobalArgs) -> CliResult<()> {
    let args = match command {
        ExperimentCommand::List => {
            for c in CAMPAIGNS {
                let criteria: Vec<String> = c.criteria.iter().map(u32::to_string).collect();
                println!("{:<18} criteria {:<6} {}", c.name, criteria.join(","), c.description);
            }
            return Ok(());
        }
        ExperimentCommand::Run(args) => args,
    };
    let mut config = match &args.config {
        Some(file) => read_json(file)?,
        None => Value::Null,
    };
    if let Some(seed) = global.seed {
        if config.is_null() {
            config = json!({});
        }
        match config.as_object_mut() {
            Some(map) => {
                map.insert("seed".into(), json!(seed));
            }
            None => return Err(CliError::Config("campaign config must be a JSON object".into())),
        }
    }
    let (report, seconds) = run_campaign_timed(&args.name, &config)?;
    write_text(&args.out, &report.to_json()?)?;
    write_json(&args.out.with_extension("timing.json"), &json!({ "campaign": report.name, "seconds": seconds }))?;
    if let Some(file) = &global.emit_plot_data {
        let f = std::fs::File::create(file).map_err(|e| io_error(file, e))?;
        report.write_plot_csv(std::io::BufWriter::new(f))?;
    }
    for v in &report.verdicts {
        let status = match v.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Inconclusive => "INCONCLUSIVE",
            Status::Info => "INFO",
        };
        println!("[{status}] criterion {}: {} (measured {}, target {})", v.criterion, v.claim, v.measured, v.target);
    }
    if args.strict && !report.passed() {
        return Err(CliError::Numerical(format!("campaign `{}` has failing verdicts", report.name)));
    }
    Ok(())
}
