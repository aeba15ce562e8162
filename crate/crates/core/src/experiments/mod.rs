//! Seeded Monte Carlo and deterministic campaigns with JSON reports.
//!
//! Each campaign reads a JSON configuration (missing fields take the
//! documented defaults), runs, and returns an [`ExperimentReport`] whose
//! verdicts are tagged with the acceptance criterion they bear on. Reports
//! contain no timing information, so a replay with the same configuration
//! reproduces the same bytes; wall-clock time is returned separately.

mod deterministic;
mod maps;
mod stochastic;

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{invalid, Result};

pub use deterministic::{brute_force_p_variation_power, PvarConfig, SewingConfig, SharpnessConfig};
pub use maps::{ContractionConfig, KOneVarConfig, RunsupConfig};
pub use stochastic::{CovarianceConfig, CrossSchemeConfig, RegularityConfig, StabilityConfig, TailConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    /// The measurement could not support a decision (e.g. poor regression fit).
    Inconclusive,
    /// Reported for context; carries no pass/fail meaning.
    Info,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    /// Acceptance criterion number this verdict bears on.
    pub criterion: u32,
    pub claim: String,
    pub status: Status,
    pub measured: f64,
    pub target: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interval: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Verdict {
    fn new(criterion: u32, claim: impl Into<String>, ok: bool, measured: f64, target: impl Into<String>) -> Self {
        Self {
            criterion,
            claim: claim.into(),
            status: if ok { Status::Pass } else { Status::Fail },
            measured,
            target: target.into(),
            interval: None,
            detail: None,
        }
    }

    fn info(criterion: u32, claim: impl Into<String>, measured: f64) -> Self {
        Self { status: Status::Info, ..Self::new(criterion, claim, true, measured, "reported only") }
    }

    fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }

    fn with_interval(mut self, interval: (f64, f64)) -> Self {
        self.interval = Some(interval);
        self
    }

    fn with_status(mut self, status: Status) -> Self {
        self.status = status;
        self
    }
}

/// One point of tidy long-format plot data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub series: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    /// The configuration actually used, defaults filled in.
    pub config: Value,
    pub seed: u64,
    pub samples: usize,
    pub verdicts: Vec<Verdict>,
    pub measurements: Value,
    pub notes: Vec<String>,
    pub plot: Vec<PlotPoint>,
}

impl ExperimentReport {
    fn new(name: &str, config: &impl Serialize, seed: u64) -> Result<Self> {
        Ok(Self {
            name: name.to_string(),
            config: serde_json::to_value(config)?,
            seed,
            samples: 0,
            verdicts: Vec::new(),
            measurements: Value::Null,
            notes: Vec::new(),
            plot: Vec::new(),
        })
    }

    fn point(&mut self, series: impl Into<String>, x: f64, y: f64) {
        self.plot.push(PlotPoint { series: series.into(), x, y });
    }

    /// True when no verdict failed or was inconclusive.
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| matches!(v.status, Status::Pass | Status::Info))
    }

    /// Verdicts bearing on one criterion.
    pub fn criterion(&self, number: u32) -> impl Iterator<Item = &Verdict> {
        self.verdicts.iter().filter(move |v| v.criterion == number)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Tidy CSV `campaign,series,x,y`.
    pub fn write_plot_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["campaign", "series", "x", "y"])?;
        for p in &self.plot {
            w.write_record([self.name.as_str(), p.series.as_str(), &p.x.to_string(), &p.y.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub struct CampaignInfo {
    pub name: &'static str,
    pub criteria: &'static [u32],
    pub description: &'static str,
}

pub const CAMPAIGNS: &[CampaignInfo] = &[
    CampaignInfo {
        name: "konevar",
        criteria: &[1],
        description: "reflection measure 1-variation vs oscillation count on fBm samples",
    },
    CampaignInfo {
        name: "sharpness",
        criteria: &[2],
        description: "1-variation of the reflection measure of 2cos(2πNt/T) grows linearly in N",
    },
    CampaignInfo {
        name: "runsup-lipschitz",
        criteria: &[3],
        description: "running maximum is 1-Lipschitz in p-variation",
    },
    CampaignInfo {
        name: "contraction",
        criteria: &[4],
        description: "observed contraction of the perturbed fixed-point map vs ρ(α,β)",
    },
    CampaignInfo {
        name: "fbm-covariance",
        criteria: &[5],
        description: "empirical fBm covariance and sampler cross-check",
    },
    CampaignInfo {
        name: "pvar-exact",
        criteria: &[6],
        description: "p-variation dynamic programme vs brute-force enumeration",
    },
    CampaignInfo { name: "sewing", criteria: &[7], description: "sewing remainder order and linearization identity" },
    CampaignInfo { name: "tail", criteria: &[8], description: "Weibull tail exponent of the reflection measure" },
    CampaignInfo {
        name: "regularity",
        criteria: &[9],
        description: "spatial regularity of averaged fields along rough paths",
    },
    CampaignInfo {
        name: "stability",
        criteria: &[10],
        description: "solution distance vs drift distance along a mollification ladder",
    },
    CampaignInfo {
        name: "cross-scheme",
        criteria: &[11],
        description: "picard_young vs euler_split under grid refinement",
    },
];

/// Runs a campaign by name. `config` may be `null` or a partial object.
pub fn run_campaign(name: &str, config: &Value) -> Result<ExperimentReport> {
    fn parse<T: serde::de::DeserializeOwned + Default>(config: &Value) -> Result<T> {
        if config.is_null() {
            Ok(T::default())
        } else {
            Ok(serde_json::from_value(config.clone())?)
        }
    }
    match name {
        "konevar" => maps::run_konevar(&parse(config)?),
        "sharpness" => deterministic::run_sharpness(&parse(config)?),
        "runsup-lipschitz" => maps::run_runsup(&parse(config)?),
        "contraction" => maps::run_contraction(&parse(config)?),
        "fbm-covariance" => stochastic::run_covariance(&parse(config)?),
        "pvar-exact" => deterministic::run_pvar(&parse(config)?),
        "sewing" => deterministic::run_sewing(&parse(config)?),
        "tail" => stochastic::run_tail(&parse(config)?),
        "regularity" => stochastic::run_regularity(&parse(config)?),
        "stability" => stochastic::run_stability(&parse(config)?),
        "cross-scheme" => stochastic::run_cross_scheme(&parse(config)?),
        other => Err(invalid(format!(
            "unknown campaign `{other}`; available: {}",
            CAMPAIGNS.iter().map(|c| c.name).collect::<Vec<_>>().join(", ")
        ))),
    }
}

/// Runs a campaign and also returns its wall-clock time in seconds.
pub fn run_campaign_timed(name: &str, config: &Value) -> Result<(ExperimentReport, f64)> {
    let start = Instant::now();
    let report = run_campaign(name, config)?;
    Ok((report, start.elapsed().as_secs_f64()))
}

const PILOT_SAMPLES: usize = 32;

/// Sample count after applying an optional wall-clock budget. A pilot of
/// `PILOT_SAMPLES` is timed; if the full count would overrun, it is reduced
/// and a note is added. Without a budget the request is returned unchanged.
fn budgeted_samples(
    requested: usize,
    budget_seconds: Option<f64>,
    label: &str,
    notes: &mut Vec<String>,
    pilot: impl FnOnce(usize) -> Result<()>,
) -> Result<usize> {
    let Some(budget) = budget_seconds else {
        return Ok(requested);
    };
    if !(budget > 0.0) {
        return Err(invalid("budget_seconds must be positive"));
    }
    let n = PILOT_SAMPLES.min(requested);
    let start = Instant::now();
    pilot(n)?;
    let per_sample = start.elapsed().as_secs_f64() / n.max(1) as f64;
    let affordable = if per_sample > 0.0 { (budget / per_sample).floor() as usize } else { requested };
    if affordable >= requested {
        return Ok(requested);
    }
    let reduced = affordable.max(n);
    notes.push(format!(
        "{label}: budget of {budget}s allows about {affordable} samples; reduced from {requested} to {reduced}"
    ));
    Ok(reduced)
}

fn default_seed() -> u64 {
    20_240_601
}
