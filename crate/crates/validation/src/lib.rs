//! Runs the verification campaigns and folds their verdicts into one
//! outcome per acceptance criterion.

use std::collections::BTreeMap;
use std::fmt;

use fracsde::experiments::{run_campaign_timed, ExperimentReport, Status, CAMPAIGNS};
use serde_json::Value;

/// Number of acceptance criteria covered by the campaigns.
pub const CRITERIA: u32 = 11;

/// Wall-clock limit for the reflection-measure campaign (criterion 1).
pub const KONEVAR_RUNTIME_LIMIT: f64 = 300.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionOutcome {
    pub criterion: u32,
    pub passed: bool,
    /// One line per failing or inconclusive verdict.
    pub problems: Vec<String>,
}

impl fmt::Display for CriterionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "criterion {:>2}: {}", self.criterion, if self.passed { "PASS" } else { "FAIL" })?;
        for p in &self.problems {
            write!(f, "\n    {p}")?;
        }
        Ok(())
    }
}

/// A campaign report with its wall-clock time in seconds.
pub type TimedReport = (ExperimentReport, f64);

/// Runs every registered campaign with its default configuration.
pub fn run_all() -> fracsde::Result<Vec<TimedReport>> {
    CAMPAIGNS.iter().map(|c| run_campaign_timed(c.name, &Value::Null)).collect()
}

/// A criterion passes when it has at least one verdict and none failed or
/// was inconclusive.
pub fn summarize(reports: &[TimedReport]) -> Vec<CriterionOutcome> {
    let mut seen: BTreeMap<u32, bool> = BTreeMap::new();
    let mut problems: BTreeMap<u32, Vec<String>> = BTreeMap::new();
    for (report, seconds) in reports {
        for v in &report.verdicts {
            seen.entry(v.criterion).or_insert(true);
            if matches!(v.status, Status::Fail | Status::Inconclusive) {
                let interval = v.interval.map(|(a, b)| format!(" (interval [{a:.4}, {b:.4}])")).unwrap_or_default();
                problems.entry(v.criterion).or_default().push(format!(
                    "{} [{:?}]: measured {}{interval}, target {}",
                    v.claim, v.status, v.measured, v.target
                ));
            }
        }
        if report.name == "konevar" && *seconds > KONEVAR_RUNTIME_LIMIT {
            problems.entry(1).or_default().push(format!("runtime {seconds:.1}s exceeds {KONEVAR_RUNTIME_LIMIT}s"));
        }
    }
    (1..=CRITERIA)
        .map(|c| {
            let mut lines = problems.remove(&c).unwrap_or_default();
            if !seen.contains_key(&c) {
                lines.push("no verdicts recorded".into());
            }
            CriterionOutcome { criterion: c, passed: lines.is_empty(), problems: lines }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use fracsde::experiments::run_campaign;
    use serde_json::json;

    #[test]
    fn missing_criteria_fail_and_present_ones_pass() {
        let report = run_campaign("sharpness", &json!({ "steps": 4096 })).unwrap();
        let outcomes = summarize(&[(report, 0.0)]);
        assert_eq!(outcomes.len(), CRITERIA as usize);
        assert!(outcomes[1].passed);
        assert!(!outcomes[0].passed);
        assert_eq!(outcomes[0].problems, vec!["no verdicts recorded".to_string()]);
        assert_eq!(outcomes[1].to_string(), "criterion  2: PASS");
    }

    #[test]
    fn failing_verdicts_and_slow_runs_are_reported() {
        let mut report = run_campaign("konevar", &json!({ "samples": 10, "steps": 128 })).unwrap();
        report.verdicts[0].status = Status::Fail;
        let outcomes = summarize(&[(report, KONEVAR_RUNTIME_LIMIT + 1.0)]);
        assert!(!outcomes[0].passed);
        assert_eq!(outcomes[0].problems.len(), 2);
        assert!(outcomes[0].problems[1].starts_with("runtime"));
    }
}
