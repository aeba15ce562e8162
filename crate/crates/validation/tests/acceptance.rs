//! Runs every campaign at its default configuration and prints one line per
//! acceptance criterion. Exits non-zero when any criterion is not met.

use std::process::ExitCode;

use fracsde_validation::{run_all, summarize};

fn main() -> ExitCode {
    let reports = match run_all() {
        Ok(r) => r,
        Err(e) => {
            println!("campaign errored: {e}");
            return ExitCode::FAILURE;
        }
    };
    for (report, seconds) in &reports {
        println!("campaign {:<16} {:>8.2}s  {} verdicts", report.name, seconds, report.verdicts.len());
    }
    println!();
    let outcomes = summarize(&reports);
    for o in &outcomes {
        println!("{o}");
    }
    if outcomes.iter().all(|o| o.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
