//! `--help` output of every subcommand is compared with files in `golden/`.
//! Set `UPDATE_GOLDEN=1` to rewrite them.

use std::path::PathBuf;
use std::process::Command;

const COMMANDS: &[&[&str]] = &[
    &[],
    &["sample-fbm"],
    &["reflect"],
    &["perturb"],
    &["pvar"],
    &["avgfield"],
    &["solve"],
    &["experiment"],
    &["experiment", "run"],
    &["experiment", "list"],
];

fn golden_path(args: &[&str]) -> PathBuf {
    let name = if args.is_empty() { "fracsde".to_string() } else { args.join("-") };
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(format!("{name}.txt"))
}

#[test]
fn help_matches_golden_files() {
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    for args in COMMANDS {
        let out = Command::new(env!("CARGO_BIN_EXE_fracsde")).args(*args).arg("--help").output().unwrap();
        assert!(out.status.success(), "{args:?} --help failed");
        let text = String::from_utf8(out.stdout).unwrap();
        let path = golden_path(args);
        if update {
            std::fs::write(&path, &text).unwrap();
            continue;
        }
        let expected =
            std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden file {}", path.display()));
        assert_eq!(text, expected, "help for {args:?} changed; rerun with UPDATE_GOLDEN=1 if intended");
    }
}

#[test]
fn every_flag_is_documented() {
    for args in COMMANDS {
        let text = std::fs::read_to_string(golden_path(args)).unwrap();
        for line in text.lines().filter(|l| l.trim_start().starts_with("--")) {
            let rest = line.trim_start().split_once("  ").map(|(_, d)| d.trim()).unwrap_or("");
            assert!(!rest.is_empty(), "{args:?}: undocumented flag line `{line}`");
        }
    }
}
