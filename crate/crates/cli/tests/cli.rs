use std::path::Path;
use std::process::{Command, Output};

fn fracsde(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracsde")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn pvar_of_square_wave() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("path.csv");
    std::fs::write(&path, "t,x1\n0,0\n1,1\n2,0\n3,1\n").unwrap();
    let out = fracsde(&["pvar", "--in", s(&path), "--p", "2"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let value: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    assert!((value - 3f64.sqrt()).abs() < 1e-15);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = fracsde(&["sample-fbm", "--hurst", "1.5", "--steps", "8", "--out", s(&dir.path().join("x.csv"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("Hurst index must lie in (0,1)"));

    let out = fracsde(&["pvar", "--in", s(&dir.path().join("missing.csv")), "--p", "2"]);
    assert_eq!(out.status.code(), Some(4));

    let out = fracsde(&["pvar", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("Usage"));

    let out = fracsde(&["no-such-command"]);
    assert_eq!(out.status.code(), Some(2));

    let out = fracsde(&["sample-fbm", "--steps", "8", "--out", s(&dir.path().join("x.csv"))]);
    assert_eq!(out.status.code(), Some(2), "missing hurst is a config error");
}

#[test]
fn non_convergence_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let paths = dir.path().join("w.csv");
    assert!(fracsde(&["sample-fbm", "--hurst", "0.3", "--steps", "64", "--seed", "1", "--out", s(&paths)])
        .status
        .success());
    let out = fracsde(&[
        "perturb",
        "--in",
        s(&paths),
        "--alpha",
        "0.6",
        "--beta",
        "-0.9",
        "--tol",
        "1e-15",
        "--max-iter",
        "1",
        "--out",
        s(&dir.path().join("f.csv")),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn sampling_is_deterministic_in_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let p = dir.path().join(name);
        let out = fracsde(&[
            "sample-fbm",
            "--hurst",
            "0.7",
            "--steps",
            "2048",
            "--count",
            "3",
            "--dim",
            "2",
            "--seed",
            seed,
            "--out",
            s(&p),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        std::fs::read_to_string(p).unwrap()
    };
    let a = run("a.csv", "9");
    assert_eq!(a, run("b.csv", "9"));
    assert_ne!(a, run("c.csv", "10"));
    assert!(a.starts_with("path,t,x1,x2\n"));
    assert_eq!(a.lines().count(), 1 + 3 * 2049);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let out_a = dir.path().join("a.csv");
    std::fs::write(&cfg, format!(r#"{{"hurst": 0.4, "steps": 16, "seed": 3, "out": "{}"}}"#, s(&out_a))).unwrap();
    assert!(fracsde(&["sample-fbm", "--config", s(&cfg)]).status.success());
    assert_eq!(std::fs::read_to_string(&out_a).unwrap().lines().count(), 18);
    let out_b = dir.path().join("b.csv");
    assert!(fracsde(&["sample-fbm", "--config", s(&cfg), "--steps", "32", "--out", s(&out_b)]).status.success());
    assert_eq!(std::fs::read_to_string(&out_b).unwrap().lines().count(), 34);

    std::fs::write(&cfg, r#"{"hurst": 0.4, "steps": 16, "colour": "red", "out": "x.csv"}"#).unwrap();
    assert_eq!(fracsde(&["sample-fbm", "--config", s(&cfg)]).status.code(), Some(2));
}

#[test]
fn reflect_and_perturb_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.csv");
    assert!(fracsde(&[
        "sample-fbm",
        "--hurst",
        "0.5",
        "--steps",
        "256",
        "--count",
        "4",
        "--seed",
        "2",
        "--out",
        s(&w)
    ])
    .status
    .success());
    let r = dir.path().join("r.csv");
    let rep = dir.path().join("k.json");
    let out =
        fracsde(&["reflect", "--in", s(&w), "--lower", "-0.5", "--upper", "0.5", "--out", s(&r), "--report", s(&rep)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&rep).unwrap()).unwrap();
    let paths = report["paths"].as_array().unwrap();
    assert_eq!(paths.len(), 4);
    for p in paths {
        assert_eq!(p["onevar_bound"]["holds"], true);
        assert_eq!(p["sign_condition_violation"], 0.0);
    }
    for line in std::fs::read_to_string(&r).unwrap().lines().skip(1) {
        let x: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!((-0.5..=0.5).contains(&x));
    }
    // a one-sided box with an infinite face
    let out = fracsde(&["reflect", "--in", s(&w), "--lower", "0", "--upper", "inf", "--out", s(&r)]);
    assert!(out.status.success(), "{}", stderr(&out));

    let f = dir.path().join("f.csv");
    let rep = dir.path().join("fp.json");
    let plot = dir.path().join("plot.csv");
    let out = fracsde(&[
        "perturb",
        "--in",
        s(&w),
        "--alpha",
        "0.3",
        "--beta",
        "-0.4",
        "--out",
        s(&f),
        "--report",
        s(&rep),
        "--emit-plot-data",
        s(&plot),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&rep).unwrap()).unwrap();
    for p in report["paths"].as_array().unwrap() {
        assert!(p["residual"].as_f64().unwrap() <= 1e-10);
    }
    let plot = std::fs::read_to_string(plot).unwrap();
    assert!(plot.starts_with("series,replica,t,component,value\n"));
    assert!(plot.contains("\nperturbed,3,"));
}

#[test]
fn avgfield_writes_table_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.csv");
    assert!(fracsde(&["sample-fbm", "--hurst", "0.3", "--steps", "32", "--seed", "4", "--out", s(&w)])
        .status
        .success());
    let field = dir.path().join("field.json");
    std::fs::write(&field, r#"{"mode": "constant", "value": [2.0], "target_alpha": 1.0}"#).unwrap();
    let out_csv = dir.path().join("avg.csv");
    let out = fracsde(&[
        "avgfield",
        "--in",
        s(&w),
        "--field-file",
        s(&field),
        "--x-min",
        "-1",
        "--x-max",
        "1",
        "--x-points",
        "5",
        "--out",
        s(&out_csv),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(&out_csv).unwrap();
    let last: Vec<f64> = text.lines().last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    // T^w f_t(x) = 2t for a constant field, at t = 1
    assert_eq!(last[0], 1.0);
    assert!(last[1..].iter().all(|v| (v - 2.0).abs() < 1e-14));
    assert!(dir.path().join("avg.json").exists());
}

#[test]
fn solve_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("solve.json");
    let sol = dir.path().join("sol.csv");
    let rep = dir.path().join("rep.json");
    std::fs::write(
        &cfg,
        format!(
            r#"{{
  "x0": [0.0],
  "gamma": {{"kind": "skorokhod", "domain": {{"lower": [-0.5], "upper": [0.5]}}}},
  "field": {{"mode": "fourier_series", "components": [[{{"frequency": 1.0, "amplitude": 1.0, "phase": 0.0}}]], "target_alpha": 1.0}},
  "scheme": "picard_young",
  "noise": {{"hurst": 0.75, "steps": 128}},
  "out": "{}",
  "report": "{}"
}}"#,
            s(&sol),
            s(&rep)
        ),
    )
    .unwrap();
    let out = fracsde(&["solve", "--config", s(&cfg), "--seed", "5"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&rep).unwrap()).unwrap();
    assert_eq!(report["config"]["seed"], 5);
    assert_eq!(report["diagnostics"]["constraint_defect"], 0.0);
    let first = std::fs::read_to_string(&sol).unwrap();
    assert!(fracsde(&["solve", "--config", s(&cfg), "--seed", "5"]).status.success());
    assert_eq!(first, std::fs::read_to_string(&sol).unwrap());
    let out = fracsde(&["solve", "--config", s(&cfg), "--seed", "5", "--scheme", "euler_split"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&rep).unwrap()).unwrap();
    assert_eq!(report["config"]["scheme"], "euler_split");
}

#[test]
fn experiment_list_and_run() {
    let out = fracsde(&["experiment", "list"]);
    assert!(out.status.success());
    let listing = String::from_utf8(out.stdout).unwrap();
    for name in ["konevar", "tail", "cross-scheme"] {
        assert!(listing.contains(name));
    }
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.json");
    std::fs::write(&cfg, r#"{"draws": 50}"#).unwrap();
    let report = dir.path().join("report.json");
    let plot = dir.path().join("plot.csv");
    let out = fracsde(&[
        "experiment",
        "run",
        "--name",
        "pvar-exact",
        "--config",
        s(&cfg),
        "--out",
        s(&report),
        "--seed",
        "12",
        "--emit-plot-data",
        s(&plot),
        "--threads",
        "2",
        "--strict",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let first = std::fs::read_to_string(&report).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&first).unwrap();
    assert_eq!(parsed["seed"], 12);
    assert!(dir.path().join("report.timing.json").exists());
    assert!(String::from_utf8(out.stdout).unwrap().contains("[PASS] criterion 6"));
    assert!(fracsde(&[
        "experiment",
        "run",
        "--name",
        "pvar-exact",
        "--config",
        s(&cfg),
        "--out",
        s(&report),
        "--seed",
        "12"
    ])
    .status
    .success());
    assert_eq!(first, std::fs::read_to_string(&report).unwrap());

    let out = fracsde(&["experiment", "run", "--name", "bogus", "--out", s(&report)]);
    assert_eq!(out.status.code(), Some(2));
}
