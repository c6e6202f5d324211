use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_timechange");

fn timechange(out_root: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env("TIMECHANGE_OUTPUT", out_root)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn list_shows_every_suite() {
    let dir = tempfile::tempdir().unwrap();
    let o = timechange(dir.path(), &["list"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    for name in [
        "symbol-table",
        "converge-robin",
        "distribution-robin",
        "local-time",
    ] {
        assert!(text.contains(name), "{name} missing from\n{text}");
    }
    let o = timechange(dir.path(), &["list", "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 10);
}

#[test]
fn validate_accepts_suites_and_reports_every_bad_key() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        timechange(dir.path(), &["validate", "lifetime"])
            .status
            .code(),
        Some(0)
    );

    let bad = dir.path().join("bad.toml");
    fs::write(
        &bad,
        r#"
name = "bad"
kind = "solve"
colour = "blue"

[[symbols]]
kind = "stable"
beta = 1.5

[generator]
kind = "skew"
alpha = 1.5
eta = 0.5
width = 0.1

[grids]
t = [0.5]
"#,
    )
    .unwrap();
    let o = timechange(dir.path(), &["validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    for key in ["colour", "symbols[0].beta", "generator.alpha"] {
        assert!(err.contains(key), "{key} not reported in\n{err}");
    }
}

#[test]
fn unknown_config_and_bad_arguments_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        timechange(dir.path(), &["run", "no-such-suite"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        timechange(dir.path(), &["frobnicate"]).status.code(),
        Some(1)
    );
    assert_eq!(timechange(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn runs_are_reproducible_byte_for_byte() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for root in [a.path(), b.path()] {
        let o = timechange(root, &["run", "inverse-paths"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let csv_a = fs::read(a.path().join("inverse-paths/results.csv")).unwrap();
    let csv_b = fs::read(b.path().join("inverse-paths/results.csv")).unwrap();
    assert!(csv_a.len() > 1000);
    assert_eq!(csv_a, csv_b);

    let meta: serde_json::Value =
        serde_json::from_slice(&fs::read(a.path().join("inverse-paths/metadata.json")).unwrap())
            .unwrap();
    assert_eq!(meta["seed"], 7);
    assert_eq!(meta["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(meta["flagged"], false);
}

#[test]
fn converge_writes_metric_series() {
    let dir = tempfile::tempdir().unwrap();
    let o = timechange(dir.path(), &["run", "converge-neumann"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = dir.path().join("converge-neumann");
    for m in [
        "resolvent_err",
        "semigroup_err",
        "tc_resolvent_err",
        "tc_semigroup_err",
    ] {
        let dat = fs::read_to_string(out.join(format!("{m}.dat"))).unwrap();
        assert_eq!(dat.lines().count(), 10, "{m}.dat");
    }
    let meta: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["details"]["verdicts_agree"], true);
}

#[test]
fn infinite_mean_lifetime_is_flagged_with_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("stable-lifetime.toml");
    fs::write(
        &cfg,
        r#"
name = "stable-lifetime"
kind = "lifetime"

[[symbols]]
kind = "stable"
beta = 0.5

[generator]
kind = "dirichlet"

[monte_carlo]
n_paths = 100
dt = 1e-3

[grids]
x = [1.5707963267948966]
"#,
    )
    .unwrap();
    let o = timechange(dir.path(), &["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let meta: serde_json::Value = serde_json::from_slice(
        &fs::read(dir.path().join("stable-lifetime/metadata.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(meta["flagged"], true);
}
