//! End-to-end runs of the `hjb` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn hjb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hjb"))
        .args(args)
        .output()
        .expect("run hjb")
}

fn cfg(name: &str) -> String {
    configs().join(name).to_string_lossy().into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_exit_codes() {
    assert_eq!(
        hjb(&["validate", "--config", &cfg("crra_cap.json")])
            .status
            .code(),
        Some(0)
    );

    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(cfg("crra_cap.json")).unwrap();
    let ill = dir.path().join("ill.json");
    fs::write(&ill, text.replace("\"delta\": 0.1", "\"delta\": 0.01")).unwrap();
    let out = hjb(&["validate", "--config", s(&ill)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL   well_posedness"));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\n  \"market\": {\"mu\": 0.07,,}\n}").unwrap();
    let out = hjb(&["validate", "--config", s(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let out = hjb(&["validate", "--config", s(&dir.path().join("missing.json"))]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(hjb(&["solve"]).status.code(), Some(2));
}

#[test]
fn solve_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = hjb(&[
        "solve",
        "--config",
        &cfg("crra_cap.json"),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in ["value.csv", "policy.csv", "region.json", "diagnostics.json"] {
        let text = fs::read_to_string(dir.path().join(f)).unwrap();
        assert!(text.contains("0.1.0"), "{f} lacks a version");
        assert!(text.contains("config"), "{f} lacks the config hash");
    }
    let region: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("region.json")).unwrap()).unwrap();
    assert_eq!(region["certified"], true);
    assert!(region["xstar"].as_f64().unwrap() > 0.0);
    let diag: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("diagnostics.json")).unwrap())
            .unwrap();
    assert!(diag["dual_residual"].as_f64().unwrap() < 1e-3);
}

#[test]
fn merton_has_no_free_boundary() {
    let dir = tempfile::tempdir().unwrap();
    let out = hjb(&[
        "solve",
        "--config",
        &cfg("merton.json"),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let region: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("region.json")).unwrap()).unwrap();
    assert!(region["xstar"].is_null());
}

#[test]
fn non_convergent_solve_fails_with_domain_code() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(cfg("crra_cap.json")).unwrap();
    let c = dir.path().join("c.json");
    fs::write(
        &c,
        text.replace("\"grid\"", "\"solver\": {\"tol\": 1e-30, \"max_iter\": 2, \"relax\": 1.0, \"far_field_check\": false},\n  \"grid\""),
    )
    .unwrap();
    let out = hjb(&[
        "solve",
        "--config",
        s(&c),
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(
        out.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn overrides_change_the_grid_and_the_hash() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    hjb(&[
        "solve",
        "--config",
        &cfg("crra_cap.json"),
        "--out",
        s(a.path()),
    ]);
    let out = hjb(&[
        "solve",
        "--config",
        &cfg("crra_cap.json"),
        "--out",
        s(b.path()),
        "--grid-n",
        "500",
        "--xmax",
        "50",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let va = fs::read_to_string(a.path().join("value.csv")).unwrap();
    let vb = fs::read_to_string(b.path().join("value.csv")).unwrap();
    assert_ne!(va.lines().nth(1), vb.lines().nth(1));
    assert_eq!(vb.lines().count(), 3 + 501);
    assert!(vb.lines().last().unwrap().starts_with("50,"));
}

#[test]
fn sweep_reports_increasing_boundary() {
    let dir = tempfile::tempdir().unwrap();
    let out = hjb(&[
        "sweep",
        "--config",
        &cfg("crra_cap.json"),
        "--out",
        s(dir.path()),
        "--sweep-param",
        "L",
        "--values",
        "0.5,1,2",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0][1] < rows[1][1] && rows[1][1] < rows[2][1]);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("sweep.json")).unwrap()).unwrap();
    assert_eq!(json["xstar_increasing"], true);

    let one = tempfile::tempdir().unwrap();
    hjb(&[
        "sweep",
        "--config",
        &cfg("crra_cap.json"),
        "--out",
        s(one.path()),
        "--values",
        "1",
    ]);
    let csv = fs::read_to_string(one.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);

    let out = hjb(&[
        "sweep",
        "--config",
        &cfg("crra_cap.json"),
        "--out",
        s(one.path()),
        "--values",
        "1,-1",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let out = hjb(&[
        "sweep",
        "--config",
        &cfg("crra_cap.json"),
        "--out",
        s(one.path()),
        "--values",
        "1,x",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = hjb(&[
        "sweep",
        "--config",
        &cfg("crra_cap.json"),
        "--out",
        s(one.path()),
        "--sweep-param",
        "mu",
        "--values",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

fn small_sim_config(dir: &Path) -> PathBuf {
    let text = fs::read_to_string(cfg("crra_cap.json")).unwrap();
    let c = dir.join("sim.json.cfg");
    fs::write(
        &c,
        text.replace("\"horizon\": 81.01", "\"horizon\": 20.0")
            .replace("\"dt\": 0.001", "\"dt\": 0.02")
            .replace("\"n_paths\": 10000", "\"n_paths\": 2000"),
    )
    .unwrap();
    c
}

#[test]
fn simulate_needs_a_policy_and_a_sim_block() {
    let dir = tempfile::tempdir().unwrap();
    let out = hjb(&[
        "simulate",
        "--config",
        &cfg("crra_cap.json"),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2), "missing policy.csv");
    hjb(&[
        "solve",
        "--config",
        &cfg("merton.json"),
        "--out",
        s(dir.path()),
    ]);
    let out = hjb(&[
        "simulate",
        "--config",
        &cfg("merton.json"),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2), "no sim block");
}

#[test]
fn reruns_are_bit_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = small_sim_config(a.path());
    for d in [a.path(), b.path()] {
        assert_eq!(
            hjb(&["solve", "--config", s(&c), "--out", s(d)])
                .status
                .code(),
            Some(0)
        );
        // the short horizon leaves a large tail, so only the files matter here
        let out = hjb(&["simulate", "--config", s(&c), "--out", s(d), "--seed", "3"]);
        assert!(matches!(out.status.code(), Some(0) | Some(1)));
        assert_eq!(
            hjb(&[
                "sweep",
                "--config",
                s(&c),
                "--out",
                s(d),
                "--values",
                "0.5,1"
            ])
            .status
            .code(),
            Some(0)
        );
    }
    for f in [
        "value.csv",
        "policy.csv",
        "region.json",
        "diagnostics.json",
        "sim.json",
        "sweep.csv",
        "sweep.json",
    ] {
        let x = fs::read(a.path().join(f)).unwrap();
        let y = fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs between runs");
    }
    let other = tempfile::tempdir().unwrap();
    hjb(&[
        "simulate",
        "--config",
        s(&c),
        "--out",
        s(other.path()),
        "--policy",
        s(&a.path().join("policy.csv")),
        "--seed",
        "4",
    ]);
    assert_ne!(
        fs::read(a.path().join("sim.json")).unwrap(),
        fs::read(other.path().join("sim.json")).unwrap()
    );
}
