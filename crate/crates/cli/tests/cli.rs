//! Subcommand behavior: exit codes, error formats, file outputs, parameter
//! merging.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_gromovlab")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn gen_space(dir: &Path, name: &str, args: &[&str]) -> PathBuf {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    let path = dir.join(name);
    std::fs::write(&path, &out.stdout).unwrap();
    path
}

#[test]
fn validate_reports_errors_with_exit_code_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(
        dir.path(),
        "bad.json",
        r#"{"label":"bad","weights":[0.5,0.5],"distance_matrix":[[0,1],[2,0]]}"#,
    );
    let out = run(&["validate", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("AsymmetricDistance"), "stderr: {stderr}");

    let out = run(&["--json-errors", "validate", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    let parsed: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    assert_eq!(parsed["error"]["kind"], "AsymmetricDistance");
}

#[test]
fn validate_accepts_generated_spaces() {
    let dir = tempfile::tempdir().unwrap();
    for (name, args) in [
        ("two.json", vec!["gen", "two-point", "--a", "1.5"]),
        ("circle.json", vec!["gen", "circle", "--n", "5"]),
        ("cloud.json", vec!["gen", "random-cloud", "--n", "6", "--seed", "9"]),
    ] {
        let path = gen_space(dir.path(), name, &args);
        let out = run(&["validate", path.to_str().unwrap()]);
        assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
        let parsed: serde_json::Value =
            serde_json::from_str(&String::from_utf8_lossy(&out.stdout)).unwrap();
        assert_eq!(parsed["ok"], true);
    }
}

#[test]
fn missing_file_is_invalid_input() {
    let out = run(&["gw", "--x", "/nonexistent/a.json", "--y", "/nonexistent/b.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn gw_on_same_space_is_zero_and_dumps_plan() {
    let dir = tempfile::tempdir().unwrap();
    let x = gen_space(dir.path(), "x.json", &["gen", "random-cloud", "--n", "4", "--seed", "2"]);
    let plan_path = dir.path().join("plan.json");
    let out = run(&[
        "gw",
        "--x",
        x.to_str().unwrap(),
        "--y",
        x.to_str().unwrap(),
        "--dump-plan",
        plan_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let parsed: serde_json::Value =
        serde_json::from_str(&String::from_utf8_lossy(&out.stdout)).unwrap();
    let value = parsed["value"].as_str().map(|s| s.parse::<f64>().unwrap()).unwrap_or_else(|| parsed["value"].as_f64().unwrap());
    assert!(value <= 1e-4, "value {value}");

    let plan: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&plan_path).unwrap()).unwrap();
    assert!(plan["mass"].is_array());
    assert_eq!(plan["mu"].as_array().unwrap().len(), 4);
}

#[test]
fn params_file_is_merged_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let x = gen_space(dir.path(), "x.json", &["gen", "two-point", "--a", "1"]);
    let y = gen_space(dir.path(), "y.json", &["gen", "two-point", "--a", "3"]);
    let params = write(dir.path(), "params.json", r#"{"restarts": 1, "outer_max": 150}"#);
    let out = run(&[
        "gw",
        "--x",
        x.to_str().unwrap(),
        "--y",
        y.to_str().unwrap(),
        "--params",
        params.to_str().unwrap(),
        "--restarts",
        "4",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    // malformed parameter file is invalid input
    let bad = write(dir.path(), "bad_params.json", r#"{"not_a_field": 1}"#);
    let out = run(&[
        "gw",
        "--x",
        x.to_str().unwrap(),
        "--y",
        y.to_str().unwrap(),
        "--params",
        bad.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn eps_sweep_writes_csv_schema() {
    let dir = tempfile::tempdir().unwrap();
    let s = gen_space(dir.path(), "s.json", &["gen", "two-point", "--a", "2"]);
    let x = gen_space(dir.path(), "x.json", &["gen", "two-point", "--a", "1"]);
    let y = gen_space(dir.path(), "y.json", &["gen", "two-point", "--a", "3"]);
    let csv_path = dir.path().join("sweep.csv");
    let out = run(&[
        "--out",
        csv_path.to_str().unwrap(),
        "eps-sweep",
        "--ref",
        s.to_str().unwrap(),
        "--x",
        x.to_str().unwrap(),
        "--y",
        y.to_str().unwrap(),
        "--eps0",
        "1",
        "--factor",
        "0.5",
        "--steps",
        "11",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "eps,mgw_value,quad_part,anchor_sx,anchor_sy,gw2_sx_ref,gw2_sy_ref,lgw_ref"
    );
    assert_eq!(lines.count(), 11);
    // final quad_part column approaches the closed form 2.0
    let last = csv.lines().last().unwrap();
    let quad: f64 = last.split(',').nth(2).unwrap().parse().unwrap();
    assert!((quad - 2.0).abs() <= 0.1, "quad {quad}");
}

#[test]
fn mgw_accepts_coefficient_files_and_free_axes() {
    let dir = tempfile::tempdir().unwrap();
    let x = gen_space(dir.path(), "x.json", &["gen", "random-cloud", "--n", "3", "--seed", "4"]);
    let y = gen_space(dir.path(), "y.json", &["gen", "random-cloud", "--n", "3", "--seed", "5"]);
    let coeffs = write(dir.path(), "coeffs.json", "[[0.0, 0.5], [0.5, 0.0]]");
    let out = run(&[
        "mgw",
        "--spaces",
        x.to_str().unwrap(),
        y.to_str().unwrap(),
        "--coeffs",
        coeffs.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = run(&[
        "mgw",
        "--spaces",
        x.to_str().unwrap(),
        y.to_str().unwrap(),
        "--coeffs",
        coeffs.to_str().unwrap(),
        "--free-axes",
        "1",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    // out-of-range free axis
    let out = run(&[
        "mgw",
        "--spaces",
        x.to_str().unwrap(),
        y.to_str().unwrap(),
        "--coeffs",
        coeffs.to_str().unwrap(),
        "--free-axes",
        "5",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn barycenter_fixed_warns_about_support_weights() {
    let dir = tempfile::tempdir().unwrap();
    let x = gen_space(dir.path(), "x.json", &["gen", "random-cloud", "--n", "3", "--seed", "6"]);
    let support = write(
        dir.path(),
        "support.json",
        r#"{"label":"sup","weights":[0.5,0.5],"distance_matrix":[[0,1],[1,0]]}"#,
    );
    let out = run(&[
        "barycenter",
        "--mode",
        "fixed",
        "--spaces",
        x.to_str().unwrap(),
        "--support",
        support.to_str().unwrap(),
        "--rho",
        "1.0",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("ignored"), "expected a weights warning, got: {stderr}");
    let parsed: serde_json::Value =
        serde_json::from_str(&String::from_utf8_lossy(&out.stdout)).unwrap();
    assert_eq!(parsed["sigma_star"].as_array().unwrap().len(), 2);

    // fixed mode without --support is invalid input
    let out = run(&[
        "barycenter",
        "--mode",
        "fixed",
        "--spaces",
        x.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn barycenter_free_roundtrips_through_validate() {
    let dir = tempfile::tempdir().unwrap();
    let x = gen_space(dir.path(), "x.json", &["gen", "two-point", "--a", "1"]);
    let y = gen_space(dir.path(), "y.json", &["gen", "two-point", "--a", "3"]);
    let out = run(&[
        "barycenter",
        "--mode",
        "free",
        "--spaces",
        x.to_str().unwrap(),
        y.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let parsed: serde_json::Value =
        serde_json::from_str(&String::from_utf8_lossy(&out.stdout)).unwrap();
    let bary_path = dir.path().join("bary.json");
    std::fs::write(&bary_path, serde_json::to_string(&parsed["barycenter"]).unwrap()).unwrap();
    let out = run(&["validate", bary_path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn help_lists_every_subcommand_flag() {
    for sub in ["validate", "gw", "mgw", "lgw", "lgw-matrix", "eps-sweep", "barycenter", "gen"] {
        let out = run(&[sub, "--help"]);
        assert!(out.status.success(), "{sub} --help failed");
        let text = String::from_utf8_lossy(&out.stdout);
        assert!(text.contains("--seed"), "{sub} help misses --seed");
        assert!(text.contains("--out"), "{sub} help misses --out");
    }
    for sub in ["gw", "mgw", "lgw", "lgw-matrix", "eps-sweep", "barycenter"] {
        let out = run(&[sub, "--help"]);
        let text = String::from_utf8_lossy(&out.stdout);
        for flag in ["--eta", "--restarts", "--sinkhorn-tol", "--params"] {
            assert!(text.contains(flag), "{sub} help misses {flag}");
        }
    }
}

#[test]
fn oracle_fixtures_match_closed_forms() {
    let out = run(&["oracle"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let parsed: serde_json::Value =
        serde_json::from_str(&String::from_utf8_lossy(&out.stdout)).unwrap();
    let get = |path: &[&str]| -> f64 {
        let mut v = &parsed;
        for p in path {
            v = &v[*p];
        }
        v.as_f64().unwrap()
    };
    assert!((get(&["two_point_1_vs_3", "brute_gw2"]) - 2.0).abs() <= 1e-4);
    assert!((get(&["two_point_1_vs_3", "permutation_gw2"]) - 2.0).abs() <= 1e-12);
    assert!((get(&["two_point_1_vs_3", "mixed_plan_objective"]) - 3.5).abs() <= 1e-12);
    assert!((get(&["triple_2_1_3", "anchor_sx_gw2"]) - 0.5).abs() <= 1e-4);
    assert!((get(&["triple_2_1_3", "anchor_sy_gw2"]) - 0.5).abs() <= 1e-4);
    assert!((get(&["triple_2_1_3", "lgw2_permutation_anchors"]) - 2.0).abs() <= 1e-9);
}
