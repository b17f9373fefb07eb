use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn ccspace(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccspace"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(args: &[&str]) -> Value {
    let mut all = vec!["--json"];
    all.extend_from_slice(args);
    let out = ccspace(&all);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid json")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn analyze_example3_unit_at_origin() {
    let out = ccspace(&["analyze", "--catalog", "example3-unit"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("regularity: Nonregular"), "{text}");
    assert!(text.contains("dims: [2, 3]"), "{text}");
}

#[test]
fn fixture_files_parse_with_expected_depth() {
    let v = json(&["analyze", "--space", fixture("heisenberg.space").to_str().unwrap()]);
    assert_eq!(v["weights"], serde_json::json!([1, 1, 2]));
    assert_eq!(v["depth"], 2);
    assert_eq!(v["regularity"], "Regular");
    let v = json(&["analyze", "--space", fixture("example3-unit.space").to_str().unwrap()]);
    assert_eq!(v["depth"], 2);
    let v = json(&["analyze", "--space", fixture("example3-graded.space").to_str().unwrap()]);
    assert_eq!(v["depth"], 3);
    assert_eq!(v["dims"], serde_json::json!([1, 2, 3]));
}

#[test]
fn mutation_fixtures_are_rejected_with_positions() {
    for (file, line_col, needle) in [
        ("missing-weight.space", ":14:5:", "weights"),
        ("unknown-variable.space", ":10:16:", "undeclared coordinate `s`"),
        ("non-integer-exponent.space", ":9:19:", "exponent"),
    ] {
        let out = ccspace(&["analyze", "--space", fixture(file).to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2), "{file}");
        let err = stderr(&out);
        assert!(err.contains(line_col), "{file}: {err}");
        assert!(err.contains(needle), "{file}: {err}");
    }
}

#[test]
fn span_deficiency_is_a_structural_defect() {
    let out = ccspace(&["analyze", "--space", fixture("span-deficient.space").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("span only 2 of 3"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(ccspace(&[]).status.code(), Some(2));
    assert_eq!(ccspace(&["analyze"]).status.code(), Some(2));
    assert_eq!(ccspace(&["analyze", "--catalog", "heisenberg-1", "--point", "0,0"]).status.code(), Some(2));
    assert_eq!(ccspace(&["rho", "--catalog", "heisenberg-1", "--point", "0,0,0"]).status.code(), Some(2));
    assert_eq!(ccspace(&["analyze", "--catalog", "heisenberg-1", "--point", "0,x,0"]).status.code(), Some(2));
}

#[test]
fn unknown_catalog_lists_entries() {
    let out = ccspace(&["analyze", "--catalog", "klein-bottle"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    for name in ["heisenberg-weighted", "weighted-euclidean", "example3-unit", "example3-graded"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn rho_between_equal_points_is_zero() {
    let v = json(&["rho", "--catalog", "weighted-euclidean", "--point", "1/3,-2,0.5", "--point", "1/3,-2,0.5"]);
    assert_eq!(v["value"], 0.0);
    assert_eq!(v["status"], "Converged");
}

#[test]
fn rho_on_heisenberg_center() {
    let v = json(&["rho", "--catalog", "heisenberg-1", "--point", "0,0,0", "--point", "0,0,1/4"]);
    assert!((v["value"].as_f64().unwrap() - 0.5).abs() < 1e-4, "{v}");
    let u = json(&["rho", "--nilpotent", "--catalog", "heisenberg-1", "--point", "0,0,0", "--point", "0,0,1/4"]);
    assert!((u["value"].as_f64().unwrap() - 0.5).abs() < 1e-4, "{u}");
}

#[test]
fn json_output_carries_schema_version() {
    let cases: [&[&str]; 4] = [
        &["analyze", "--catalog", "heisenberg-1"],
        &["frame", "--catalog", "example3-graded"],
        &["nilpotentize", "--catalog", "heisenberg-weighted"],
        &["lift", "--catalog", "heisenberg-1"],
    ];
    for args in cases {
        let v = json(args);
        assert_eq!(v["schema_version"], 1, "{args:?}");
        assert_eq!(v["command"], args[0]);
    }
}

#[test]
fn nilpotentize_reports_heisenberg_constants() {
    let v = json(&["nilpotentize", "--catalog", "heisenberg-1"]);
    assert_eq!(v["structure_constants"], serde_json::json!([[1, 2, 3, "1"], [2, 1, 3, "-1"]]));
    assert_eq!(v["invariants"]["jacobi"], true);
}

#[test]
fn lifted_space_file_reparses_as_regular() {
    let dir = tempfile::tempdir().unwrap();
    let v = json(&["lift", "--catalog", "example3-unit", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(v["dim"], 6);
    let lifted = dir.path().join("lifted.space");
    let a = json(&["analyze", "--space", lifted.to_str().unwrap()]);
    assert_eq!(a["regularity"], "Regular");
    assert_eq!(a["dims"], serde_json::json!([3, 6]));
    let printed = json(&["lift", "--catalog", "example3-unit"]);
    assert_eq!(printed["space"].as_str().unwrap(), std::fs::read_to_string(&lifted).unwrap());
}

#[test]
fn converge_local_approx_on_example3_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = ccspace(&["converge", "local-approx", "--catalog", "example3-graded", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("local-approx on example3-graded: Pass"), "{text}");
    let csv = std::fs::read_to_string(dir.path().join("local-approx.csv")).unwrap();
    assert!(csv.starts_with("epsilon,value,n_samples,n_failures,seed\n"));
    assert_eq!(csv.lines().count(), 8);
    assert!(std::fs::read_to_string(dir.path().join("local-approx.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn converge_without_enough_scales_is_not_a_pass() {
    let dir = tempfile::tempdir().unwrap();
    let out = ccspace(&[
        "converge",
        "local-approx",
        "--catalog",
        "example3-graded",
        "--eps-grid",
        "0.125,0.0625,0.03125",
        "--samples",
        "4",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stdout).unwrap().contains("Inconclusive"));
}

#[test]
fn bad_eps_grid_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    for grid in ["0.1,0.2", "0.1,-1", "a"] {
        let out = ccspace(&["converge", "gromov", "--catalog", "heisenberg-1", "--eps-grid", grid, "--out", d]);
        assert_eq!(out.status.code(), Some(2), "{grid}");
    }
}

#[test]
fn seeded_runs_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = ccspace(&[
            "--seed",
            "7",
            "converge",
            "cone",
            "--catalog",
            "example3-graded",
            "--eps-grid",
            "0.5,0.25,0.125,0.0625",
            "--samples",
            "4",
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert!(out.status.code().is_some_and(|c| c <= 1), "{}", stderr(&out));
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("cone.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    let x = json(&["--seed", "3", "analyze", "--catalog", "example3-unit", "--point", "0,1/10,0"]);
    let y = json(&["--seed", "3", "analyze", "--catalog", "example3-unit", "--point", "0,1/10,0"]);
    assert_eq!(x, y);
}
