use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_convexinterp")).args(args).output().expect("launch convexinterp")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(o: &Output) -> Value {
    serde_json::from_str(&stdout(o)).unwrap_or_else(|e| panic!("bad json ({e}): {}", stdout(o)))
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let o = run(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_check_is_a_usage_error() {
    let o = run(&["check", "no-such-check"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no-such-check"));
}

#[test]
fn invalid_exponent_names_the_field() {
    let o = run(&["solve", "--p", "0.5"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("solver.p"), "{}", stderr(&o));
}

#[test]
fn malformed_config_line_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.conf");
    std::fs::write(&path, "[lattice]\npoints = many\n").unwrap();
    let o = run(&["--config", path.to_str().unwrap(), "interp"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("lattice.points"), "{}", stderr(&o));
}

#[test]
fn santalo_on_even_polynomial_passes() {
    let o = run(&["check", "santalo", "--family", "even-poly:1,0,0.5", "--n", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = json(&o);
    let reports = v.as_array().expect("array of reports");
    assert!(!reports.is_empty());
    for r in reports {
        assert_eq!(r["pass"], Value::Bool(true));
        assert!(r["margin"].as_f64().unwrap() > 0.0);
    }
}

#[test]
fn solve_matches_power_mean_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("layers.csv");
    let o = run(&[
        "solve", "--n", "1", "--lo", "-4", "--hi", "4", "--points", "65", "--f0", "quad:1", "--f1", "quad:4", "--p", "3",
        "--layers", "17", "--csv", csv.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = json(&o);
    assert_eq!(v["report"]["converged"], Value::Bool(true));
    assert!(v["oracle_sup_rel_error"].as_f64().unwrap() <= 1e-3);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("t,x,value\n"));
    assert_eq!(text.lines().count(), 1 + 17 * 65);
}

#[test]
fn alpha_writes_csv_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("alpha.svg");
    let out = dir.path().join("alpha.csv");
    let o = run(&[
        "alpha", "--n", "1", "--points", "33", "--layers", "9", "--out", out.to_str().unwrap(), "--svg", svg.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("t,alpha"));
    assert_eq!(lines.count(), 9);
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
}

#[test]
fn interp_csv_in_two_dimensions() {
    let o = run(&["interp", "--n", "2", "--points", "9", "--layers", "3", "--kind", "linear"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("t,x0,x1,value\n"));
    assert_eq!(text.lines().count(), 1 + 3 * 81);
}

#[test]
fn busemann_and_reinhardt_emit_passing_reports() {
    for args in [vec!["busemann", "--pairs", "4"], vec!["reinhardt"]] {
        let o = run(&args);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
        let v = json(&o);
        let reports = v.as_array().unwrap();
        assert!(!reports.is_empty());
        assert!(reports.iter().all(|r| r["pass"] == Value::Bool(true)), "{args:?}");
    }
}

#[test]
fn exploration_is_watermarked_and_never_fails() {
    let o = run(&["explore-conjecture", "--n", "2", "--points", "9", "--layers", "5", "--max-sweeps", "10"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = json(&o);
    assert!(v["watermark"].as_str().unwrap().starts_with("EXPLORATORY"));
    assert!(v["result"].is_object());
}

#[test]
fn config_file_is_read_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    std::fs::write(
        &conf,
        "# small line\n[lattice]\ndim = 1\nlo = -2\nhi = 2\npoints = 5\n\n[solver]\nlayers = 3\n\n[output]\ndir = "
            .to_string()
            + dir.path().to_str().unwrap()
            + "\n",
    )
    .unwrap();
    let c = conf.to_str().unwrap();

    let o = run(&["--config", c, "interp"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let written = std::fs::read_dir(dir.path()).unwrap().filter_map(|e| e.ok()).map(|e| e.path()).find(|p| p.extension().is_some_and(|x| x == "csv"));
    let text = std::fs::read_to_string(written.expect("csv in output.dir")).unwrap();
    assert_eq!(text.lines().count(), 1 + 3 * 5);

    let out = dir.path().join("override.csv");
    let o = run(&["--config", c, "interp", "--points", "7", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 1 + 3 * 7);
    assert!(text.lines().nth(1).unwrap().starts_with("0,-2,"));
}

#[test]
fn check_output_file_is_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("check.json");
    let o = run(&["check", "gauge-volume", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = read_json(&out);
    assert!(v.as_array().is_some_and(|a| a.iter().all(|r| r["pass"] == Value::Bool(true))));
}
