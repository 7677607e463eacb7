//! Runs the full acceptance battery through the CLI and prints one line per
//! criterion. Criterion 15 compares two independent runs byte for byte.

use std::path::Path;
use std::process::{Command, ExitCode, Stdio};
use std::time::Instant;

use serde_json::Value;

const SEED: &str = "7";

fn run_suite(out: &Path) -> (bool, f64) {
    let start = Instant::now();
    let status = Command::new(env!("CARGO_BIN_EXE_convexinterp"))
        .args(["suite", "--seed", SEED, "--out"])
        .arg(out)
        .stderr(Stdio::null())
        .status()
        .expect("failed to launch convexinterp");
    (status.success(), start.elapsed().as_secs_f64())
}

/// `(margin, tol)` of the counted check with the least slack `margin + tol`.
fn tightest(checks: &[Value]) -> (f64, f64) {
    checks
        .iter()
        .filter(|c| !c["exploratory"].as_bool().unwrap_or(false))
        .map(|c| (c["margin"].as_f64().unwrap_or(f64::NEG_INFINITY), c["tol"].as_f64().unwrap_or(0.0)))
        .fold((f64::INFINITY, 0.0), |a, b| if b.0 + b.1 < a.0 + a.1 { b } else { a })
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().expect("tempdir");
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));

    let (ok_a, secs_a) = run_suite(&a);
    let (_, secs_b) = run_suite(&b);

    let text_a = std::fs::read_to_string(&a).unwrap_or_default();
    let text_b = std::fs::read_to_string(&b).unwrap_or_default();
    let report: Value = match serde_json::from_str(&text_a) {
        Ok(v) => v,
        Err(e) => {
            println!("suite output unreadable: {e}");
            return ExitCode::FAILURE;
        }
    };

    let mut failures = 0;
    let criteria = report["criteria"].as_array().cloned().unwrap_or_default();
    for c in &criteria {
        let pass = c["pass"].as_bool().unwrap_or(false);
        let checks = c["checks"].as_array().cloned().unwrap_or_default();
        if !pass {
            failures += 1;
        }
        let (margin, tol) = tightest(&checks);
        println!(
            "criterion {:>2} {:<22} {}  checks={:<3} tightest margin={:+.3e} tol={:.3e}",
            c["id"].as_u64().unwrap_or(0),
            c["name"].as_str().unwrap_or("?"),
            if pass { "PASS" } else { "FAIL" },
            checks.len(),
            margin,
            tol
        );
    }
    if criteria.len() != 14 {
        println!("expected 14 criteria in the suite report, found {}", criteria.len());
        failures += 1;
    }

    let identical = !text_a.is_empty() && text_a == text_b;
    if !identical {
        failures += 1;
    }
    println!(
        "criterion 15 {:<22} {}  bytes={} runs={:.1}s,{:.1}s",
        "determinism",
        if identical { "PASS" } else { "FAIL" },
        text_a.len(),
        secs_a,
        secs_b
    );

    if !ok_a && failures == 0 {
        println!("suite exited non-zero although every criterion passed");
        failures += 1;
    }
    println!("{failures} of 15 criteria failed");
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
