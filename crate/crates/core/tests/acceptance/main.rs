//! Acceptance criteria 1–8. Each criterion is one test that runs its checks,
//! prints a single `criterion N … PASS|FAIL` line, and fails if any check does.

#[path = "../common/mod.rs"]
mod common;

mod architecture;
mod determinism;
mod metrics;
mod oracles;
mod recovery;

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

/// Writes to the stdout handle directly, bypassing test output capture.
fn emit(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else if let Some(s) = payload.downcast_ref::<&str>() {
        s.to_string()
    } else {
        "panic".to_string()
    }
}

fn criterion(number: u32, title: &str, checks: &[(&str, fn())]) {
    let start = Instant::now();
    let mut failures = Vec::new();
    for (name, check) in checks {
        if let Err(payload) = catch_unwind(AssertUnwindSafe(check)) {
            failures.push(format!("{name}: {}", panic_message(payload.as_ref())));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let line = if failures.is_empty() {
        format!(
            "criterion {number} ({title}): PASS [{} checks, {secs:.1} s]",
            checks.len()
        )
    } else {
        format!("criterion {number} ({title}): FAIL [{}]", failures.join("; "))
    };
    emit(&line);
    assert!(failures.is_empty(), "criterion {number} failed: {failures:?}");
}

#[test]
fn criterion_1_gradients() {
    criterion(1, "gradient correctness", gradients::CHECKS);
}

#[test]
fn criterion_2_oracles() {
    criterion(2, "oracle equivalence", oracles::CHECKS);
}

#[test]
fn criterion_3_architecture() {
    criterion(3, "architectural invariants", architecture::CHECKS);
}

#[test]
fn criterion_4_metrics() {
    criterion(4, "metric fidelity", metrics::CHECKS);
}

#[test]
fn criterion_5_recovery() {
    criterion(5, "desk-scale profile recovery", recovery::RECOVERY_CHECKS);
}

#[test]
fn criterion_6_degradation_consistency() {
    criterion(6, "degradation consistency", recovery::CONSISTENCY_CHECKS);
}

#[test]
fn criterion_7_determinism() {
    criterion(7, "determinism", determinism::CHECKS);
}

#[test]
fn criterion_8_measurement() {
    criterion(8, "repeated measurement", recovery::MEASUREMENT_CHECKS);
}
