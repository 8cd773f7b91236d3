//! Acceptance suite: runs every check of the verification battery at its
//! pinned tolerance and prints one pass/fail line per criterion.
//!
//! Run with `cargo test -p antinv --test acceptance -- --nocapture` to see
//! the lines for passing criteria too.

use std::sync::Mutex;

use antinv::verification::{self, CriterionReport};

// The wall-clock budgets assume one criterion at a time; the lock keeps the
// kernel-heavy criteria from competing for cores under the parallel runner.
static SEQUENTIAL: Mutex<()> = Mutex::new(());

fn run(criterion: impl FnOnce() -> CriterionReport) {
    let _guard = SEQUENTIAL.lock().unwrap_or_else(|e| e.into_inner());
    let report = criterion();
    let verdict = if report.passed { "PASS" } else { "FAIL" };
    println!(
        "criterion {:2} ({}): {} [{:.2}s / budget {:.0}s]",
        report.id, report.name, verdict, report.seconds, report.budget_seconds
    );
    assert!(
        report.passed,
        "criterion {} ({}) failed: {}",
        report.id,
        report.name,
        serde_json::to_string_pretty(&report.details).unwrap()
    );
}

#[test]
fn criterion_01_infinite_family() {
    run(verification::infinite_family);
}

#[test]
fn criterion_02_integrability_battery() {
    run(verification::integrability_battery);
}

#[test]
fn criterion_03_first_order_equivalence() {
    run(verification::first_order_equivalence);
}

#[test]
fn criterion_04_kodaira_thurston() {
    run(verification::kodaira_thurston);
}

#[test]
fn criterion_05_theta_power_family() {
    run(verification::theta_power_family);
}

#[test]
fn criterion_06_kernel_flat() {
    run(|| verification::kernel_flat(false));
}

#[test]
fn criterion_07_kernel_theorem_analog() {
    run(|| verification::kernel_theorem_analog(false));
}

#[test]
fn criterion_08_kernel_glued() {
    run(|| verification::kernel_glued(false));
}

#[test]
fn criterion_09_product_chart() {
    run(verification::product_chart);
}

#[test]
fn criterion_10_property_battery() {
    run(verification::property_battery);
}
