//! Verification battery: one test per criterion, each printing a single
//! pass/fail line with the measured quantities.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see every line.

use tclab_core::checks;

fn run(id: &str) {
    let report = checks::run_check(id).unwrap_or_else(|e| panic!("{id} failed to run: {e}"));
    let status = if report.pass { "PASS" } else { "FAIL" };
    eprintln!("acceptance {id}: {status} - {}", report.detail);
    assert!(report.pass, "{id}: {}", report.detail);
}

#[test]
fn criterion_01_energy_identity() {
    run("energy-identity");
}

#[test]
fn criterion_02_accretivity_contraction() {
    run("accretivity-contraction");
}

#[test]
fn criterion_03_pseudospectral_scaling() {
    run("pseudo-scaling");
}

#[test]
fn criterion_04_sharpness_witnesses() {
    run("sharpness");
}

#[test]
fn criterion_05_resolvent_inequality() {
    run("resolvent-bound");
}

#[test]
fn criterion_06_inhomogeneous_bound() {
    run("inhomogeneous-bound");
}

#[test]
fn criterion_07_weighted_decay() {
    run("weighted-decay");
}

#[test]
fn criterion_08_decomposition() {
    run("decomposition");
}

#[test]
fn criterion_09_dyadic_partition() {
    run("dyadic-partition");
}

#[test]
fn criterion_10_hardy_and_log_integral() {
    run("hardy-log");
}

#[test]
fn criterion_11_gearhart_pruss() {
    run("gearhart-pruss");
}

#[test]
fn criterion_12_counterexample_tc() {
    run("counterexample-tc");
}

#[test]
fn criterion_13_counterexample_heat() {
    run("counterexample-heat");
}

#[test]
fn criterion_14_numerics_hygiene() {
    run("numerics-hygiene");
}
