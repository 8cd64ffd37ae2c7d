//! Acceptance criteria, one line per criterion. Lines go straight to the
//! process stdout so they appear even when test output is captured.

use std::io::Write;

use pikrvi::harness::checks::{
    confidence_coverage, dp_oracle, exponent_identity, info_gain_soundness, krr_oracle,
    partition_run, reductions, regret_sublinearity, CheckOutcome,
};
use pikrvi::harness::ExperimentConfig;

fn report(criterion: u32, outcome: &CheckOutcome) -> bool {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(
        out,
        "{} criterion {criterion} [{}]: {} ({:.1} s)",
        if outcome.passed { "PASS" } else { "FAIL" },
        outcome.name,
        outcome.detail,
        outcome.seconds
    );
    let _ = out.flush();
    outcome.passed
}

#[test]
fn acceptance_criteria() {
    let standard = ExperimentConfig::default();
    let (capacity, growth) = partition_run(&standard);
    let results = [
        report(1, &krr_oracle()),
        report(2, &capacity),
        report(3, &growth),
        report(4, &info_gain_soundness()),
        report(5, &confidence_coverage()),
        report(6, &regret_sublinearity(&standard)),
        report(7, &exponent_identity()),
        report(8, &reductions()),
        report(9, &dp_oracle()),
    ];
    let failed: Vec<usize> = results
        .iter()
        .enumerate()
        .filter(|(_, ok)| !**ok)
        .map(|(i, _)| i + 1)
        .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
