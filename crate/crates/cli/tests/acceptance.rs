//! The acceptance gate: every criterion through its bundled scenario, one line each.

use std::io::Write;

use pks_cli::runner::{run_scenario, RunOptions, EXIT_OK};

const CRITERIA: &[(&str, &str, &str)] = &[
    ("AC1", "virial_2d", "virial slope within 1% (0.25 absolute at 8π)"),
    ("AC2", "blowup_sweep", "t‖u‖∞ flat at 4π, blow-up in time at 10π"),
    ("AC3", "profile_gm", "profiles, stationarity, attraction from a Gaussian"),
    ("AC4", "rate_n3", "three-dimensional decay exponents"),
    ("AC5", "first_order", "first-order expansion exponent ≥ 0.95"),
    ("AC6", "c2_constant", "log-correction constants against oracles"),
    ("AC7", "wstar_moments", "second-order profile"),
    ("AC8", "phi_monotone", "Φ monotonicity and heat control"),
    ("AC9", "potential_bound", "potential gradient bound"),
    ("AC10", "property_suite", "conservation, semigroup, null, mild form, kernel remainder"),
];

#[test]
fn acceptance_criteria() {
    let out = tempfile::tempdir().unwrap();
    let opts = RunOptions { out: Some(out.path().to_path_buf()), seed: None };
    let mut failed = Vec::new();
    let _ = writeln!(std::io::stderr());
    for (id, scenario, about) in CRITERIA {
        let start = std::time::Instant::now();
        let report = run_scenario(scenario, &opts);
        let ok = report.exit == EXIT_OK;
        let detail: Vec<String> = report
            .checks
            .iter()
            .map(|(name, c)| format!("{name}={:.4e}{}", c.measured, if c.passed() { "" } else { "(fail)" }))
            .chain(report.error.iter().cloned())
            .collect();
        // straight to the handle so the lines show without --nocapture
        let _ = writeln!(
            std::io::stderr(),
            "{id} {} {about} [{scenario}, {:.0}s] {}",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            detail.join(" ")
        );
        if !ok {
            failed.push(*id);
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
