//! Running scenarios and the small one-shot commands.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde_json::json;

use pks_core::asymptotics::{constant_c1_report, constant_c2_report, default_wstar_grid, w_star, C1_SAMPLES};
use pks_core::fields::{Density, GridKind, RadialGrid};
use pks_core::profiles::self_similar_profile_2d;
use pks_core::PksError;

use crate::bundled;
use crate::checks::CheckResult;
use crate::config::ConfigError;
use crate::output::{format_number, write_summary, write_tables, Table};
use crate::scenario::{self, Loaded};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Replaces the scenario's `output` directory.
    pub out: Option<PathBuf>,
    /// Replaces the scenario's seed.
    pub seed: Option<u64>,
}

/// Everything a finished (or failed) scenario produced.
#[derive(Debug, Clone)]
pub struct Report {
    pub source: String,
    pub name: Option<String>,
    pub dir: Option<PathBuf>,
    pub checks: BTreeMap<String, CheckResult>,
    pub notes: Vec<String>,
    pub error: Option<String>,
    pub exit: i32,
}

impl Report {
    fn failed(source: &str, name: Option<String>, exit: i32, error: String) -> Self {
        Report { source: source.into(), name, dir: None, checks: BTreeMap::new(), notes: Vec::new(), error: Some(error), exit }
    }

    /// Console text: notes, one line per check, then the verdict.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let label = self.name.as_deref().unwrap_or(&self.source);
        for n in &self.notes {
            let _ = writeln!(s, "[{label}] {n}");
        }
        for (name, c) in &self.checks {
            let verdict = if c.passed() { "PASS" } else { "FAIL" };
            let _ = writeln!(
                s,
                "[{label}] {verdict} {name}: measured {} expected {} tolerance {} ({:?})",
                format_number(c.measured),
                format_number(c.expected),
                format_number(c.tolerance),
                c.rule
            );
        }
        if let Some(e) = &self.error {
            let _ = writeln!(s, "[{label}] error: {e}");
        }
        if let Some(d) = &self.dir {
            let _ = writeln!(s, "[{label}] output in {}", d.display());
        }
        s
    }
}

/// Exit code for a library error raised while running.
pub fn exit_code(e: &PksError) -> i32 {
    match e {
        PksError::UseProfileModule => EXIT_CHECK,
        // inputs that only turn out to be bad once the grids are built
        PksError::InvalidParameter(_)
        | PksError::InvalidData(_)
        | PksError::DomainTooSmall(_)
        | PksError::SupercriticalMass(_)
        | PksError::OutOfValidatedRange(_) => EXIT_CONFIG,
        _ => EXIT_NUMERIC,
    }
}

/// A path on disk, else a bundled scenario name.
pub fn load(source: &str) -> Result<Loaded, ConfigError> {
    let path = Path::new(source);
    if path.is_file() {
        return scenario::load_file(path);
    }
    match bundled::find(source) {
        Some(text) => scenario::parse(text, Path::new(".")),
        None => Err(ConfigError::Io { path: path.to_path_buf(), message: "no such file or bundled scenario".into() }),
    }
}

pub fn run_scenario(source: &str, opts: &RunOptions) -> Report {
    run_into(source, opts, None)
}

fn run_into(source: &str, opts: &RunOptions, dir_name: Option<String>) -> Report {
    let Loaded { mut scenario, recipe } = match load(source) {
        Ok(l) => l,
        Err(e) => return Report::failed(source, None, EXIT_CONFIG, e.to_string()),
    };
    if let Some(seed) = opts.seed {
        scenario.seed = seed;
    }
    let name = scenario.name.clone();
    let outcome = match recipe.run(&scenario) {
        Ok(o) => o,
        Err(e) => return Report::failed(source, Some(name), exit_code(&e), e.to_string()),
    };

    let mut checks = BTreeMap::new();
    for spec in &scenario.checks {
        let def = recipe.checks().iter().find(|d| d.name == spec.name).expect("checked at parse");
        checks.insert(spec.name.clone(), CheckResult::evaluate(def, spec, outcome.measurements.get(def.name).copied()));
    }
    let root = opts.out.clone().unwrap_or_else(|| scenario.output.clone());
    let dir = root.join(dir_name.unwrap_or_else(|| name.clone()));
    let written = write_tables(&dir, &outcome.tables).and_then(|_| write_summary(&dir, &checks));
    let mut report =
        Report { source: source.into(), name: Some(name), dir: Some(dir.clone()), checks, notes: outcome.notes, error: None, exit: EXIT_OK };
    if let Err(e) = written {
        report.error = Some(format!("writing {}: {e}", dir.display()));
        report.exit = EXIT_NUMERIC;
    } else if !report.checks.values().all(CheckResult::passed) {
        report.exit = EXIT_CHECK;
    }
    report
}

/// Run several scenarios, `parallel` at a time. Scenarios sharing a name get numbered directories.
pub fn run_many(sources: &[String], opts: &RunOptions, parallel: usize) -> Vec<Report> {
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let dirs: Vec<Option<String>> = sources
        .iter()
        .map(|s| {
            let name = load(s).ok()?.scenario.name;
            let k = seen.entry(name.clone()).or_default();
            *k += 1;
            Some(if *k == 1 { name } else { format!("{name}-{k}") })
        })
        .collect();
    let jobs: Vec<(&String, Option<String>)> = sources.iter().zip(dirs).collect();
    if parallel <= 1 {
        return jobs.into_iter().map(|(s, d)| run_into(s, opts, d)).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(parallel).build() {
        Ok(pool) => pool.install(|| jobs.into_par_iter().map(|(s, d)| run_into(s, opts, d)).collect()),
        Err(e) => sources.iter().map(|s| Report::failed(s, None, EXIT_NUMERIC, format!("thread pool: {e}"))).collect(),
    }
}

/// Worst exit code across reports.
pub fn combined_exit(reports: &[Report]) -> i32 {
    reports.iter().map(|r| r.exit).max().unwrap_or(EXIT_OK)
}

pub fn list_scenarios() -> String {
    let mut s = String::new();
    for (name, about) in crate::recipes::RECIPES {
        let bundled = if bundled::find(name).is_some() { "bundled" } else { "" };
        let _ = writeln!(s, "{name:<16} {bundled:<8} {about}");
    }
    s
}

/// JSON for the log-correction constant in dimension `n`, with the oracle cross-check.
pub fn export_constants(n: usize, mass: f64, b0: [f64; 3], seed: u64) -> Result<serde_json::Value, PksError> {
    match n {
        2 => Err(PksError::UseProfileModule),
        3 => {
            let w = w_star(&default_wstar_grid()?, 20.0, 1e-10)?;
            let r = constant_c1_report(mass, b0, Some(&w), C1_SAMPLES, seed)?;
            Ok(json!({
                "n": 3,
                "mass": mass,
                "b0": b0,
                "c1": r.quadrature,
                "c1_monte_carlo": r.monte_carlo,
                "oracle_disagreement": r.rel_disagreement(),
                "samples": r.samples,
                "seed": seed,
            }))
        }
        4 => {
            let r = constant_c2_report(mass)?;
            Ok(json!({
                "n": 4,
                "mass": mass,
                "c2": r.display,
                "c2_reduced": r.reduced,
                "closed_form": r.closed_form,
                "oracle_disagreement": r.rel_disagreement(),
            }))
        }
        _ => Err(PksError::InvalidParameter(format!("no log-correction constant in dimension {n}; use 3 or 4"))),
    }
}

/// The planar profile G_M as an `r,G` table.
pub fn profile_table(mass: f64) -> Result<(Table, f64), PksError> {
    let grid = Arc::new(RadialGrid::new(2, GridKind::Graded, 8192, 40.0)?);
    let p = self_similar_profile_2d(mass, &grid, 1e-10)?;
    let mut t = Table::new("profile", &["r", "G"]);
    for (r, g) in grid.nodes().iter().zip(p.field.values()) {
        t.push_values(&[*r, *g]);
    }
    Ok((t, p.residual))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&PksError::UseProfileModule), EXIT_CHECK);
        assert_eq!(exit_code(&PksError::StiffnessFailure("x".into())), EXIT_NUMERIC);
        assert_eq!(exit_code(&PksError::FixedPointStalled { iterations: 3, last_update: 1.0 }), EXIT_NUMERIC);
        assert_eq!(exit_code(&PksError::InvalidParameter("x".into())), EXIT_CONFIG);
    }

    #[test]
    fn constants_in_two_dimensions_point_at_the_profile() {
        assert!(matches!(export_constants(2, 1.0, [1.0, 0.0, 0.0], 1), Err(PksError::UseProfileModule)));
        assert!(export_constants(6, 1.0, [0.0; 3], 1).is_err());
    }

    #[test]
    fn missing_source_is_a_config_error() {
        let r = run_scenario("/nonexistent/x.cfg", &RunOptions::default());
        assert_eq!(r.exit, EXIT_CONFIG);
    }

    #[test]
    fn listing_names_the_bundled_set() {
        let l = list_scenarios();
        for n in ["virial_2d", "profile_gm", "rate_n3", "c2_constant", "blowup_sweep", "phi_monotone", "wstar_moments"] {
            assert!(l.contains(n), "{n}");
        }
    }
}
