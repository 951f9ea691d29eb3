//! Named experiment recipes. Each one turns a scenario into measurements for its checks.

use std::collections::BTreeMap;

use pks_core::diagnostics::diagnostics_records;
use pks_core::evolution::{evolve, Trajectory, Transport};
use pks_core::fields::{CartesianField2D, Density, RadialField};
use pks_core::Result;

use crate::checks::CheckDef;
use crate::config::{ConfigError, Section};
use crate::output::Table;
use crate::scenario::{GridSpec, Scenario};

mod bound;
mod constants;
mod first_order;
mod phi;
mod profile;
mod properties;
mod rate;
mod threshold;
mod virial;
mod wstar;

/// What a recipe hands back to the runner.
#[derive(Debug, Default)]
pub struct Outcome {
    pub measurements: BTreeMap<&'static str, f64>,
    pub tables: Vec<Table>,
    /// Progress lines for the console.
    pub notes: Vec<String>,
}

impl Outcome {
    pub fn measure(&mut self, name: &'static str, value: f64) {
        self.measurements.insert(name, value);
    }

    pub fn note(&mut self, line: String) {
        self.notes.push(line);
    }

    pub fn table(&mut self, name: &str, columns: &[&str]) -> &mut Table {
        if let Some(i) = self.tables.iter().position(|t| t.name == name) {
            return &mut self.tables[i];
        }
        self.tables.push(Table::new(name, columns));
        self.tables.last_mut().expect("just pushed")
    }

    /// Append a run to the shared `trajectory` and `diagnostics` tables.
    pub fn record<D: Transport>(&mut self, run: usize, traj: &Trajectory<D>) {
        let run = run as f64;
        let t = self.table("trajectory", &["run", "t", "mass", "second_moment", "sup_norm", "l1_err_vs_profile"]);
        for r in &traj.records {
            t.push(vec![Some(run), Some(r.t), Some(r.moments.mass), Some(r.moments.second_moment), Some(r.sup_norm), r.l1_err_vs_profile]);
        }
        let d = self.table(
            "diagnostics",
            &["run", "t", "mass", "second_moment", "sup_norm", "l1_dist_to_profile", "free_energy_2d", "relative_entropy", "virial_slope_running"],
        );
        for r in diagnostics_records(traj) {
            d.push(vec![
                Some(run),
                Some(r.t),
                Some(r.mass),
                Some(r.second_moment),
                Some(r.sup_norm),
                r.l1_dist_to_profile,
                r.free_energy_2d,
                r.relative_entropy,
                r.virial_slope_running,
            ]);
        }
    }
}

pub trait Recipe: Send + Sync {
    fn name(&self) -> &'static str;
    fn checks(&self) -> &'static [CheckDef];
    fn run(&self, sc: &Scenario) -> Result<Outcome>;
}

/// Recipe names with a one-line description.
pub const RECIPES: &[(&str, &str)] = &[
    ("virial_2d", "second-moment slope against 4M(1 − M/8π) for planar runs"),
    ("blowup_sweep", "bounded t‖u‖∞ below 8π and blow-up timing above it"),
    ("profile_gm", "self-similar profile residual, stationarity and attraction"),
    ("rate_n3", "decay exponents of a three-dimensional run"),
    ("first_order", "first-order expansion of the linear similarity semigroup"),
    ("c2_constant", "log-correction constants against independent oracles"),
    ("wstar_moments", "second-order profile: self-similarity, PDE residual, moments"),
    ("phi_monotone", "monotonicity of the backward-heat-weighted density"),
    ("potential_bound", "sup of the potential gradient against the interpolation bound"),
    ("property_suite", "conservation, semigroup, null, Duhamel and kernel-remainder properties"),
];

pub fn build(sc: &Scenario, params: &Section) -> std::result::Result<Box<dyn Recipe>, ConfigError> {
    Ok(match sc.recipe.as_str() {
        "virial_2d" => Box::new(virial::Virial::parse(sc, params)?),
        "blowup_sweep" => Box::new(threshold::Threshold::parse(sc, params)?),
        "profile_gm" => Box::new(profile::Profile::parse(sc, params)?),
        "rate_n3" => Box::new(rate::Rate::parse(sc, params)?),
        "first_order" => Box::new(first_order::FirstOrder::parse(sc, params)?),
        "c2_constant" => Box::new(constants::Constants::parse(sc, params)?),
        "wstar_moments" => Box::new(wstar::WStar::parse(sc, params)?),
        "phi_monotone" => Box::new(phi::Phi::parse(sc, params)?),
        "potential_bound" => Box::new(bound::Bound::parse(sc, params)?),
        "property_suite" => Box::new(properties::Properties::parse(sc, params)?),
        other => {
            let known: Vec<_> = RECIPES.iter().map(|(n, _)| *n).collect();
            return Err(ConfigError::key("scenario.recipe", format!("unknown recipe `{other}` (known: {})", known.join(", "))));
        }
    })
}

/// A physical run on whichever grid the scenario names.
pub enum Run {
    Radial(Trajectory<RadialField>),
    Cartesian(Trajectory<CartesianField2D>),
}

macro_rules! with_traj {
    ($run:expr, $t:ident => $body:expr) => {
        match $run {
            $crate::recipes::Run::Radial($t) => $body,
            $crate::recipes::Run::Cartesian($t) => $body,
        }
    };
}
pub(crate) use with_traj;

pub fn evolve_scenario(sc: &Scenario, mass: f64) -> Result<Run> {
    match sc.grid {
        GridSpec::Radial { .. } => {
            let g = sc.radial_grid()?;
            Ok(Run::Radial(evolve(&sc.radial_data(&g, mass)?, &sc.solver)?))
        }
        GridSpec::Cartesian { .. } => {
            let g = sc.cartesian_grid()?;
            Ok(Run::Cartesian(evolve(&sc.cartesian_data(&g, mass)?, &sc.solver)?))
        }
    }
}

/// Largest |M(t) − M(t₀)|/M(t₀) over the records.
pub fn mass_drift<D: Density>(traj: &Trajectory<D>) -> f64 {
    let m0 = traj.records[0].moments.mass;
    if m0 == 0.0 {
        return 0.0;
    }
    traj.records.iter().map(|r| ((r.moments.mass - m0) / m0).abs()).fold(0.0, nan_max)
}

/// max that lets NaN through, so a broken measurement cannot hide.
pub fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

pub fn nan_min(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.min(b)
    }
}

/// Evenly spaced points from `from` to `to` inclusive.
pub fn steps(from: f64, to: f64, step: f64) -> Vec<f64> {
    let n = ((to - from) / step + 1e-9).floor() as usize;
    (0..=n).map(|k| from + step * k as f64).collect()
}

pub(crate) fn positive(params: &Section, key: &str, default: f64) -> std::result::Result<f64, ConfigError> {
    params.positive_or(key, default)
}

pub(crate) fn need_grid(sc: &Scenario, radial: bool, what: &str) -> std::result::Result<(), ConfigError> {
    let ok = matches!((sc.grid, radial), (GridSpec::Radial { .. }, true) | (GridSpec::Cartesian { .. }, false));
    if ok {
        Ok(())
    } else {
        Err(ConfigError::key("grid.kind", format!("{what} needs a {} grid", if radial { "radial" } else { "cartesian" })))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steps_include_both_ends() {
        let s = steps(0.1, 1.0, 0.05);
        assert_eq!(s.len(), 19);
        assert!((s[18] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nan_is_sticky() {
        assert!(nan_max(1.0, f64::NAN).is_nan());
        assert!([1.0, f64::NAN, 2.0].iter().fold(0.0, |a, b| nan_max(a, *b)).is_nan());
        assert_eq!(nan_min(1.0, 2.0), 1.0);
    }
}
