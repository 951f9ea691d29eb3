use std::f64::consts::PI;
use std::sync::Arc;

use pks_core::evolution::{evolve_similarity, gaussian_like, SolverConfig};
use pks_core::fields::{Density, GridKind, RadialField, RadialGrid};
use pks_core::profiles::{self_similar_profile_2d, ProfileResult};
use pks_core::Result;

use super::{mass_drift, need_grid, positive, Outcome, Recipe};
use crate::checks::{CheckDef, Rule};
use crate::config::{ConfigError, Section};
use crate::scenario::Scenario;

const CHECKS: &[CheckDef] = &[
    CheckDef::new("profile_residual", Rule::AtMost, 0.0, "worst weighted-L² stationary residual of G_M"),
    CheckDef::new("stationarity_drift", Rule::AtMost, 0.0, "largest ‖U(τ) − G_M‖₁ when started from G_M"),
    CheckDef::new("convergence_final", Rule::AtMost, 0.0, "‖U(τ_end) − G_M‖₁/M started from M𝒢₂"),
    CheckDef::new("convergence_monotone", Rule::Below, 0.0, "largest relative increase of ‖U(τ) − G_M‖₁"),
    CheckDef::new("mass_conservation", Rule::AtMost, 0.0, "worst relative mass drift of the similarity runs"),
];

pub struct Profile {
    tol: f64,
    evolution_len: usize,
    evolution_r_max: f64,
    stationary_tau: f64,
    convergence_mass: f64,
    convergence_tau: f64,
}

impl Profile {
    pub fn parse(sc: &Scenario, p: &Section) -> std::result::Result<Self, ConfigError> {
        need_grid(sc, true, "profile_gm")?;
        if sc.dim != 2 {
            return Err(ConfigError::key("scenario.dim", "self-similar profiles are planar"));
        }
        if let Some(m) = sc.initial.masses.iter().find(|m| **m >= 8.0 * PI) {
            return Err(ConfigError::key("initial.mass", format!("{m} is not below 8π")));
        }
        let convergence_mass = positive(p, "convergence_mass", 4.0 * PI)?;
        if convergence_mass >= 8.0 * PI {
            return Err(ConfigError::key("params.convergence_mass", "must be below 8π"));
        }
        Ok(Profile {
            tol: positive(p, "profile_tol", 1e-12)?,
            evolution_len: p.usize_or("evolution_len", 4096)?,
            evolution_r_max: positive(p, "evolution_r_max", 20.0)?,
            stationary_tau: positive(p, "stationary_tau", 5.0)?,
            convergence_mass,
            convergence_tau: positive(p, "convergence_tau", 6.0)?,
        })
    }

    fn similarity_config(&self, sc: &Scenario, tau: f64) -> SolverConfig {
        SolverConfig { t_start: 0.0, t_end: tau, ..sc.solver.clone() }
    }
}

fn l1_series(traj: &pks_core::evolution::Trajectory<RadialField>, reference: &RadialField) -> Vec<f64> {
    traj.records.iter().map(|r| r.field.l1_distance(reference)).collect()
}

impl Recipe for Profile {
    fn name(&self) -> &'static str {
        "profile_gm"
    }

    fn checks(&self) -> &'static [CheckDef] {
        CHECKS
    }

    fn run(&self, sc: &Scenario) -> Result<Outcome> {
        let mut out = Outcome::default();
        let fine = sc.radial_grid()?;
        let evo = Arc::new(RadialGrid::new(2, GridKind::Graded, self.evolution_len, self.evolution_r_max)?);
        let mut residual: f64 = 0.0;
        let mut drift_max: f64 = 0.0;
        let mut mass_dev: f64 = 0.0;
        let mut run = 0;
        for &m in &sc.initial.masses {
            let p: ProfileResult = self_similar_profile_2d(m, &fine, self.tol)?;
            residual = super::nan_max(residual, p.residual);
            out.table("profiles", &["mass", "residual", "iterations", "peak"]).push_values(&[
                m,
                p.residual,
                p.iterations as f64,
                p.field.values()[0],
            ]);
            for (r, g) in fine.nodes().iter().zip(p.field.values()).step_by(4) {
                out.table("profile_curves", &["mass", "r", "g"]).push_values(&[m, *r, *g]);
            }

            let q = self_similar_profile_2d(m, &evo, self.tol)?;
            let mut traj = evolve_similarity(&q.field, &self.similarity_config(sc, self.stationary_tau))?;
            let reference = q.field.clone();
            traj.set_reference(|_, _| Some(reference.clone()));
            let drift = l1_series(&traj, &q.field).into_iter().fold(0.0, super::nan_max);
            drift_max = super::nan_max(drift_max, drift);
            mass_dev = super::nan_max(mass_dev, mass_drift(&traj));
            out.record(run, &traj);
            run += 1;
            out.note(format!(
                "M = {}: residual {:.3e} ({} iterations), stationarity drift {drift:.3e}",
                Scenario::mass_label(m),
                p.residual,
                p.iterations
            ));
        }

        let m = self.convergence_mass;
        let target = self_similar_profile_2d(m, &evo, self.tol)?;
        let start = gaussian_like(&RadialField::zeros(evo.clone()), m, 1.0);
        let mut traj = evolve_similarity(&start, &self.similarity_config(sc, self.convergence_tau))?;
        let reference = target.field.clone();
        traj.set_reference(|_, _| Some(reference.clone()));
        let dist = l1_series(&traj, &target.field);
        let rise = dist.windows(2).map(|w| (w[1] - w[0]) / w[0]).fold(f64::NEG_INFINITY, super::nan_max);
        let last = *dist.last().expect("a run has records");
        mass_dev = super::nan_max(mass_dev, mass_drift(&traj));
        out.record(run, &traj);
        out.note(format!("from M𝒢₂ at M = {}: ‖U − G_M‖₁ {:.3e} → {last:.3e}", Scenario::mass_label(m), dist[0]));

        out.measure("profile_residual", residual);
        out.measure("stationarity_drift", drift_max);
        out.measure("convergence_final", last / m);
        out.measure("convergence_monotone", rise);
        out.measure("mass_conservation", mass_dev);
        Ok(out)
    }
}
