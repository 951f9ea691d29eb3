use std::f64::consts::PI;

use pks_core::diagnostics::{phi_density, phi_monotonicity_check};
use pks_core::evolution::{evolve, Trajectory, Transport};
use pks_core::fields::{CartesianField2D, Density, RadialField};
use pks_core::Result;

use super::{nan_max, positive, steps, Outcome, Recipe};
use crate::checks::{CheckDef, Rule};
use crate::config::{ConfigError, Section};
use crate::scenario::{GridSpec, InitialKind, Scenario};

const CHECKS: &[CheckDef] = &[
    CheckDef::new("phi_margin", Rule::AtLeast, 0.0, "min over ρ of (dΦ/dρ − (1 − M/8π)(2/ρ)Φ)/Φ"),
    CheckDef::new("heat_closed_form", Rule::AtMost, 0.0, "worst relative gap of the pure-heat Φ from Mρ²/(4π(s₁ − t₀ + a))"),
];

pub struct Phi {
    s1: f64,
    rhos: Vec<f64>,
}

impl Phi {
    pub fn parse(sc: &Scenario, p: &Section) -> std::result::Result<Self, ConfigError> {
        if sc.dim != 2 {
            return Err(ConfigError::key("scenario.dim", "the Φ monotonicity law is planar"));
        }
        if !matches!(sc.initial.kind, InitialKind::Gaussian | InitialKind::ShiftedGaussian) {
            return Err(ConfigError::key("initial.kind", "the heat control needs Gaussian data"));
        }
        if sc.initial.masses.len() != 1 {
            return Err(ConfigError::key("initial.mass", "phi_monotone takes a single mass"));
        }
        let s1 = positive(p, "s1", 2.0)?;
        let rhos = steps(positive(p, "rho_from", 0.1)?, positive(p, "rho_to", 1.0)?, positive(p, "rho_step", 0.05)?);
        if rhos.len() < 3 {
            return Err(ConfigError::key("params.rho_step", "fewer than three radii"));
        }
        if s1 - rhos[rhos.len() - 1].powi(2) <= sc.solver.t_start || s1 > sc.solver.t_end {
            return Err(ConfigError::key("params.s1", "s₁ − ρ² must stay inside the run"));
        }
        Ok(Phi { s1, rhos })
    }

    fn scan<D: Transport>(&self, sc: &Scenario, data: &D, peak: impl Fn(&D) -> Vec<f64>, out: &mut Outcome) -> Result<(f64, f64)> {
        let m = sc.initial.masses[0];
        let traj: Trajectory<D> = evolve(data, &sc.solver)?;
        let near = traj
            .records
            .iter()
            .min_by(|a, b| (a.t - self.s1).abs().total_cmp(&(b.t - self.s1).abs()))
            .expect("a run has records");
        let z1 = peak(&near.field);
        let scan = phi_monotonicity_check(&traj, &z1, self.s1, &self.rhos)?;
        for r in &scan.rows {
            out.table("phi", &["rho", "phi", "dphi", "margin"]).push_values(&[r.rho, r.phi, r.dphi, r.margin]);
        }
        out.record(0, &traj);

        let heat_cfg = pks_core::evolution::SolverConfig { nonlinear: false, ..sc.solver.clone() };
        let heat = evolve(data, &heat_cfg)?;
        let centre = data.moments()?.center;
        let age = self.s1 - sc.solver.t_start + sc.initial.width;
        let mut worst: f64 = 0.0;
        for &rho in &self.rhos {
            let phi = phi_density(&heat, &centre, self.s1, rho)?;
            let exact = m * rho * rho / (4.0 * PI * age);
            worst = nan_max(worst, ((phi - exact) / exact).abs());
            out.table("phi_heat", &["rho", "phi", "closed_form"]).push_values(&[rho, phi, exact]);
        }
        out.note(format!("z1 = {z1:?}: min relative margin {:.4}, heat control error {worst:.2e}", scan.min_relative_margin));
        Ok((scan.min_relative_margin, worst))
    }
}

fn planar_peak(u: &CartesianField2D) -> Vec<f64> {
    let n = u.n();
    let k = u.values().iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map_or(0, |(k, _)| k);
    let x = u.grid().coords();
    vec![x[k / n], x[k % n]]
}

impl Recipe for Phi {
    fn name(&self) -> &'static str {
        "phi_monotone"
    }

    fn checks(&self) -> &'static [CheckDef] {
        CHECKS
    }

    fn run(&self, sc: &Scenario) -> Result<Outcome> {
        let mut out = Outcome::default();
        let m = sc.initial.masses[0];
        let (margin, heat) = match sc.grid {
            GridSpec::Cartesian { .. } => {
                let data = sc.cartesian_data(&sc.cartesian_grid()?, m)?;
                self.scan(sc, &data, planar_peak, &mut out)?
            }
            GridSpec::Radial { .. } => {
                let data: RadialField = sc.radial_data(&sc.radial_grid()?, m)?;
                self.scan(sc, &data, |_| vec![0.0, 0.0], &mut out)?
            }
        };
        out.measure("phi_margin", margin);
        out.measure("heat_closed_form", heat);
        Ok(out)
    }
}
