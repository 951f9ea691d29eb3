use std::f64::consts::PI;

use pks_core::diagnostics::{virial_prediction, virial_slope};
use pks_core::Result;

use super::{evolve_scenario, mass_drift, nan_max, with_traj, Outcome, Recipe};
use crate::checks::{CheckDef, Rule};
use crate::config::{ConfigError, Section};
use crate::scenario::Scenario;

const CHECKS: &[CheckDef] = &[
    CheckDef::new("virial_relative", Rule::AtMost, 0.0, "worst relative slope error over masses below 8π"),
    CheckDef::new("virial_critical", Rule::AtMost, 0.0, "absolute slope at M = 8π, where the prediction is 0"),
    CheckDef::new("mass_conservation", Rule::AtMost, 0.0, "worst relative mass drift"),
];

pub struct Virial {
    fit_from: f64,
    fit_to: f64,
}

impl Virial {
    pub fn parse(sc: &Scenario, p: &Section) -> std::result::Result<Self, ConfigError> {
        if sc.dim != 2 {
            return Err(ConfigError::key("scenario.dim", "the virial law is planar"));
        }
        let fit_from = p.f64_or("fit_from", 1.0)?;
        let fit_to = p.f64_or("fit_to", sc.solver.t_end)?;
        if !(fit_to > fit_from) {
            return Err(ConfigError::key("params.fit_to", "must exceed fit_from"));
        }
        Ok(Virial { fit_from, fit_to })
    }
}

impl Recipe for Virial {
    fn name(&self) -> &'static str {
        "virial_2d"
    }

    fn checks(&self) -> &'static [CheckDef] {
        CHECKS
    }

    fn run(&self, sc: &Scenario) -> Result<Outcome> {
        let mut out = Outcome::default();
        let mut rel = f64::NEG_INFINITY;
        let mut crit = f64::NEG_INFINITY;
        let mut drift: f64 = 0.0;
        for (k, &m) in sc.initial.masses.iter().enumerate() {
            let run = evolve_scenario(sc, m)?;
            let (fit, d) = with_traj!(&run, t => {
                out.record(k, t);
                (virial_slope(t, self.fit_from, self.fit_to)?, mass_drift(t))
            });
            drift = nan_max(drift, d);
            let want = virial_prediction(m);
            let critical = (m - 8.0 * PI).abs() <= 1e-9 * 8.0 * PI;
            if critical {
                crit = nan_max(crit, (fit.slope - want).abs());
            } else {
                rel = nan_max(rel, ((fit.slope - want) / want).abs());
            }
            out.table("virial", &["mass", "slope", "prediction", "r2"]).push_values(&[m, fit.slope, want, fit.r2]);
            out.note(format!("M = {}: slope {:.8e}, predicted {:.8e}", Scenario::mass_label(m), fit.slope, want));
        }
        if rel > f64::NEG_INFINITY || rel.is_nan() {
            out.measure("virial_relative", rel);
        }
        if crit > f64::NEG_INFINITY || crit.is_nan() {
            out.measure("virial_critical", crit);
        }
        out.measure("mass_conservation", drift);
        Ok(out)
    }
}
