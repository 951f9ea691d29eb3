use pks_core::diagnostics::line_fit;
use pks_core::fields::{Density, Field};
use pks_core::semigroup::{first_order_heat_expansion, similarity_semigroup};
use pks_core::{PksError, Result};

use super::{positive, steps, Outcome, Recipe};
use crate::checks::{CheckDef, Rule};
use crate::config::{ConfigError, Section};
use crate::scenario::{GridSpec, Scenario};

const CHECKS: &[CheckDef] =
    &[CheckDef::new("first_order_exponent", Rule::AtLeast, 1.0, "decay exponent of ‖S(τ)U₀ − M𝒢 + e^{−τ/2}B₀·∇𝒢‖₁")];

pub struct FirstOrder {
    taus: Vec<f64>,
}

impl FirstOrder {
    pub fn parse(sc: &Scenario, p: &Section) -> std::result::Result<Self, ConfigError> {
        if matches!(sc.grid, GridSpec::Radial { .. }) && sc.initial.shift.iter().any(|v| *v != 0.0) {
            return Err(ConfigError::key("grid.kind", "shifted data needs a cartesian grid"));
        }
        let from = positive(p, "tau_from", 2.0)?;
        let to = positive(p, "tau_to", 8.0)?;
        let step = positive(p, "tau_step", 0.25)?;
        let taus = steps(from, to, step);
        if taus.len() < 8 {
            return Err(ConfigError::key("params.tau_step", "fewer than 8 sample times"));
        }
        Ok(FirstOrder { taus })
    }
}

impl Recipe for FirstOrder {
    fn name(&self) -> &'static str {
        "first_order"
    }

    fn checks(&self) -> &'static [CheckDef] {
        CHECKS
    }

    fn run(&self, sc: &Scenario) -> Result<Outcome> {
        let mut out = Outcome::default();
        let m = sc.initial.masses[0];
        let data = match sc.grid {
            GridSpec::Radial { .. } => Field::Radial(sc.radial_data(&sc.radial_grid()?, m)?),
            GridSpec::Cartesian { .. } => Field::Cartesian(sc.cartesian_data(&sc.cartesian_grid()?, m)?),
        };
        let mut logs = Vec::new();
        for &tau in &self.taus {
            let approx = first_order_heat_expansion(&data, tau)?;
            let err = match (&data, &approx) {
                (Field::Radial(u), Field::Radial(a)) => similarity_semigroup(u, tau)?.l1_distance(a),
                (Field::Cartesian(u), Field::Cartesian(a)) => similarity_semigroup(u, tau)?.l1_distance(a),
                _ => return Err(PksError::InvalidParameter("expansion changed the grid".into())),
            };
            out.table("first_order", &["tau", "l1_error"]).push_values(&[tau, err]);
            logs.push(err.ln());
        }
        let fit = line_fit(&self.taus, &logs)?;
        out.note(format!("decay exponent {:.5} (r² {:.6})", -fit.slope, fit.r2));
        out.measure("first_order_exponent", -fit.slope);
        Ok(out)
    }
}
