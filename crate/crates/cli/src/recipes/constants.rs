use std::sync::Arc;

use pks_core::asymptotics::{constant_c1_report, constant_c2_report, w_star};
use pks_core::fields::{GridKind, RadialGrid};
use pks_core::Result;

use super::{positive, Outcome, Recipe};
use crate::checks::{CheckDef, Rule};
use crate::config::{ConfigError, Section};
use crate::scenario::Scenario;

const CHECKS: &[CheckDef] = &[
    CheckDef::new("c2_oracle_agreement", Rule::AtMost, 0.0, "relative gap between the c₂ display quadrature and its 1D reduction"),
    CheckDef::new("c2_closed_form", Rule::AtMost, 0.0, "worst relative gap of either c₂ route from 1/(256π⁴)·M²"),
    CheckDef::new("c1_monte_carlo_agreement", Rule::AtMost, 0.0, "relative gap between c₁ quadrature and stratified Monte Carlo"),
];

pub struct Constants {
    c2_mass: f64,
    c1_mass: f64,
    b0: [f64; 3],
    samples: usize,
    wstar_len: usize,
    wstar_r_max: f64,
    wstar_s_max: f64,
}

impl Constants {
    pub fn parse(_: &Scenario, p: &Section) -> std::result::Result<Self, ConfigError> {
        let b = p.list_or("b0", &[1.0, 0.0, 0.0])?;
        let b0: [f64; 3] = b.try_into().map_err(|_| ConfigError::key("params.b0", "needs three components"))?;
        let samples = p.usize_or("samples", pks_core::asymptotics::C1_SAMPLES)?;
        if samples < 1000 {
            return Err(ConfigError::key("params.samples", "at least 1000 samples"));
        }
        Ok(Constants {
            c2_mass: positive(p, "c2_mass", 1.0)?,
            c1_mass: positive(p, "c1_mass", 1.0)?,
            b0,
            samples,
            wstar_len: p.usize_or("wstar_len", 1024)?,
            wstar_r_max: positive(p, "wstar_r_max", 20.0)?,
            wstar_s_max: positive(p, "wstar_s_max", 20.0)?,
        })
    }
}

impl Recipe for Constants {
    fn name(&self) -> &'static str {
        "c2_constant"
    }

    fn checks(&self) -> &'static [CheckDef] {
        CHECKS
    }

    fn run(&self, sc: &Scenario) -> Result<Outcome> {
        let mut out = Outcome::default();
        let c2 = constant_c2_report(self.c2_mass)?;
        let closed = (c2.display - c2.closed_form).abs().max((c2.reduced - c2.closed_form).abs()) / c2.closed_form.abs();
        out.table("c2", &["mass", "display", "reduced", "closed_form"]).push_values(&[c2.mass, c2.display, c2.reduced, c2.closed_form]);
        out.note(format!("c2({}) display {:.12e}, reduced {:.12e}, closed form {:.12e}", c2.mass, c2.display, c2.reduced, c2.closed_form));

        let grid = Arc::new(RadialGrid::new(3, GridKind::Graded, self.wstar_len, self.wstar_r_max)?);
        let w = w_star(&grid, self.wstar_s_max, 1e-10)?;
        let c1 = constant_c1_report(self.c1_mass, self.b0, Some(&w), self.samples, sc.seed)?;
        out.table("c1", &["mass", "b0_x", "b0_y", "b0_z", "quadrature", "monte_carlo", "samples", "seed"]).push_values(&[
            c1.mass,
            self.b0[0],
            self.b0[1],
            self.b0[2],
            c1.quadrature,
            c1.monte_carlo,
            c1.samples as f64,
            sc.seed as f64,
        ]);
        out.note(format!("c1({}) quadrature {:.10e}, Monte Carlo {:.10e} ({} samples)", c1.mass, c1.quadrature, c1.monte_carlo, c1.samples));

        out.measure("c2_oracle_agreement", c2.rel_disagreement());
        out.measure("c2_closed_form", closed);
        out.measure("c1_monte_carlo_agreement", c1.rel_disagreement());
        Ok(out)
    }
}
