use pks_core::asymptotics::fit_rate;
use pks_core::evolution::gaussian_like;
use pks_core::fields::Density;
use pks_core::Result;

use super::{evolve_scenario, mass_drift, need_grid, Outcome, Recipe, Run};
use crate::checks::{CheckDef, Rule};
use crate::config::{ConfigError, Section};
use crate::scenario::Scenario;

const CHECKS: &[CheckDef] = &[
    CheckDef::new("sup_exponent", Rule::Absolute, -1.5, "fitted exponent of ‖u‖∞"),
    CheckDef::new("l1_exponent", Rule::Below, 0.0, "fitted exponent of ‖u − MΓ_t‖₁"),
    CheckDef::new("scaled_gap_monotone", Rule::Below, 0.0, "largest relative increase of t^{n/2}‖u − MΓ_t‖∞ over the last decade"),
    CheckDef::new("mass_conservation", Rule::AtMost, 0.0, "relative mass drift"),
];

pub struct Rate {
    fit_from: f64,
    last_decade_from: f64,
}

impl Rate {
    pub fn parse(sc: &Scenario, p: &Section) -> std::result::Result<Self, ConfigError> {
        need_grid(sc, true, "rate_n3")?;
        if sc.dim < 3 {
            return Err(ConfigError::key("scenario.dim", "decay rates are for n ≥ 3"));
        }
        if sc.initial.masses.len() != 1 {
            return Err(ConfigError::key("initial.mass", "rate_n3 takes a single mass"));
        }
        Ok(Rate { fit_from: p.f64_or("fit_from", 10.0)?, last_decade_from: p.f64_or("last_decade_from", sc.solver.t_end / 10.0)? })
    }
}

impl Recipe for Rate {
    fn name(&self) -> &'static str {
        "rate_n3"
    }

    fn checks(&self) -> &'static [CheckDef] {
        CHECKS
    }

    fn run(&self, sc: &Scenario) -> Result<Outcome> {
        let mut out = Outcome::default();
        let m = sc.initial.masses[0];
        let Run::Radial(traj) = evolve_scenario(sc, m)? else { unreachable!("radial grid checked at parse") };
        out.record(0, &traj);
        let half = sc.dim as f64 / 2.0;
        let mut t = Vec::new();
        let mut sup = Vec::new();
        let mut l1 = Vec::new();
        let mut gap = Vec::new();
        for r in traj.records.iter().filter(|r| r.t >= self.fit_from) {
            let heat = gaussian_like(&r.field, m, r.t);
            let g = r.field.values().iter().zip(heat.values()).fold(0.0f64, |a, (u, h)| a.max((u - h).abs()));
            let scaled = r.t.powf(half) * g;
            t.push(r.t);
            sup.push(r.sup_norm);
            l1.push(r.field.l1_distance(&heat));
            gap.push(scaled);
            out.table("rates", &["t", "sup_norm", "l1_err", "scaled_gap"]).push_values(&[r.t, r.sup_norm, r.field.l1_distance(&heat), scaled]);
        }
        let fs = fit_rate(&t, &sup).map_or(f64::NAN, |f| f.slope);
        let fl = fit_rate(&t, &l1).map_or(f64::NAN, |f| f.slope);
        let last: Vec<f64> = t.iter().zip(&gap).filter(|(t, _)| **t >= self.last_decade_from).map(|(_, g)| *g).collect();
        let rise = if last.len() < 2 {
            f64::NAN
        } else {
            last.windows(2).map(|w| (w[1] - w[0]) / w[0]).fold(f64::NEG_INFINITY, super::nan_max)
        };
        out.note(format!("sup exponent {fs:.4}, L¹ exponent {fl:.4}, scaled gap {:.3e} → {:.3e}", gap.first().unwrap_or(&f64::NAN), gap.last().unwrap_or(&f64::NAN)));
        out.measure("sup_exponent", fs);
        out.measure("l1_exponent", fl);
        out.measure("scaled_gap_monotone", rise);
        out.measure("mass_conservation", mass_drift(&traj));
        Ok(out)
    }
}
