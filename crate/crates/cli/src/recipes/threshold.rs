use std::f64::consts::PI;

use pks_core::asymptotics::fit_rate;
use pks_core::diagnostics::virial_prediction;
use pks_core::Result;

use super::{evolve_scenario, mass_drift, nan_max, with_traj, Outcome, Recipe};
use crate::checks::{CheckDef, Rule};
use crate::config::{ConfigError, Section};
use crate::scenario::Scenario;

const CHECKS: &[CheckDef] = &[
    CheckDef::new("threshold_growth_slope", Rule::Absolute, -0.2, "fitted slope of t‖u‖∞ in log t for masses below 8π"),
    CheckDef::new("threshold_peak", Rule::AtMost, 0.0, "largest t‖u‖∞ over the fit window"),
    CheckDef::new("blowup_time_ratio", Rule::AtMost, 0.0, "time to blow-up over m₂(0)/|4M(1 − M/8π)| for masses above 8π"),
    CheckDef::new("mass_conservation", Rule::AtMost, 0.0, "worst relative mass drift"),
];

pub struct Threshold {
    fit_from: f64,
}

impl Threshold {
    pub fn parse(sc: &Scenario, p: &Section) -> std::result::Result<Self, ConfigError> {
        if sc.dim != 2 {
            return Err(ConfigError::key("scenario.dim", "the 8π threshold is planar"));
        }
        Ok(Threshold { fit_from: p.f64_or("fit_from", 10.0)? })
    }
}

impl Recipe for Threshold {
    fn name(&self) -> &'static str {
        "blowup_sweep"
    }

    fn checks(&self) -> &'static [CheckDef] {
        CHECKS
    }

    fn run(&self, sc: &Scenario) -> Result<Outcome> {
        let mut out = Outcome::default();
        // worst distance of a slope from the centre of the accepted band
        let mut slope_worst: Option<f64> = None;
        let mut peak = f64::NEG_INFINITY;
        let mut ratio = f64::NEG_INFINITY;
        let mut drift: f64 = 0.0;
        let mut any_sub = false;
        let mut any_super = false;
        for (k, &m) in sc.initial.masses.iter().enumerate() {
            let run = evolve_scenario(sc, m)?;
            let (times, sups, m2_0, blowup, d) = with_traj!(&run, t => {
                out.record(k, t);
                (t.times(), t.sup_norms(), t.records[0].moments.second_moment, t.blowup, mass_drift(t))
            });
            drift = nan_max(drift, d);
            if m < 8.0 * PI {
                any_sub = true;
                let (tw, y): (Vec<f64>, Vec<f64>) =
                    times.iter().zip(&sups).filter(|(t, _)| **t >= self.fit_from).map(|(t, s)| (*t, t * s)).unzip();
                let slope = match (blowup, fit_rate(&tw, &y)) {
                    (None, Ok(fit)) => fit.slope,
                    _ => f64::NAN,
                };
                let c = CHECKS[0].expected;
                slope_worst = Some(match slope_worst {
                    Some(s) if s.is_nan() || (s - c).abs() >= (slope - c).abs() => s,
                    _ => slope,
                });
                let p = y.iter().copied().fold(f64::NEG_INFINITY, nan_max);
                peak = nan_max(peak, if blowup.is_some() || y.is_empty() { f64::INFINITY } else { p });
                for (t, v) in tw.iter().zip(&y) {
                    out.table("threshold", &["mass", "t", "t_sup"]).push_values(&[m, *t, *v]);
                }
                out.note(format!("M = {}: slope of t‖u‖∞ {slope:.4}, max {p:.4}", Scenario::mass_label(m)));
            } else {
                any_super = true;
                let horizon = m2_0 / virial_prediction(m).abs();
                let r = match blowup {
                    Some(b) => (b.t - sc.solver.t_start) / horizon,
                    None => f64::INFINITY,
                };
                ratio = nan_max(ratio, r);
                let bt = blowup.map_or(f64::NAN, |b| b.t);
                out.table("blowup", &["mass", "t_blowup", "virial_horizon"]).push_values(&[m, bt, horizon]);
                out.note(format!("M = {}: blow-up at t = {bt:.4}, horizon {horizon:.4}", Scenario::mass_label(m)));
            }
        }
        if any_sub {
            out.measure("threshold_growth_slope", slope_worst.unwrap_or(f64::NAN));
            out.measure("threshold_peak", peak);
        }
        if any_super {
            out.measure("blowup_time_ratio", ratio);
        }
        out.measure("mass_conservation", drift);
        Ok(out)
    }
}
