use std::sync::Arc;

use pks_core::asymptotics::{w_function, w_pde_residual, w_star, w_value, WStarField};
use pks_core::fields::{Density, GridKind, RadialGrid};
use pks_core::Result;

use super::{nan_max, positive, Outcome, Recipe};
use crate::checks::{CheckDef, Rule};
use crate::config::{ConfigError, Section};
use crate::scenario::Scenario;

const CHECKS: &[CheckDef] = &[
    CheckDef::new("self_similarity", Rule::AtMost, 0.0, "max |t²𝒲(√t ξ, t) − 𝒲⋆(ξ)| relative to sup|𝒲⋆|"),
    CheckDef::new("pde_residual_l1", Rule::AtMost, 0.0, "L¹ norm of ∂ₜ𝒲 − Δ𝒲 − div(Γ∇E∗Γ) at t = 1"),
    CheckDef::new("moment_stability", Rule::AtMost, 0.0, "largest relative change of ∫|𝒲⋆||ξ|^k, k = 0, 2, 4, under refinement"),
    CheckDef::new("wstar_mass", Rule::Absolute, 0.0, "∫𝒲⋆"),
    CheckDef::new("route_agreement", Rule::AtMost, 0.0, "gap between the Gauss-panel and trapezoid s-quadratures, relative to sup|𝒲⋆|"),
];

const MOMENTS: [i32; 3] = [0, 2, 4];

pub struct WStar {
    len: usize,
    r_max: f64,
    s_max: f64,
    refine_len: usize,
    refine_r_max: f64,
    refine_s_max: f64,
    similarity_t: f64,
}

impl WStar {
    pub fn parse(_: &Scenario, p: &Section) -> std::result::Result<Self, ConfigError> {
        Ok(WStar {
            len: p.usize_or("len", 1024)?,
            r_max: positive(p, "r_max", 20.0)?,
            s_max: positive(p, "s_max", 20.0)?,
            refine_len: p.usize_or("refine_len", 2048)?,
            refine_r_max: positive(p, "refine_r_max", 30.0)?,
            refine_s_max: positive(p, "refine_s_max", 40.0)?,
            similarity_t: positive(p, "similarity_t", 4.0)?,
        })
    }

    fn build(&self, len: usize, r_max: f64, s_max: f64) -> Result<WStarField> {
        let g = Arc::new(RadialGrid::new(3, GridKind::Graded, len, r_max)?);
        w_star(&g, s_max, 1e-10)
    }
}

impl Recipe for WStar {
    fn name(&self) -> &'static str {
        "wstar_moments"
    }

    fn checks(&self) -> &'static [CheckDef] {
        CHECKS
    }

    fn run(&self, _: &Scenario) -> Result<Outcome> {
        let mut out = Outcome::default();
        let base = self.build(self.len, self.r_max, self.s_max)?;
        for (r, v) in base.grid().nodes().iter().zip(base.field.values()) {
            out.table("wstar", &["r", "w_star"]).push_values(&[*r, *v]);
        }

        let t = self.similarity_t;
        let wt = w_function(&base, t)?;
        let sup = base.field.sup_norm();
        // wt sits on the grid dilated by √t; w_value interpolates independently
        let ss = base
            .grid()
            .nodes()
            .iter()
            .zip(base.field.values())
            .zip(wt.values())
            .map(|((xi, b), a)| {
                let direct = t * t * w_value(&base, t.sqrt() * xi, t);
                (t * t * a - b).abs().max((direct - b).abs()) / sup
            })
            .fold(0.0, nan_max);

        let res = w_pde_residual(&base)?.lp_norm(1.0)?;

        let refined = [
            self.build(self.refine_len, self.r_max, self.refine_s_max)?,
            self.build(self.refine_len, self.refine_r_max, self.s_max)?,
        ];
        let mut stability: f64 = 0.0;
        for k in MOMENTS {
            let m0 = base.abs_moment(k);
            let row: Vec<f64> = refined.iter().map(|w| w.abs_moment(k)).collect();
            for m in &row {
                stability = nan_max(stability, ((m - m0) / m0).abs());
            }
            out.table("moments", &["k", "base", "refined_s", "refined_r"]).push_values(&[k as f64, m0, row[0], row[1]]);
        }

        out.note(format!(
            "W*(0) {:.6e}, mass {:.2e}, PDE residual {res:.2e}, moment stability {stability:.2e}, decay slope {:.4}",
            base.field.values()[0],
            base.mass(),
            base.decay_slope
        ));
        out.measure("self_similarity", ss);
        out.measure("pde_residual_l1", res);
        out.measure("moment_stability", stability);
        out.measure("wstar_mass", base.mass());
        out.measure("route_agreement", base.route_disagreement());
        Ok(out)
    }
}
