use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pks_core::diagnostics::line_fit;
use pks_core::evolution::{duhamel_residual, duhamel_residual_at, evolve, gaussian_like, SolverConfig};
use pks_core::fields::{CartesianField2D, CartesianGrid, Density, GridKind, RadialField, RadialGrid};
use pks_core::potential::{cartesian_gradient_2d, mutual_force, self_force};
use pks_core::semigroup::{heat_evolve, kernel_taylor_terms, similarity_semigroup, Propagate};
use pks_core::special::gaussian;
use pks_core::Result;

use super::{evolve_scenario, mass_drift, nan_max, nan_min, need_grid, positive, steps, Outcome, Recipe, Run};
use crate::checks::{CheckDef, Rule};
use crate::config::{ConfigError, Section};
use crate::scenario::Scenario;

const CHECKS: &[CheckDef] = &[
    CheckDef::new("mass_conservation", Rule::AtMost, 0.0, "worst relative mass drift over the suite runs"),
    CheckDef::new("semigroup_law", Rule::AtMost, 0.0, "worst ‖S(a)S(b)f − S(a+b)f‖₁/‖f‖₁, heat and similarity flows"),
    CheckDef::new("null_conditions", Rule::AtMost, 0.0, "worst |∫u∇v| and symmetrised pair force, relative to ‖u‖₁ sup|∇v|"),
    CheckDef::new("duhamel_residual", Rule::AtMost, 0.0, "mild-form residual of the reference run"),
    CheckDef::new("duhamel_control_ratio", Rule::AtMost, 0.0, "residual over the residual with the nonlinear integral dropped"),
    CheckDef::new("taylor_exponent", Rule::AtLeast, 1.5, "fitted decay exponent in s of the kernel remainder"),
];

/// Points (ξ, z) for the kernel remainder fit.
const TAYLOR_CASES: [(&[f64], &[f64]); 3] = [
    (&[0.7, -0.3], &[0.5, 0.9]),
    (&[0.4, 0.2, -0.6], &[-0.3, 0.8, 0.5]),
    (&[1.2, 0.0, 0.3, -0.4], &[0.2, -0.5, 0.9, 0.1]),
];

pub struct Properties {
    stride: usize,
    r_cut: f64,
    random_fields: usize,
    planar_n: usize,
    planar_half_width: f64,
    taylor_s: Vec<f64>,
}

impl Properties {
    pub fn parse(sc: &Scenario, p: &Section) -> std::result::Result<Self, ConfigError> {
        need_grid(sc, true, "property_suite")?;
        if sc.initial.masses.len() != 1 {
            return Err(ConfigError::key("initial.mass", "property_suite takes a single mass"));
        }
        let stride = p.usize_or("duhamel_stride", 16)?;
        if stride == 0 {
            return Err(ConfigError::key("params.duhamel_stride", "must be positive"));
        }
        let n = p.usize_or("planar_n", 128)?;
        if n < 8 || !n.is_power_of_two() {
            return Err(ConfigError::key("params.planar_n", "must be a power of two ≥ 8"));
        }
        let taylor_s = steps(positive(p, "taylor_s_from", 6.0)?, positive(p, "taylor_s_to", 16.0)?, positive(p, "taylor_s_step", 0.5)?);
        if taylor_s.len() < 8 || taylor_s[0] < 1.0 {
            return Err(ConfigError::key("params.taylor_s_from", "need at least 8 points with s ≥ 1"));
        }
        Ok(Properties {
            stride,
            r_cut: positive(p, "duhamel_r_cut", 10.0)?,
            random_fields: p.usize_or("random_fields", 8)?,
            planar_n: n,
            planar_half_width: positive(p, "planar_half_width", 16.0)?,
            taylor_s,
        })
    }

    fn planar_grid(&self) -> Result<Arc<CartesianGrid>> {
        Ok(Arc::new(CartesianGrid::new(self.planar_n, self.planar_half_width)?))
    }
}

/// Two or three Gaussian bumps of random width near the origin.
fn planar_bumps(grid: &Arc<CartesianGrid>, rng: &mut ChaCha8Rng) -> CartesianField2D {
    let k = rng.gen_range(2..=3);
    let b: Vec<(f64, f64, f64, f64)> = (0..k)
        .map(|_| (rng.gen_range(0.2..1.5), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(0.3..1.5)))
        .collect();
    CartesianField2D::from_fn(grid.clone(), |x, y| {
        b.iter().map(|(m, cx, cy, a)| m / a * gaussian(2, ((x - cx).powi(2) + (y - cy).powi(2)).sqrt() / a.sqrt())).sum()
    })
}

fn radial_bumps(grid: &Arc<RadialGrid>, rng: &mut ChaCha8Rng) -> RadialField {
    let b: Vec<(f64, f64, f64)> =
        (0..rng.gen_range(1..=3)).map(|_| (rng.gen_range(0.2..2.0), rng.gen_range(0.0..2.0), rng.gen_range(0.4..1.2))).collect();
    RadialField::from_fn(grid.clone(), |r| b.iter().map(|(a, c, w)| a * (-((r - c) / w).powi(2)).exp()).sum())
}

fn law_gap<D: Propagate>(f: &D, a: f64, b: f64) -> Result<f64> {
    let scale = f.lp_norm(1.0)?;
    let heat = heat_evolve(&heat_evolve(f, a)?, b)?.l1_distance(&heat_evolve(f, a + b)?);
    let sim = similarity_semigroup(&similarity_semigroup(f, a)?, b)?.l1_distance(&similarity_semigroup(f, a + b)?);
    Ok(heat.max(sim) / scale)
}

impl Recipe for Properties {
    fn name(&self) -> &'static str {
        "property_suite"
    }

    fn checks(&self) -> &'static [CheckDef] {
        CHECKS
    }

    fn run(&self, sc: &Scenario) -> Result<Outcome> {
        let mut out = Outcome::default();
        let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);

        // reference run: the scenario's own radial run
        let Run::Radial(reference) = evolve_scenario(sc, sc.initial.masses[0])? else { unreachable!("radial grid checked at parse") };
        out.record(0, &reference);
        let grid = reference.records[0].field.grid().clone();
        let pts: Vec<usize> = (0..grid.len()).step_by(self.stride).filter(|&i| grid.nodes()[i] < self.r_cut).collect();
        let last = reference.records.len() - 1;
        let residual = duhamel_residual(&reference, &pts)?;
        let control = duhamel_residual_at(&reference, &pts, last, false)?;
        out.note(format!("Duhamel residual {residual:.3e}, linear-only control {control:.3e}"));

        // mass conservation over the reference run, a planar run and a 3D run
        let mut drift = mass_drift(&reference);
        let pg = self.planar_grid()?;
        let planar = gaussian_like(&CartesianField2D::from_fn(pg.clone(), |_, _| 0.0), sc.initial.masses[0], 1.0);
        let pcfg = SolverConfig { t_end: 1.0, clamp_tolerance: 1e-4, ..SolverConfig::default() };
        let ptraj = evolve(&planar, &pcfg)?;
        out.record(1, &ptraj);
        drift = nan_max(drift, mass_drift(&ptraj));
        let g3 = Arc::new(RadialGrid::new(3, GridKind::Graded, 1024, 60.0)?);
        let cfg3 = SolverConfig { t_start: 1.0, t_end: 10.0, record_from: 1.0, ..SolverConfig::default() };
        let traj3 = evolve(&gaussian_like(&RadialField::zeros(g3), 10.0, 1.0), &cfg3)?;
        out.record(2, &traj3);
        drift = nan_max(drift, mass_drift(&traj3));
        out.note(format!("mass drift {drift:.2e}"));

        // semigroup law on random radial fields in every dimension and on planar bumps
        let mut law: f64 = 0.0;
        for k in 0..self.random_fields {
            let n = 2 + k % 4;
            let g = Arc::new(RadialGrid::new(n, GridKind::Graded, 1024, 30.0)?);
            let (a, b) = (rng.gen_range(0.1..1.5), rng.gen_range(0.1..1.5));
            law = nan_max(law, law_gap(&radial_bumps(&g, &mut rng), a, b)?);
        }
        for _ in 0..2 {
            let (a, b) = (rng.gen_range(0.1..1.0), rng.gen_range(0.1..1.0));
            law = nan_max(law, law_gap(&planar_bumps(&pg, &mut rng), a, b)?);
        }
        out.note(format!("semigroup law gap {law:.2e}"));

        // null conditions on planar bumps
        let mut null: f64 = 0.0;
        for _ in 0..self.random_fields {
            let u1 = planar_bumps(&pg, &mut rng);
            let u2 = planar_bumps(&pg, &mut rng);
            let (m1, m2) = (u1.lp_norm(1.0)?, u2.lp_norm(1.0)?);
            let (s1, s2) = (cartesian_gradient_2d(&u1)?.sup_magnitude(), cartesian_gradient_2d(&u2)?.sup_magnitude());
            let f = self_force(&u1);
            null = nan_max(null, f[0].hypot(f[1]) / (m1 * s1));
            let (a, b) = (mutual_force(&u1, &u2), mutual_force(&u2, &u1));
            null = nan_max(null, (a[0] + b[0]).hypot(a[1] + b[1]) / (m1 * s2 + m2 * s1));
        }
        out.note(format!("null conditions {null:.2e}"));

        // kernel remainder decay
        let mut exponent = f64::INFINITY;
        for (case, (xi, z)) in TAYLOR_CASES.iter().enumerate() {
            let mut logs = Vec::new();
            for &s in &self.taylor_s {
                let r = kernel_taylor_terms(xi, z, s)?.remainder;
                out.table("taylor", &["case", "s", "remainder"]).push_values(&[case as f64, s, r]);
                logs.push(r.abs().ln());
            }
            exponent = nan_min(exponent, -line_fit(&self.taylor_s, &logs)?.slope);
        }
        out.note(format!("kernel remainder exponent {exponent:.4}"));

        out.table("duhamel", &["residual", "control", "samples"]).push_values(&[residual, control, pts.len() as f64]);
        out.measure("mass_conservation", drift);
        out.measure("semigroup_law", law);
        out.measure("null_conditions", null);
        out.measure("duhamel_residual", residual);
        out.measure("duhamel_control_ratio", residual / control);
        out.measure("taylor_exponent", exponent);
        Ok(out)
    }
}
