//! Time integration of ∂ₜu = Δu − ∇·(u∇E_n∗u) and of its similarity form.
//!
//! A step is Strang splitting: half a step of the exact Gaussian propagator,
//! one advection step (two-stage SSP Runge–Kutta), another half step of the
//! propagator. In similarity variables the propagator is S_n and the advection
//! carries the weight f_n(τ) = e^{(1−n/2)τ} at the step midpoint.

mod duhamel;
mod transport;

pub use duhamel::{duhamel_residual, duhamel_residual_at};
pub use transport::{RadialCache, Transport};

use crate::diagnostics::record_energy;
use crate::error::{PksError, Result};
use crate::fields::{enforce_nonnegative, Density, MomentSet};
use crate::special::gaussian;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdvectionScheme {
    /// Conservative finite volumes with limited upwind faces.
    Upwind,
    /// Pseudo-spectral divergence with 2/3 dealiasing (planar only).
    Spectral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variables {
    Physical,
    Similarity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub dt_initial: f64,
    /// Fraction of the advective stability limit actually used.
    pub safety: f64,
    /// Start time (t, or τ for similarity runs).
    pub t_start: f64,
    pub t_end: f64,
    /// Planar fields only; radial fields always use the finite-volume scheme.
    pub scheme: AdvectionScheme,
    /// Off gives the pure heat (or pure S_n) flow.
    pub nonlinear: bool,
    pub clamp_tolerance: f64,
    pub records_per_decade: usize,
    /// First log-spaced record time of a physical run.
    pub record_from: f64,
    pub dt_max: f64,
    /// Blow-up when ‖u‖_∞ exceeds this multiple of its initial value.
    pub blowup_factor: f64,
    /// Absolute sup-norm cap used by [`step`]; evolve derives it from `blowup_factor`.
    pub blowup_sup: Option<f64>,
    pub dt_min: f64,
    pub max_steps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            dt_initial: 1e-3,
            safety: 0.4,
            t_start: 0.0,
            t_end: 1.0,
            scheme: AdvectionScheme::Spectral,
            nonlinear: true,
            clamp_tolerance: 1e-12,
            records_per_decade: 32,
            record_from: 1e-2,
            dt_max: f64::INFINITY,
            blowup_factor: 1e6,
            blowup_sup: None,
            dt_min: 1e-12,
            max_steps: 10_000_000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PksError::InvalidParameter(m));
        if !(self.dt_initial.is_finite() && self.dt_initial > 0.0) {
            return bad(format!("dt_initial = {}", self.dt_initial));
        }
        if !(self.safety > 0.0 && self.safety < 1.0) {
            return bad(format!("safety = {} outside (0, 1)", self.safety));
        }
        if !(self.t_start.is_finite() && self.t_end.is_finite() && self.t_end > self.t_start) {
            return bad(format!("time window [{}, {}]", self.t_start, self.t_end));
        }
        if !(self.clamp_tolerance >= 0.0) {
            return bad(format!("clamp_tolerance = {}", self.clamp_tolerance));
        }
        if self.records_per_decade == 0 {
            return bad("records_per_decade = 0".into());
        }
        if !(self.record_from > 0.0) || !(self.dt_max > 0.0) || !(self.blowup_factor > 1.0) || !(self.dt_min > 0.0) {
            return bad("record_from, dt_max, dt_min must be positive and blowup_factor > 1".into());
        }
        Ok(())
    }
}

/// f_n(τ) = e^{(1 − n/2)τ}.
pub fn similarity_weight(dim: usize, tau: f64) -> f64 {
    ((1.0 - dim as f64 / 2.0) * tau).exp()
}

#[derive(Debug, Clone)]
pub struct Record<D> {
    pub t: f64,
    pub field: D,
    pub moments: MomentSet,
    pub sup_norm: f64,
    /// ‖u − reference‖₁; the default reference is MΓ_t (M𝒢_n in similarity variables).
    pub l1_err_vs_profile: Option<f64>,
    /// ℱ of the similarity state for n = 2, ℋ for n ≥ 3.
    pub free_energy: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blowup {
    pub t: f64,
    pub sup_norm: f64,
    /// Step size when the run was stopped.
    pub dt: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory<D> {
    pub records: Vec<Record<D>>,
    pub config: SolverConfig,
    pub dim: usize,
    pub variables: Variables,
    pub blowup: Option<Blowup>,
    pub steps: usize,
    pub rejected_steps: usize,
}

impl<D: Density> Trajectory<D> {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn sup_norms(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.sup_norm).collect()
    }

    pub fn masses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.moments.mass).collect()
    }

    pub fn second_moments(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.moments.second_moment).collect()
    }

    /// Largest relative mass change between consecutive records.
    pub fn max_mass_drift(&self) -> f64 {
        self.records
            .windows(2)
            .map(|w| ((w[1].moments.mass - w[0].moments.mass) / w[0].moments.mass).abs())
            .fold(0.0, f64::max)
    }

    /// Replace the comparison profile; `reference(t, field)` returns it on the field's grid.
    pub fn set_reference(&mut self, reference: impl Fn(f64, &D) -> Option<D>) {
        for r in &mut self.records {
            r.l1_err_vs_profile = reference(r.t, &r.field).map(|p| r.field.l1_distance(&p));
        }
    }
}

/// M(4πa)^{−n/2} e^{−|x|²/4a} on the grid of `u`.
pub fn gaussian_like<D: Density>(u: &D, mass: f64, a: f64) -> D {
    let n = u.dim();
    let s = a.sqrt();
    let scale = mass * s.powi(-(n as i32));
    u.with_values(u.radius_squared().iter().map(|r2| scale * gaussian(n, r2.sqrt() / s)).collect())
}

fn make_record<D: Transport>(u: &D, t: f64, vars: Variables, mass0: f64) -> Result<Record<D>> {
    let moments = u.moments()?;
    let a = match vars {
        Variables::Physical => t,
        Variables::Similarity => 1.0,
    };
    let l1 = (a > 0.0).then(|| u.l1_distance(&gaussian_like(u, mass0, a)));
    Ok(Record {
        t,
        sup_norm: u.sup_norm(),
        moments,
        l1_err_vs_profile: l1,
        free_energy: record_energy(&u.to_field(), t, vars),
        field: u.clone(),
    })
}

/// Record times after `t_start`, ending with `t_end`.
fn schedule(cfg: &SolverConfig, vars: Variables) -> Vec<f64> {
    let per = cfg.records_per_decade as f64;
    let mut out = Vec::new();
    let eps = 1e-12;
    match vars {
        Variables::Physical => {
            let start = cfg.t_start.max(cfg.record_from);
            let mut k = (per * start.log10()).floor() as i64 - 1;
            loop {
                let t = 10f64.powf(k as f64 / per);
                if t >= cfg.t_end * (1.0 - eps) {
                    break;
                }
                if t > cfg.t_start + eps * cfg.t_start.abs().max(1e-300) && t >= start * (1.0 - eps) {
                    out.push(t);
                }
                k += 1;
            }
        }
        Variables::Similarity => {
            let d = std::f64::consts::LN_10 / per;
            let mut k = (cfg.t_start / d).floor() as i64;
            loop {
                let t = k as f64 * d;
                if t >= cfg.t_end - eps {
                    break;
                }
                if t > cfg.t_start + eps {
                    out.push(t);
                }
                k += 1;
            }
        }
    }
    out.push(cfg.t_end);
    out
}

/// One Strang step of size dt from time `t`; returns the new state and the
/// step limit (already multiplied by the safety factor) seen by the advection.
/// Zero negatives within the tolerance, then rescale so the integral is unchanged.
fn clamp_conserving<D: Transport>(u: &mut D, tol: f64) -> Result<()> {
    let before = u.integral();
    enforce_nonnegative(u.values_mut(), tol)?;
    let after = u.integral();
    if after > 0.0 && before > 0.0 && after != before {
        let f = before / after;
        u.values_mut().iter_mut().for_each(|v| *v *= f);
    }
    Ok(())
}

fn advance<D: Transport>(
    u: &D,
    t: f64,
    dt: f64,
    vars: Variables,
    cfg: &SolverConfig,
    cache: &mut D::Cache,
) -> Result<(D, f64)> {
    let (a, c, w) = match vars {
        Variables::Physical => (dt / 2.0, 1.0, 1.0),
        Variables::Similarity => (-(-dt / 2.0).exp_m1(), (-dt / 4.0).exp(), similarity_weight(u.dim(), t + dt / 2.0)),
    };
    let reject = |limit: f64| PksError::StepRejected { dt, limit };
    let mut v = u.propagate_cached(a, c, cache);
    let mut limit = f64::INFINITY;
    if cfg.nonlinear {
        let (r1, lim) = v.advection(w, cfg.scheme)?;
        limit = cfg.safety * lim;
        if dt > limit {
            return Err(reject(limit));
        }
        let mut v1 = v.with_values(v.values().iter().zip(&r1).map(|(x, r)| x + dt * r).collect());
        v1.fix_origin();
        let (r2, _) = v1.advection(w, cfg.scheme)?;
        let next: Vec<f64> =
            v.values().iter().zip(v1.values()).zip(&r2).map(|((x, y), r)| 0.5 * x + 0.5 * (y + dt * r)).collect();
        v = v.with_values(next);
        if clamp_conserving(&mut v, cfg.clamp_tolerance).is_err() {
            return Err(reject(0.5 * dt));
        }
        v.fix_origin();
    }
    let mut out = v.propagate_cached(a, c, cache);
    if clamp_conserving(&mut out, cfg.clamp_tolerance).is_err() {
        return Err(reject(0.5 * dt));
    }
    if let Some(cap) = cfg.blowup_sup {
        let s = out.sup_norm();
        if s > cap {
            return Err(PksError::BlowupDetected { t: t + dt, sup_norm: s });
        }
    }
    Ok((out, limit))
}

/// One physical-variables step of size dt.
pub fn step<D: Transport>(u: &D, dt: f64, config: &SolverConfig) -> Result<D> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(PksError::InvalidParameter(format!("dt = {dt}")));
    }
    let mut cache = D::Cache::default();
    advance(u, 0.0, dt, Variables::Physical, config, &mut cache).map(|(v, _)| v)
}

/// Adaptive run of the physical equation from `config.t_start` to `config.t_end`.
pub fn evolve<D: Transport>(u0: &D, config: &SolverConfig) -> Result<Trajectory<D>> {
    run(u0, config, Variables::Physical)
}

/// Adaptive run of the similarity equation, times read as τ.
pub fn evolve_similarity<D: Transport>(u0: &D, config: &SolverConfig) -> Result<Trajectory<D>> {
    run(u0, config, Variables::Similarity)
}

fn run<D: Transport>(u0: &D, config: &SolverConfig, vars: Variables) -> Result<Trajectory<D>> {
    config.validate()?;
    let mut u = u0.clone();
    enforce_nonnegative(u.values_mut(), config.clamp_tolerance)?;
    let mass0 = u.total_mass()?;
    let mut cfg = config.clone();
    if cfg.blowup_sup.is_none() {
        cfg.blowup_sup = Some(cfg.blowup_factor * u.sup_norm());
    }
    let times = schedule(&cfg, vars);
    let mut traj = Trajectory {
        records: vec![make_record(&u, cfg.t_start, vars, mass0)?],
        config: config.clone(),
        dim: u.dim(),
        variables: vars,
        blowup: None,
        steps: 0,
        rejected_steps: 0,
    };
    let mut cache = D::Cache::default();
    let mut ladder = cfg.dt_initial.min(cfg.dt_max);
    let mut t = cfg.t_start;
    let mut streak = 0;
    for &target in &times {
        while t < target {
            if traj.steps >= cfg.max_steps {
                return Err(PksError::StiffnessFailure(format!("step budget {} exhausted at t = {t}", cfg.max_steps)));
            }
            let remaining = target - t;
            let last = ladder >= remaining * (1.0 - 1e-9);
            // split the final stretch evenly rather than leave a sliver step
            let dt = if last {
                remaining
            } else if remaining < 2.0 * ladder {
                0.5 * remaining
            } else {
                ladder
            };
            match advance(&u, t, dt, vars, &cfg, &mut cache) {
                Ok((v, limit)) => {
                    u = v;
                    t = if last { target } else { t + dt };
                    traj.steps += 1;
                    streak = 0;
                    if !last && 2.0 * ladder <= limit && 2.0 * ladder <= cfg.dt_max {
                        ladder *= 2.0;
                    }
                }
                Err(PksError::StepRejected { limit, .. }) => {
                    traj.rejected_steps += 1;
                    streak += 1;
                    let cap = limit.min(dt * 0.5);
                    while ladder > cap {
                        ladder *= 0.5;
                    }
                    if ladder < cfg.dt_min {
                        traj.blowup = Some(Blowup { t, sup_norm: u.sup_norm(), dt: ladder });
                        break;
                    }
                    if streak > 200 {
                        return Err(PksError::StiffnessFailure(format!("{streak} consecutive rejections at t = {t}")));
                    }
                }
                Err(PksError::BlowupDetected { sup_norm, .. }) => {
                    traj.blowup = Some(Blowup { t, sup_norm, dt });
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if traj.blowup.is_some() {
            if t > traj.records.last().map_or(f64::NEG_INFINITY, |r| r.t) {
                traj.records.push(make_record(&u, t, vars, mass0)?);
            }
            break;
        }
        traj.records.push(make_record(&u, t, vars, mass0)?);
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{CartesianField2D, CartesianGrid, GridKind, RadialField, RadialGrid};
    use std::sync::Arc;

    fn radial(dim: usize, len: usize, r_max: f64) -> Arc<RadialGrid> {
        Arc::new(RadialGrid::new(dim, GridKind::Graded, len, r_max).unwrap())
    }

    #[test]
    fn similarity_weight_values() {
        assert_eq!(similarity_weight(2, 3.7), 1.0);
        assert!((similarity_weight(4, 1.0) - (-1.0f64).exp()).abs() < 1e-16);
    }

    #[test]
    fn schedule_is_log_spaced_and_ends_at_t_end() {
        let cfg = SolverConfig { t_end: 10.0, ..Default::default() };
        let s = schedule(&cfg, Variables::Physical);
        assert_eq!(*s.last().unwrap(), 10.0);
        assert!((s[0] - 0.01).abs() < 1e-15);
        assert_eq!(s.len(), 3 * 32 + 1);
        assert!(s.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig { safety: 1.0, ..Default::default() }.validate().is_err());
        assert!(SolverConfig { dt_initial: 0.0, ..Default::default() }.validate().is_err());
        assert!(SolverConfig::default().validate().is_ok());
    }

    #[test]
    fn pure_heat_step_is_exact() {
        let g = radial(3, 1024, 30.0);
        let s = 0.5;
        let u = gaussian_like(&RadialField::zeros(g.clone()), 2.0, s);
        let cfg = SolverConfig { nonlinear: false, ..Default::default() };
        let v = step(&u, 0.3, &cfg).unwrap();
        let exact = gaussian_like(&u, 2.0, s + 0.3);
        let err = v.values().iter().zip(exact.values()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-8 * exact.sup_norm(), "{err}");
    }

    #[test]
    fn cfl_violation_is_rejected() {
        let g = radial(2, 1024, 30.0);
        let u = gaussian_like(&RadialField::zeros(g), 6.0, 1.0);
        let err = step(&u, 10.0, &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, PksError::StepRejected { .. }));
    }

    #[test]
    fn radial_run_conserves_mass_and_records_increasing_times() {
        let g = radial(2, 1024, 40.0);
        let u = gaussian_like(&RadialField::zeros(g), 4.0 * std::f64::consts::PI, 1.0);
        let cfg = SolverConfig { t_end: 2.0, ..Default::default() };
        let tr = evolve(&u, &cfg).unwrap();
        assert!(tr.blowup.is_none());
        assert!(tr.max_mass_drift() < 1e-10, "{}", tr.max_mass_drift());
        assert!(tr.times().windows(2).all(|w| w[1] > w[0]));
        assert!(tr.records.iter().all(|r| r.free_energy.map_or(true, f64::is_finite)));
    }

    #[test]
    fn small_mass_tracks_heat_flow() {
        let g = radial(2, 1024, 40.0);
        let u = gaussian_like(&RadialField::zeros(g), 1e-6, 1.0);
        let cfg = SolverConfig { t_start: 0.0, t_end: 10.0, ..Default::default() };
        let tr = evolve(&u, &cfg).unwrap();
        for r in tr.records.iter().filter(|r| r.t >= 1.0) {
            // reference is MΓ_t, exact heat from a point mass shifted by one time unit
            let heat = gaussian_like(&r.field, 1e-6, r.t + 1.0);
            assert!(r.field.l1_distance(&heat) < 1e-6 * 1e-6, "t = {}", r.t);
        }
    }

    #[test]
    fn supercritical_radial_run_blows_up() {
        let g = radial(2, 2048, 40.0);
        let m = 10.0 * std::f64::consts::PI;
        let u = gaussian_like(&RadialField::zeros(g), m, 1.0);
        let cfg = SolverConfig { t_end: 10.0, ..Default::default() };
        let tr = evolve(&u, &cfg).unwrap();
        let b = tr.blowup.expect("blow-up flagged");
        // second moment 4M at t = 0 and slope 4M(1 − M/8π)
        let t_virial = 4.0 * m / (4.0 * m * (m / (8.0 * std::f64::consts::PI) - 1.0));
        assert!(b.t < t_virial, "{} vs {t_virial}", b.t);
    }

    #[test]
    fn planar_pure_heat_run_is_exact() {
        let g = Arc::new(CartesianGrid::new(128, 24.0).unwrap());
        let u = gaussian_like(&CartesianField2D::from_fn(g, |_, _| 0.0), 1.0, 1.0);
        let cfg = SolverConfig { nonlinear: false, t_end: 3.0, ..Default::default() };
        let tr = evolve(&u, &cfg).unwrap();
        let last = tr.records.last().unwrap();
        let exact = gaussian_like(&u, 1.0, 4.0);
        assert!(last.field.l1_distance(&exact) < 1e-12);
    }

    #[test]
    fn similarity_run_keeps_gaussian_for_pure_flow() {
        let g = radial(3, 1024, 20.0);
        let u = gaussian_like(&RadialField::zeros(g), 1.0, 1.0);
        let cfg = SolverConfig { nonlinear: false, t_end: 2.0, dt_initial: 0.1, ..Default::default() };
        let tr = evolve_similarity(&u, &cfg).unwrap();
        for r in &tr.records {
            assert!(r.l1_err_vs_profile.unwrap() < 1e-8);
        }
    }
}
