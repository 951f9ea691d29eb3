//! Observables along trajectories: free energies, the Φ density, decay
//! envelopes and the second-moment (virial) law.

use std::f64::consts::PI;

use crate::error::{PksError, Result};
use crate::evolution::{similarity_weight, Trajectory, Transport, Variables};
use crate::fields::{radial_to_similarity, CartesianField2D, Density, Field, RadialField};
use crate::potential::{planar_potential_values, radial_gradient_values};
use crate::special::gaussian;

const LOG_FLOOR: f64 = 1e-300;

fn xlogx(w: f64) -> f64 {
    if w <= 0.0 {
        0.0
    } else {
        w * w.max(LOG_FLOOR).ln()
    }
}

/// ℱ[w] = ∫w log w + ¼∫w|ξ|² − ½∫w E₂∗w, split into its parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeEnergy {
    /// ℱ with the potential normalised by V(0) = 0.
    pub value: f64,
    pub entropy: f64,
    /// ¼∫w|ξ|².
    pub confinement: f64,
    /// −½∫w V with V(0) = 0.
    pub interaction: f64,
    /// (E₂∗w)(0) for the free-space kernel −log|x|/2π.
    pub gauge_constant: f64,
    /// ℱ with the free-space potential: value − ½·gauge_constant·M.
    pub free_space: f64,
    pub mass: f64,
}

/// Fraction of ∫w|ξ|² tolerated in the outermost tenth of the grid.
const MOMENT_TAIL: f64 = 1e-8;

pub fn free_energy_2d(w: &Field) -> Result<FreeEnergy> {
    if w.dim() != 2 {
        return Err(PksError::InvalidParameter(format!("free energy needs n = 2, got {}", w.dim())));
    }
    let mass = w.total_mass()?;
    let (entropy, m2, tail, vw, gauge) = match w {
        Field::Radial(f) => {
            let g = f.grid();
            let mu = g.measure();
            let r = g.nodes();
            let u = f.values();
            let dv = radial_gradient_values(g, u);
            let v = g.cumulative(&dv);
            let cut = 0.9 * g.r_max();
            let (mut s, mut m2, mut tail, mut vw, mut c) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..u.len() {
                s += mu[i] * xlogx(u[i]);
                let q = mu[i] * u[i] * r[i] * r[i];
                m2 += q;
                if r[i] > cut {
                    tail += q;
                }
                vw += mu[i] * u[i] * v[i];
                if r[i] > 0.0 {
                    c -= mu[i] * u[i] * r[i].ln() / (2.0 * PI);
                }
            }
            (s, m2, tail, vw, c)
        }
        Field::Cartesian(f) => {
            let g = f.grid();
            let n = g.n();
            let h2 = g.spacing().powi(2);
            let x = g.coords();
            let u = f.values();
            let v = planar_potential_values(f);
            let c = v[(n / 2) * n + n / 2];
            let cut = 0.9 * g.half_width();
            let (mut s, mut m2, mut tail, mut vw) = (0.0, 0.0, 0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    let k = i * n + j;
                    s += h2 * xlogx(u[k]);
                    let q = h2 * u[k] * (x[i] * x[i] + x[j] * x[j]);
                    m2 += q;
                    if x[i].abs() > cut || x[j].abs() > cut {
                        tail += q;
                    }
                    vw += h2 * u[k] * (v[k] - c);
                }
            }
            (s, m2, tail, vw, c)
        }
    };
    if !m2.is_finite() || tail > MOMENT_TAIL * m2.abs().max(f64::MIN_POSITIVE) {
        return Err(PksError::DivergentMoment(format!(
            "{:.2e} of the second moment sits in the outer tenth of the grid",
            tail / m2
        )));
    }
    let confinement = m2 / 4.0;
    let interaction = -0.5 * vw;
    let value = entropy + confinement + interaction;
    Ok(FreeEnergy {
        value,
        entropy,
        confinement,
        interaction,
        gauge_constant: gauge,
        free_space: value - 0.5 * gauge * mass,
        mass,
    })
}

/// ℱ of the similarity state U(ξ) = t u(√t ξ), computed from the physical field.
///
/// Uses ∫U log U = ∫u log u + M log t, ∫U|ξ|² = m₂/t and
/// ∫U E₂∗U = ∫u E₂∗u + M² log t /4π, so no regridding is needed.
pub fn free_energy_2d_similarity(u: &Field, t: f64) -> Result<FreeEnergy> {
    if !(t > 0.0) {
        return Err(PksError::InvalidParameter(format!("t = {t} must be positive")));
    }
    let f = free_energy_2d(u)?;
    let lt = t.ln();
    let m = f.mass;
    let entropy = f.entropy + m * lt;
    let confinement = f.confinement / t;
    let gauge_constant = f.gauge_constant + m * lt / (4.0 * PI);
    let value = entropy + confinement + f.interaction;
    Ok(FreeEnergy {
        value,
        entropy,
        confinement,
        interaction: f.interaction,
        gauge_constant,
        free_space: value - 0.5 * gauge_constant * m,
        mass: m,
    })
}

/// ℋ[w] = ∫w log(w/𝒢_n) + ½f_n∫|∇E_n∗w|² − M log M and its entropy part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeEntropy {
    /// ∫w log(w/(M𝒢_n)), with M𝒢_n normalised to mass M by the grid quadrature.
    pub entropy: f64,
    /// ½∫|∇E_n∗w|²; infinite for n = 2 with M > 0, reported as None.
    pub field_energy: Option<f64>,
    pub weight: f64,
    pub total: Option<f64>,
}

pub fn relative_entropy(w: &Field, tau: f64) -> Result<RelativeEntropy> {
    let n = w.dim();
    let mass = w.total_mass()?;
    let weight = similarity_weight(n, tau);
    let (vals, wts, r2): (&[f64], &[f64], Vec<f64>) = match w {
        Field::Radial(f) => (f.values(), f.quadrature_weights(), f.radius_squared()),
        Field::Cartesian(f) => (f.values(), f.quadrature_weights(), f.radius_squared()),
    };
    let g: Vec<f64> = r2.iter().map(|x| gaussian(n, x.sqrt())).collect();
    let gmass: f64 = g.iter().zip(wts).map(|(a, b)| a * b).sum();
    let mut entropy = 0.0;
    for i in 0..vals.len() {
        if vals[i] > 0.0 {
            let q = (mass * g[i] / gmass).max(LOG_FLOOR);
            entropy += wts[i] * vals[i] * (vals[i].max(LOG_FLOOR) / q).ln();
        }
    }
    let field_energy = match w {
        Field::Radial(f) if n >= 3 => {
            let dv = radial_gradient_values(f.grid(), f.values());
            Some(0.5 * dv.iter().zip(f.grid().measure()).map(|(d, m)| d * d * m).sum::<f64>())
        }
        _ if mass == 0.0 => Some(0.0),
        _ => None,
    };
    let total = field_energy.map(|e| entropy + weight * e);
    Ok(RelativeEntropy { entropy, field_energy, weight, total })
}

/// Free-energy column of a trajectory record: ℱ (free-space gauge) of the
/// similarity state for n = 2, ℋ for n ≥ 3. None at t = 0 of physical runs.
pub fn record_energy(field: &Field, time: f64, vars: Variables) -> Option<f64> {
    let n = field.dim();
    match vars {
        Variables::Physical => {
            if !(time > 0.0) {
                return None;
            }
            if n == 2 {
                free_energy_2d_similarity(field, time).ok().map(|f| f.free_space)
            } else {
                let Field::Radial(r) = field else { return None };
                let s = radial_to_similarity(r, time).ok()?;
                relative_entropy(&Field::Radial(s), time.ln()).ok()?.total
            }
        }
        Variables::Similarity => {
            if n == 2 {
                free_energy_2d(field).ok().map(|f| f.free_space)
            } else {
                relative_entropy(field, time).ok()?.total
            }
        }
    }
}

/// Per-record observables.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass: f64,
    pub second_moment: f64,
    pub sup_norm: f64,
    pub l1_dist_to_profile: Option<f64>,
    pub free_energy_2d: Option<f64>,
    pub relative_entropy: Option<f64>,
    /// Centred difference of the second moment across neighbouring records.
    pub virial_slope_running: Option<f64>,
}

pub fn diagnostics_records<D: Transport>(traj: &Trajectory<D>) -> Vec<DiagnosticsRecord> {
    let recs = &traj.records;
    (0..recs.len())
        .map(|k| {
            let r = &recs[k];
            let field = r.field.to_field();
            let (tt, sim) = match traj.variables {
                Variables::Physical => (r.t, r.t > 0.0),
                Variables::Similarity => (r.t, true),
            };
            let (fe, re) = if traj.dim == 2 {
                let fe = match traj.variables {
                    Variables::Physical if sim => free_energy_2d_similarity(&field, tt).ok().map(|f| f.free_space),
                    Variables::Physical => None,
                    Variables::Similarity => free_energy_2d(&field).ok().map(|f| f.free_space),
                };
                let re = match traj.variables {
                    Variables::Physical if sim => match &field {
                        Field::Radial(f) => radial_to_similarity(f, tt).ok().and_then(|s| {
                            relative_entropy(&Field::Radial(s), tt.ln()).ok().map(|e| e.entropy)
                        }),
                        Field::Cartesian(f) => crate::fields::cartesian_to_similarity(f, tt).ok().and_then(|s| {
                            relative_entropy(&Field::Cartesian(s), tt.ln()).ok().map(|e| e.entropy)
                        }),
                    },
                    Variables::Physical => None,
                    Variables::Similarity => relative_entropy(&field, tt).ok().map(|e| e.entropy),
                };
                (fe, re)
            } else {
                (None, r.free_energy)
            };
            let slope = (k > 0 && k + 1 < recs.len()).then(|| {
                (recs[k + 1].moments.second_moment - recs[k - 1].moments.second_moment) / (recs[k + 1].t - recs[k - 1].t)
            });
            DiagnosticsRecord {
                t: r.t,
                mass: r.moments.mass,
                second_moment: r.moments.second_moment,
                sup_norm: r.sup_norm,
                l1_dist_to_profile: r.l1_err_vs_profile,
                free_energy_2d: fe,
                relative_entropy: re,
                virial_slope_running: slope,
            }
        })
        .collect()
}

/// Least-squares line y = slope·x + intercept with its r².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn line_fit(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(PksError::InvalidData(format!("{} x and {} y samples", x.len(), y.len())));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(PksError::InvalidData("all x equal".into()));
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LineFit { slope, intercept: my - slope * mx, r2 })
}

/// Fitted d/dt of the second moment over records with t in [t_lo, t_hi].
pub fn virial_slope<D: Density>(traj: &Trajectory<D>, t_lo: f64, t_hi: f64) -> Result<LineFit> {
    let (t, m2): (Vec<f64>, Vec<f64>) = traj
        .records
        .iter()
        .filter(|r| r.t >= t_lo && r.t <= t_hi)
        .map(|r| (r.t, r.moments.second_moment))
        .unzip();
    line_fit(&t, &m2)
}

/// 4M(1 − M/8π), the exact planar rate of change of the second moment.
pub fn virial_prediction(mass: f64) -> f64 {
    4.0 * mass * (1.0 - mass / (8.0 * PI))
}

/// Largest (m₂(t) − m₂(t₀))/(t − t₀) along the run.
pub fn second_moment_envelope<D: Density>(traj: &Trajectory<D>) -> f64 {
    let r0 = &traj.records[0];
    traj.records[1..]
        .iter()
        .map(|r| (r.moments.second_moment - r0.moments.second_moment) / (r.t - r0.t))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// sup (1+t)^{n/2}‖u(t)‖_∞ over the records (exponent 1 when n = 2).
pub fn decay_envelope<D: Density>(traj: &Trajectory<D>) -> Result<f64> {
    if let Some(b) = traj.blowup {
        return Err(PksError::BlowupTrajectory(b.t));
    }
    let p = traj.dim as f64 / 2.0;
    Ok(traj
        .records
        .iter()
        .map(|r| {
            let (t, sup) = match traj.variables {
                Variables::Physical => (r.t, r.sup_norm),
                Variables::Similarity => (r.t.exp(), r.sup_norm * (-p * r.t).exp()),
            };
            (1.0 + t).powf(p) * sup
        })
        .fold(0.0, f64::max))
}

fn gaussian_weighted_integral(field: &Field, y0: &[f64], rho: f64) -> Result<f64> {
    let q = 4.0 * rho * rho;
    match field {
        Field::Radial(f) => {
            if y0.iter().any(|&c| c != 0.0) {
                return Err(PksError::InvalidParameter("radial fields only support y0 = 0".into()));
            }
            Ok(f.values()
                .iter()
                .zip(f.quadrature_weights())
                .zip(f.nodes())
                .map(|((u, w), r)| u * w * (-r * r / q).exp())
                .sum())
        }
        Field::Cartesian(f) => {
            if y0.len() != 2 {
                return Err(PksError::InvalidParameter("planar center needs two coordinates".into()));
            }
            Ok(planar_weighted(f, y0, q))
        }
    }
}

fn planar_weighted(f: &CartesianField2D, y0: &[f64], q: f64) -> f64 {
    let g = f.grid();
    let n = g.n();
    let x = g.coords();
    let h2 = g.spacing().powi(2);
    let ex: Vec<f64> = x.iter().map(|a| (-(a - y0[0]).powi(2) / q).exp()).collect();
    let ey: Vec<f64> = x.iter().map(|a| (-(a - y0[1]).powi(2) / q).exp()).collect();
    let u = f.values();
    let mut s = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += u[i * n + j] * ey[j];
        }
        s += ex[i] * row;
    }
    s * h2
}

/// Φ(ρ) = (4π)^{−n/2} ρ^{2−n} ∫ u(y, s₁ − ρ²) e^{−|y−y₀|²/4ρ²} dy.
///
/// Between records the Gaussian-weighted integral is interpolated by a cubic
/// in log t through the four nearest records.
pub fn phi_density<D: Transport>(traj: &Trajectory<D>, y0: &[f64], s1: f64, rho: f64) -> Result<f64> {
    if traj.variables != Variables::Physical {
        return Err(PksError::InvalidParameter("Φ needs a physical-variables trajectory".into()));
    }
    if !(rho > 0.0) {
        return Err(PksError::InvalidParameter(format!("rho = {rho}")));
    }
    let s = s1 - rho * rho;
    let recs: Vec<_> = traj.records.iter().filter(|r| r.t > 0.0).collect();
    if recs.len() < 4 {
        return Err(PksError::InsufficientSampling("Φ interpolation needs four positive record times".into()));
    }
    let (lo, hi) = (recs[0].t, recs[recs.len() - 1].t);
    if !(s >= lo * (1.0 - 1e-12) && s <= hi * (1.0 + 1e-12)) {
        return Err(PksError::OutOfRange(format!("time {s} outside recorded [{lo}, {hi}]")));
    }
    let n = traj.dim as f64;
    let pref = (4.0 * PI).powf(-n / 2.0) * rho.powf(2.0 - n);
    if let Some(r) = recs.iter().find(|r| ((r.t - s) / s).abs() < 1e-14) {
        return Ok(pref * gaussian_weighted_integral(&r.field.to_field(), y0, rho)?);
    }
    let k = recs.partition_point(|r| r.t < s);
    let start = k.saturating_sub(2).min(recs.len() - 4);
    let xs: Vec<f64> = (start..start + 4).map(|i| recs[i].t.ln()).collect();
    let ys = (start..start + 4)
        .map(|i| gaussian_weighted_integral(&recs[i].field.to_field(), y0, rho))
        .collect::<Result<Vec<f64>>>()?;
    let x = s.ln();
    let mut val = 0.0;
    for i in 0..4 {
        let mut l = 1.0;
        for j in 0..4 {
            if i != j {
                l *= (x - xs[j]) / (xs[i] - xs[j]);
            }
        }
        val += l * ys[i];
    }
    Ok(pref * val)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiRow {
    pub rho: f64,
    pub phi: f64,
    pub dphi: f64,
    /// dΦ/dρ − (1 − M/8π)(2/ρ)Φ.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhiScan {
    pub rows: Vec<PhiRow>,
    pub min_margin: f64,
    /// min over ρ of margin/Φ.
    pub min_relative_margin: f64,
}

/// Φ on an increasing ρ grid with finite-difference dΦ/dρ and the monotonicity margin.
pub fn phi_monotonicity_check<D: Transport>(traj: &Trajectory<D>, y0: &[f64], s1: f64, rhos: &[f64]) -> Result<PhiScan> {
    if traj.dim != 2 {
        return Err(PksError::InvalidParameter("the monotonicity law is planar".into()));
    }
    if rhos.len() < 3 || rhos.windows(2).any(|w| w[1] <= w[0]) {
        return Err(PksError::InvalidParameter("need at least three increasing radii".into()));
    }
    let mass = traj.records[0].moments.mass;
    let phi = rhos.iter().map(|&r| phi_density(traj, y0, s1, r)).collect::<Result<Vec<f64>>>()?;
    let k = rhos.len();
    let d = |i: usize| -> f64 {
        // three-point derivative on a nonuniform grid
        let (a, b, c) = if i == 0 { (0, 1, 2) } else if i == k - 1 { (k - 3, k - 2, k - 1) } else { (i - 1, i, i + 1) };
        let (x0, x1, x2) = (rhos[a], rhos[b], rhos[c]);
        let x = rhos[i];
        phi[a] * (2.0 * x - x1 - x2) / ((x0 - x1) * (x0 - x2))
            + phi[b] * (2.0 * x - x0 - x2) / ((x1 - x0) * (x1 - x2))
            + phi[c] * (2.0 * x - x0 - x1) / ((x2 - x0) * (x2 - x1))
    };
    let coef = 1.0 - mass / (8.0 * PI);
    let rows: Vec<PhiRow> = (0..k)
        .map(|i| {
            let dphi = d(i);
            PhiRow { rho: rhos[i], phi: phi[i], dphi, margin: dphi - coef * 2.0 / rhos[i] * phi[i] }
        })
        .collect();
    let min_margin = rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    let min_relative_margin = rows
        .iter()
        .filter(|r| r.phi > 0.0)
        .map(|r| r.margin / r.phi)
        .fold(f64::INFINITY, f64::min);
    Ok(PhiScan { rows, min_margin, min_relative_margin })
}

/// Convenience for radial 2D fields.
pub fn radial_free_energy(f: &RadialField) -> Result<FreeEnergy> {
    free_energy_2d(&Field::Radial(f.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{evolve, gaussian_like, SolverConfig};
    use crate::fields::{CartesianGrid, GridKind, RadialGrid};
    use std::sync::Arc;

    fn rgrid(dim: usize) -> Arc<RadialGrid> {
        Arc::new(RadialGrid::new(dim, GridKind::Graded, 2048, 30.0).unwrap())
    }

    #[test]
    fn zero_field_has_zero_free_energy() {
        let f = free_energy_2d(&Field::Radial(RadialField::zeros(rgrid(2)))).unwrap();
        assert_eq!(f.value, 0.0);
        assert_eq!(f.free_space, 0.0);
    }

    #[test]
    fn gaussian_free_energy_parts() {
        // for M𝒢₂: ∫w log w = M log M − M(log 4π + 1), ¼∫w|ξ|² = M
        let m = 2.0;
        let u = RadialField::from_fn(rgrid(2), |r| m * gaussian(2, r));
        let f = radial_free_energy(&u).unwrap();
        assert!((f.entropy - (m * m.ln() - m * ((4.0 * PI).ln() + 1.0))).abs() < 1e-9);
        assert!((f.confinement - m).abs() < 1e-9);
        // (E₂∗𝒢₂)(0) = −(1/2π)∫𝒢₂ log|y| = (γ − log 4)/(4π) per unit mass
        let gamma = 0.577_215_664_901_532_9;
        let c = m * (gamma - 4f64.ln()) / (4.0 * PI);
        assert!((f.gauge_constant - c).abs() < 1e-8, "{} vs {c}", f.gauge_constant);
    }

    #[test]
    fn planar_and_radial_free_energy_agree() {
        let m = 3.0;
        let u = RadialField::from_fn(rgrid(2), |r| m * gaussian(2, r / 1.2) / 1.44);
        let g = Arc::new(CartesianGrid::new(128, 16.0).unwrap());
        let p = CartesianField2D::from_fn(g, |x, y| m * gaussian(2, (x * x + y * y).sqrt() / 1.2) / 1.44);
        let a = radial_free_energy(&u).unwrap();
        let b = free_energy_2d(&Field::Cartesian(p)).unwrap();
        assert!((a.free_space - b.free_space).abs() < 1e-6, "{} {}", a.free_space, b.free_space);
        assert!((a.value - b.value).abs() < 1e-6);
    }

    #[test]
    fn similarity_shift_matches_regridded_state() {
        let m = 2.5;
        let t = 3.0;
        let u = gaussian_like(&RadialField::zeros(rgrid(2)), m, 0.7 * t);
        let direct = radial_free_energy(&radial_to_similarity(&u, t).unwrap()).unwrap();
        let shifted = free_energy_2d_similarity(&Field::Radial(u), t).unwrap();
        assert!((direct.value - shifted.value).abs() < 1e-10);
        assert!((direct.free_space - shifted.free_space).abs() < 1e-8);
    }

    #[test]
    fn doubling_mass_recomputed() {
        let w = RadialField::from_fn(rgrid(2), |r| 1.5 * gaussian(2, r));
        let f1 = radial_free_energy(&w).unwrap();
        let f2 = radial_free_energy(&w.scaled(2.0)).unwrap();
        // entropy gains 2M log 2, interaction scales by 4, confinement by 2
        let m = f1.mass;
        assert!((f2.entropy - 2.0 * f1.entropy - 2.0 * m * 2f64.ln()).abs() < 1e-10);
        assert!((f2.interaction - 4.0 * f1.interaction).abs() < 1e-10);
        assert!((f2.value - 2.0 * f1.value - 2.0 * m * 2f64.ln() - 2.0 * f1.interaction).abs() < 1e-10);
    }

    #[test]
    fn entropy_part_vanishes_at_gaussian() {
        for n in 2..=4 {
            let u = RadialField::from_fn(rgrid(n), |r| 1.7 * gaussian(n, r));
            let e = relative_entropy(&Field::Radial(u), 0.0).unwrap();
            assert!(e.entropy.abs() < 1e-10, "n = {n}: {}", e.entropy);
        }
    }

    #[test]
    fn field_energy_term_for_three_dimensions() {
        let m = 0.8;
        let u = RadialField::from_fn(rgrid(3), |r| m * gaussian(3, r));
        let e = relative_entropy(&Field::Radial(u), 0.0).unwrap();
        // ½∫|∇V|² with |∇V| = m(r)/(4πr²), by a fine midpoint rule
        let oracle: f64 = {
            let mut s = 0.0;
            let k = 200_000;
            let rmax = 30.0;
            for i in 0..k {
                let r = (i as f64 + 0.5) * rmax / k as f64;
                let mm = m * crate::special::gaussian_ball_mass(3, r);
                s += 0.5 * (mm / (4.0 * PI * r * r)).powi(2) * 4.0 * PI * r * r * rmax / k as f64;
            }
            s
        };
        assert!((e.field_energy.unwrap() - oracle).abs() < 1e-6 * oracle);
        assert!((e.total.unwrap() - e.entropy - oracle).abs() < 1e-6 * oracle);
    }

    #[test]
    fn two_dimensional_field_energy_is_not_reported() {
        let u = RadialField::from_fn(rgrid(2), |r| gaussian(2, r));
        assert!(relative_entropy(&Field::Radial(u), 0.0).unwrap().field_energy.is_none());
    }

    #[test]
    fn line_fit_recovers_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        let f = line_fit(&x, &y).unwrap();
        assert!((f.slope - 3.0).abs() < 1e-14 && (f.intercept + 1.0).abs() < 1e-13);
        assert!((f.r2 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn pure_heat_phi_closed_form() {
        let g = rgrid(2);
        let m = 2.0;
        let t0 = 0.05;
        let u = gaussian_like(&RadialField::zeros(g), m, t0);
        let cfg = SolverConfig { nonlinear: false, t_start: t0, t_end: 2.0, ..Default::default() };
        let tr = evolve(&u, &cfg).unwrap();
        let s1 = 2.0;
        for &rho in &[0.1, 0.33, 0.7, 1.0] {
            let phi = phi_density(&tr, &[0.0, 0.0], s1, rho).unwrap();
            let exact = m * rho * rho / (4.0 * PI * s1);
            assert!(((phi - exact) / exact).abs() < 1e-4, "rho {rho}: {phi} vs {exact}");
        }
        let rhos: Vec<f64> = (0..=18).map(|i| 0.1 + 0.05 * i as f64).collect();
        let scan = phi_monotonicity_check(&tr, &[0.0, 0.0], s1, &rhos).unwrap();
        // margin is (M/8π)(2/ρ)Φ without interaction
        for r in &scan.rows {
            let want = m / (8.0 * PI) * 2.0 / r.rho * r.phi;
            assert!((r.margin - want).abs() < 1e-4 * r.phi / r.rho, "{r:?}");
        }
        assert!(phi_density(&tr, &[0.0, 0.0], s1, 2.0).is_err());
    }

    #[test]
    fn envelope_of_heat_run_is_finite_and_blowup_errors() {
        let g = Arc::new(RadialGrid::new(3, GridKind::Graded, 2048, 80.0).unwrap());
        let u = gaussian_like(&RadialField::zeros(g), 1.0, 1.0);
        let cfg = SolverConfig { nonlinear: false, t_end: 50.0, ..Default::default() };
        let mut tr = evolve(&u, &cfg).unwrap();
        let e = decay_envelope(&tr).unwrap();
        // u(t) = Γ_{1+t}, so (1+t)^{3/2}‖u‖_∞ = (4π)^{−3/2} along the whole run
        let exact = (4.0 * PI).powf(-1.5);
        assert!((e - exact).abs() < 1e-6 * exact, "{e} vs {exact}");
        tr.blowup = Some(crate::evolution::Blowup { t: 1.0, sup_norm: 1.0, dt: 1e-13 });
        assert!(matches!(decay_envelope(&tr), Err(PksError::BlowupTrajectory(_))));
    }
}
