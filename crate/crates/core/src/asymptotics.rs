//! Higher-order large-time expansions in three and four dimensions.
//!
//! The second-order profile is
//! 𝒲⋆ = ∫₀^∞ e^{s/2} S₃(s)[h] ds with h = div(𝒢₃∇𝒱₃) = −(r/2)𝒢₃𝒱₃′ − 𝒢₃²,
//! and 𝒲(x,t) = t^{−2}𝒲⋆(x/√t). The s-integral is done twice, by composite
//! Gauss panels with direct propagators and by the trapezoid rule on a
//! uniform s-grid built from repeated short steps, so the two results share
//! only the source h. The tail beyond the truncation point decays like
//! e^{−s/2} and is added as 2·F(S).

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::diagnostics::{line_fit, LineFit};
use crate::error::{PksError, Result};
use crate::fields::{Density, GridKind, RadialField, RadialGrid};
use crate::semigroup::RadialPropagator;
use crate::special::{gaussian, gaussian_ball_mass};

/// The s-integral is truncated once ‖e^{s/2}S₃(s)h‖₁ falls to this level.
pub const INTEGRAND_FLOOR: f64 = 1e-10;

/// Step of the uniform s-grid used by the trapezoid route.
pub const TRAPEZOID_STEP: f64 = 0.05;

const GAUSS8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
];

/// 𝒱_n′ of the unit Gaussian at radius r (signed, ≤ 0).
fn gaussian_potential_slope(n: usize, r: f64) -> f64 {
    if r == 0.0 {
        0.0
    } else {
        -gaussian_ball_mass(n, r) / (crate::special::sphere_area(n) * r.powi(n as i32 - 1))
    }
}

/// h_n(r) = div(𝒢_n∇𝒱_n) = −(r/2)𝒢_n𝒱_n′ − 𝒢_n².
pub fn gaussian_source(n: usize, r: f64) -> f64 {
    let g = gaussian(n, r);
    -0.5 * r * g * gaussian_potential_slope(n, r) - g * g
}

#[derive(Debug, Clone)]
pub struct WStarField {
    /// Gauss-panel value with the tail correction.
    pub field: RadialField,
    /// Trapezoid-route value with the tail correction.
    pub trapezoid: RadialField,
    /// Gauss nodes and weights in s.
    pub s_nodes: Vec<f64>,
    pub s_weights: Vec<f64>,
    /// Truncation point S of the s-integral.
    pub s_max: f64,
    /// Fitted slope of log‖e^{s/2}S₃(s)h‖₁ against s over [S/2, S].
    pub decay_slope: f64,
    /// ‖e^{S/2}S₃(S)h‖₁.
    pub tail_integrand_l1: f64,
}

impl WStarField {
    pub fn grid(&self) -> &Arc<RadialGrid> {
        self.field.grid()
    }

    pub fn at(&self, r: f64) -> f64 {
        self.field.at(r)
    }

    pub fn mass(&self) -> f64 {
        self.field.integral()
    }

    /// ∫|𝒲⋆||ξ|^k dξ.
    pub fn abs_moment(&self, k: i32) -> f64 {
        let g = self.grid();
        self.field
            .values()
            .iter()
            .zip(g.nodes())
            .zip(g.measure())
            .map(|((v, r), m)| m * v.abs() * r.powi(k))
            .sum()
    }

    /// Relative gap between the two quadrature routes at the origin.
    pub fn origin_disagreement(&self) -> f64 {
        let a = self.field.values()[0];
        let b = self.trapezoid.values()[0];
        (a - b).abs() / a.abs()
    }

    /// Largest relative gap between the routes, measured against the sup norm.
    pub fn route_disagreement(&self) -> f64 {
        let d = self
            .field
            .values()
            .iter()
            .zip(self.trapezoid.values())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        d / self.field.sup_norm()
    }
}

/// Panel edges in s: short panels where S₃(s)h still changes shape, wider ones after.
fn panel_edges(s_max: f64) -> Vec<f64> {
    let mut e = vec![0.0, 0.25, 0.5, 1.0, 2.0, 3.0, 4.0, 6.0];
    while *e.last().unwrap() < s_max - 1e-12 {
        let next = (e.last().unwrap() + 2.0).min(s_max);
        e.push(next);
    }
    e.retain(|&x| x <= s_max + 1e-12);
    if (e.last().unwrap() - s_max).abs() > 1e-12 {
        e.push(s_max);
    }
    e
}

fn l1(values: &[f64], mu: &[f64]) -> f64 {
    values.iter().zip(mu).map(|(v, m)| m * v.abs()).sum()
}

/// 𝒲⋆ on a three-dimensional radial grid.
///
/// The integral runs to `s_max` if that is at least 20, otherwise to the first S
/// with e^{−S/2} ≤ `tol`; in both cases it stops earlier once the integrand's
/// L¹ norm reaches [`INTEGRAND_FLOOR`].
pub fn w_star(grid: &Arc<RadialGrid>, s_max: f64, tol: f64) -> Result<WStarField> {
    if grid.dim() != 3 {
        return Err(PksError::InvalidParameter(format!("𝒲⋆ lives in three dimensions, grid has {}", grid.dim())));
    }
    if !(s_max > 0.0 && s_max.is_finite()) {
        return Err(PksError::InvalidParameter(format!("s_max = {s_max}")));
    }
    let s_end = if s_max >= 20.0 {
        s_max
    } else {
        if !(tol > 0.0 && tol < 1.0) {
            return Err(PksError::InvalidParameter(format!("tol = {tol} must lie in (0, 1)")));
        }
        s_max.max(-2.0 * tol.ln())
    };
    let mu = grid.measure().to_vec();
    // S₃ keeps any mass, which e^{s/2} then amplifies; rounding-level mass is
    // projected onto 𝒢₃ and removed after every propagation
    let g3: Vec<f64> = grid.nodes().iter().map(|&r| gaussian(3, r)).collect();
    let g3_mass: f64 = g3.iter().zip(&mu).map(|(a, b)| a * b).sum();
    let drop_mass = |v: &mut Vec<f64>| {
        let shift = v.iter().zip(&mu).map(|(a, b)| a * b).sum::<f64>() / g3_mass;
        for (a, b) in v.iter_mut().zip(&g3) {
            *a -= shift * b;
        }
    };
    let mut h: Vec<f64> = grid.nodes().iter().map(|&r| gaussian_source(3, r)).collect();
    drop_mass(&mut h);
    let len = h.len();

    // trapezoid route; stops early once the integrand reaches the floor
    let steps = (s_end / TRAPEZOID_STEP).ceil() as usize;
    let ds = s_end / steps as f64;
    let step = RadialPropagator::new(grid.clone(), -(-ds).exp_m1(), (-ds / 2.0).exp());
    let mut state = h.clone();
    let mut trap: Vec<f64> = h.iter().map(|v| 0.5 * ds * v).collect();
    let mut norms = vec![(0.0, l1(&h, &mu))];
    let mut s_end = s_end;
    for k in 1..=steps {
        state = step.apply(&state);
        drop_mass(&mut state);
        let s = k as f64 * ds;
        let norm = (s / 2.0).exp() * l1(&state, &mu);
        let last = k == steps || norm <= INTEGRAND_FLOOR;
        let w = (s / 2.0).exp() * if last { 0.5 * ds } else { ds };
        for (t, v) in trap.iter_mut().zip(&state) {
            *t += w * v;
        }
        norms.push((s, norm));
        if last {
            s_end = s;
            break;
        }
    }
    for (t, v) in trap.iter_mut().zip(&state) {
        *t += 2.0 * (s_end / 2.0).exp() * v;
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        norms.iter().filter(|(s, n)| *s >= s_end / 2.0 && *n > 0.0).map(|(s, n)| (*s, n.ln())).unzip();
    let fit = line_fit(&xs, &ys)?;
    let decay_slope = fit.slope;
    if !(decay_slope <= -0.45) {
        return Err(PksError::QuadratureDiverging(format!(
            "integrand L1 norm decays like e^({decay_slope:.3} s); at least e^(-0.45 s) is required"
        )));
    }
    let tail_integrand_l1 = norms.last().unwrap().1;

    // Gauss route
    let edges = panel_edges(s_end);
    let mut s_nodes = Vec::new();
    let mut s_weights = Vec::new();
    for pair in edges.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        for (x, w) in GAUSS8.iter() {
            s_nodes.push(a + 0.5 * (b - a) * (1.0 + x));
            s_weights.push(0.5 * (b - a) * w);
        }
    }
    let parts: Vec<Vec<f64>> = s_nodes
        .par_iter()
        .zip(&s_weights)
        .map(|(&s, &w)| {
            let p = RadialPropagator::new(grid.clone(), -(-s).exp_m1(), (-s / 2.0).exp());
            let scale = w * (s / 2.0).exp();
            let mut v = p.apply(&h);
            drop_mass(&mut v);
            v.into_iter().map(|x| scale * x).collect()
        })
        .collect();
    let mut gauss = vec![0.0; len];
    for p in &parts {
        for (g, v) in gauss.iter_mut().zip(p) {
            *g += v;
        }
    }
    let mut end = RadialPropagator::new(grid.clone(), -(-s_end).exp_m1(), (-s_end / 2.0).exp()).apply(&h);
    drop_mass(&mut end);
    for (g, v) in gauss.iter_mut().zip(&end) {
        *g += 2.0 * (s_end / 2.0).exp() * v;
    }

    Ok(WStarField {
        field: RadialField::signed(grid.clone(), gauss)?,
        trapezoid: RadialField::signed(grid.clone(), trap)?,
        s_nodes,
        s_weights,
        s_max: s_end,
        decay_slope,
        tail_integrand_l1,
    })
}

/// 𝒲(·,t) = t^{−2}𝒲⋆(·/√t), returned on the grid dilated by √t.
pub fn w_function(wstar: &WStarField, t: f64) -> Result<RadialField> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(PksError::InvalidParameter(format!("t = {t}")));
    }
    let g = Arc::new(wstar.grid().dilated(t.sqrt())?);
    let values = wstar.field.values().iter().map(|v| v / (t * t)).collect();
    RadialField::signed(g, values)
}

/// 𝒲(r,t) at a single radius.
pub fn w_value(wstar: &WStarField, r: f64, t: f64) -> f64 {
    wstar.at(r / t.sqrt()) / (t * t)
}

/// ∂_t𝒲 − Δ𝒲 − div(Γ_t∇E₃∗Γ_t) at t = 1 on the 𝒲⋆ grid, with the time
/// derivative taken by central differences of the self-similar form.
pub fn w_pde_residual(wstar: &WStarField) -> Result<RadialField> {
    let g = wstar.grid();
    let w = wstar.field.values();
    let r = g.nodes();
    let dt = 1e-3;
    let dw = g.diff_r(w);
    let flux: Vec<f64> = r.iter().zip(&dw).map(|(x, d)| x * x * d).collect();
    let dflux = g.diff_r(&flux);
    let res: Vec<f64> = (0..r.len())
        .map(|i| {
            let x = r[i];
            let ddt = (w_value(wstar, x, 1.0 + dt) - w_value(wstar, x, 1.0 - dt)) / (2.0 * dt);
            let lap = if x > 0.0 { dflux[i] / (x * x) } else { 0.0 };
            ddt - lap - gaussian_source(3, x)
        })
        .collect();
    let mut out = RadialField::signed(g.clone(), res)?;
    let (a, b) = (r[1] * r[1], r[2] * r[2]);
    let v = out.values_mut();
    v[0] = (b * v[1] - a * v[2]) / (b - a);
    Ok(out)
}

/// Values of c₂ from the display and from its one-dimensional reduction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct C2Report {
    pub mass: f64,
    /// (M/4π)² ∫|z|² div(𝒢₄∇𝒱₄) dz by radial quadrature.
    pub display: f64,
    /// (M/4π)²·2∫₀^∞ 𝒢₄ m₄ r dr.
    pub reduced: f64,
    /// M²/(256π⁴).
    pub closed_form: f64,
}

impl C2Report {
    pub fn rel_disagreement(&self) -> f64 {
        if self.mass == 0.0 {
            0.0
        } else {
            (self.display - self.reduced).abs() / self.reduced.abs()
        }
    }
}

fn c2_grid() -> Result<Arc<RadialGrid>> {
    Ok(Arc::new(RadialGrid::new(4, GridKind::Graded, 4096, 30.0)?))
}

pub fn constant_c2(mass: f64) -> Result<f64> {
    Ok(constant_c2_report(mass)?.display)
}

pub fn constant_c2_report(mass: f64) -> Result<C2Report> {
    if !(mass >= 0.0 && mass.is_finite()) {
        return Err(PksError::InvalidParameter(format!("mass = {mass}")));
    }
    let g = c2_grid()?;
    let pref = (mass / (4.0 * PI)).powi(2);
    let display: f64 = g
        .nodes()
        .iter()
        .zip(g.measure())
        .map(|(&r, m)| m * r * r * gaussian_source(4, r))
        .sum();
    let integrand: Vec<f64> = g.nodes().iter().map(|&r| gaussian(4, r) * gaussian_ball_mass(4, r) * r).collect();
    let reduced = 2.0 * g.cumulative(&integrand).last().copied().unwrap_or(0.0);
    Ok(C2Report {
        mass,
        display: pref * display,
        reduced: pref * reduced,
        closed_form: mass * mass / (256.0 * PI.powi(4)),
    })
}

/// c₁ by quadrature and by Monte Carlo.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct C1Report {
    pub mass: f64,
    pub b0: [f64; 3],
    pub quadrature: f64,
    pub monte_carlo: f64,
    pub samples: usize,
}

impl C1Report {
    pub fn rel_disagreement(&self) -> f64 {
        if self.quadrature == 0.0 {
            self.monte_carlo.abs()
        } else {
            (self.quadrature - self.monte_carlo).abs() / self.quadrature.abs()
        }
    }
}

pub const C1_SAMPLES: usize = 10_000_000;

/// Radial pieces of the first-order flux for 𝒢^{(1)} = M²𝒲⋆:
/// F_r = 𝒢₃𝒱_W′ + 𝒲⋆𝒱₃′ per unit M².
fn c1_radial_flux(wstar: &WStarField) -> Vec<f64> {
    let g = wstar.grid();
    let w = wstar.field.values();
    let m = g.cumulative_mass_smooth(w);
    g.nodes()
        .iter()
        .zip(&m)
        .zip(w)
        .map(|((&r, &mw), &wv)| {
            if r == 0.0 {
                0.0
            } else {
                gaussian(3, r) * (-mw / (4.0 * PI * r * r)) + wv * gaussian_potential_slope(3, r)
            }
        })
        .collect()
}

/// Dipole part of z·F for B₀ = |B|e₃ at (r, cos θ):
/// |B|·cosθ·r·(𝒢₃𝒱₃″ + 𝒢₃′𝒱₃′), with 𝒱₃″ = −𝒢₃ − 2𝒱₃′/r.
fn dipole_z_dot_flux(b: f64, r: f64, cos: f64) -> f64 {
    if r == 0.0 {
        return 0.0;
    }
    let g = gaussian(3, r);
    let dv = gaussian_potential_slope(3, r);
    let d2v = -g - 2.0 * dv / r;
    let dg = -0.5 * r * g;
    b * cos * r * (g * d2v + dg * dv)
}

pub fn constant_c1(mass: f64, b0: [f64; 3], wstar: Option<&WStarField>) -> Result<f64> {
    c1_quadrature(mass, b0, wstar)
}

/// (4π)^{−3/2} M ∫|z|² div(𝒢₃∇𝒱^{(1)} + 𝒢^{(1)}∇𝒱₃) dz on the 𝒲⋆ grid.
///
/// The dipole part is integrated over angles with an 8-point rule in cos θ;
/// it is odd, so its contribution is zero up to rounding.
pub fn c1_quadrature(mass: f64, b0: [f64; 3], wstar: Option<&WStarField>) -> Result<f64> {
    let ws = wstar.ok_or_else(|| PksError::DependencyMissing("c1 needs the W* field".into()))?;
    if !(mass >= 0.0 && mass.is_finite()) || b0.iter().any(|b| !b.is_finite()) {
        return Err(PksError::InvalidParameter(format!("mass = {mass}, b0 = {b0:?}")));
    }
    let g = ws.grid();
    let r = g.nodes();
    let flux = c1_radial_flux(ws);
    let r2f: Vec<f64> = r.iter().zip(&flux).map(|(x, f)| x * x * f).collect();
    let d = g.diff_r(&r2f);
    let radial: f64 = r
        .iter()
        .zip(&d)
        .zip(g.measure())
        .map(|((&x, dv), m)| if x > 0.0 { m * dv } else { 0.0 })
        .sum();
    let b = (b0[0] * b0[0] + b0[1] * b0[1] + b0[2] * b0[2]).sqrt();
    let dipole: f64 = r
        .iter()
        .zip(g.dr_weights())
        .map(|(&x, w)| {
            let ang: f64 = GAUSS8.iter().map(|(c, wc)| wc * dipole_z_dot_flux(b, x, *c)).sum();
            // ∫|z|² div F = −2∫ z·F; the azimuth contributes 2π
            -2.0 * w * x * x * 2.0 * PI * ang
        })
        .sum();
    Ok((4.0 * PI).powf(-1.5) * mass * (mass * mass * radial + dipole))
}

/// Monte Carlo value of −2(4π)^{−3/2} M ∫ z·F dz.
///
/// Radii are stratified on [0, r_max]; each stratum draws one uniform
/// direction ω and evaluates the integrand at ±ω, which removes the variance
/// of the odd dipole part. `samples` counts integrand evaluations.
pub fn c1_monte_carlo(mass: f64, b0: [f64; 3], wstar: &WStarField, samples: usize, seed: u64) -> Result<f64> {
    let strata = samples / 2;
    if strata == 0 {
        return Err(PksError::InvalidParameter(format!("{samples} samples, at least 2 needed")));
    }
    let g = wstar.grid();
    let flux = c1_radial_flux(wstar);
    let width = g.r_max() / strata as f64;
    let m2 = mass * mass;
    const BATCH: usize = 1 << 16;
    let batches = strata.div_ceil(BATCH);
    // batch sums are added in order so reruns are bit-identical
    let partial: Vec<f64> = (0..batches)
        .into_par_iter()
        .map(|bi| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(bi as u64);
            let lo = bi * BATCH;
            let hi = (lo + BATCH).min(strata);
            let mut acc = 0.0;
            for k in lo..hi {
                let r = (k as f64 + rng.gen::<f64>()) * width;
                let cz: f64 = 2.0 * rng.gen::<f64>() - 1.0;
                let phi = 2.0 * PI * rng.gen::<f64>();
                let sz = (1.0 - cz * cz).max(0.0).sqrt();
                let dir = [sz * phi.cos(), sz * phi.sin(), cz];
                let bdot = b0[0] * dir[0] + b0[1] * dir[1] + b0[2] * dir[2];
                // z·F = M²·r·F_r plus the dipole part along B₀
                let radial = r * g.interpolate(&flux, r) * m2;
                let pair = 2.0 * radial + dipole_z_dot_flux(1.0, r, bdot) + dipole_z_dot_flux(1.0, r, -bdot);
                acc += 4.0 * PI * r * r * 0.5 * pair;
            }
            acc
        })
        .collect();
    let sum: f64 = partial.iter().sum();
    Ok(-2.0 * (4.0 * PI).powf(-1.5) * mass * sum * width)
}

pub fn constant_c1_report(mass: f64, b0: [f64; 3], wstar: Option<&WStarField>, samples: usize, seed: u64) -> Result<C1Report> {
    let quadrature = c1_quadrature(mass, b0, wstar)?;
    let monte_carlo = c1_monte_carlo(mass, b0, wstar.unwrap(), samples, seed)?;
    Ok(C1Report { mass, b0, quadrature, monte_carlo, samples })
}

/// Spatial shape of one expansion term, in similarity variables ξ = x/√t.
#[derive(Debug, Clone)]
pub enum TermProfile {
    /// 𝒢_n(ξ).
    Gaussian,
    /// B·∇𝒢_n(ξ).
    Dipole(Vec<f64>),
    /// 𝒲⋆(|ξ|).
    WStar(Arc<WStarField>),
    /// (1/2 − |ξ|²/(4n))e^{−|ξ|²/4}.
    LogShape,
}

#[derive(Debug, Clone)]
pub struct ExpansionTerm {
    pub name: &'static str,
    pub dim: usize,
    pub profile: TermProfile,
    /// Power of t multiplying the profile.
    pub t_exponent: f64,
    /// Whether a factor log t is present.
    pub log_factor: bool,
    pub coefficient: f64,
}

impl ExpansionTerm {
    pub fn profile_at(&self, xi: &[f64]) -> f64 {
        let r2: f64 = xi.iter().map(|x| x * x).sum();
        let r = r2.sqrt();
        match &self.profile {
            TermProfile::Gaussian => gaussian(self.dim, r),
            TermProfile::Dipole(b) => {
                let dot: f64 = b.iter().zip(xi).map(|(a, x)| a * x).sum();
                -0.5 * dot * gaussian(self.dim, r)
            }
            TermProfile::WStar(w) => w.at(r),
            TermProfile::LogShape => (0.5 - r2 / (4.0 * self.dim as f64)) * (-r2 / 4.0).exp(),
        }
    }

    /// coefficient · t^{exponent} · (log t) · profile(x/√t).
    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        let st = t.sqrt();
        let xi: Vec<f64> = x.iter().map(|v| v / st).collect();
        let lf = if self.log_factor { t.ln() } else { 1.0 };
        self.coefficient * t.powf(self.t_exponent) * lf * self.profile_at(&xi)
    }

    /// |coefficient|·sup|profile|, the size at t = 1 with the log factor read as 1.
    pub fn magnitude(&self) -> f64 {
        let sup = match &self.profile {
            TermProfile::Gaussian => gaussian(self.dim, 0.0),
            TermProfile::Dipole(b) => {
                // sup of (r/2)𝒢 is at r = √2
                let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
                bn * 0.5 * 2f64.sqrt() * gaussian(self.dim, 2f64.sqrt())
            }
            TermProfile::WStar(w) => w.field.sup_norm(),
            TermProfile::LogShape => 0.5,
        };
        self.coefficient.abs() * sup
    }
}

/// Sum of the terms at (x, t).
pub fn evaluate_expansion(terms: &[ExpansionTerm], x: &[f64], t: f64) -> f64 {
    terms.iter().map(|term| term.eval(x, t)).sum()
}

/// Terms of the large-time expansion of u in dimension n ∈ {3, 4, 5}.
///
/// Order 0 is MΓ_t alone. Order 1 adds −B₀·∇Γ_t and, in three dimensions,
/// −M²𝒲 and the c₁ log term; in four dimensions the c₂ log term. Terms with a
/// zero coefficient are dropped, and the rest are sorted by [`ExpansionTerm::magnitude`].
pub fn expansion(
    n: usize,
    mass: f64,
    b0: &[f64],
    order: usize,
    wstar: Option<&Arc<WStarField>>,
) -> Result<Vec<ExpansionTerm>> {
    if n == 2 {
        return Err(PksError::UseProfileModule);
    }
    if !(3..=5).contains(&n) {
        return Err(PksError::InvalidParameter(format!("dimension {n} outside 3..=5")));
    }
    if order > 1 {
        return Err(PksError::InvalidParameter(format!("order {order} outside 0..=1")));
    }
    if b0.len() != n {
        return Err(PksError::InvalidParameter(format!("B0 has {} components, dimension is {n}", b0.len())));
    }
    if !(mass >= 0.0 && mass.is_finite()) {
        return Err(PksError::InvalidParameter(format!("mass = {mass}")));
    }
    let half = n as f64 / 2.0;
    let mut terms = vec![ExpansionTerm {
        name: "M Gamma_t",
        dim: n,
        profile: TermProfile::Gaussian,
        t_exponent: -half,
        log_factor: false,
        coefficient: mass,
    }];
    if order == 1 {
        if b0.iter().any(|&b| b != 0.0) {
            terms.push(ExpansionTerm {
                name: "-B0.grad Gamma_t",
                dim: n,
                profile: TermProfile::Dipole(b0.to_vec()),
                t_exponent: -half - 0.5,
                log_factor: false,
                coefficient: -1.0,
            });
        }
        if n == 3 && mass > 0.0 {
            let w = wstar.ok_or_else(|| PksError::DependencyMissing("the n = 3 expansion needs W*".into()))?;
            let mut b = [0.0; 3];
            b.copy_from_slice(b0);
            terms.push(ExpansionTerm {
                name: "-M^2 W",
                dim: 3,
                profile: TermProfile::WStar(w.clone()),
                t_exponent: -2.0,
                log_factor: false,
                coefficient: -mass * mass,
            });
            let c1 = constant_c1(mass, b, Some(w))?;
            terms.push(ExpansionTerm {
                name: "-c1 t^-5/2 log t",
                dim: 3,
                profile: TermProfile::LogShape,
                t_exponent: -2.5,
                log_factor: true,
                coefficient: -c1,
            });
        }
        if n == 4 && mass > 0.0 {
            terms.push(ExpansionTerm {
                name: "+c2 t^-3 log t",
                dim: 4,
                profile: TermProfile::LogShape,
                t_exponent: -3.0,
                log_factor: true,
                coefficient: constant_c2(mass)?,
            });
        }
    }
    terms.retain(|t| t.coefficient != 0.0);
    terms.sort_by(|a, b| b.magnitude().total_cmp(&a.magnitude()));
    Ok(terms)
}

/// Least squares of log(error) against log(time).
pub fn fit_rate(times: &[f64], errors: &[f64]) -> Result<LineFit> {
    if times.len() != errors.len() {
        return Err(PksError::InvalidData(format!("{} times and {} errors", times.len(), errors.len())));
    }
    if times.len() < 8 {
        return Err(PksError::InvalidData(format!("{} samples, at least 8 needed", times.len())));
    }
    if let Some(v) = times.iter().chain(errors).find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(PksError::InvalidData(format!("nonpositive or non-finite entry {v}")));
    }
    let x: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let y: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    line_fit(&x, &y)
}

/// Default 𝒲⋆ grid.
pub fn default_wstar_grid() -> Result<Arc<RadialGrid>> {
    Ok(Arc::new(RadialGrid::new(3, GridKind::Graded, 1024, 20.0)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wstar() -> WStarField {
        w_star(&default_wstar_grid().unwrap(), 20.0, 1e-10).unwrap()
    }

    #[test]
    fn source_has_zero_mass_and_matches_formula() {
        let g = Arc::new(RadialGrid::new(3, GridKind::Graded, 1024, 20.0).unwrap());
        let h = RadialField::from_fn(g.clone(), |r| gaussian_source(3, r));
        assert!(h.integral().abs() < 1e-14);
        // at the origin only −𝒢² survives
        assert!((gaussian_source(3, 0.0) + gaussian(3, 0.0).powi(2)).abs() < 1e-18);
    }

    #[test]
    fn wstar_routes_agree_and_mass_vanishes() {
        let w = wstar();
        assert!(w.mass().abs() < 1e-6, "{}", w.mass());
        assert!(w.origin_disagreement() < 5e-3, "{}", w.origin_disagreement());
        assert!(w.decay_slope < -0.45 && w.decay_slope > -0.6, "{}", w.decay_slope);
        for k in [0, 2, 4] {
            assert!(w.abs_moment(k).is_finite() && w.abs_moment(k) > 0.0);
        }
    }

    #[test]
    fn w_function_is_self_similar_and_solves_the_pde() {
        let w = wstar();
        let w1 = w_function(&w, 1.0).unwrap();
        assert_eq!(w1.values(), w.field.values());
        let w4 = w_function(&w, 4.0).unwrap();
        for (i, &xi) in w.grid().nodes().iter().enumerate().step_by(37) {
            let a = 16.0 * w4.values()[i];
            assert!((a - w.field.values()[i]).abs() <= 1e-10 * w.field.sup_norm(), "{xi}");
        }
        let res = w_pde_residual(&w).unwrap();
        let h = RadialField::from_fn(w.grid().clone(), |r| gaussian_source(3, r));
        let rel = res.lp_norm(1.0).unwrap() / h.lp_norm(1.0).unwrap();
        assert!(rel < 1e-3, "{rel}");
    }

    #[test]
    fn c2_matches_reduction_and_closed_form() {
        let r = constant_c2_report(1.0).unwrap();
        assert!(r.rel_disagreement() < 1e-6, "{r:?}");
        assert!((r.display - r.closed_form).abs() < 1e-6 * r.closed_form, "{r:?}");
        assert_eq!(constant_c2(0.0).unwrap(), 0.0);
        let q = constant_c2(2.0).unwrap() / constant_c2(1.0).unwrap();
        assert!((q - 4.0).abs() < 1e-10);
    }

    #[test]
    fn c1_scaling_and_missing_dependency() {
        let w = wstar();
        let a = constant_c1(1.0, [0.0; 3], Some(&w)).unwrap();
        let b = constant_c1(2.0, [0.0; 3], Some(&w)).unwrap();
        assert!((b / a - 8.0).abs() < 1e-8);
        assert_eq!(constant_c1(0.0, [1.0, 0.0, 0.0], Some(&w)).unwrap(), 0.0);
        let c = constant_c1(1.0, [1.0, 0.0, 0.0], Some(&w)).unwrap();
        assert!((c - a).abs() < 1e-12 * a.abs());
        assert!(matches!(constant_c1(1.0, [0.0; 3], None), Err(PksError::DependencyMissing(_))));
    }

    #[test]
    fn expansion_term_lists() {
        let t5 = expansion(5, 2.0, &[0.0; 5], 0, None).unwrap();
        assert_eq!(t5.len(), 1);
        let t4 = expansion(4, 1.0, &[0.0; 4], 1, None).unwrap();
        let names: Vec<_> = t4.iter().map(|t| t.name).collect();
        assert_eq!(names, ["M Gamma_t", "+c2 t^-3 log t"]);
        assert!(expansion(3, 0.0, &[0.0; 3], 1, None).unwrap().is_empty());
        assert!(matches!(expansion(2, 1.0, &[0.0; 2], 0, None), Err(PksError::UseProfileModule)));
        // order 0 is exactly MΓ_t
        let x = [0.3, -0.2, 1.1, 0.0];
        let t: f64 = 2.5;
        let direct = 1.0 * t.powf(-2.0) * gaussian(4, (x.iter().map(|v| v * v).sum::<f64>() / t).sqrt());
        let e = evaluate_expansion(&expansion(4, 1.0, &[0.1; 4], 0, None).unwrap(), &x, t);
        assert_eq!(e, direct);
    }

    #[test]
    fn fit_rate_cases() {
        let t: Vec<f64> = (1..=10).map(|k| k as f64).collect();
        let e: Vec<f64> = t.iter().map(|x| 1.0 / x).collect();
        let f = fit_rate(&t, &e).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-12 && (f.r2 - 1.0).abs() < 1e-12);
        let f = fit_rate(&t, &[3.0; 10]).unwrap();
        assert!(f.slope.abs() < 1e-12);
        assert!(matches!(fit_rate(&t[..5], &e[..5]), Err(PksError::InvalidData(_))));
        let mut bad = e.clone();
        bad[3] = 0.0;
        assert!(matches!(fit_rate(&t, &bad), Err(PksError::InvalidData(_))));
    }
}
