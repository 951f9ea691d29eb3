//! Gradient of the Newtonian potential V = E_n ∗ u.
//!
//! Radial fields use Gauss's law, −V′(r)·nωₙr^{n−1} = m(r). Planar fields use
//! a free-space convolution with a kernel truncated beyond the box diameter,
//! whose Fourier transform is known in closed form, so the periodic FFT
//! reproduces the free-space sum to spectral accuracy.

use std::sync::Arc;

use crate::error::{PksError, Result};
use crate::fields::{CartesianField2D, CartesianGrid, Density, Field, RadialField, RadialGrid};
use crate::special::sphere_area;
use crate::spectral::spectral;

/// ∇(E_n ∗ u) on the grid of its source.
#[derive(Debug, Clone)]
pub enum GradientField {
    /// V′(r) at the radial nodes.
    Radial { grid: Arc<RadialGrid>, dv: Vec<f64> },
    /// (∂ₓV, ∂ᵧV) at the planar nodes.
    Planar { grid: Arc<CartesianGrid>, gx: Vec<f64>, gy: Vec<f64> },
}

impl GradientField {
    pub fn sup_magnitude(&self) -> f64 {
        match self {
            GradientField::Radial { dv, .. } => dv.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            GradientField::Planar { gx, gy, .. } => {
                gx.iter().zip(gy).fold(0.0f64, |m, (a, b)| m.max((a * a + b * b).sqrt()))
            }
        }
    }
}

/// V′ from nodal samples; zero at r = 0.
///
/// The enclosed mass uses the end-corrected cumulative rule, fourth order for
/// smooth data and equal to the trapezoid total mass once the field has decayed.
pub fn radial_gradient_values(grid: &RadialGrid, values: &[f64]) -> Vec<f64> {
    let m = grid.cumulative_mass_smooth(values);
    from_enclosed_mass(grid, &m)
}

pub(crate) fn from_enclosed_mass(grid: &RadialGrid, m: &[f64]) -> Vec<f64> {
    let area = sphere_area(grid.dim());
    let p = grid.dim() as i32 - 1;
    grid.nodes()
        .iter()
        .zip(m)
        .map(|(&r, &mi)| if r == 0.0 { 0.0 } else { -mi / (area * r.powi(p)) })
        .collect()
}

pub fn radial_gradient(u: &RadialField) -> Result<GradientField> {
    u.total_mass()?;
    Ok(GradientField::Radial { grid: u.grid().clone(), dv: radial_gradient_values(u.grid(), u.values()) })
}

/// Fraction of |u| mass allowed outside the inner [−0.75L, 0.75L]² square.
pub const PLANAR_EDGE_MASS: f64 = 1e-4;

/// Check that a planar field keeps away from the periodic box edge.
pub fn check_planar_support(u: &CartesianField2D) -> Result<()> {
    let g = u.grid();
    let n = g.n();
    let cut = 0.75 * g.half_width();
    let c = g.coords();
    let (mut total, mut outer) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let a = u.get(i, j).abs();
            total += a;
            if c[i].abs() > cut || c[j].abs() > cut {
                outer += a;
            }
        }
    }
    if outer > PLANAR_EDGE_MASS * total {
        return Err(PksError::DomainTooSmall(format!(
            "{:.2e} of the mass lies within a quarter width of the box edge",
            outer / total
        )));
    }
    Ok(())
}

/// (∂ₓV, ∂ᵧV) without the support check.
pub fn planar_gradient_values(u: &CartesianField2D) -> (Vec<f64>, Vec<f64>) {
    spectral(u.grid()).gradient(u.values())
}

/// V = E₂ ∗ u on the planar grid in the free-space gauge E₂ = −log|x|/2π.
pub fn planar_potential_values(u: &CartesianField2D) -> Vec<f64> {
    spectral(u.grid()).potential(u.values())
}

pub fn cartesian_gradient_2d(u: &CartesianField2D) -> Result<GradientField> {
    u.total_mass()?;
    check_planar_support(u)?;
    let (gx, gy) = planar_gradient_values(u);
    Ok(GradientField::Planar { grid: u.grid().clone(), gx, gy })
}

pub fn gradient(u: &Field) -> Result<GradientField> {
    match u {
        Field::Radial(f) => radial_gradient(f),
        Field::Cartesian(f) => cartesian_gradient_2d(f),
    }
}

/// Outcome of comparing sup|∇E_n∗u| with ‖u‖₁^{1/n}‖u‖_∞^{1−1/n}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs_core: f64,
    pub ratio: f64,
}

pub fn sup_gradient_bound_check(u: &Field) -> Result<BoundCheck> {
    let n = u.dim() as f64;
    let l1 = u.lp_norm(1.0)?;
    let linf = u.lp_norm(f64::INFINITY)?;
    let lhs = gradient(u)?.sup_magnitude();
    let rhs_core = l1.powf(1.0 / n) * linf.powf(1.0 - 1.0 / n);
    let ratio = if rhs_core == 0.0 { 0.0 } else { lhs / rhs_core };
    Ok(BoundCheck { lhs, rhs_core, ratio })
}

/// ∫ u ∇(E₂∗u), which vanishes for any compactly supported u.
pub fn self_force(u: &CartesianField2D) -> [f64; 2] {
    mutual_force(u, u).map(|v| v / 2.0)
}

/// ∫ (u₁∇(E₂∗u₂) + u₂∇(E₂∗u₁)), which vanishes by antisymmetry of ∇E₂.
pub fn mutual_force(u1: &CartesianField2D, u2: &CartesianField2D) -> [f64; 2] {
    let (ax, ay) = planar_gradient_values(u1);
    let (bx, by) = planar_gradient_values(u2);
    let w = u1.grid().spacing().powi(2);
    let mut f = [0.0; 2];
    for i in 0..ax.len() {
        let (p, q) = (u1.values()[i], u2.values()[i]);
        f[0] += w * (p * bx[i] + q * ax[i]);
        f[1] += w * (p * by[i] + q * ay[i]);
    }
    f
}
