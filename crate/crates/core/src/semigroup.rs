//! The heat kernel, the similarity semigroup S_n(τ), and the expansion of
//! its kernel in powers of e^{−s/2}.
//!
//! Both are instances of the dilated Gaussian propagator
//! f ↦ (4πa)^{−n/2} ∫ f(η) e^{−|x − cη|²/4a} dη:
//! the heat flow has (a, c) = (t, 1) and S_n(τ) has (1 − e^{−τ}, e^{−τ/2}).

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{PksError, Result};
use crate::fields::{CartesianField2D, Density, Field, RadialField, RadialGrid};
use crate::series::Series;
use crate::special::{gaussian, scaled_sphere_mean};
use crate::spectral::spectral;

/// Parameters of S_n(τ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub dim: usize,
    /// a(τ) = 1 − e^{−τ}.
    pub a: f64,
    /// e^{−τ/2}.
    pub shrink: f64,
}

impl KernelParams {
    pub fn new(dim: usize, tau: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(PksError::InvalidParameter(format!("tau = {tau} must be positive")));
        }
        Ok(KernelParams { dim, a: -(-tau).exp_m1(), shrink: (-tau / 2.0).exp() })
    }
}

/// Densities that can be pushed through the dilated Gaussian propagator.
pub trait Propagate: Density {
    /// (4πa)^{−n/2} ∫ f(η) e^{−|x − cη|²/4a} dη, mass preserving.
    fn propagate(&self, a: f64, c: f64) -> Self;
}

impl Propagate for RadialField {
    fn propagate(&self, a: f64, c: f64) -> Self {
        let p = RadialPropagator::new(self.grid().clone(), a, c);
        self.with_values(p.apply(self.values()))
    }
}

impl Propagate for CartesianField2D {
    fn propagate(&self, a: f64, c: f64) -> Self {
        let g = self.grid();
        let out = spectral(g).propagate(self.values(), g.half_width(), a, c);
        self.with_values(out)
    }
}

/// Banded matrix of the radial propagator, columns normalised so that mass is exact.
#[derive(Debug, Clone)]
pub struct RadialPropagator {
    grid: Arc<RadialGrid>,
    rows: Vec<(usize, Vec<f64>)>,
}

// e^{-46} ≈ 1e-20: entries beyond this are dropped
const BAND_EXPONENT: f64 = 46.0;

impl RadialPropagator {
    pub fn new(grid: Arc<RadialGrid>, a: f64, c: f64) -> Self {
        let n = grid.dim();
        let r = grid.nodes();
        let mu = grid.measure();
        let len = r.len();
        let width = (4.0 * a * BAND_EXPONENT).sqrt();
        let pref = (4.0 * std::f64::consts::PI * a).powf(-(n as f64) / 2.0);
        let index_of = |rho: f64| -> usize {
            if rho <= 0.0 {
                return 0;
            }
            let x = grid.s_of(rho) / grid.h_s();
            (x as usize).min(len - 1)
        };
        let mut rows: Vec<(usize, Vec<f64>)> = (0..len)
            .into_par_iter()
            .map(|i| {
                let ri = r[i];
                let lo = index_of((ri - width) / c).saturating_sub(1);
                let hi = (index_of((ri + width) / c) + 2).min(len);
                let row = (lo..hi)
                    .map(|j| {
                        let d = ri - c * r[j];
                        let e = d * d / (4.0 * a);
                        if e > BAND_EXPONENT {
                            0.0
                        } else {
                            pref * (-e).exp() * scaled_sphere_mean(n, ri * c * r[j] / (2.0 * a))
                        }
                    })
                    .collect();
                (lo, row)
            })
            .collect();
        let mut colsum = vec![0.0; len];
        for (i, (lo, row)) in rows.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                colsum[lo + k] += mu[i] * v;
            }
        }
        rows.par_iter_mut().for_each(|(lo, row)| {
            for (k, v) in row.iter_mut().enumerate() {
                let s = colsum[*lo + k];
                *v = if s > 0.0 { *v / s * mu[*lo + k] } else { 0.0 };
            }
        });
        RadialPropagator { grid, rows }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    /// Number of stored matrix entries.
    pub fn stored(&self) -> usize {
        self.rows.iter().map(|(_, r)| r.len()).sum()
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.rows
            .par_iter()
            .map(|(lo, row)| row.iter().zip(&u[*lo..]).map(|(k, v)| k * v).sum())
            .collect()
    }
}

/// Γ_t ∗ u.
pub fn heat_evolve<D: Propagate>(u: &D, t: f64) -> Result<D> {
    if !(t.is_finite() && t > 0.0) {
        return Err(PksError::InvalidParameter(format!("t = {t} must be positive")));
    }
    Ok(u.propagate(t, 1.0))
}

/// S_n(τ) f.
pub fn similarity_semigroup<D: Propagate>(f: &D, tau: f64) -> Result<D> {
    let k = KernelParams::new(f.dim(), tau)?;
    Ok(f.propagate(k.a, k.shrink))
}

/// M𝒢_n − e^{−τ/2} B₀·∇𝒢_n with M, B₀ the mass and center of `f`.
pub fn first_order_heat_expansion(f: &Field, tau: f64) -> Result<Field> {
    let m = f.moments()?;
    let w = (-tau / 2.0).exp();
    Ok(match f {
        Field::Radial(r) => {
            let n = r.dim();
            Field::Radial(r.with_values(r.nodes().iter().map(|&x| m.mass * gaussian(n, x)).collect()))
        }
        Field::Cartesian(c) => {
            let (bx, by) = (m.center[0], m.center[1]);
            // ∇𝒢₂ = −(ξ/2)𝒢₂
            let out = CartesianField2D::from_fn(c.grid().clone(), |x, y| {
                let g = gaussian(2, (x * x + y * y).sqrt());
                m.mass * g + w * (bx * x + by * y) / 2.0 * g
            });
            Field::Cartesian(out)
        }
    })
}

/// Terms of the kernel expansion in r = e^{−s/2}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaylorTerms {
    /// e^{−|ξ|²/4}.
    pub t0: f64,
    /// (ξ·z/2) e^{−|ξ|²/4} e^{−s/2}.
    pub t1: f64,
    /// Order e^{−s} term from the series expansion:
    /// (n/2 − (|ξ|²+|z|²)/4 + (ξ·z)²/8) e^{−|ξ|²/4} e^{−s}.
    pub t2: f64,
    /// The same term with every coefficient doubled,
    /// (n − (|ξ|²+|z|²)/2 + (ξ·z)²/4) e^{−|ξ|²/4} e^{−s}, kept for comparison.
    pub t2_doubled: f64,
    /// Kernel minus t0 + t1 + t2.
    pub remainder: f64,
    /// e^{−3s/2}(1 + |ξ|⁶ + |z|⁶).
    pub envelope: f64,
}

/// Series of (1−r²)^{−n/2} exp(−|ξ − rz|²/(4(1−r²))) in r up to `order`.
pub fn kernel_series(xi: &[f64], z: &[f64], order: usize) -> Series {
    let n = xi.len();
    let xx: f64 = xi.iter().map(|v| v * v).sum();
    let zz: f64 = z.iter().map(|v| v * v).sum();
    let xz: f64 = xi.iter().zip(z).map(|(a, b)| a * b).sum();
    let r2 = Series::from_coeffs(&[0.0, 0.0, 1.0], order);
    let q = Series::from_coeffs(&[xx, -2.0 * xz, zz], order);
    let inv = r2.geometric();
    let exponent = &(&q * &inv).scale(-0.25) + &r2.scale(-1.0).ln_1p().scale(-(n as f64) / 2.0);
    exponent.exp()
}

/// The kernel (1−e^{−s})^{−n/2} exp(−|ξ − e^{−s/2}z|²/(4(1−e^{−s}))) against its first three terms.
pub fn kernel_taylor_terms(xi: &[f64], z: &[f64], s: f64) -> Result<TaylorTerms> {
    if s.is_nan() || s < 1.0 {
        return Err(PksError::OutOfValidatedRange(format!("s = {s} < 1")));
    }
    if xi.len() != z.len() || xi.is_empty() {
        return Err(PksError::InvalidParameter("ξ and z must have the same positive dimension".into()));
    }
    let n = xi.len() as f64;
    let r = (-s / 2.0).exp();
    let xx: f64 = xi.iter().map(|v| v * v).sum();
    let zz: f64 = z.iter().map(|v| v * v).sum();
    let xz: f64 = xi.iter().zip(z).map(|(a, b)| a * b).sum();
    let one_minus = -(-s).exp_m1();
    let d2: f64 = xi.iter().zip(z).map(|(a, b)| (a - r * b).powi(2)).sum();
    let lhs = one_minus.powf(-n / 2.0) * (-d2 / (4.0 * one_minus)).exp();

    let series = kernel_series(xi, z, 2);
    let t0 = series.coeff(0);
    let t1 = series.coeff(1) * r;
    let t2 = series.coeff(2) * r * r;
    let g = (-xx / 4.0).exp();
    let t2_doubled = (n - (xx + zz) / 2.0 + xz * xz / 4.0) * g * r * r;
    Ok(TaylorTerms {
        t0,
        t1,
        t2,
        t2_doubled,
        remainder: lhs - (t0 + t1 + t2),
        envelope: (-1.5 * s).exp() * (1.0 + xx.powi(3) + zz.powi(3)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{CartesianGrid, GridKind};
    use std::f64::consts::PI;

    fn grid(n: usize) -> Arc<RadialGrid> {
        Arc::new(RadialGrid::default_for(n).unwrap())
    }

    fn heat(n: usize, m: f64, t: f64) -> impl Fn(f64) -> f64 {
        move |r| m * (4.0 * PI * t).powf(-(n as f64) / 2.0) * (-r * r / (4.0 * t)).exp()
    }

    #[test]
    fn heat_semigroup_on_heat_kernel() {
        for n in 2..=5 {
            let g = grid(n);
            let u = RadialField::from_fn(g.clone(), heat(n, 2.0, 0.5));
            let v = heat_evolve(&u, 1.5).unwrap();
            let want = RadialField::from_fn(g, heat(n, 2.0, 2.0));
            let err = v.minus(&want).sup_norm();
            assert!(err < 1e-8 * want.sup_norm(), "n={n}: {err}");
            assert!((v.total_mass().unwrap() / u.total_mass().unwrap() - 1.0).abs() < 1e-10);
        }
        assert!(heat_evolve(&RadialField::zeros(grid(2)), 0.0).is_err());
    }

    #[test]
    fn heat_peak_bound() {
        let g = grid(3);
        let u = RadialField::from_fn(g, |r| if r < 2.0 { 1.0 } else { 0.0 });
        let m = u.total_mass().unwrap();
        let t = 0.7;
        let v = heat_evolve(&u, t).unwrap();
        assert!(v.sup_norm() <= m * (4.0 * PI * t).powf(-1.5));
    }

    #[test]
    fn planar_heat_preserves_center() {
        let cg = Arc::new(CartesianGrid::new(128, 24.0).unwrap());
        let u = CartesianField2D::from_fn(cg, |x, y| gaussian(2, ((x - 1.0).powi(2) + (y + 0.5).powi(2)).sqrt()));
        let v = heat_evolve(&u, 2.0).unwrap();
        let (a, b) = (u.moments().unwrap(), v.moments().unwrap());
        assert!((a.center[0] - b.center[0]).abs() < 1e-12 && (a.center[1] - b.center[1]).abs() < 1e-12);
        assert!((b.second_moment - a.second_moment - 4.0 * 2.0 * a.mass).abs() < 1e-10);
    }

    #[test]
    fn gaussian_is_fixed_by_similarity_semigroup() {
        for n in 2..=5 {
            let g = grid(n);
            let f = RadialField::from_fn(g, |r| gaussian(n, r));
            for &tau in &[0.5, 1.0, 5.0] {
                let out = similarity_semigroup(&f, tau).unwrap();
                assert!(out.l1_distance(&f) < 1e-8, "n={n} tau={tau}");
            }
        }
        let cg = Arc::new(CartesianGrid::new(128, 16.0).unwrap());
        let f = CartesianField2D::from_fn(cg, |x, y| gaussian(2, (x * x + y * y).sqrt()));
        let out = similarity_semigroup(&f, 1.0).unwrap();
        assert!(out.l1_distance(&f) < 1e-8);
    }

    #[test]
    fn similarity_semigroup_long_time_limit() {
        let g = grid(3);
        let f = RadialField::from_fn(g.clone(), |r| if r < 3.0 { (9.0 - r * r).powi(2) } else { 0.0 });
        let m = f.total_mass().unwrap();
        let out = similarity_semigroup(&f, 20.0).unwrap();
        let limit = RadialField::from_fn(g, |r| m * gaussian(3, r));
        assert!(out.l1_distance(&limit) <= 1e-6 * m);
        assert!((out.total_mass().unwrap() / m - 1.0).abs() < 1e-12);
    }

    #[test]
    fn semigroup_law() {
        let g = grid(2);
        let f = RadialField::from_fn(g, |r| (1.0 + r * r).powi(-4) * (1.0 + r));
        let ab = similarity_semigroup(&f, 0.7).unwrap();
        let ab = similarity_semigroup(&ab, 1.1).unwrap();
        let direct = similarity_semigroup(&f, 1.8).unwrap();
        assert!(ab.l1_distance(&direct) < 1e-7);
    }

    #[test]
    fn similarity_semigroup_is_dilated_heat_flow() {
        // S(τ)f = e^{nτ/2} (Γ_{e^τ−1} ∗ f)(e^{τ/2} ·)
        let n = 3;
        let g = grid(n);
        let f = RadialField::from_fn(g.clone(), |r| (-(r - 1.0).powi(2)).exp());
        let tau: f64 = 0.9;
        let s = similarity_semigroup(&f, tau).unwrap();
        let h = heat_evolve(&f, tau.exp() - 1.0).unwrap();
        let back = crate::fields::radial_to_similarity(&h, tau.exp()).unwrap().resample(g);
        assert!(s.l1_distance(&back) < 1e-7);
    }

    #[test]
    fn uniform_grid_propagator() {
        let g = Arc::new(RadialGrid::new(2, GridKind::Uniform, 2001, 30.0).unwrap());
        let u = RadialField::from_fn(g.clone(), heat(2, 1.0, 1.0));
        let v = heat_evolve(&u, 1.0).unwrap();
        let want = RadialField::from_fn(g, heat(2, 1.0, 2.0));
        assert!(v.minus(&want).sup_norm() < 1e-6);
    }

    #[test]
    fn taylor_terms_at_origin() {
        let z = [0.0; 3];
        let t = kernel_taylor_terms(&z, &z, 3.0).unwrap();
        assert_eq!(t.t0, 1.0);
        assert_eq!(t.t1, 0.0);
        assert!((t.t2 - 1.5 * (-3.0f64).exp()).abs() < 1e-15);
        assert!((t.t2_doubled - 3.0 * (-3.0f64).exp()).abs() < 1e-15);
        assert!(matches!(kernel_taylor_terms(&z, &z, 0.5), Err(PksError::OutOfValidatedRange(_))));
    }

    #[test]
    fn taylor_second_coefficient_by_finite_differences() {
        // g(r) = (1−r²)^{−n/2}; g''(0)/2 is the r² coefficient
        for n in 1..=5 {
            let g = |r: f64| (1.0 - r * r).powf(-(n as f64) / 2.0);
            let h = 1e-3;
            let c2 = (g(h) - 2.0 * g(0.0) + g(-h)) / (2.0 * h * h);
            let xi = vec![0.0; n];
            let s = kernel_series(&xi, &xi, 2);
            assert!((s.coeff(2) - c2).abs() < 1e-5);
            assert!((c2 - n as f64 / 2.0).abs() < 1e-5);
        }
    }

    #[test]
    fn taylor_first_order_vanishes_when_orthogonal() {
        let t = kernel_taylor_terms(&[1.0, 0.0, 0.0], &[0.0, 0.0, 0.0], 2.0).unwrap();
        assert_eq!(t.t1, 0.0);
        let t = kernel_taylor_terms(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], 2.0).unwrap();
        assert_eq!(t.t1, 0.0);
    }

    #[test]
    fn taylor_series_matches_kernel_at_small_r() {
        let xi = [0.3, -0.2, 0.5];
        let z = [0.1, 0.4, -0.3];
        let s = kernel_series(&xi, &z, 8);
        for &sv in &[10.0, 14.0] {
            let r = (-sv / 2.0f64).exp();
            let d2: f64 = xi.iter().zip(&z).map(|(a, b)| (a - r * b).powi(2)).sum();
            let om = 1.0 - r * r;
            let exact = om.powf(-1.5) * (-d2 / (4.0 * om)).exp();
            assert!((s.eval(r) - exact).abs() < 1e-12);
        }
    }
}
