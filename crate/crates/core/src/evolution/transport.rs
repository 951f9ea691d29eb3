use std::sync::Arc;

use crate::error::Result;
use crate::fields::{CartesianField2D, Density, Field, RadialField, RadialGrid};
use crate::potential::{cartesian_gradient_2d, check_planar_support};
use crate::semigroup::{Propagate, RadialPropagator};
use crate::spectral::spectral;

use super::AdvectionScheme;

/// Densities the time stepper can move: exact diffusion plus a conservative
/// discretisation of −w∇·(u∇V).
pub trait Transport: Propagate + 'static {
    /// Reusable propagator state for one run.
    type Cache: Default + Send;

    fn propagate_cached(&self, a: f64, c: f64, cache: &mut Self::Cache) -> Self {
        let _ = cache;
        self.propagate(a, c)
    }

    /// Rate −w∇·(u∇V) and the largest step for which forward Euler on it
    /// keeps the scheme stable (before any safety factor).
    fn advection(&self, weight: f64, scheme: AdvectionScheme) -> Result<(Vec<f64>, f64)>;

    /// Re-derive samples that carry no quadrature weight.
    fn fix_origin(&mut self) {}

    fn to_field(&self) -> Field;
}

/// Most recently used radial propagators, keyed by (a, c).
#[derive(Debug, Default)]
pub struct RadialCache {
    entries: Vec<(u64, u64, Arc<RadialPropagator>)>,
}

const CACHE_SIZE: usize = 12;

impl RadialCache {
    fn get(&mut self, grid: &Arc<RadialGrid>, a: f64, c: f64) -> Arc<RadialPropagator> {
        let key = (a.to_bits(), c.to_bits());
        if let Some(pos) = self
            .entries
            .iter()
            .position(|(ka, kc, p)| (*ka, *kc) == key && Arc::ptr_eq(p.grid(), grid))
        {
            let e = self.entries.remove(pos);
            let p = e.2.clone();
            self.entries.push(e);
            return p;
        }
        let p = Arc::new(RadialPropagator::new(grid.clone(), a, c));
        if self.entries.len() == CACHE_SIZE {
            self.entries.remove(0);
        }
        self.entries.push((key.0, key.1, p.clone()));
        p
    }
}

fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

fn mc(a: f64, b: f64) -> f64 {
    minmod(0.5 * (a + b), 2.0 * minmod(a, b))
}

/// Finite-volume flux form on the radial cells. The flux through a sphere is
/// −w·m·u with m the enclosed mass, so the face area never appears.
/// Face values are linear reconstructions from the upwind node with MC-limited slopes.
pub(crate) fn radial_advection(grid: &RadialGrid, u: &[f64], w: f64) -> (Vec<f64>, f64) {
    let len = u.len();
    let r = grid.nodes();
    let mu = grid.measure();
    let faces = grid.faces();
    let mut slope = vec![0.0; len];
    for i in 1..len - 1 {
        let a = (u[i] - u[i - 1]) / (r[i] - r[i - 1]);
        let b = (u[i + 1] - u[i]) / (r[i + 1] - r[i]);
        slope[i] = mc(a, b);
    }
    let mut flux = vec![0.0; len - 1];
    let mut m = 0.0;
    let mut limit = f64::INFINITY;
    for f in 0..len - 1 {
        m += mu[f] * u[f];
        let speed = w * m;
        let up = if speed >= 0.0 { f + 1 } else { f };
        let uf = u[up] + slope[up] * (faces[f] - r[up]);
        flux[f] = -speed * uf;
        if speed != 0.0 && mu[up] > 0.0 {
            limit = limit.min(mu[up] / (2.0 * speed.abs()));
        }
    }
    let mut rate = vec![0.0; len];
    for i in 1..len {
        let right = if i < len - 1 { flux[i] } else { 0.0 };
        rate[i] = -(right - flux[i - 1]) / mu[i];
    }
    (rate, limit)
}

impl Transport for RadialField {
    type Cache = RadialCache;

    fn propagate_cached(&self, a: f64, c: f64, cache: &mut RadialCache) -> Self {
        let p = cache.get(self.grid(), a, c);
        self.with_values(p.apply(self.values()))
    }

    fn advection(&self, weight: f64, _scheme: AdvectionScheme) -> Result<(Vec<f64>, f64)> {
        Ok(radial_advection(self.grid(), self.values(), weight))
    }

    /// The origin has zero measure; take the even quadratic through nodes 1 and 2.
    fn fix_origin(&mut self) {
        let r = self.grid().nodes();
        let (a, b) = (r[1] * r[1], r[2] * r[2]);
        let v = self.values_mut();
        v[0] = ((b * v[1] - a * v[2]) / (b - a)).max(0.0);
    }

    fn to_field(&self) -> Field {
        Field::Radial(self.clone())
    }
}

fn planar_upwind(u: &CartesianField2D, gx: &[f64], gy: &[f64], w: f64) -> (Vec<f64>, f64) {
    let n = u.n();
    let h = u.grid().spacing();
    let v = u.values();
    let idx = |i: usize, j: usize| (i % n) * n + (j % n);
    let mut rate = vec![0.0; n * n];
    let mut vmax: f64 = 0.0;
    // face value between cells p and q along one axis, given neighbours pm (before p) and qp (after q)
    let face = |vel: f64, pm: f64, p: f64, q: f64, qp: f64| -> f64 {
        if vel >= 0.0 {
            p + 0.5 * minmod(p - pm, q - p)
        } else {
            q - 0.5 * minmod(q - p, qp - q)
        }
    };
    for i in 0..n {
        for j in 0..n {
            let c = idx(i, j);
            // x face i+1/2
            let e = idx(i + 1, j);
            let vx = 0.5 * w * (gx[c] + gx[e]);
            let fx = vx * face(vx, v[idx(i + n - 1, j)], v[c], v[e], v[idx(i + 2, j)]);
            rate[c] -= fx / h;
            rate[e] += fx / h;
            let nn = idx(i, j + 1);
            let vy = 0.5 * w * (gy[c] + gy[nn]);
            let fy = vy * face(vy, v[idx(i, j + n - 1)], v[c], v[nn], v[idx(i, j + 2)]);
            rate[c] -= fy / h;
            rate[nn] += fy / h;
            vmax = vmax.max(vx.abs() + vy.abs());
        }
    }
    let limit = if vmax > 0.0 { h / (2.0 * vmax) } else { f64::INFINITY };
    (rate, limit)
}

impl Transport for CartesianField2D {
    type Cache = ();

    fn advection(&self, weight: f64, scheme: AdvectionScheme) -> Result<(Vec<f64>, f64)> {
        check_planar_support(self)?;
        let (gx, gy) = match cartesian_gradient_2d(self)? {
            crate::potential::GradientField::Planar { gx, gy, .. } => (gx, gy),
            crate::potential::GradientField::Radial { .. } => unreachable!("planar field"),
        };
        match scheme {
            AdvectionScheme::Upwind => Ok(planar_upwind(self, &gx, &gy, weight)),
            AdvectionScheme::Spectral => {
                let u = self.values();
                let fx: Vec<f64> = u.iter().zip(&gx).map(|(a, b)| weight * a * b).collect();
                let fy: Vec<f64> = u.iter().zip(&gy).map(|(a, b)| weight * a * b).collect();
                let vmax = gx.iter().zip(&gy).fold(0.0f64, |m, (a, b)| m.max(a.abs() + b.abs())) * weight;
                let mut rate = spectral(self.grid()).divergence(&fx, &fy, true);
                rate.iter_mut().for_each(|x| *x = -*x);
                let limit = if vmax > 0.0 { self.grid().spacing() / vmax } else { f64::INFINITY };
                Ok((rate, limit))
            }
        }
    }

    fn to_field(&self) -> Field {
        Field::Cartesian(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::GridKind;
    use crate::special::gaussian;

    #[test]
    fn radial_flux_conserves_mass_and_matches_origin_rate() {
        let g = Arc::new(RadialGrid::new(2, GridKind::Graded, 2048, 30.0).unwrap());
        let u = RadialField::from_fn(g.clone(), |r| 3.0 * gaussian(2, r));
        let (rate, limit) = radial_advection(&g, u.values(), 1.0);
        let total: f64 = rate.iter().zip(g.measure()).map(|(a, b)| a * b).sum();
        assert!(total.abs() < 1e-14);
        assert!(limit > 0.0 && limit.is_finite());
        // at the origin −∇·(u∇V) = u²
        let u1 = u.values()[1];
        assert!((rate[1] - u1 * u1).abs() < 1e-3 * u1 * u1);
    }

    #[test]
    fn planar_schemes_agree_on_smooth_data() {
        let g = Arc::new(crate::fields::CartesianGrid::new(64, 12.0).unwrap());
        let u = CartesianField2D::from_fn(g.clone(), |x, y| 4.0 * gaussian(2, ((x - 0.5).powi(2) + y * y).sqrt()));
        let (a, _) = u.advection(1.0, AdvectionScheme::Spectral).unwrap();
        let (b, _) = u.advection(1.0, AdvectionScheme::Upwind).unwrap();
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let diff = a.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(diff < 0.1 * scale, "{diff} vs {scale}");
        let s: f64 = b.iter().sum();
        assert!(s.abs() < 1e-12 * scale * 4096.0);
    }
}
