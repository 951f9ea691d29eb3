//! FFT machinery for the planar grid: 2D transforms, the free-space
//! gradient kernel, and Gaussian propagators with optional dilation.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::fields::CartesianGrid;
use crate::special::{bessel_j0, bessel_j1};

/// Square 2D FFT built from 1D row transforms and transposes.
pub(crate) struct Fft2 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 { n, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) }
    }

    fn pass(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        buf.par_chunks_mut(n).for_each(|row| plan.process(row));
        transpose(buf, n);
        buf.par_chunks_mut(n).for_each(|row| plan.process(row));
        transpose(buf, n);
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.pass(buf, &self.fwd);
    }

    /// Inverse transform including the 1/n² normalisation.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.pass(buf, &self.inv);
        let s = 1.0 / (self.n * self.n) as f64;
        buf.par_iter_mut().for_each(|z| *z *= s);
    }
}

fn transpose(buf: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in i + 1..n {
            buf.swap(i * n + j, j * n + i);
        }
    }
}

/// Signed FFT index p ∈ [−n/2, n/2) of storage slot `i`.
pub(crate) fn signed_index(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Fourier transform of the 2D log kernel truncated at radius `big_r`.
pub(crate) fn truncated_log_kernel_hat(k: f64, big_r: f64) -> f64 {
    let c = big_r * big_r.ln();
    let x = k * big_r;
    if x < 1.0 {
        // (1 − J₀(x))/x² and J₁(x)/x by their power series
        let q = -x * x / 4.0;
        let (mut a, mut b) = (0.25, 0.5);
        let (mut ta, mut tb) = (0.25, 0.5);
        for m in 1..30 {
            let mf = m as f64;
            ta *= q / ((mf + 1.0) * (mf + 1.0));
            tb *= q / (mf * (mf + 1.0));
            a += ta;
            b += tb;
        }
        big_r * big_r * a - c * big_r * b
    } else {
        (1.0 - bessel_j0(x)) / (k * k) - c * bessel_j1(x) / k
    }
}

/// Cached spectral data of a planar grid.
pub struct PlanarSpectral {
    n: usize,
    pub(crate) fft: Fft2,
    fft2n: Fft2,
    /// Wave numbers in FFT storage order.
    pub(crate) k: Vec<f64>,
    kernel_x: Vec<Complex64>,
    kernel_y: Vec<Complex64>,
    kernel_v: Vec<Complex64>,
}

impl PlanarSpectral {
    pub(crate) fn new(grid: &CartesianGrid) -> Self {
        let n = grid.n();
        let l = grid.half_width();
        let h = grid.spacing();
        let k = (0..n).map(|i| PI * signed_index(i, n) as f64 / l).collect();

        // ∇ of the truncated kernel on a 4n box, sampled back in real space.
        let big_n = 4 * n;
        let period = big_n as f64 * h;
        let big_r = 3.0 * l;
        let mut gx = vec![Complex64::new(0.0, 0.0); big_n * big_n];
        let mut gy = gx.clone();
        let mut gv = gx.clone();
        gx.par_chunks_mut(big_n).zip(gy.par_chunks_mut(big_n)).zip(gv.par_chunks_mut(big_n)).enumerate().for_each(|(a, ((rx, ry), rv))| {
            let pa = signed_index(a, big_n);
            let kx = 2.0 * PI * pa as f64 / period;
            for b in 0..big_n {
                let pb = signed_index(b, big_n);
                let ky = 2.0 * PI * pb as f64 / period;
                let g = truncated_log_kernel_hat((kx * kx + ky * ky).sqrt(), big_r);
                let nyq_a = pa == -(big_n as i64) / 2;
                let nyq_b = pb == -(big_n as i64) / 2;
                rv[b] = Complex64::new(g, 0.0);
                rx[b] = if nyq_a { Complex64::new(0.0, 0.0) } else { Complex64::new(0.0, kx * g) };
                ry[b] = if nyq_b { Complex64::new(0.0, 0.0) } else { Complex64::new(0.0, ky * g) };
            }
        });
        let big_fft = Fft2::new(big_n);
        big_fft.inverse(&mut gx);
        big_fft.inverse(&mut gy);
        big_fft.inverse(&mut gv);
        // The inverse on the period carries 1/h², cancelled by the h² of the convolution sum.

        let m = 2 * n;
        let mut kx_real = vec![Complex64::new(0.0, 0.0); m * m];
        let mut ky_real = kx_real.clone();
        let mut kv_real = kx_real.clone();
        for a in 0..m {
            let da = signed_index(a, m);
            if da.unsigned_abs() as usize >= n {
                continue;
            }
            let sa = da.rem_euclid(big_n as i64) as usize;
            for b in 0..m {
                let db = signed_index(b, m);
                if db.unsigned_abs() as usize >= n {
                    continue;
                }
                let sb = db.rem_euclid(big_n as i64) as usize;
                kx_real[a * m + b] = Complex64::new(gx[sa * big_n + sb].re, 0.0);
                ky_real[a * m + b] = Complex64::new(gy[sa * big_n + sb].re, 0.0);
                kv_real[a * m + b] = Complex64::new(gv[sa * big_n + sb].re, 0.0);
            }
        }
        let fft2n = Fft2::new(m);
        fft2n.forward(&mut kx_real);
        fft2n.forward(&mut ky_real);
        fft2n.forward(&mut kv_real);
        PlanarSpectral { n, fft: Fft2::new(n), fft2n, k, kernel_x: kx_real, kernel_y: ky_real, kernel_v: kv_real }
    }

    fn convolve(&self, u: &[f64], kernels: &[&Vec<Complex64>]) -> Vec<Vec<f64>> {
        let n = self.n;
        let m = 2 * n;
        let mut buf = vec![Complex64::new(0.0, 0.0); m * m];
        for i in 0..n {
            for j in 0..n {
                buf[i * m + j] = Complex64::new(u[i * n + j], 0.0);
            }
        }
        self.fft2n.forward(&mut buf);
        kernels
            .iter()
            .map(|k| {
                let mut b: Vec<Complex64> = buf.iter().zip(k.iter()).map(|(a, b)| a * b).collect();
                self.fft2n.inverse(&mut b);
                let mut out = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..n {
                        out[i * n + j] = b[i * m + j].re;
                    }
                }
                out
            })
            .collect()
    }

    /// (∂ₓV, ∂ᵧV) for V = E₂ ∗ u.
    pub(crate) fn gradient(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut out = self.convolve(u, &[&self.kernel_x, &self.kernel_y]);
        let gy = out.pop().expect("two outputs");
        let gx = out.pop().expect("two outputs");
        (gx, gy)
    }

    /// V = E₂ ∗ u in the free-space gauge E₂ = −log|x|/2π.
    pub(crate) fn potential(&self, u: &[f64]) -> Vec<f64> {
        self.convolve(u, &[&self.kernel_v]).pop().expect("one output")
    }

    /// Multiply the spectrum of `u` by `mult(kx, ky)` and return the real part of the result.
    pub(crate) fn apply_multiplier(&self, u: &[f64], mult: impl Fn(f64, f64) -> f64 + Sync) -> Vec<f64> {
        let n = self.n;
        let mut buf: Vec<Complex64> = u.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft.forward(&mut buf);
        buf.par_chunks_mut(n).enumerate().for_each(|(a, row)| {
            for (b, z) in row.iter_mut().enumerate() {
                *z *= mult(self.k[a], self.k[b]);
            }
        });
        self.fft.inverse(&mut buf);
        buf.iter().map(|z| z.re).collect()
    }

    /// Spectral divergence of (fx, fy) with optional 2/3 dealiasing.
    pub(crate) fn divergence(&self, fx: &[f64], fy: &[f64], dealias: bool) -> Vec<f64> {
        let n = self.n;
        let cut = n as i64 / 3;
        let mut bx: Vec<Complex64> = fx.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let mut by: Vec<Complex64> = fy.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft.forward(&mut bx);
        self.fft.forward(&mut by);
        bx.par_chunks_mut(n).zip(by.par_chunks(n)).enumerate().for_each(|(a, (rx, ry))| {
            let pa = signed_index(a, n);
            for b in 0..n {
                let pb = signed_index(b, n);
                let keep = !dealias || (pa.abs() <= cut && pb.abs() <= cut);
                let nyq = pa == -(n as i64) / 2 || pb == -(n as i64) / 2;
                rx[b] = if keep && !nyq {
                    Complex64::new(0.0, self.k[a]) * rx[b] + Complex64::new(0.0, self.k[b]) * ry[b]
                } else {
                    Complex64::new(0.0, 0.0)
                };
            }
        });
        self.fft.inverse(&mut bx);
        bx.iter().map(|z| z.re).collect()
    }

    /// Gaussian propagator with dilation on a grid of half-width `l`:
    /// f ↦ (4πa)^{−1} ∫ f(η) e^{−|x − cη|²/4a} dη.
    pub(crate) fn propagate(&self, u: &[f64], l: f64, a: f64, c: f64) -> Vec<f64> {
        let n = self.n;
        if c == 1.0 {
            return self.apply_multiplier(u, |kx, ky| (-a * (kx * kx + ky * ky)).exp());
        }
        // f̂(ck) by a direct separable transform at the scaled frequencies.
        let h = 2.0 * l / n as f64;
        let x: Vec<f64> = (0..n).map(|i| -l + i as f64 * h).collect();
        let e: Vec<Complex64> = (0..n * n)
            .map(|idx| {
                let (p, j) = (idx / n, idx % n);
                let ph = -c * self.k[p] * x[j];
                Complex64::new(ph.cos(), ph.sin())
            })
            .collect();
        // b[j1][p2] = Σ_{j2} u[j1][j2] e[p2][j2]
        let mut b = vec![Complex64::new(0.0, 0.0); n * n];
        b.par_chunks_mut(n).enumerate().for_each(|(j1, row)| {
            let urow = &u[j1 * n..(j1 + 1) * n];
            for (p2, out) in row.iter_mut().enumerate() {
                let erow = &e[p2 * n..(p2 + 1) * n];
                let mut acc = Complex64::new(0.0, 0.0);
                for (uv, ev) in urow.iter().zip(erow) {
                    acc += ev * *uv;
                }
                *out = acc;
            }
        });
        // spec[p1][p2] = Σ_{j1} e[p1][j1] b[j1][p2]
        let mut spec = vec![Complex64::new(0.0, 0.0); n * n];
        spec.par_chunks_mut(n).enumerate().for_each(|(p1, row)| {
            let erow = &e[p1 * n..(p1 + 1) * n];
            for (j1, ev) in erow.iter().enumerate() {
                let brow = &b[j1 * n..(j1 + 1) * n];
                for (o, bv) in row.iter_mut().zip(brow) {
                    *o += ev * bv;
                }
            }
            let pa = signed_index(p1, n);
            for (p2, o) in row.iter_mut().enumerate() {
                let pb = signed_index(p2, n);
                let k2 = self.k[p1].powi(2) + self.k[p2].powi(2);
                let sign = if (pa + pb).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                let nyq = pa == -(n as i64) / 2 || pb == -(n as i64) / 2;
                *o = if nyq { Complex64::new(0.0, 0.0) } else { *o * (sign * h * h * (-a * k2).exp()) };
            }
        });
        // inverse: u_i = (2L)^{-2} Σ_p F̂_p e^{i k_p x_i}
        let fft = &self.fft;
        fft.inverse(&mut spec);
        let s = (n * n) as f64 / (4.0 * l * l);
        spec.iter().map(|z| z.re * s).collect()
    }
}

impl std::fmt::Debug for PlanarSpectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PlanarSpectral").field("n", &self.n).finish_non_exhaustive()
    }
}

/// Spectral data of a grid, built on first use.
pub(crate) fn spectral(grid: &CartesianGrid) -> &PlanarSpectral {
    grid.spectral.get_or_init(|| PlanarSpectral::new(grid))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft2_round_trip() {
        let n = 16;
        let f = Fft2::new(n);
        let orig: Vec<Complex64> = (0..n * n).map(|i| Complex64::new((i as f64 * 0.37).sin(), 0.0)).collect();
        let mut b = orig.clone();
        f.forward(&mut b);
        f.inverse(&mut b);
        for (a, c) in orig.iter().zip(&b) {
            assert!((a - c).norm() < 1e-13);
        }
    }

    #[test]
    fn truncated_kernel_small_k_continuous() {
        let r = 60.0;
        let a = truncated_log_kernel_hat(0.999999 / r, r);
        let b = truncated_log_kernel_hat(1.000001 / r, r);
        assert!(((a - b) / a).abs() < 1e-5);
        let z = truncated_log_kernel_hat(0.0, r);
        assert!((z - (r * r / 4.0 - r * r * r.ln() / 2.0)).abs() < 1e-12 * z.abs());
    }
}
