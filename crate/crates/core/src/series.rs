//! Truncated power series in one variable, enough arithmetic to expand
//! smooth kernels around a point.

use std::ops::{Add, Mul};

#[derive(Debug, Clone, PartialEq)]
pub struct Series(pub Vec<f64>);

impl Series {
    pub fn constant(c: f64, order: usize) -> Self {
        let mut v = vec![0.0; order + 1];
        v[0] = c;
        Series(v)
    }

    /// Coefficients given explicitly, padded or truncated to `order`.
    pub fn from_coeffs(c: &[f64], order: usize) -> Self {
        let mut v = vec![0.0; order + 1];
        for (a, b) in v.iter_mut().zip(c) {
            *a = *b;
        }
        Series(v)
    }

    pub fn order(&self) -> usize {
        self.0.len() - 1
    }

    pub fn coeff(&self, k: usize) -> f64 {
        self.0.get(k).copied().unwrap_or(0.0)
    }

    pub fn scale(&self, c: f64) -> Self {
        Series(self.0.iter().map(|a| a * c).collect())
    }

    /// exp of the series via b′ = a′b.
    pub fn exp(&self) -> Self {
        let k = self.order();
        let a = &self.0;
        let mut b = vec![0.0; k + 1];
        b[0] = a[0].exp();
        for m in 1..=k {
            let mut s = 0.0;
            for j in 1..=m {
                s += j as f64 * a[j] * b[m - j];
            }
            b[m] = s / m as f64;
        }
        Series(b)
    }

    /// log(1 + x) composed with this series, which must have zero constant term.
    pub fn ln_1p(&self) -> Self {
        debug_assert_eq!(self.0[0], 0.0);
        let k = self.order();
        let mut out = Series::constant(0.0, k);
        let mut pow = Series::constant(1.0, k);
        for m in 1..=k {
            pow = &pow * self;
            let sign = if m % 2 == 1 { 1.0 } else { -1.0 };
            out = &out + &pow.scale(sign / m as f64);
        }
        out
    }

    /// 1/(1 − x) composed with this series (zero constant term).
    pub fn geometric(&self) -> Self {
        let k = self.order();
        let mut out = Series::constant(1.0, k);
        let mut pow = Series::constant(1.0, k);
        for _ in 1..=k {
            pow = &pow * self;
            out = &out + &pow;
        }
        out
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }
}

impl Add for &Series {
    type Output = Series;
    fn add(self, rhs: &Series) -> Series {
        Series(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Mul for &Series {
    type Output = Series;
    fn mul(self, rhs: &Series) -> Series {
        let k = self.order();
        let mut c = vec![0.0; k + 1];
        for i in 0..=k {
            for j in 0..=k - i {
                c[i + j] += self.0[i] * rhs.0[j];
            }
        }
        Series(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_of_linear() {
        let s = Series::from_coeffs(&[0.0, 2.0], 6).exp();
        let mut f = 1.0;
        for k in 0..=6 {
            if k > 0 {
                f *= k as f64;
            }
            assert!((s.coeff(k) - 2f64.powi(k as i32) / f).abs() < 1e-14);
        }
    }

    #[test]
    fn log_and_geometric() {
        let x = Series::from_coeffs(&[0.0, 0.3, -0.1], 8);
        let l = x.ln_1p();
        let y = 0.05;
        assert!((l.eval(y) - (x.eval(y)).ln_1p()).abs() < 1e-10);
        let g = x.geometric();
        assert!((g.eval(y) - 1.0 / (1.0 - x.eval(y))).abs() < 1e-10);
    }
}
