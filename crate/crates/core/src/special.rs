//! Special functions used by the kernels: Bessel functions of order 0 and 1,
//! the spherical average of a plane Gaussian, sphere areas, and the
//! closed-form radial masses of the unit Gaussian.

use std::f64::consts::PI;

/// Surface area nωₙ of the unit sphere in ℝⁿ.
pub fn sphere_area(n: usize) -> f64 {
    let h = n as f64 / 2.0;
    2.0 * PI.powf(h) / libm::tgamma(h)
}

/// The unit Gaussian (4π)^{−n/2} e^{−r²/4}.
pub fn gaussian(n: usize, r: f64) -> f64 {
    (4.0 * PI).powf(-(n as f64) / 2.0) * (-r * r / 4.0).exp()
}

/// Mass of the unit Gaussian inside the ball of radius `r`, i.e. the
/// regularised lower incomplete gamma P(n/2, r²/4).
pub fn gaussian_ball_mass(n: usize, r: f64) -> f64 {
    let u = r * r / 4.0;
    let e = (-u).exp();
    match n {
        1 => libm::erf(r / 2.0),
        2 => -(-u).exp_m1(),
        3 => libm::erf(r / 2.0) - r / PI.sqrt() * e,
        4 => -(-u).exp_m1() - u * e,
        5 => libm::erf(r / 2.0) - r / PI.sqrt() * e - r.powi(3) * e / (6.0 * PI.sqrt()),
        _ => lower_gamma_regularized(n as f64 / 2.0, u),
    }
}

fn lower_gamma_regularized(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    // series: x^a e^{-x} Σ x^k / Γ(a+k+1)
    let mut term = 1.0 / libm::tgamma(a + 1.0);
    let mut sum = term;
    for k in 1..2000 {
        term *= x / (a + k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    (sum * x.powf(a) * (-x).exp()).min(1.0)
}

/// e^{−x}·Γ(ν+1)(2/x)^ν I_ν(x) with ν = n/2 − 1.
///
/// This is the spherical mean of e^{x cos θ} over S^{n−1}, scaled by e^{−x},
/// so the radial heat kernel can be written without overflow.
pub fn scaled_sphere_mean(n: usize, x: f64) -> f64 {
    let x = x.abs();
    match n {
        1 => 0.5 * (1.0 + (-2.0 * x).exp()),
        3 => {
            if x < 1e-8 {
                1.0 - x
            } else {
                -(-2.0 * x).exp_m1() / (2.0 * x)
            }
        }
        _ => {
            let nu = n as f64 / 2.0 - 1.0;
            if x < 25.0 {
                // power series Σ Γ(ν+1)(x/2)^{2k} / (k! Γ(k+ν+1))
                let q = x * x / 4.0;
                let mut term = 1.0;
                let mut sum = 1.0;
                let mut k = 0.0;
                loop {
                    k += 1.0;
                    term *= q / (k * (k + nu));
                    sum += term;
                    if term < 1e-17 * sum {
                        break;
                    }
                }
                sum * (-x).exp()
            } else {
                let g = libm::tgamma(nu + 1.0) * (2.0 / x).powf(nu);
                g * scaled_bessel_i_asymptotic(nu, x)
            }
        }
    }
}

// e^{-x} I_ν(x) for large x.
fn scaled_bessel_i_asymptotic(nu: f64, x: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..60 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        let next = -term * (mu - odd * odd) / (kf * 8.0 * x);
        if next.abs() > term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum / (2.0 * PI * x).sqrt()
}

/// Bessel function J₀.
pub fn bessel_j0(x: f64) -> f64 {
    bessel_j(0, x.abs())
}

/// Bessel function J₁.
pub fn bessel_j1(x: f64) -> f64 {
    let v = bessel_j(1, x.abs());
    if x < 0.0 {
        -v
    } else {
        v
    }
}

fn bessel_j(order: u32, x: f64) -> f64 {
    if x < 8.0 {
        let q = -x * x / 4.0;
        let (mut term, nu) = if order == 0 { (1.0, 0.0) } else { (x / 2.0, 1.0) };
        let mut sum = term;
        let mut k = 0.0;
        loop {
            k += 1.0;
            term *= q / (k * (k + nu));
            sum += term;
            if term.abs() < 1e-18 {
                break;
            }
        }
        sum
    } else if x < 30.0 {
        // trapezoid rule on the periodic Bessel integral; exponentially accurate
        const M: usize = 128;
        let mut sum = 0.0;
        for j in 0..M {
            let th = 2.0 * PI * j as f64 / M as f64;
            sum += (order as f64 * th - x * th.sin()).cos();
        }
        sum / M as f64
    } else {
        let nu = order as f64;
        let mu = 4.0 * nu * nu;
        let mut p = 0.0;
        let mut q = 0.0;
        let mut term = 1.0;
        for k in 0..60 {
            if k % 2 == 0 {
                p += if k % 4 == 0 { term } else { -term };
            } else {
                q += if k % 4 == 1 { term } else { -term };
            }
            let kf = (k + 1) as f64;
            let odd = 2.0 * kf - 1.0;
            let next = term * (mu - odd * odd) / (kf * 8.0 * x);
            if next.abs() > term.abs() || next.abs() < 1e-18 {
                break;
            }
            term = next;
        }
        let chi = x - (nu / 2.0 + 0.25) * PI;
        (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_areas_match_closed_forms() {
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-14);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-13);
        assert!((sphere_area(4) - 2.0 * PI * PI).abs() < 1e-13);
        assert!((sphere_area(5) - 8.0 * PI * PI / 3.0).abs() < 1e-13);
    }

    #[test]
    fn ball_masses_agree_with_series() {
        for n in 2..=5 {
            for &r in &[0.1, 0.7, 2.0, 5.0, 9.0] {
                let a = gaussian_ball_mass(n, r);
                let b = lower_gamma_regularized(n as f64 / 2.0, r * r / 4.0);
                assert!((a - b).abs() < 1e-13, "n={n} r={r}: {a} vs {b}");
            }
        }
        assert!((gaussian_ball_mass(4, 2.0) - (1.0 - 2.0 * (-1.0f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn bessel_against_oracle() {
        let mut x: f64 = 0.05;
        while x < 400.0 {
            let (j0, ..) = puruspe::besseljy(0.0, x);
            let (j1, ..) = puruspe::besseljy(1.0, x);
            let tol = 2e-14 * (1.0 + x / 10.0);
            assert!((bessel_j0(x) - j0).abs() < tol, "J0({x}) {} {}", bessel_j0(x), j0);
            assert!((bessel_j1(x) - j1).abs() < tol, "J1({x}) {} {}", bessel_j1(x), j1);
            x += 0.173;
        }
    }

    #[test]
    fn sphere_mean_against_modified_bessel() {
        for n in 2..=5 {
            let nu = n as f64 / 2.0 - 1.0;
            for &x in &[1e-3, 0.5, 3.0, 12.0, 24.9, 25.1, 40.0, 300.0] {
                let (i, _) = puruspe::Inu_Knu(nu, x);
                let want = libm::tgamma(nu + 1.0) * (2.0 / x).powf(nu) * i * (-x).exp();
                let got = scaled_sphere_mean(n, x);
                assert!(((got - want) / want).abs() < 1e-12, "n={n} x={x}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn sphere_mean_at_origin() {
        for n in 1..=5 {
            assert!((scaled_sphere_mean(n, 0.0) - 1.0).abs() < 1e-15);
        }
    }
}
