use std::sync::Arc;

use proptest::prelude::*;

use pks_core::asymptotics::constant_c2;
use pks_core::diagnostics::relative_entropy;
use pks_core::fields::{
    radial_from_similarity, radial_to_similarity, CartesianField2D, CartesianGrid, Density, Field, GridKind, RadialField, RadialGrid,
};
use pks_core::potential::sup_gradient_bound_check;
use pks_core::profiles::gaussian_profile;
use pks_core::semigroup::{heat_evolve, similarity_semigroup};

/// Up to three radial bumps (amplitude, centre, width).
fn bumps() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((0.05..3.0f64, 0.0..3.0f64, 0.3..1.5f64), 1..4)
}

fn radial(dim: usize, b: &[(f64, f64, f64)]) -> RadialField {
    let g = Arc::new(RadialGrid::new(dim, GridKind::Graded, 512, 25.0).unwrap());
    RadialField::from_fn(g, |r| b.iter().map(|(a, c, w)| a * (-((r - c) / w).powi(2)).exp()).sum())
}

fn planar(b: &[(f64, f64, f64)]) -> CartesianField2D {
    let g = Arc::new(CartesianGrid::new(64, 12.0).unwrap());
    // centres spread along a line so the field is not radial
    CartesianField2D::from_fn(g, |x, y| {
        b.iter().map(|(a, c, w)| a * (-((x - c).powi(2) + (y + 0.5 * c).powi(2)) / (w * w)).exp()).sum()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn holder_interpolation(b in bumps(), dim in 2usize..=5, p in 1.0..8.0f64) {
        let f = radial(dim, &b);
        let lhs = f.lp_norm(p).unwrap();
        let rhs = f.lp_norm(1.0).unwrap().powf(1.0 / p) * f.sup_norm().powf(1.0 - 1.0 / p);
        prop_assert!(lhs <= rhs * (1.0 + 1e-12), "{lhs} > {rhs}");
    }

    #[test]
    fn moments_satisfy_cauchy_schwarz(b in bumps()) {
        let m = planar(&b).moments().unwrap();
        let c2: f64 = m.center.iter().map(|c| c * c).sum();
        prop_assert!(c2 <= m.mass * m.second_moment * (1.0 + 1e-12));
    }

    #[test]
    fn similarity_change_keeps_mass(b in bumps(), dim in 2usize..=5, k in 0usize..3) {
        let t = [0.1, 1.0, 10.0][k];
        let f = radial(dim, &b);
        let m = f.integral();
        let s = radial_to_similarity(&f, t).unwrap();
        prop_assert!(((s.integral() - m) / m).abs() <= 1e-6);
        let back = radial_from_similarity(&s, t).unwrap();
        prop_assert!(((back.integral() - m) / m).abs() <= 1e-6);
    }

    #[test]
    fn bound_ratio_ignores_amplitude(b in bumps(), dim in 2usize..=4, lambda in 1e-3..1e3f64) {
        let f = radial(dim, &b);
        let r0 = sup_gradient_bound_check(&Field::Radial(f.clone())).unwrap().ratio;
        let r1 = sup_gradient_bound_check(&Field::Radial(f.scaled(lambda))).unwrap().ratio;
        prop_assert!(((r1 - r0) / r0).abs() <= 1e-10);
    }

    #[test]
    fn entropy_part_is_nonnegative(b in bumps(), dim in 2usize..=5) {
        let e = relative_entropy(&Field::Radial(radial(dim, &b)), 1.0).unwrap();
        prop_assert!(e.entropy >= -1e-10, "{}", e.entropy);
    }

    #[test]
    fn semigroup_law_on_radial_fields(b in bumps(), dim in 2usize..=5, t1 in 0.05..1.5f64, t2 in 0.05..1.5f64) {
        let f = radial(dim, &b);
        let m = f.integral();
        let split = similarity_semigroup(&similarity_semigroup(&f, t1).unwrap(), t2).unwrap();
        let whole = similarity_semigroup(&f, t1 + t2).unwrap();
        prop_assert!(split.l1_distance(&whole) / m <= 1e-7);
        let split = heat_evolve(&heat_evolve(&f, t1).unwrap(), t2).unwrap();
        let whole = heat_evolve(&f, t1 + t2).unwrap();
        prop_assert!(split.l1_distance(&whole) / m <= 1e-7);
    }

    #[test]
    fn semigroup_law_on_planar_fields(b in bumps(), t1 in 0.05..1.0f64, t2 in 0.05..1.0f64) {
        let f = planar(&b);
        let m = f.integral();
        let split = heat_evolve(&heat_evolve(&f, t1).unwrap(), t2).unwrap();
        prop_assert!(split.l1_distance(&heat_evolve(&f, t1 + t2).unwrap()) / m <= 1e-7);
    }
}

#[test]
fn entropy_vanishes_only_at_the_gaussian() {
    let g = Arc::new(RadialGrid::new(3, GridKind::Graded, 1024, 25.0).unwrap());
    let gm = gaussian_profile(3, 2.0, &g).unwrap();
    let e = relative_entropy(&Field::Radial(gm.clone()), 0.0).unwrap().entropy;
    assert!(e.abs() <= 1e-10, "{e}");
    let bumped = RadialField::from_fn(g, |r| gm.at(r) * (1.0 + 0.2 * (-r * r).exp()));
    assert!(relative_entropy(&Field::Radial(bumped), 0.0).unwrap().entropy > 1e-6);
}

#[test]
fn c2_scales_with_mass_squared() {
    let base = constant_c2(1.0).unwrap();
    for m in [0.5, 2.0, 7.0] {
        let c = constant_c2(m).unwrap();
        assert!((c / (m * m * base) - 1.0).abs() <= 1e-12, "{m}");
    }
}
