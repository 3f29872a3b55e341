use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use snse::basis::{build_torus_basis, random_coeffs, Mode, SpectralBasis, VelocityCoeffs};

const Q: usize = 64;

fn nodes() -> impl Iterator<Item = [f64; 2]> {
    let h = 2.0 * PI / Q as f64;
    (0..Q).flat_map(move |a| (0..Q).map(move |b| [a as f64 * h, b as f64 * h]))
}

fn weight() -> f64 {
    (2.0 * PI / Q as f64).powi(2)
}

/// `∫ (e_i·∇) e_j · e_l dx` by the periodic trapezoid rule, exact for the
/// trigonometric degrees involved.
fn b_quadrature(mi: &Mode, mj: &Mode, ml: &Mode) -> f64 {
    nodes()
        .map(|x| {
            let u = mi.velocity(x);
            let g = mj.gradient(x);
            let w = ml.velocity(x);
            (0..2)
                .map(|c| (u[0] * g[0][c] + u[1] * g[1][c]) * w[c])
                .sum::<f64>()
        })
        .sum::<f64>()
        * weight()
}

fn inner(a: &Mode, b: &Mode) -> f64 {
    nodes()
        .map(|x| {
            let (u, v) = (a.velocity(x), b.velocity(x));
            u[0] * v[0] + u[1] * v[1]
        })
        .sum::<f64>()
        * weight()
}

#[test]
fn every_k2_entry_matches_quadrature() {
    let basis = build_torus_basis(2).unwrap();
    let modes = basis.modes().unwrap();
    let n = modes.len();
    for i in 0..n {
        for j in 0..n {
            for l in 0..n {
                let q = b_quadrature(&modes[i], &modes[j], &modes[l]);
                let e = basis.entry(i, j, l);
                assert!((q - e).abs() < 1e-10, "({i},{j},{l}) quadrature {q} stored {e}");
            }
        }
    }
}

#[test]
fn random_k3_triples_match_quadrature() {
    let basis = build_torus_basis(3).unwrap();
    let modes = basis.modes().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let (i, j, l) = (
            rng.random_range(0..modes.len()),
            rng.random_range(0..modes.len()),
            rng.random_range(0..modes.len()),
        );
        let q = b_quadrature(&modes[i], &modes[j], &modes[l]);
        assert!((q - basis.entry(i, j, l)).abs() < 1e-8, "({i},{j},{l})");
    }
}

#[test]
fn modes_are_orthonormal_and_divergence_free() {
    let basis = build_torus_basis(2).unwrap();
    let modes = basis.modes().unwrap();
    for (i, a) in modes.iter().enumerate() {
        for (j, b) in modes.iter().enumerate() {
            let expect = if i == j { 1.0 } else { 0.0 };
            assert!((inner(a, b) - expect).abs() < 1e-12, "({i},{j})");
        }
        for x in nodes().step_by(97) {
            let g = a.gradient(x);
            assert!((g[0][0] + g[1][1]).abs() < 1e-14);
        }
        assert_eq!(basis.eigenvalues()[i], a.norm_sq() as f64);
    }
}

#[test]
fn self_transport_of_a_single_mode_vanishes() {
    let basis = build_torus_basis(2).unwrap();
    let modes = basis.modes().unwrap();
    for (k, m) in modes.iter().enumerate() {
        for ml in modes {
            assert!(b_quadrature(m, m, ml).abs() < 1e-12);
        }
        let e = VelocityCoeffs::unit(basis.len(), k);
        assert_eq!(basis.apply_b(&e, &e).unwrap().h_norm(), 0.0);
    }
}

fn k2() -> &'static SpectralBasis {
    use std::sync::OnceLock;
    static B: OnceLock<SpectralBasis> = OnceLock::new();
    B.get_or_init(|| build_torus_basis(2).unwrap())
}

fn coeffs() -> impl Strategy<Value = VelocityCoeffs> {
    prop::collection::vec(-2.0f64..2.0, k2().len()).prop_map(VelocityCoeffs)
}

proptest! {
    #[test]
    fn trilinear_form_is_antisymmetric(u in coeffs(), v in coeffs(), w in coeffs()) {
        let b = k2();
        let scale = u.h_norm() * b.v_norm(&v) * b.v_norm(&w) + 1e-300;
        prop_assert!(b.b_form(&u, &v, &v).unwrap().abs() <= 1e-12 * scale.max(1.0));
        let s = b.b_form(&u, &v, &w).unwrap() + b.b_form(&u, &w, &v).unwrap();
        prop_assert!(s.abs() <= 1e-12 * scale.max(1.0));
        let via_apply = b.apply_b(&u, &v).unwrap().dot(&w);
        prop_assert!((via_apply - b.b_form(&u, &v, &w).unwrap()).abs() <= 1e-12 * scale.max(1.0));
    }

    #[test]
    fn stokes_operator_identities(v in coeffs(), nu in 0.1f64..5.0) {
        let b = k2();
        let av = b.apply_a(&v, nu);
        prop_assert!((av.dot(&v) - nu * b.v_norm(&v).powi(2)).abs() <= 1e-12 * av.dot(&v).abs().max(1.0));
        prop_assert!(v.h_norm() <= b.v_norm(&v) / b.mu_min().sqrt() + 1e-12);
        prop_assert!((b.apply_a(&v, 2.0 * nu).h_norm() - 2.0 * av.h_norm()).abs() <= 1e-12 * av.h_norm().max(1.0));
    }

    #[test]
    fn convective_term_is_bilinear(u in coeffs(), v in coeffs(), w in coeffs(), a in -3.0f64..3.0) {
        let b = k2();
        let lhs = b.apply_b(&u.axpy(a, &w), &v).unwrap();
        let rhs = b.apply_b(&u, &v).unwrap().axpy(a, &b.apply_b(&w, &v).unwrap());
        prop_assert!(lhs.sub(&rhs).h_norm() <= 1e-12 * (1.0 + lhs.h_norm()));
    }
}

#[test]
fn random_coefficients_give_orthogonal_transport() {
    let basis = build_torus_basis(3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let u = random_coeffs(&mut rng, basis.len());
        let v = random_coeffs(&mut rng, basis.len());
        let scale = u.h_norm() * basis.v_norm(&v) * v.h_norm();
        assert!(basis.apply_b(&u, &v).unwrap().dot(&v).abs() <= 1e-12 * scale);
    }
}
