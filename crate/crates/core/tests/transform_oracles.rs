use snse::basis::{build_torus_basis, Phase, SpectralBasis, VelocityCoeffs};
use snse::direct::{integrate_snse_direct, transform_check};
use snse::galerkin::{Scheme, SolverConfig};
use snse::wiener::WienerPath;

fn two_mode(basis: &SpectralBasis) -> VelocityCoeffs {
    let mut f = VelocityCoeffs::zeros(basis.len());
    f.0[basis.find_mode([0, 1], Phase::Cos).unwrap()] = 0.8;
    f.0[basis.find_mode([1, 1], Phase::Cos).unwrap()] = 0.6;
    f
}

fn cfg(path: &WienerPath) -> SolverConfig {
    SolverConfig::new(1.0, path.grid(), Scheme::ExponentialEuler).unwrap()
}

#[test]
fn single_mode_gap_halves() {
    let basis = build_torus_basis(1).unwrap();
    let f = VelocityCoeffs::unit(basis.len(), 0);
    let mut gaps = [0.0f64; 4];
    for s in 0..16 {
        let fine = WienerPath::sample_indexed(1.0, 1 << 14, 21, s).unwrap();
        for (g, p) in gaps.iter_mut().zip(11..=14) {
            let path = fine.coarsen(1 << (14 - p)).unwrap();
            *g += transform_check(&basis, &f, &path, 1.0, &cfg(&path)).unwrap() / 16.0;
        }
    }
    assert!(gaps[1] <= 1e-3, "{gaps:?}");
    for w in gaps.windows(2) {
        let r = w[0] / w[1];
        assert!((1.6..=2.6).contains(&r), "{gaps:?}");
    }
}

#[test]
fn single_mode_direct_solution_matches_closed_form() {
    let basis = build_torus_basis(2).unwrap();
    let k = basis.find_mode([1, 1], Phase::Sin).unwrap();
    let f = VelocityCoeffs::unit(basis.len(), k).scale(0.5);
    let path = WienerPath::sample(1.0, 4096, 2).unwrap();
    let u = integrate_snse_direct(&basis, &f, &path, 0.5, &cfg(&path)).unwrap();
    for i in (0..=4096).step_by(256) {
        let t = path.grid().time(i);
        let exact = 0.5 * (-2.0 * t + 0.5 * path.values()[i]).exp();
        assert!((u.state(i).0[k] - exact).abs() < 2e-3 * exact);
    }
}

#[test]
fn two_mode_ensemble_converges_at_first_order() {
    let basis = build_torus_basis(2).unwrap();
    let f = two_mode(&basis);
    let levels = [256usize, 512, 1024, 2048];
    let mut mean = [0.0f64; 4];
    for s in 0..32 {
        let fine = WienerPath::sample_indexed(1.0, 2048, 77, s).unwrap();
        for (m, &n) in mean.iter_mut().zip(&levels) {
            let path = fine.coarsen(2048 / n).unwrap();
            *m += transform_check(&basis, &f, &path, 0.5, &cfg(&path)).unwrap() / 32.0;
        }
    }
    let order = (mean[0] / mean[3]).log2() / 3.0;
    assert!(order >= 0.9, "{mean:?}");
}

#[test]
fn sigma_zero_direct_and_transformed_agree() {
    let basis = build_torus_basis(2).unwrap();
    let f = two_mode(&basis);
    let path = WienerPath::sample(1.0, 4096, 3).unwrap();
    let gap = transform_check(&basis, &f, &path, 0.0, &cfg(&path)).unwrap();
    // both schemes are first order in Δt on the same deterministic equation
    assert!(gap < 2.0 * path.grid().dt() * f.h_norm(), "{gap}");
}
