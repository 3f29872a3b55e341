//! Reference Stratonovich integrator for the untransformed equation
//! `du = [-Au - B(u)] dt + σ u ∘ dW`, used to check `u = v Q`.

use crate::basis::{SpectralBasis, VelocityCoeffs};
use crate::error::Result;
use crate::galerkin::{check_stable, integrate_random_nse, SolverConfig, Trajectory, INSTABILITY_FACTOR};
use crate::wiener::{growth_process, WienerPath};

fn drift(basis: &SpectralBasis, u: &VelocityCoeffs, nu: f64, out: &mut [f64]) {
    for ((o, c), mu) in out.iter_mut().zip(&u.0).zip(basis.eigenvalues()) {
        *o = -nu * mu * c;
    }
    let mut b = vec![0.0; u.len()];
    basis.apply_b_into(u, u, &mut b);
    for (o, bx) in out.iter_mut().zip(&b) {
        *o -= bx;
    }
}

/// Stochastic Heun scheme: an Euler predictor followed by trapezoidal
/// averaging of drift and diffusion, consistent with the Stratonovich
/// product for scalar noise.
pub fn integrate_snse_direct(
    basis: &SpectralBasis,
    f: &VelocityCoeffs,
    path: &WienerPath,
    sigma: f64,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    basis.check_dim(f)?;
    cfg.grid.ensure_same(&path.grid(), "Wiener path")?;
    let q = growth_process(path, sigma);
    let threshold = INSTABILITY_FACTOR * f.h_norm() * q.sup_norm();
    let dt = cfg.dt();
    let n = basis.len();
    let mut a0 = vec![0.0; n];
    let mut a1 = vec![0.0; n];
    let mut states = Vec::with_capacity(cfg.grid.len());
    states.push(f.clone());
    for i in 0..cfg.grid.n_steps() {
        let dw = path.increment(i);
        let u = &states[i];
        drift(basis, u, cfg.nu, &mut a0);
        let pred = VelocityCoeffs(
            u.0.iter()
                .zip(&a0)
                .map(|(c, a)| c + a * dt + sigma * c * dw)
                .collect(),
        );
        drift(basis, &pred, cfg.nu, &mut a1);
        let next = VelocityCoeffs(
            (0..n)
                .map(|k| {
                    u.0[k] + 0.5 * (a0[k] + a1[k]) * dt + 0.5 * sigma * (u.0[k] + pred.0[k]) * dw
                })
                .collect(),
        );
        check_stable(i + 1, &next, threshold)?;
        states.push(next);
    }
    Ok(Trajectory::from_states(basis, cfg.grid, cfg.nu, states))
}

/// `sup_i |u_direct(t_i) - v(t_i) Q(t_i)|_H` for adapted (deterministic) `f`.
pub fn transform_check(
    basis: &SpectralBasis,
    f: &VelocityCoeffs,
    path: &WienerPath,
    sigma: f64,
    cfg: &SolverConfig,
) -> Result<f64> {
    let direct = integrate_snse_direct(basis, f, path, sigma, cfg)?;
    let q = growth_process(path, sigma);
    let v = integrate_random_nse(basis, f, &q, cfg)?;
    direct.sup_distance(&v.scaled_by(basis, &q)?)
}
