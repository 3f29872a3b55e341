//! Fréchet and Malliavin derivatives of the Galerkin flow.
//!
//! Both solve the linearization of the random NSE along a stored trajectory
//! `v`,
//!
//! ```text
//! dη/dt = -Aη - Q [B(η, v) + B(v, η)] - g(t) Q B(v),
//! ```
//!
//! discretized with the same step as `v`, so that `η` is the exact derivative
//! of the discrete flow. The Fréchet derivative has `g = 0`, `η(0) = h`; the
//! Malliavin derivative at `u` has `g = σ χ_{t ≥ u}` and `η = 0` up to `u`.
//!
//! A Malliavin derivative at node `t_m` responds to a noise perturbation on
//! the cell `[t_{m-1}, t_m)`: the perturbed path moves `W(t_i)` for `i ≥ m`.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{random_coeffs, SpectralBasis, VelocityCoeffs};
use crate::error::{Error, Result};
use crate::galerkin::{cumulative_trapz, LinearStep, SolverConfig, Trajectory};
use crate::wiener::{GrowthPath, StepFunction, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TangentKind {
    Frechet,
    /// Derivative with respect to the noise at grid time `u`.
    Malliavin { u: f64 },
    /// `∫ D_u v h(u) du` for a step direction `h`.
    Directional,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TangentTrajectory {
    grid: TimeGrid,
    kind: TangentKind,
    states: Vec<VelocityCoeffs>,
}

impl TangentTrajectory {
    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn kind(&self) -> TangentKind {
        self.kind
    }

    pub fn states(&self) -> &[VelocityCoeffs] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &VelocityCoeffs {
        &self.states[i]
    }

    pub fn at(&self, t: f64) -> Result<&VelocityCoeffs> {
        Ok(&self.states[self.grid.node(t)?])
    }

    pub fn sup_h(&self) -> f64 {
        self.states.iter().map(|s| s.h_norm()).fold(0.0, f64::max)
    }
}

struct Linearization<'a> {
    basis: &'a SpectralBasis,
    v: &'a Trajectory,
    q: &'a GrowthPath,
    step: LinearStep,
}

impl<'a> Linearization<'a> {
    fn new(basis: &'a SpectralBasis, v: &'a Trajectory, q: &'a GrowthPath, cfg: &SolverConfig) -> Result<Self> {
        cfg.grid.ensure_same(&v.grid(), "trajectory")?;
        cfg.grid.ensure_same(&q.grid(), "growth path")?;
        Ok(Self {
            basis,
            v,
            q,
            step: LinearStep::new(basis, cfg),
        })
    }

    /// Propagates from `eta0` at node `start`; `forcing(i)` is the coefficient
    /// of `-Q_i B(v_i)` in step `i`. Nodes before `start` are zero.
    fn run(&self, eta0: VelocityCoeffs, start: usize, forcing: impl Fn(usize) -> f64) -> Vec<VelocityCoeffs> {
        let n = self.basis.len();
        let steps = self.v.grid().n_steps();
        let mut states = Vec::with_capacity(steps + 1);
        states.resize(start.min(steps + 1), VelocityCoeffs::zeros(n));
        if start > steps {
            return states;
        }
        states.push(eta0);
        let dt = self.step.dt;
        let mut lin = vec![0.0; n];
        let mut bvv = vec![0.0; n];
        for i in start..steps {
            let eta = &states[i];
            let vi = self.v.state(i);
            let qi = self.q.values()[i];
            lin.iter_mut().for_each(|x| *x = 0.0);
            self.basis.apply_b_sym_into(eta, vi, &mut lin);
            let g = forcing(i);
            if g != 0.0 {
                bvv.iter_mut().for_each(|x| *x = 0.0);
                self.basis.apply_b_into(vi, vi, &mut bvv);
            }
            let mut next = eta.clone();
            for k in 0..n {
                let mut r = lin[k];
                if g != 0.0 {
                    r += g * bvv[k];
                }
                next.0[k] -= dt * qi * r;
            }
            self.step.propagate(&mut next.0);
            states.push(next);
        }
        states
    }
}

/// Fréchet derivative `Dv(t, f) h` along the stored trajectory.
pub fn frechet_tangent(
    basis: &SpectralBasis,
    v: &Trajectory,
    q: &GrowthPath,
    h: &VelocityCoeffs,
    cfg: &SolverConfig,
) -> Result<TangentTrajectory> {
    basis.check_dim(h)?;
    let lin = Linearization::new(basis, v, q, cfg)?;
    Ok(TangentTrajectory {
        grid: cfg.grid,
        kind: TangentKind::Frechet,
        states: lin.run(h.clone(), 0, |_| 0.0),
    })
}

/// Malliavin derivative `D_u v(t)` for a grid time `u`.
pub fn malliavin_tangent(
    basis: &SpectralBasis,
    v: &Trajectory,
    q: &GrowthPath,
    sigma: f64,
    u: f64,
    cfg: &SolverConfig,
) -> Result<TangentTrajectory> {
    let m = cfg.grid.node(u)?;
    let lin = Linearization::new(basis, v, q, cfg)?;
    Ok(TangentTrajectory {
        grid: cfg.grid,
        kind: TangentKind::Malliavin { u: cfg.grid.time(m) },
        states: lin.run(VelocityCoeffs::zeros(basis.len()), m, |i| if i >= m { sigma } else { 0.0 }),
    })
}

/// Directional derivative `∫_0^T D_u v(t) h(u) du` along a step function, in
/// one linear solve. Cell `j` of `h` is paired with `D_{t_{j+1}} v`.
pub fn malliavin_directional(
    basis: &SpectralBasis,
    v: &Trajectory,
    q: &GrowthPath,
    sigma: f64,
    h: &StepFunction,
    cfg: &SolverConfig,
) -> Result<TangentTrajectory> {
    cfg.grid.ensure_same(&h.grid(), "direction")?;
    let lin = Linearization::new(basis, v, q, cfg)?;
    let prim = h.primitive();
    Ok(TangentTrajectory {
        grid: cfg.grid,
        kind: TangentKind::Directional,
        states: lin.run(VelocityCoeffs::zeros(basis.len()), 0, |i| sigma * prim[i]),
    })
}

/// `D_u v(·)` on the u-grid `u_k = k T / M`, `k = 0..M-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MalliavinGrid {
    grid: TimeGrid,
    stride: usize,
    entries: Vec<TangentTrajectory>,
}

impl MalliavinGrid {
    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Grid index of the `k`-th u-value.
    pub fn u_index(&self, k: usize) -> usize {
        k * self.stride
    }

    pub fn u_values(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.grid.time(self.u_index(k))).collect()
    }

    pub fn entries(&self) -> &[TangentTrajectory] {
        &self.entries
    }

    /// Entry for the grid time `u`, which must lie on the u-grid.
    pub fn entry_at(&self, u: f64) -> Result<&TangentTrajectory> {
        let i = self.grid.node(u)?;
        if i % self.stride != 0 || i / self.stride >= self.len() {
            return Err(Error::OffGrid(u));
        }
        Ok(&self.entries[i / self.stride])
    }

    /// `Σ_k h(u_k - Δu) Δu D_{u_k} v`, the right-endpoint quadrature of
    /// `∫ D_u v h(u) du` on the u-grid.
    pub fn integrate_against(&self, h: &StepFunction) -> Result<Vec<VelocityCoeffs>> {
        self.grid.ensure_same(&h.grid(), "direction")?;
        let n = self.entries.first().map_or(0, |e| e.states[0].len());
        let du = self.stride as f64 * self.grid.dt();
        let mut out = vec![VelocityCoeffs::zeros(n); self.grid.len()];
        for (k, e) in self.entries.iter().enumerate().skip(1) {
            let cell = self.u_index(k) - 1;
            let w = h.values()[cell] * du;
            if w == 0.0 {
                continue;
            }
            for (o, s) in out.iter_mut().zip(&e.states) {
                o.add_scaled(w, s);
            }
        }
        Ok(out)
    }

    /// CSV with columns `u, t, norm` (`|D_u v(t)|_H`).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["u", "t", "norm"])?;
        for (k, e) in self.entries.iter().enumerate() {
            let u = self.grid.time(self.u_index(k));
            for (i, s) in e.states.iter().enumerate() {
                wtr.serialize((u, self.grid.time(i), s.h_norm()))?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Malliavin derivatives for `M` u-values from one inhomogeneous solve `ψ`
/// and `M` homogeneous ones: `D_u v(t) = ψ(t) - Φ(t, u) ψ(u)` for `t ≥ u`.
pub fn malliavin_grid(
    basis: &SpectralBasis,
    v: &Trajectory,
    q: &GrowthPath,
    sigma: f64,
    m: usize,
    cfg: &SolverConfig,
) -> Result<MalliavinGrid> {
    let n_steps = cfg.grid.n_steps();
    if m == 0 || n_steps % m != 0 {
        return Err(Error::InvalidArgument(format!(
            "u-grid size {m} must divide {n_steps} steps"
        )));
    }
    let stride = n_steps / m;
    let lin = Linearization::new(basis, v, q, cfg)?;
    let psi = lin.run(VelocityCoeffs::zeros(basis.len()), 0, |_| sigma);
    let entries = (0..m)
        .into_par_iter()
        .map(|k| {
            let start = k * stride;
            let phi = lin.run(psi[start].clone(), start, |_| 0.0);
            let states = psi
                .iter()
                .zip(phi)
                .enumerate()
                .map(|(i, (p, h))| {
                    if i <= start {
                        VelocityCoeffs::zeros(p.len())
                    } else {
                        p.sub(&h)
                    }
                })
                .collect();
            TangentTrajectory {
                grid: cfg.grid,
                kind: TangentKind::Malliavin {
                    u: cfg.grid.time(start),
                },
                states,
            }
        })
        .collect();
    Ok(MalliavinGrid {
        grid: cfg.grid,
        stride,
        entries,
    })
}

/// Largest observed amplification of the Fréchet derivative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrechetNormReport {
    pub n_probes: usize,
    /// `max_h sup_t |Dv(t,f)h|_H / |h|_H`.
    pub norm: f64,
    pub f_h: f64,
    pub sup_q: f64,
    /// Smallest `c̃ ≥ 0` with `norm ≤ exp(½ c̃ ‖Q‖²_∞ |f|²_H / (2ν))`.
    pub c_tilde: f64,
}

/// Probes the unit coordinate directions and `n_random` Gaussian directions.
pub fn frechet_norm_audit(
    basis: &SpectralBasis,
    v: &Trajectory,
    q: &GrowthPath,
    cfg: &SolverConfig,
    n_random: usize,
    seed: u64,
) -> Result<FrechetNormReport> {
    let n = basis.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probes: Vec<VelocityCoeffs> = (0..n).map(|i| VelocityCoeffs::unit(n, i)).collect();
    probes.extend((0..n_random).map(|_| random_coeffs(&mut rng, n)));
    let lin = Linearization::new(basis, v, q, cfg)?;
    let norm = probes
        .par_iter()
        .map(|h| {
            let hn = h.h_norm();
            lin.run(h.clone(), 0, |_| 0.0)
                .iter()
                .map(|s| s.h_norm() / hn)
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    if !norm.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "Fréchet derivative norm is not finite: {norm}"
        )));
    }
    let f_h = v.state(0).h_norm();
    let sup_q = q.sup_norm();
    let scale = sup_q * sup_q * f_h * f_h;
    let c_tilde = if norm <= 1.0 {
        0.0
    } else if scale == 0.0 {
        f64::INFINITY
    } else {
        4.0 * cfg.nu * norm.ln() / scale
    };
    Ok(FrechetNormReport {
        n_probes: probes.len(),
        norm,
        f_h,
        sup_q,
        c_tilde,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub u: Vec<f64>,
    /// `sup_{t ≥ u} |D_u v(t)|²_H + ν trapz∫_u^T ‖D_u v‖²_V`.
    pub lhs: Vec<f64>,
    /// `‖D_u Q‖²_∞ |f|⁴_H` per u.
    pub scale: Vec<f64>,
    /// Smallest `C_ν` admissible with `C = 0`.
    pub c_nu: f64,
    pub c: f64,
}

pub fn malliavin_moment_audit(
    basis: &SpectralBasis,
    grid: &MalliavinGrid,
    f: &VelocityCoeffs,
    q: &GrowthPath,
    nu: f64,
) -> Result<MomentReport> {
    basis.check_dim(f)?;
    grid.grid().ensure_same(&q.grid(), "growth path")?;
    let dt = grid.grid().dt();
    let f4 = f.h_norm().powi(4);
    let mut rep = MomentReport {
        u: grid.u_values(),
        lhs: Vec::with_capacity(grid.len()),
        scale: Vec::with_capacity(grid.len()),
        c_nu: 0.0,
        c: 0.0,
    };
    for (k, e) in grid.entries().iter().enumerate() {
        let start = grid.u_index(k);
        let tail = &e.states()[start..];
        let sup = tail.iter().map(|s| s.h_norm().powi(2)).fold(0.0, f64::max);
        let vsq: Vec<f64> = tail.iter().map(|s| basis.v_norm(s).powi(2)).collect();
        let integral = cumulative_trapz(dt, &vsq).last().copied().unwrap_or(0.0);
        let lhs = sup + nu * integral;
        let scale = q.malliavin_sup(start).powi(2) * f4;
        let ratio = if lhs == 0.0 {
            0.0
        } else if scale == 0.0 {
            f64::INFINITY
        } else {
            lhs / scale
        };
        rep.c_nu = rep.c_nu.max(ratio);
        rep.lhs.push(lhs);
        rep.scale.push(scale);
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{build_torus_basis, Phase};
    use crate::galerkin::{integrate_random_nse, Scheme};
    use crate::wiener::{cameron_martin_shift, growth_process, WienerPath};

    struct Setup {
        basis: SpectralBasis,
        path: WienerPath,
        q: GrowthPath,
        cfg: SolverConfig,
        f: VelocityCoeffs,
        v: Trajectory,
    }

    fn setup(n: usize, sigma: f64, scheme: Scheme) -> Setup {
        let basis = build_torus_basis(2).unwrap();
        let path = WienerPath::sample(1.0, n, 17).unwrap();
        let q = growth_process(&path, sigma);
        let cfg = SolverConfig::new(0.5, path.grid(), scheme).unwrap();
        let mut f = VelocityCoeffs::zeros(basis.len());
        f.0[basis.find_mode([0, 1], Phase::Cos).unwrap()] = 1.6;
        f.0[basis.find_mode([1, 1], Phase::Cos).unwrap()] = 1.2;
        let v = integrate_random_nse(&basis, &f, &q, &cfg).unwrap();
        Setup {
            basis,
            path,
            q,
            cfg,
            f,
            v,
        }
    }

    #[test]
    fn zero_direction_gives_zero() {
        let s = setup(64, 1.0, Scheme::ExponentialEuler);
        let h = VelocityCoeffs::zeros(s.basis.len());
        let eta = frechet_tangent(&s.basis, &s.v, &s.q, &h, &s.cfg).unwrap();
        assert!(eta.states().iter().all(|e| e.h_norm() == 0.0));
    }

    #[test]
    fn zero_flow_tangent_is_stokes_decay() {
        let s = setup(64, 1.0, Scheme::ExponentialEuler);
        let zero = VelocityCoeffs::zeros(s.basis.len());
        let v = integrate_random_nse(&s.basis, &zero, &s.q, &s.cfg).unwrap();
        let h = VelocityCoeffs((0..s.basis.len()).map(|i| i as f64 - 3.0).collect());
        let eta = frechet_tangent(&s.basis, &v, &s.q, &h, &s.cfg).unwrap();
        for (i, e) in eta.states().iter().enumerate() {
            let t = s.cfg.grid.time(i);
            for (k, mu) in s.basis.eigenvalues().iter().enumerate() {
                assert!((e.0[k] - (-0.5 * mu * t).exp() * h.0[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn frechet_matches_finite_difference() {
        for scheme in [Scheme::ExponentialEuler, Scheme::ImexEuler] {
            let s = setup(256, 1.0, scheme);
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let h = random_coeffs(&mut rng, s.basis.len());
            let eta = frechet_tangent(&s.basis, &s.v, &s.q, &h, &s.cfg).unwrap();
            let mut errs = Vec::new();
            for eps in [1e-3, 1e-4] {
                let vp = integrate_random_nse(&s.basis, &s.f.axpy(eps, &h), &s.q, &s.cfg).unwrap();
                let fd = vp.last().sub(s.v.last()).scale(1.0 / eps);
                errs.push(fd.sub(eta.states().last().unwrap()).h_norm() / eta.states().last().unwrap().h_norm());
            }
            assert!(errs[1] < 1e-3, "{errs:?}");
            let ratio = errs[0] / errs[1];
            assert!((5.0..=20.0).contains(&ratio), "{errs:?}");
        }
    }

    #[test]
    fn tangent_is_energy_neutral_in_the_transport_term() {
        let s = setup(32, 1.0, Scheme::ExponentialEuler);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let h = random_coeffs(&mut rng, s.basis.len());
        let eta = frechet_tangent(&s.basis, &s.v, &s.q, &h, &s.cfg).unwrap();
        for (e, v) in eta.states().iter().zip(s.v.states()) {
            let b = s.basis.b_form(v, e, e).unwrap();
            assert!(b.abs() < 1e-12 * (1.0 + v.h_norm() * e.h_norm().powi(2)));
        }
    }

    #[test]
    fn malliavin_is_adapted() {
        let s = setup(64, 1.0, Scheme::ExponentialEuler);
        let u = s.cfg.grid.time(20);
        let d = malliavin_tangent(&s.basis, &s.v, &s.q, 1.0, u, &s.cfg).unwrap();
        for i in 0..=20 {
            assert_eq!(d.state(i).h_norm(), 0.0);
        }
        assert!(d.state(21).h_norm() > 0.0);
        let d = malliavin_tangent(&s.basis, &s.v, &s.q, 1.0, 1.0, &s.cfg).unwrap();
        assert!(d.states().iter().all(|e| e.h_norm() == 0.0));
        assert!(malliavin_tangent(&s.basis, &s.v, &s.q, 1.0, 0.3, &s.cfg).is_err());
    }

    #[test]
    fn malliavin_vanishes_without_flow() {
        let s = setup(32, 1.0, Scheme::ExponentialEuler);
        let zero = VelocityCoeffs::zeros(s.basis.len());
        let v = integrate_random_nse(&s.basis, &zero, &s.q, &s.cfg).unwrap();
        let g = malliavin_grid(&s.basis, &v, &s.q, 1.0, 8, &s.cfg).unwrap();
        assert!(g.entries().iter().all(|e| e.sup_h() == 0.0));
    }

    #[test]
    fn grid_matches_per_u_solves() {
        let s = setup(128, 1.0, Scheme::ExponentialEuler);
        let g = malliavin_grid(&s.basis, &s.v, &s.q, 1.0, 16, &s.cfg).unwrap();
        for (k, u) in g.u_values().iter().enumerate() {
            let d = malliavin_tangent(&s.basis, &s.v, &s.q, 1.0, *u, &s.cfg).unwrap();
            for (a, b) in d.states().iter().zip(g.entries()[k].states()) {
                assert!(a.sub(b).h_norm() < 1e-10);
            }
        }
        assert!(malliavin_grid(&s.basis, &s.v, &s.q, 1.0, 3, &s.cfg).is_err());
    }

    #[test]
    fn single_u_grid_is_psi() {
        let s = setup(64, 1.0, Scheme::ExponentialEuler);
        let g = malliavin_grid(&s.basis, &s.v, &s.q, 1.0, 1, &s.cfg).unwrap();
        let h = StepFunction::constant(s.cfg.grid, 1.0);
        let lin = Linearization::new(&s.basis, &s.v, &s.q, &s.cfg).unwrap();
        let psi = lin.run(VelocityCoeffs::zeros(s.basis.len()), 0, |_| 1.0);
        assert_eq!(g.entries()[0].states()[1..], psi[1..]);
        assert!(malliavin_directional(&s.basis, &s.v, &s.q, 1.0, &h, &s.cfg).is_ok());
    }

    #[test]
    fn directional_matches_cameron_martin_shift() {
        let s = setup(128, 1.0, Scheme::ExponentialEuler);
        let h = StepFunction::indicator(s.cfg.grid, 0.0, 0.5);
        let d = malliavin_directional(&s.basis, &s.v, &s.q, 1.0, &h, &s.cfg).unwrap();
        let g = malliavin_grid(&s.basis, &s.v, &s.q, 1.0, 128, &s.cfg).unwrap();
        let via_grid = g.integrate_against(&h).unwrap();
        let eps = 1e-5;
        let shifted = cameron_martin_shift(&s.path, &h, eps).unwrap();
        let vp = integrate_random_nse(&s.basis, &s.f, &growth_process(&shifted, 1.0), &s.cfg).unwrap();
        for i in [32, 64, 128] {
            let fd = vp.state(i).sub(s.v.state(i)).scale(1.0 / eps);
            let exact = d.state(i);
            assert!(fd.sub(exact).h_norm() <= 1e-3 * exact.h_norm(), "{i}");
            assert!(via_grid[i].sub(exact).h_norm() <= 1e-10 * (1.0 + exact.h_norm()));
        }
    }

    #[test]
    fn norm_audit_examples() {
        let s = setup(64, 1.0, Scheme::ExponentialEuler);
        let zero = VelocityCoeffs::zeros(s.basis.len());
        let v0 = integrate_random_nse(&s.basis, &zero, &s.q, &s.cfg).unwrap();
        let rep = frechet_norm_audit(&s.basis, &v0, &s.q, &s.cfg, 4, 1).unwrap();
        assert!((rep.norm - 1.0).abs() < 1e-15);
        assert_eq!(rep.c_tilde, 0.0);
        let rep = frechet_norm_audit(&s.basis, &s.v, &s.q, &s.cfg, 4, 1).unwrap();
        assert!(rep.norm >= 1.0 && rep.c_tilde.is_finite());
    }

    #[test]
    fn moment_audit_examples() {
        let s = setup(64, 1.0, Scheme::ExponentialEuler);
        let g = malliavin_grid(&s.basis, &s.v, &s.q, 1.0, 8, &s.cfg).unwrap();
        let rep = malliavin_moment_audit(&s.basis, &g, &s.f, &s.q, 0.5).unwrap();
        assert!(rep.c_nu > 0.0 && rep.c_nu.is_finite());
        let i = s.basis.find_mode([1, 0], Phase::Sin).unwrap();
        let f1 = VelocityCoeffs::unit(s.basis.len(), i);
        let v1 = integrate_random_nse(&s.basis, &f1, &s.q, &s.cfg).unwrap();
        let g1 = malliavin_grid(&s.basis, &v1, &s.q, 1.0, 8, &s.cfg).unwrap();
        let rep = malliavin_moment_audit(&s.basis, &g1, &f1, &s.q, 0.5).unwrap();
        assert_eq!(rep.c_nu, 0.0);
    }

    #[test]
    fn grid_csv_rows() {
        let s = setup(8, 1.0, Scheme::ExponentialEuler);
        let g = malliavin_grid(&s.basis, &s.v, &s.q, 1.0, 2, &s.cfg).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 2 * 9);
    }
}
