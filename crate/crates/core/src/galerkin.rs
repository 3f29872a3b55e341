//! Time integration of the pathwise random NSE `dv/dt = -Av - Q(t) B(v)` on
//! the Galerkin truncation, and audits of its energy estimates.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::basis::{SpectralBasis, StateNorms, VelocityCoeffs};
use crate::error::{Error, Result};
use crate::wiener::{GrowthPath, TimeGrid};

/// Blow-up guard factor relative to `|f|_H`.
pub const INSTABILITY_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Exact integrating factor for the Stokes part, explicit nonlinearity.
    #[default]
    ExponentialEuler,
    /// Implicit Stokes part, explicit nonlinearity.
    ImexEuler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub nu: f64,
    pub grid: TimeGrid,
    pub scheme: Scheme,
}

impl SolverConfig {
    pub fn new(nu: f64, grid: TimeGrid, scheme: Scheme) -> Result<Self> {
        if !(nu.is_finite() && nu > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "viscosity must be positive, got {nu}"
            )));
        }
        Ok(Self { nu, grid, scheme })
    }

    pub fn dt(&self) -> f64 {
        self.grid.dt()
    }

    /// Same configuration on a grid with `n_steps` steps.
    pub fn with_steps(&self, n_steps: usize) -> Result<Self> {
        Ok(Self {
            grid: TimeGrid::new(self.grid.horizon(), n_steps)?,
            ..*self
        })
    }
}

/// Diagonal propagator `P` of one step: `c⁺ = P ⊙ (c + Δt·rhs)`.
#[derive(Debug, Clone)]
pub(crate) struct LinearStep {
    pub factors: Vec<f64>,
    pub dt: f64,
}

impl LinearStep {
    pub fn new(basis: &SpectralBasis, cfg: &SolverConfig) -> Self {
        let dt = cfg.dt();
        let factors = basis
            .eigenvalues()
            .iter()
            .map(|mu| match cfg.scheme {
                Scheme::ExponentialEuler => (-cfg.nu * mu * dt).exp(),
                Scheme::ImexEuler => 1.0 / (1.0 + cfg.nu * mu * dt),
            })
            .collect();
        Self { factors, dt }
    }

    /// In-place `c ← P ⊙ c`.
    pub fn propagate(&self, c: &mut [f64]) {
        for (x, p) in c.iter_mut().zip(&self.factors) {
            *x *= p;
        }
    }
}

/// A solution sampled at every grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: TimeGrid,
    nu: f64,
    states: Vec<VelocityCoeffs>,
    norms: Vec<StateNorms>,
}

impl Trajectory {
    pub(crate) fn from_states(basis: &SpectralBasis, grid: TimeGrid, nu: f64, states: Vec<VelocityCoeffs>) -> Self {
        let norms = states.iter().map(|s| basis.norms(s, nu)).collect();
        Self {
            grid,
            nu,
            states,
            norms,
        }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn states(&self) -> &[VelocityCoeffs] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &VelocityCoeffs {
        &self.states[i]
    }

    pub fn last(&self) -> &VelocityCoeffs {
        self.states.last().expect("trajectory has at least one node")
    }

    pub fn norms(&self) -> &[StateNorms] {
        &self.norms
    }

    /// State at a grid time.
    pub fn at(&self, t: f64) -> Result<&VelocityCoeffs> {
        Ok(&self.states[self.grid.node(t)?])
    }

    pub fn sup_h(&self) -> f64 {
        self.norms.iter().fold(0.0, |m, n| m.max(n.h))
    }

    /// Componentwise product with `Q`, i.e. `u = v Q`.
    pub fn scaled_by(&self, basis: &SpectralBasis, q: &GrowthPath) -> Result<Trajectory> {
        self.grid.ensure_same(&q.grid(), "growth path")?;
        let states = self
            .states
            .iter()
            .zip(q.values())
            .map(|(v, &qi)| v.scale(qi))
            .collect();
        Ok(Self::from_states(basis, self.grid, self.nu, states))
    }

    /// `sup_i |self(t_i) - other(t_i)|_H`.
    pub fn sup_distance(&self, other: &Trajectory) -> Result<f64> {
        self.grid.ensure_same(&other.grid, "trajectory")?;
        Ok(self
            .states
            .iter()
            .zip(&other.states)
            .map(|(a, b)| a.sub(b).h_norm())
            .fold(0.0, f64::max))
    }

    /// CSV with columns `t, h_norm, v_norm, a_norm`.
    pub fn write_norms_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["t", "h_norm", "v_norm", "a_norm"])?;
        for (i, n) in self.norms.iter().enumerate() {
            wtr.serialize((self.grid.time(i), n.h, n.v, n.a))?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// One NDJSON record `{"t": .., "coeffs": [..]}` per node.
    pub fn write_states_ndjson<W: Write>(&self, mut writer: W) -> Result<()> {
        #[derive(Serialize)]
        struct Rec<'a> {
            t: f64,
            coeffs: &'a [f64],
        }
        for (i, s) in self.states.iter().enumerate() {
            serde_json::to_writer(
                &mut writer,
                &Rec {
                    t: self.grid.time(i),
                    coeffs: s.as_slice(),
                },
            )?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }
}

pub(crate) fn check_stable(step: usize, v: &VelocityCoeffs, threshold: f64) -> Result<()> {
    let norm = v.h_norm();
    if !norm.is_finite() || norm > threshold {
        return Err(Error::Instability {
            step,
            norm,
            threshold,
        });
    }
    Ok(())
}

/// Integrates `dv/dt = -Av - Q B(v)`, `v(0) = f`, with `Q` frozen at the
/// left endpoint of each step.
pub fn integrate_random_nse(
    basis: &SpectralBasis,
    f: &VelocityCoeffs,
    q: &GrowthPath,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    basis.check_dim(f)?;
    if !f.is_finite() {
        return Err(Error::InvalidArgument("initial state is not finite".into()));
    }
    cfg.grid.ensure_same(&q.grid(), "growth path")?;
    let step = LinearStep::new(basis, cfg);
    let threshold = INSTABILITY_FACTOR * f.h_norm();
    let n = basis.len();
    let mut states = Vec::with_capacity(cfg.grid.len());
    states.push(f.clone());
    let mut b = vec![0.0; n];
    for i in 0..cfg.grid.n_steps() {
        let c = &states[i];
        b.iter_mut().for_each(|x| *x = 0.0);
        basis.apply_b_into(c, c, &mut b);
        let a = -step.dt * q.values()[i];
        let mut next = c.clone();
        for (x, bx) in next.0.iter_mut().zip(&b) {
            *x += a * bx;
        }
        step.propagate(&mut next.0);
        check_stable(i + 1, &next, threshold)?;
        states.push(next);
    }
    Ok(Trajectory::from_states(basis, cfg.grid, cfg.nu, states))
}

/// Trapezoidal rule on the grid for node values `y`.
pub fn trapz(dt: f64, y: &[f64]) -> f64 {
    match y.len() {
        0 | 1 => 0.0,
        n => dt * (0.5 * (y[0] + y[n - 1]) + y[1..n - 1].iter().sum::<f64>()),
    }
}

/// Running trapezoidal integrals `∫_0^{t_i} y`.
pub fn cumulative_trapz(dt: f64, y: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(y.len());
    let mut acc = 0.0;
    if !y.is_empty() {
        out.push(0.0);
    }
    for w in y.windows(2) {
        acc += 0.5 * dt * (w[0] + w[1]);
        out.push(acc);
    }
    out
}

/// Coefficient-wise trapezoidal integral of a sequence of states.
pub fn trapz_coeffs(dt: f64, ys: &[VelocityCoeffs]) -> VelocityCoeffs {
    let n = ys.first().map_or(0, |y| y.len());
    let mut acc = VelocityCoeffs::zeros(n);
    if ys.len() < 2 {
        return acc;
    }
    let last = ys.len() - 1;
    for (i, y) in ys.iter().enumerate() {
        let w = if i == 0 || i == last { 0.5 } else { 1.0 };
        acc.add_scaled(w * dt, y);
    }
    acc
}

/// Margins of the two energy estimates for one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub dt: f64,
    pub f_norm: f64,
    pub sup_h: f64,
    /// `trapz ∫_0^T ‖v‖_V² dt`.
    pub dissipation: f64,
    /// `|f|_H² / (2ν)`.
    pub dissipation_bound: f64,
    /// `max(0, sup_t|v|_H / |f|_H - 1)`.
    pub sup_excess: f64,
    /// `max(0, dissipation / bound - 1)`.
    pub dissipation_excess: f64,
}

impl EnergyReport {
    /// Both estimates hold with relative slack `factor·Δt`.
    pub fn holds_within(&self, factor: f64) -> bool {
        let slack = factor * self.dt;
        self.sup_excess <= slack && self.dissipation_excess <= slack
    }
}

pub fn energy_audit(basis: &SpectralBasis, traj: &Trajectory, f: &VelocityCoeffs, nu: f64) -> Result<EnergyReport> {
    basis.check_dim(f)?;
    let f_norm = f.h_norm();
    let sup_h = traj.sup_h();
    let vsq: Vec<f64> = traj.norms().iter().map(|n| n.v * n.v).collect();
    let dissipation = trapz(traj.grid().dt(), &vsq);
    let dissipation_bound = f_norm * f_norm / (2.0 * nu);
    let rel = |num: f64, den: f64| {
        if den == 0.0 {
            if num == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (num / den - 1.0).max(0.0)
        }
    };
    Ok(EnergyReport {
        dt: traj.grid().dt(),
        f_norm,
        sup_h,
        dissipation,
        dissipation_bound,
        sup_excess: rel(sup_h, f_norm),
        dissipation_excess: rel(dissipation, dissipation_bound),
    })
}

/// The V-norm estimate with its smallest admissible exponent constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VNormReport {
    /// `‖f‖_V²`.
    pub f_v_sq: f64,
    pub f_h: f64,
    pub sup_q: f64,
    /// `sup_t [‖v(t)‖_V² + ν trapz∫_0^t |A₀v|² ds]` with `A₀` the
    /// viscosity-free operator.
    pub lhs: f64,
    /// `sup_t ‖v(t)‖_V² + ν trapz∫_0^T |A₀v|² ds`.
    pub lhs_full: f64,
    /// Smallest `c ≥ 0` with `lhs ≤ ‖f‖_V² exp(c |f|_H⁴ sup Q⁴)`.
    pub c_empirical: f64,
    /// The same constant for `lhs_full`.
    pub c_empirical_full: f64,
}

fn admissible_exponent(lhs: f64, base: f64, scale: f64) -> f64 {
    if lhs <= base {
        return 0.0;
    }
    if base == 0.0 || scale == 0.0 {
        return f64::INFINITY;
    }
    (lhs / base).ln() / scale
}

pub fn v_norm_audit(
    basis: &SpectralBasis,
    traj: &Trajectory,
    f: &VelocityCoeffs,
    q: &GrowthPath,
    nu: f64,
) -> Result<VNormReport> {
    basis.check_dim(f)?;
    traj.grid().ensure_same(&q.grid(), "growth path")?;
    let dt = traj.grid().dt();
    let a0sq: Vec<f64> = traj
        .states()
        .iter()
        .map(|s| basis.a_norm(s, 1.0).powi(2))
        .collect();
    let running = cumulative_trapz(dt, &a0sq);
    let vsq: Vec<f64> = traj.norms().iter().map(|n| n.v * n.v).collect();
    let lhs = vsq
        .iter()
        .zip(&running)
        .map(|(a, b)| a + nu * b)
        .fold(0.0, f64::max);
    let lhs_full = vsq.iter().copied().fold(0.0, f64::max) + nu * running.last().copied().unwrap_or(0.0);
    let f_v_sq = basis.v_norm(f).powi(2);
    let f_h = f.h_norm();
    let sup_q = q.sup_norm();
    let scale = f_h.powi(4) * sup_q.powi(4);
    Ok(VNormReport {
        f_v_sq,
        f_h,
        sup_q,
        lhs,
        lhs_full,
        c_empirical: admissible_exponent(lhs, f_v_sq, scale),
        c_empirical_full: admissible_exponent(lhs_full, f_v_sq, scale),
    })
}

/// `sup_t |v(t,f1) - v(t,f2)|_H / |f1 - f2|_H`.
pub fn flow_lipschitz_probe(
    basis: &SpectralBasis,
    f1: &VelocityCoeffs,
    f2: &VelocityCoeffs,
    q: &GrowthPath,
    cfg: &SolverConfig,
) -> Result<f64> {
    basis.check_dim(f1)?;
    basis.check_dim(f2)?;
    let d = f1.sub(f2).h_norm();
    if d == 0.0 {
        return Err(Error::InvalidArgument(
            "Lipschitz probe needs distinct initial states".into(),
        ));
    }
    let v1 = integrate_random_nse(basis, f1, q, cfg)?;
    let v2 = integrate_random_nse(basis, f2, q, cfg)?;
    let ratio = v1.sup_distance(&v2)? / d;
    if !ratio.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "Lipschitz ratio is not finite: {ratio}"
        )));
    }
    Ok(ratio)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{build_torus_basis, Phase};
    use crate::wiener::{growth_process, WienerPath};

    fn two_mode(basis: &SpectralBasis) -> VelocityCoeffs {
        let mut f = VelocityCoeffs::zeros(basis.len());
        f.0[basis.find_mode([0, 1], Phase::Cos).unwrap()] = 0.8;
        f.0[basis.find_mode([1, 1], Phase::Cos).unwrap()] = 0.6;
        f
    }

    fn setup(n: usize, sigma: f64, seed: u64) -> (SpectralBasis, GrowthPath, SolverConfig) {
        let basis = build_torus_basis(2).unwrap();
        let path = WienerPath::sample(1.0, n, seed).unwrap();
        let q = growth_process(&path, sigma);
        let cfg = SolverConfig::new(1.0, path.grid(), Scheme::ExponentialEuler).unwrap();
        (basis, q, cfg)
    }

    #[test]
    fn zero_is_a_fixed_point() {
        let (basis, q, cfg) = setup(64, 1.0, 1);
        let f = VelocityCoeffs::zeros(basis.len());
        let traj = integrate_random_nse(&basis, &f, &q, &cfg).unwrap();
        assert!(traj.states().iter().all(|s| s.h_norm() == 0.0));
    }

    #[test]
    fn single_mode_decays_exactly() {
        let (basis, q, cfg) = setup(128, 1.0, 2);
        let i = basis.find_mode([1, 1], Phase::Sin).unwrap();
        let f = VelocityCoeffs::unit(basis.len(), i).scale(0.7);
        let traj = integrate_random_nse(&basis, &f, &q, &cfg).unwrap();
        for (k, s) in traj.states().iter().enumerate() {
            let expect = 0.7 * (-2.0 * cfg.grid.time(k)).exp();
            assert!((s.0[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn imex_single_mode_is_resolvent_power() {
        let (basis, q, cfg) = setup(32, 1.0, 2);
        let cfg = SolverConfig::new(0.5, cfg.grid, Scheme::ImexEuler).unwrap();
        let f = VelocityCoeffs::unit(basis.len(), 0);
        let traj = integrate_random_nse(&basis, &f, &q, &cfg).unwrap();
        let r = 1.0 / (1.0 + 0.5 * cfg.dt());
        assert!((traj.last().0[0] - r.powi(32)).abs() < 1e-14);
    }

    #[test]
    fn two_mode_energy_holds() {
        let (basis, q, cfg) = setup(256, 1.0, 3);
        let f = two_mode(&basis);
        let traj = integrate_random_nse(&basis, &f, &q, &cfg).unwrap();
        let rep = energy_audit(&basis, &traj, &f, cfg.nu).unwrap();
        assert!(rep.holds_within(5.0), "{rep:?}");
        let vrep = v_norm_audit(&basis, &traj, &f, &q, cfg.nu).unwrap();
        assert!(vrep.c_empirical.is_finite());
    }

    #[test]
    fn two_mode_is_genuinely_nonlinear() {
        let (basis, q, cfg) = setup(64, 1.0, 3);
        let f = two_mode(&basis);
        let traj = integrate_random_nse(&basis, &f, &q, &cfg).unwrap();
        // support leaves the initial modes
        let moved: f64 = traj
            .last()
            .0
            .iter()
            .enumerate()
            .filter(|(k, _)| f.0[*k] == 0.0)
            .map(|(_, x)| x * x)
            .sum();
        assert!(moved > 1e-8, "{moved}");
    }

    #[test]
    fn single_mode_dissipation_matches_closed_form() {
        let (basis, q, cfg) = setup(1024, 1.0, 4);
        let i = basis.find_mode([1, 1], Phase::Cos).unwrap();
        let f = VelocityCoeffs::unit(basis.len(), i);
        let traj = integrate_random_nse(&basis, &f, &q, &cfg).unwrap();
        let rep = energy_audit(&basis, &traj, &f, 1.0).unwrap();
        let mu: f64 = 2.0;
        let exact = (1.0 - (-2.0 * mu).exp()) / (2.0 * mu) * mu;
        assert!((rep.dissipation - exact).abs() < 1e-5);
        assert!(rep.dissipation <= rep.dissipation_bound);
        assert_eq!(rep.sup_excess, 0.0);
        let vrep = v_norm_audit(&basis, &traj, &f, &q, 1.0).unwrap();
        assert_eq!(vrep.c_empirical, 0.0);
    }

    #[test]
    fn zero_data_audits_are_trivial() {
        let (basis, q, cfg) = setup(16, 1.0, 5);
        let f = VelocityCoeffs::zeros(basis.len());
        let traj = integrate_random_nse(&basis, &f, &q, &cfg).unwrap();
        let rep = energy_audit(&basis, &traj, &f, 1.0).unwrap();
        assert_eq!((rep.sup_h, rep.dissipation, rep.sup_excess), (0.0, 0.0, 0.0));
        let vrep = v_norm_audit(&basis, &traj, &f, &q, 1.0).unwrap();
        assert_eq!((vrep.lhs, vrep.c_empirical), (0.0, 0.0));
    }

    #[test]
    fn lipschitz_examples() {
        let (basis, q, cfg) = setup(64, 1.0, 6);
        let n = basis.len();
        let f1 = VelocityCoeffs::unit(n, 0);
        let f2 = f1.axpy(1e-3, &VelocityCoeffs::unit(n, 0));
        let r = flow_lipschitz_probe(&basis, &f1, &f2, &q, &cfg).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        let zero = VelocityCoeffs::zeros(n);
        let r = flow_lipschitz_probe(&basis, &zero, &f2.sub(&f1), &q, &cfg).unwrap();
        assert!(r <= 1.0 + 1e-12);
        assert!(flow_lipschitz_probe(&basis, &f1, &f1, &q, &cfg).is_err());
    }

    #[test]
    fn first_order_refinement() {
        let basis = build_torus_basis(2).unwrap();
        let f = two_mode(&basis).scale(3.0);
        let path = WienerPath::sample(1.0, 4096, 8).unwrap();
        let finals: Vec<VelocityCoeffs> = [256, 512, 1024]
            .iter()
            .map(|&n| {
                let p = path.coarsen(4096 / n).unwrap();
                let q = growth_process(&p, 0.5);
                let cfg = SolverConfig::new(1.0, p.grid(), Scheme::ExponentialEuler).unwrap();
                integrate_random_nse(&basis, &f, &q, &cfg).unwrap().last().clone()
            })
            .collect();
        let d1 = finals[0].sub(&finals[1]).h_norm();
        let d2 = finals[1].sub(&finals[2]).h_norm();
        assert!(d1 / d2 >= 1.8, "{d1} {d2}");
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let (basis, q, _) = setup(16, 1.0, 5);
        let cfg = SolverConfig::new(1.0, TimeGrid::new(1.0, 32).unwrap(), Scheme::ExponentialEuler).unwrap();
        let f = VelocityCoeffs::unit(basis.len(), 0);
        assert!(matches!(
            integrate_random_nse(&basis, &f, &q, &cfg),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn norms_csv_has_header() {
        let (basis, q, cfg) = setup(4, 1.0, 5);
        let f = VelocityCoeffs::unit(basis.len(), 0);
        let traj = integrate_random_nse(&basis, &f, &q, &cfg).unwrap();
        let mut buf = Vec::new();
        traj.write_norms_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("t,h_norm,v_norm,a_norm\n"));
        assert_eq!(s.lines().count(), 6);
    }
}
