//! The anticipating solution `u(t, Y) = v(t, Y) Q(t)` for noise-dependent
//! initial fields, its Skorohod and Stratonovich integrals, and the residual
//! of the anticipating equation
//!
//! ```text
//! u(t) = Y - ∫_0^t Au ds - ∫_0^t B(u) ds + σ ∫_0^t u ∘ dW.
//! ```
//!
//! The Skorohod integral is estimated through step processes on a partition
//! `0 = p_0 < … < p_r = t`:
//!
//! ```text
//! δ(Σ_i v(p_i, Y) Q χ_(p_i, p_{i+1}]) = Σ_i v(p_i, Y) ∫ Q dW - Σ_i ∫ Dv(p_i, Y)(D_s Y) Q(s) ds,
//! ```
//!
//! where only the Fréchet part of `D_s v(p_i, Y)` survives on the cell
//! because `v(p_i, f)` is adapted for fixed `f`.

mod field;

pub use field::{Expr, FieldComponent, RandomInitialField};

use serde::{Deserialize, Serialize};

use crate::basis::{SpectralBasis, VelocityCoeffs};
use crate::error::{Error, Result};
use crate::galerkin::{integrate_random_nse, trapz_coeffs, Scheme, SolverConfig, Trajectory};
use crate::tangent::{frechet_tangent, malliavin_directional, malliavin_grid, MalliavinGrid, TangentTrajectory};
use crate::wiener::{growth_process, GrowthPath, StepFunction, TimeGrid, WienerPath};

/// Quadrature for `∫ Au ds` and `∫ B(u) ds`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftQuadrature {
    /// Per-step increments of the time-stepping scheme weighted by
    /// `Q(t_{k+1})`; telescopes exactly against `u(t) - Y` when `σ = 0`.
    #[default]
    Scheme,
    Trapezoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AnticipatingOptions {
    /// Size of the stored Malliavin grid of `v`; `None` skips it.
    pub malliavin_points: Option<usize>,
    pub drift: DriftQuadrature,
}

/// An interval of `s` on which `D_s Y` is constant and nonzero, with the
/// tangent `Dv(·, Y)(D_s Y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub direction: VelocityCoeffs,
    pub tangent: TangentTrajectory,
}

#[derive(Debug, Clone)]
pub struct AnticipatingRun {
    field: RandomInitialField,
    path: WienerPath,
    sigma: f64,
    cfg: SolverConfig,
    q: GrowthPath,
    y: VelocityCoeffs,
    v: Trajectory,
    u: Trajectory,
    segments: Vec<Segment>,
    /// Segment covering each grid cell `[t_k, t_{k+1})`; the final node is
    /// never covered.
    cell_segment: Vec<Option<usize>>,
    malliavin: Option<MalliavinGrid>,
    /// Cumulative Itô sums of `∫ Q dW` at every node.
    ito_cumulative: Vec<f64>,
    drift: DriftQuadrature,
}

impl AnticipatingRun {
    pub fn field(&self) -> &RandomInitialField {
        &self.field
    }

    pub fn path(&self) -> &WienerPath {
        &self.path
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn grid(&self) -> TimeGrid {
        self.cfg.grid
    }

    pub fn growth(&self) -> &GrowthPath {
        &self.q
    }

    /// `Y(ω)`.
    pub fn initial(&self) -> &VelocityCoeffs {
        &self.y
    }

    pub fn v(&self) -> &Trajectory {
        &self.v
    }

    pub fn u(&self) -> &Trajectory {
        &self.u
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn malliavin_grid(&self) -> Option<&MalliavinGrid> {
        self.malliavin.as_ref()
    }

    /// `sup_t |u(t)|_H`.
    pub fn scale(&self) -> f64 {
        self.u.sup_h()
    }

    fn segment_at(&self, k: usize) -> Option<&Segment> {
        self.cell_segment
            .get(k)
            .copied()
            .flatten()
            .map(|i| &self.segments[i])
    }

    fn zeros(&self) -> VelocityCoeffs {
        VelocityCoeffs::zeros(self.y.len())
    }

    /// `D⁻(s) = Q(s) Dv(s, Y)(D_s Y)` at node `k`.
    fn d_minus_at(&self, k: usize) -> VelocityCoeffs {
        match self.segment_at(k) {
            Some(seg) => seg.tangent.state(k).scale(self.q.values()[k]),
            None => self.zeros(),
        }
    }
}

/// Evaluates `Y`, solves for `v(·, Y)`, forms `u = v Q` and the tangents
/// needed by the Skorohod correction.
pub fn solve_anticipating(
    basis: &SpectralBasis,
    field: &RandomInitialField,
    path: &WienerPath,
    sigma: f64,
    cfg: &SolverConfig,
    opts: &AnticipatingOptions,
) -> Result<AnticipatingRun> {
    if field.n_modes() != basis.len() {
        return Err(Error::DimensionMismatch {
            expected: basis.len(),
            got: field.n_modes(),
        });
    }
    let grid = path.grid();
    cfg.grid.ensure_same(&grid, "Wiener path")?;
    let q = growth_process(path, sigma);
    let (y, grads) = field.evaluate_with_gradient(path)?;
    let v = integrate_random_nse(basis, &y, &q, cfg)?;
    let u = v.scaled_by(basis, &q)?;

    let nodes = field.nodes(&grid)?;
    let mut bounds: Vec<usize> = nodes.clone();
    bounds.push(0);
    bounds.sort_unstable();
    bounds.dedup();
    let mut segments = Vec::new();
    let mut cell_segment = vec![None; grid.len()];
    for (j, &start) in bounds.iter().enumerate() {
        let end = bounds.get(j + 1).copied().unwrap_or(grid.n_steps());
        let mut direction = VelocityCoeffs::zeros(basis.len());
        for (&l, g) in nodes.iter().zip(&grads) {
            if l > start {
                direction.add_scaled(1.0, g);
            }
        }
        if start >= end || direction.h_norm() == 0.0 {
            continue;
        }
        let tangent = frechet_tangent(basis, &v, &q, &direction, cfg)?;
        cell_segment[start..end].fill(Some(segments.len()));
        segments.push(Segment {
            start,
            end,
            direction,
            tangent,
        });
    }

    let malliavin = opts
        .malliavin_points
        .map(|m| malliavin_grid(basis, &v, &q, sigma, m, cfg))
        .transpose()?;

    let dt = grid.dt();
    let mut ito_cumulative = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    ito_cumulative.push(acc);
    for k in 0..grid.n_steps() {
        let dw = path.increment(k);
        acc += q.values()[k] * (dw + 0.5 * sigma * (dw * dw - dt));
        ito_cumulative.push(acc);
    }

    Ok(AnticipatingRun {
        field: field.clone(),
        path: path.clone(),
        sigma,
        cfg: *cfg,
        q,
        y,
        v,
        u,
        segments,
        cell_segment,
        malliavin,
        ito_cumulative,
        drift: opts.drift,
    })
}

/// Partition nodes `0 = P_0 < … < P_r` on the run's grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    grid: TimeGrid,
    nodes: Vec<usize>,
}

impl Partition {
    pub fn from_nodes(grid: TimeGrid, nodes: Vec<usize>) -> Result<Self> {
        if nodes.first() != Some(&0) {
            return Err(Error::Partition("must start at 0".into()));
        }
        if nodes.len() < 2 {
            return Err(Error::Partition("needs at least one cell".into()));
        }
        if let Some(w) = nodes.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Partition(format!(
                "nodes must increase strictly: {} then {}",
                w[0], w[1]
            )));
        }
        if *nodes.last().unwrap() > grid.n_steps() {
            return Err(Error::Partition(format!(
                "node {} beyond the grid of {} steps",
                nodes.last().unwrap(),
                grid.n_steps()
            )));
        }
        Ok(Self { grid, nodes })
    }

    pub fn from_times(grid: TimeGrid, times: &[f64]) -> Result<Self> {
        let nodes = times
            .iter()
            .map(|&t| grid.node(t))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Partition(e.to_string()))?;
        Self::from_nodes(grid, nodes)
    }

    /// Mesh `factor · Δt` from 0 up to `t`; the last cell may be shorter.
    pub fn uniform(grid: TimeGrid, factor: usize, t: f64) -> Result<Self> {
        if factor == 0 {
            return Err(Error::Partition("partition factor must be positive".into()));
        }
        let end = grid.node(t).map_err(|e| Error::Partition(e.to_string()))?;
        let mut nodes: Vec<usize> = (0..end).step_by(factor).collect();
        nodes.push(end);
        Self::from_nodes(grid, nodes)
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn end(&self) -> usize {
        *self.nodes.last().unwrap()
    }

    pub fn end_time(&self) -> f64 {
        self.grid.time(self.end())
    }

    pub fn mesh(&self) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| (w[1] - w[0]) as f64 * self.grid.dt())
            .fold(0.0, f64::max)
    }
}

/// `Σ_i F_i X_i - Σ_i C_i`: Skorohod integral of the step process with values
/// `F_i` against increments `X_i`, with trace corrections `C_i`.
pub fn skorohod_step_process(values: &[VelocityCoeffs], increments: &[f64], traces: &[VelocityCoeffs]) -> Result<VelocityCoeffs> {
    if values.len() != increments.len() || values.len() != traces.len() {
        return Err(Error::Partition(format!(
            "{} values, {} increments and {} traces",
            values.len(),
            increments.len(),
            traces.len()
        )));
    }
    let n = values.first().map_or(0, |v| v.len());
    let mut out = VelocityCoeffs::zeros(n);
    for ((f, x), c) in values.iter().zip(increments).zip(traces) {
        out.add_scaled(*x, f);
        out.add_scaled(-1.0, c);
    }
    Ok(out)
}

fn check_partition(run: &AnticipatingRun, partition: &Partition) -> Result<()> {
    run.grid()
        .ensure_same(&partition.grid, "partition")
        .map_err(|e| Error::Partition(e.to_string()))
}

/// Forward sum `Σ_i v(p_i, Y) ∫_{p_i}^{p_{i+1}} Q dW` without the Skorohod
/// correction.
pub fn forward_integral(run: &AnticipatingRun, partition: &Partition) -> Result<VelocityCoeffs> {
    check_partition(run, partition)?;
    let mut out = run.zeros();
    for w in partition.nodes.windows(2) {
        let inc = run.ito_cumulative[w[1]] - run.ito_cumulative[w[0]];
        out.add_scaled(inc, run.v.state(w[0]));
    }
    Ok(out)
}

/// Per-cell trace corrections `∫_{p_i}^{p_{i+1}} Q(s) Dv(p_i, Y)(D_s Y) ds`,
/// left-point rule on the fine cells.
pub fn skorohod_corrections(run: &AnticipatingRun, partition: &Partition) -> Result<Vec<VelocityCoeffs>> {
    check_partition(run, partition)?;
    let dt = run.grid().dt();
    Ok(partition
        .nodes
        .windows(2)
        .map(|w| {
            let mut c = run.zeros();
            for k in w[0]..w[1] {
                if let Some(seg) = run.segment_at(k) {
                    c.add_scaled(run.q.values()[k] * dt, seg.tangent.state(w[0]));
                }
            }
            c
        })
        .collect())
}

pub fn skorohod_integral(run: &AnticipatingRun, partition: &Partition) -> Result<VelocityCoeffs> {
    check_partition(run, partition)?;
    let values: Vec<VelocityCoeffs> = partition.nodes[..partition.nodes.len() - 1]
        .iter()
        .map(|&i| run.v.state(i).clone())
        .collect();
    let increments: Vec<f64> = partition
        .nodes
        .windows(2)
        .map(|w| run.ito_cumulative[w[1]] - run.ito_cumulative[w[0]])
        .collect();
    skorohod_step_process(&values, &increments, &skorohod_corrections(run, partition)?)
}

/// One-sided traces of `D_s u(t)` at a grid time `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct OneSided {
    /// Limit as `t ↑ s`: `Q(s) Dv(s, Y)(D_s Y)`.
    pub minus: VelocityCoeffs,
    /// Limit as `t ↓ s`: `D⁻(s) + σ u(s)`.
    pub plus: VelocityCoeffs,
}

impl OneSided {
    /// `∇u(s) = ½ (D⁺ + D⁻)`.
    pub fn nabla(&self) -> VelocityCoeffs {
        self.minus.axpy(1.0, &self.plus).scale(0.5)
    }
}

pub fn one_sided(run: &AnticipatingRun, s: f64) -> Result<OneSided> {
    let k = run.grid().node(s)?;
    let minus = run.d_minus_at(k);
    let plus = minus.axpy(run.sigma, run.u.state(k));
    Ok(OneSided { minus, plus })
}

pub fn nabla_u(run: &AnticipatingRun, s: f64) -> Result<VelocityCoeffs> {
    Ok(one_sided(run, s)?.nabla())
}

fn trapz_upto(run: &AnticipatingRun, end: usize, f: impl Fn(usize) -> VelocityCoeffs) -> VelocityCoeffs {
    let values: Vec<VelocityCoeffs> = (0..=end).map(f).collect();
    trapz_coeffs(run.grid().dt(), &values)
}

/// `Sk + trapz∫_0^t ∇u ds`.
pub fn stratonovich_integral(run: &AnticipatingRun, partition: &Partition) -> Result<VelocityCoeffs> {
    let sk = skorohod_integral(run, partition)?;
    let nabla = trapz_upto(run, partition.end(), |k| {
        let m = run.d_minus_at(k);
        m.axpy(0.5 * run.sigma, run.u.state(k))
    });
    Ok(sk.axpy(1.0, &nabla))
}

/// `(∫_0^{t_end} Au ds, ∫_0^{t_end} B(u) ds)` under the run's drift rule.
pub fn drift_integrals(basis: &SpectralBasis, run: &AnticipatingRun, end: usize) -> Result<(VelocityCoeffs, VelocityCoeffs)> {
    basis.check_dim(&run.y)?;
    let nu = run.cfg.nu;
    let dt = run.grid().dt();
    let qv = run.q.values();
    let n = basis.len();
    match run.drift {
        DriftQuadrature::Trapezoid => {
            let a = trapz_upto(run, end, |k| basis.apply_a(run.u.state(k), nu));
            let b = trapz_upto(run, end, |k| {
                let u = run.u.state(k);
                let mut out = VelocityCoeffs::zeros(n);
                basis.apply_b_into(u, u, &mut out.0);
                out
            });
            Ok((a, b))
        }
        DriftQuadrature::Scheme => {
            let mut a = VelocityCoeffs::zeros(n);
            let mut b = VelocityCoeffs::zeros(n);
            let mut bv = vec![0.0; n];
            for k in 0..end {
                let vk = run.v.state(k);
                let q1 = qv[k + 1];
                bv.iter_mut().for_each(|x| *x = 0.0);
                basis.apply_b_into(vk, vk, &mut bv);
                for (i, mu) in basis.eigenvalues().iter().enumerate() {
                    match run.cfg.scheme {
                        Scheme::ExponentialEuler => {
                            let e = (-nu * mu * dt).exp();
                            a.0[i] += q1 * (1.0 - e) * vk.0[i];
                            b.0[i] += q1 * dt * e * qv[k] * bv[i];
                        }
                        Scheme::ImexEuler => {
                            a.0[i] += q1 * dt * nu * mu * run.v.state(k + 1).0[i];
                            b.0[i] += q1 * dt * qv[k] * bv[i];
                        }
                    }
                }
            }
            Ok((a, b))
        }
    }
}

/// All terms of the anticipating equation at the partition end `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualTerms {
    pub t: f64,
    pub u_t: VelocityCoeffs,
    pub y: VelocityCoeffs,
    pub int_a: VelocityCoeffs,
    pub int_b: VelocityCoeffs,
    pub skorohod: VelocityCoeffs,
    pub stratonovich: VelocityCoeffs,
    /// `trapz∫_0^t u ds`.
    pub int_u: VelocityCoeffs,
    /// `trapz∫_0^t Q(s) Dv(s, Y)(D_s Y) ds`.
    pub int_d_minus: VelocityCoeffs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub t: f64,
    /// `|u(t) - Y + ∫Au + ∫B(u) - σ Sk - ½σ² ∫u - σ ∫D⁻|_H`.
    pub ito: f64,
    /// `|u(t) - Y + ∫Au + ∫B(u) - σ ∫u∘dW|_H`.
    pub stratonovich: f64,
    /// The Itô form without the `σ ∫D⁻` correction.
    pub ablated: f64,
    /// `sup_t |u(t)|_H` over the whole run.
    pub scale: f64,
}

pub fn residual_terms(basis: &SpectralBasis, run: &AnticipatingRun, partition: &Partition) -> Result<ResidualTerms> {
    let end = partition.end();
    let (int_a, int_b) = drift_integrals(basis, run, end)?;
    Ok(ResidualTerms {
        t: partition.end_time(),
        u_t: run.u.state(end).clone(),
        y: run.y.clone(),
        int_a,
        int_b,
        skorohod: skorohod_integral(run, partition)?,
        stratonovich: stratonovich_integral(run, partition)?,
        int_u: trapz_upto(run, end, |k| run.u.state(k).clone()),
        int_d_minus: trapz_upto(run, end, |k| run.d_minus_at(k)),
    })
}

impl ResidualTerms {
    fn base(&self) -> VelocityCoeffs {
        self.u_t.sub(&self.y).axpy(1.0, &self.int_a).axpy(1.0, &self.int_b)
    }

    pub fn report(&self, sigma: f64, scale: f64) -> ResidualReport {
        let base = self.base();
        let ablated = base
            .axpy(-sigma, &self.skorohod)
            .axpy(-0.5 * sigma * sigma, &self.int_u);
        let ito = ablated.axpy(-sigma, &self.int_d_minus);
        let strat = base.axpy(-sigma, &self.stratonovich);
        ResidualReport {
            t: self.t,
            ito: ito.h_norm(),
            stratonovich: strat.h_norm(),
            ablated: ablated.h_norm(),
            scale,
        }
    }
}

pub fn residual_anticipating(basis: &SpectralBasis, run: &AnticipatingRun, partition: &Partition) -> Result<ResidualReport> {
    Ok(residual_terms(basis, run, partition)?.report(run.sigma, run.scale()))
}

/// Residuals at each `t` of a sweep with partition mesh `factor · Δt`.
pub fn residual_sweep(basis: &SpectralBasis, run: &AnticipatingRun, factor: usize, times: &[f64]) -> Result<Vec<ResidualReport>> {
    times
        .iter()
        .map(|&t| residual_anticipating(basis, run, &Partition::uniform(run.grid(), factor, t)?))
        .collect()
}

/// Discrete `D_s u(t)` from the stored Malliavin grid, `s` on the u-grid:
/// `Q(t) [D_s v(t, f)|_{f=Y} + Dv(t, Y)(D_s Y)] + σ Q(t) χ_{s ≤ t} v(t)`.
pub fn malliavin_u(run: &AnticipatingRun, s: f64, t: f64) -> Result<VelocityCoeffs> {
    let grid = run.malliavin.as_ref().ok_or_else(|| {
        Error::InvalidArgument("run was solved without a Malliavin grid".into())
    })?;
    let ks = run.grid().node(s)?;
    let kt = run.grid().node(t)?;
    let qt = run.q.values()[kt];
    let mut d = grid.entry_at(s)?.state(kt).clone();
    if let Some(seg) = run.segment_at(ks) {
        d.add_scaled(1.0, seg.tangent.state(kt));
    }
    let mut out = d.scale(qt);
    if ks <= kt {
        out.add_scaled(run.sigma * qt, run.v.state(kt));
    }
    Ok(out)
}

/// `∫ D_s u(t) h(s) ds` at every node, from one Malliavin and one Fréchet
/// solve; the exact derivative of the discrete solution along the shift
/// `W + ε∫h`.
pub fn directional_u(basis: &SpectralBasis, run: &AnticipatingRun, h: &StepFunction) -> Result<Vec<VelocityCoeffs>> {
    let dv = malliavin_directional(basis, &run.v, &run.q, run.sigma, h, &run.cfg)?;
    let dy = run.field.directional(&run.path, h)?;
    let fr = frechet_tangent(basis, &run.v, &run.q, &dy, &run.cfg)?;
    let prim = h.primitive();
    Ok((0..run.grid().len())
        .map(|k| {
            let qk = run.q.values()[k];
            dv.state(k)
                .axpy(1.0, fr.state(k))
                .scale(qk)
                .axpy(run.sigma * prim[k] * qk, run.v.state(k))
        })
        .collect())
}

/// Residuals at one refinement level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub n_steps: usize,
    pub dt: f64,
    pub mesh: f64,
    pub residuals: Vec<ResidualReport>,
}

/// Solves on coarsenings of `fine` with `n_steps ∈ levels` and partition
/// mesh `factor · Δt`, evaluating the residual at `t = frac · T`.
#[allow(clippy::too_many_arguments)]
pub fn refinement_study(
    basis: &SpectralBasis,
    field: &RandomInitialField,
    fine: &WienerPath,
    sigma: f64,
    nu: f64,
    scheme: Scheme,
    levels: &[usize],
    factor: usize,
    t_fractions: &[f64],
) -> Result<Vec<LevelReport>> {
    levels
        .iter()
        .map(|&n| {
            if n == 0 || fine.n_steps() % n != 0 {
                return Err(Error::InvalidArgument(format!(
                    "level {n} does not divide the fine path of {} steps",
                    fine.n_steps()
                )));
            }
            let path = fine.coarsen(fine.n_steps() / n)?;
            let cfg = SolverConfig::new(nu, path.grid(), scheme)?;
            let run = solve_anticipating(basis, field, &path, sigma, &cfg, &AnticipatingOptions::default())?;
            let times: Vec<f64> = t_fractions.iter().map(|f| f * path.horizon()).collect();
            Ok(LevelReport {
                n_steps: n,
                dt: path.grid().dt(),
                mesh: factor as f64 * path.grid().dt(),
                residuals: residual_sweep(basis, &run, factor, &times)?,
            })
        })
        .collect()
}
