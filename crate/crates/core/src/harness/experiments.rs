use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use super::config::{ExperimentKind, ResolvedConfig};
use super::report::{float_cell, ExperimentReport, PathFailure};
use crate::anticipating::{refinement_study, LevelReport, Partition};
use crate::basis::{audit_b_estimates, SpectralBasis, VelocityCoeffs};
use crate::direct::transform_check;
use crate::error::{Error, Result};
use crate::galerkin::{energy_audit, integrate_random_nse, v_norm_audit, SolverConfig};
use crate::tangent::{frechet_norm_audit, malliavin_directional, malliavin_grid, malliavin_moment_audit, malliavin_tangent};
use crate::wiener::{cameron_martin_shift, growth_process, StepFunction, TimeGrid, WienerPath};

/// Energy estimates may exceed their bounds by this many `Δt` (relative).
const ENERGY_SLACK: f64 = 5.0;

/// Random probe directions in the Fréchet norm audit.
const FRECHET_RANDOM_PROBES: usize = 4;

pub fn run_experiment(cfg: &ResolvedConfig) -> Result<ExperimentReport> {
    let basis = cfg.basis()?;
    match cfg.experiment {
        ExperimentKind::TransformCheck => transform(cfg, &basis),
        ExperimentKind::EnergyAudit => energy(cfg, &basis),
        ExperimentKind::MalliavinCheck => malliavin(cfg, &basis),
        ExperimentKind::AnticipatingCheck => anticipating(cfg, &basis),
        ExperimentKind::Convergence => convergence(cfg, &basis),
        ExperimentKind::BAudit => b_audit(cfg, &basis),
        ExperimentKind::Ensemble => ensemble(cfg, &basis),
    }
}

fn solver(cfg: &ResolvedConfig, n_steps: usize) -> Result<SolverConfig> {
    SolverConfig::new(cfg.nu, TimeGrid::new(cfg.horizon, n_steps)?, cfg.scheme)
}

fn path(cfg: &ResolvedConfig, n_steps: usize, index: usize) -> Result<WienerPath> {
    WienerPath::sample_indexed(cfg.horizon, n_steps, cfg.seed, index as u64)
}

/// Runs `work` on every path index in parallel, keeping path order.
fn run_paths<T, F>(cfg: &ResolvedConfig, work: F) -> (Vec<(usize, T)>, Vec<PathFailure>)
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let outcomes: Vec<(usize, Result<T>)> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| (i, work(i)))
        .collect();
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (i, r) in outcomes {
        match r {
            Ok(t) => ok.push((i, t)),
            Err(e) => failed.push(PathFailure {
                path_index: i,
                error: e.to_string(),
            }),
        }
    }
    (ok, failed)
}

fn to_value<T: Serialize>(t: &T) -> Value {
    serde_json::to_value(t).unwrap_or(Value::Null)
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

fn max(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(f64::NAN, f64::max)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = mean(lx.iter().copied());
    let my = mean(ly.iter().copied());
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}

fn transform(cfg: &ResolvedConfig, basis: &SpectralBasis) -> Result<ExperimentReport> {
    let f = cfg.initial_state(basis)?;
    let solver = solver(cfg, cfg.n_steps)?;
    let f_norm = f.h_norm();
    let (ok, failures) = run_paths(cfg, |i| {
        transform_check(basis, &f, &path(cfg, cfg.n_steps, i)?, cfg.sigma, &solver)
    });
    let mut rep = ExperimentReport::new(cfg.clone(), &["path_index", "gap", "relative_gap"]);
    for (i, gap) in &ok {
        rep.push_row(vec![i.to_string(), float_cell(*gap), float_cell(gap / f_norm)]);
        rep.records.push((*i, json!({"gap": gap, "relative_gap": gap / f_norm})));
    }
    rep.summary = json!({
        "f_norm": f_norm,
        "max_gap": max(ok.iter().map(|(_, g)| *g)),
        "mean_gap": mean(ok.iter().map(|(_, g)| *g)),
    });
    rep.failures = failures;
    Ok(rep)
}

fn convergence(cfg: &ResolvedConfig, basis: &SpectralBasis) -> Result<ExperimentReport> {
    let f = cfg.initial_state(basis)?;
    let finest = *cfg.levels.last().expect("levels are validated nonempty");
    let solvers = cfg
        .levels
        .iter()
        .map(|&n| solver(cfg, n))
        .collect::<Result<Vec<_>>>()?;
    let (ok, failures) = run_paths(cfg, |i| {
        let fine = path(cfg, finest, i)?;
        cfg.levels
            .iter()
            .zip(&solvers)
            .map(|(&n, s)| transform_check(basis, &f, &fine.coarsen(finest / n)?, cfg.sigma, s))
            .collect::<Result<Vec<f64>>>()
    });
    let mut rep = ExperimentReport::new(cfg.clone(), &["path_index", "n_steps", "dt", "gap"]);
    for (i, gaps) in &ok {
        for ((n, s), g) in cfg.levels.iter().zip(&solvers).zip(gaps) {
            rep.push_row(vec![i.to_string(), n.to_string(), float_cell(s.dt()), float_cell(*g)]);
        }
        rep.records.push((*i, json!({"n_steps": cfg.levels, "gap": gaps})));
    }
    let dts: Vec<f64> = solvers.iter().map(|s| s.dt()).collect();
    let mean_gaps: Vec<f64> = (0..cfg.levels.len())
        .map(|l| mean(ok.iter().map(|(_, g)| g[l])))
        .collect();
    let order = if cfg.levels.len() > 1 && mean_gaps.iter().all(|g| *g > 0.0) {
        loglog_slope(&dts, &mean_gaps)
    } else {
        f64::NAN
    };
    rep.summary = json!({
        "n_steps": cfg.levels,
        "dt": dts,
        "mean_gap": mean_gaps,
        "observed_order": order,
    });
    rep.failures = failures;
    Ok(rep)
}

#[derive(Serialize)]
struct EnergyRecord {
    energy: crate::galerkin::EnergyReport,
    v_norm: crate::galerkin::VNormReport,
    within_slack: bool,
}

fn energy(cfg: &ResolvedConfig, basis: &SpectralBasis) -> Result<ExperimentReport> {
    let f = cfg.initial_state(basis)?;
    let solver = solver(cfg, cfg.n_steps)?;
    let (ok, failures) = run_paths(cfg, |i| {
        let q = growth_process(&path(cfg, cfg.n_steps, i)?, cfg.sigma);
        let v = integrate_random_nse(basis, &f, &q, &solver)?;
        let energy = energy_audit(basis, &v, &f, cfg.nu)?;
        Ok(EnergyRecord {
            energy,
            v_norm: v_norm_audit(basis, &v, &f, &q, cfg.nu)?,
            within_slack: energy.holds_within(ENERGY_SLACK),
        })
    });
    let mut rep = ExperimentReport::new(
        cfg.clone(),
        &[
            "path_index",
            "f_norm",
            "sup_h",
            "sup_excess",
            "dissipation",
            "dissipation_bound",
            "dissipation_excess",
            "v_lhs",
            "v_c_empirical",
        ],
    );
    for (i, r) in &ok {
        let e = &r.energy;
        rep.push_row(
            std::iter::once(i.to_string())
                .chain(
                    [
                        e.f_norm,
                        e.sup_h,
                        e.sup_excess,
                        e.dissipation,
                        e.dissipation_bound,
                        e.dissipation_excess,
                        r.v_norm.lhs,
                        r.v_norm.c_empirical,
                    ]
                    .map(float_cell),
                )
                .collect(),
        );
        rep.records.push((*i, to_value(r)));
    }
    rep.summary = json!({
        "slack_dt_multiple": ENERGY_SLACK,
        "n_within_slack": ok.iter().filter(|(_, r)| r.within_slack).count(),
        "max_sup_excess": max(ok.iter().map(|(_, r)| r.energy.sup_excess)),
        "max_dissipation_excess": max(ok.iter().map(|(_, r)| r.energy.dissipation_excess)),
        "max_v_c_empirical": max(ok.iter().map(|(_, r)| r.v_norm.c_empirical)),
    });
    rep.failures = failures;
    Ok(rep)
}

#[derive(Serialize)]
struct MalliavinRecord {
    /// Relative error of the directional derivative against the central
    /// Cameron-Martin difference, one per direction.
    fd_relative_error: Vec<f64>,
    grid_vs_per_u: f64,
    adaptedness: f64,
    frechet_norm: f64,
    c_tilde: f64,
    c_nu: f64,
}

/// `1_{[0,T/2]}`, `1` and `1_{[T/4,3T/4]}`.
pub fn probe_directions(grid: TimeGrid) -> Vec<StepFunction> {
    let t = grid.horizon();
    vec![
        StepFunction::indicator(grid, 0.0, 0.5 * t),
        StepFunction::constant(grid, 1.0),
        StepFunction::indicator(grid, 0.25 * t, 0.75 * t),
    ]
}

fn malliavin(cfg: &ResolvedConfig, basis: &SpectralBasis) -> Result<ExperimentReport> {
    let f = cfg.initial_state(basis)?;
    let solver = solver(cfg, cfg.n_steps)?;
    let eps = cfg.epsilon;
    let (ok, failures) = run_paths(cfg, |i| {
        let w = path(cfg, cfg.n_steps, i)?;
        let q = growth_process(&w, cfg.sigma);
        let v = integrate_random_nse(basis, &f, &q, &solver)?;
        let end_state = |p: &WienerPath| -> Result<VelocityCoeffs> {
            let traj = integrate_random_nse(basis, &f, &growth_process(p, cfg.sigma), &solver)?;
            Ok(traj.last().clone())
        };
        let fd_relative_error = probe_directions(solver.grid)
            .iter()
            .map(|h| {
                let d = malliavin_directional(basis, &v, &q, cfg.sigma, h, &solver)?;
                let plus = end_state(&cameron_martin_shift(&w, h, eps)?)?;
                let minus = end_state(&cameron_martin_shift(&w, h, -eps)?)?;
                let fd = plus.sub(&minus).scale(0.5 / eps);
                let exact = d.states().last().expect("trajectory is nonempty");
                let err = fd.sub(exact).h_norm();
                let den = exact.h_norm();
                Ok(if den > 0.0 { err / den } else { err })
            })
            .collect::<Result<Vec<f64>>>()?;
        let grid = malliavin_grid(basis, &v, &q, cfg.sigma, cfg.malliavin_points, &solver)?;
        let mut grid_vs_per_u: f64 = 0.0;
        let mut adaptedness: f64 = 0.0;
        for (k, entry) in grid.entries().iter().enumerate() {
            let start = grid.u_index(k);
            let single = malliavin_tangent(basis, &v, &q, cfg.sigma, solver.grid.time(start), &solver)?;
            for (idx, (a, b)) in entry.states().iter().zip(single.states()).enumerate() {
                grid_vs_per_u = grid_vs_per_u.max(a.sub(b).h_norm());
                if idx <= start {
                    adaptedness = adaptedness.max(a.h_norm());
                }
            }
        }
        let fr = frechet_norm_audit(
            basis,
            &v,
            &q,
            &solver,
            FRECHET_RANDOM_PROBES,
            cfg.seed.wrapping_add(i as u64),
        )?;
        let moments = malliavin_moment_audit(basis, &grid, &f, &q, cfg.nu)?;
        Ok(MalliavinRecord {
            fd_relative_error,
            grid_vs_per_u,
            adaptedness,
            frechet_norm: fr.norm,
            c_tilde: fr.c_tilde,
            c_nu: moments.c_nu,
        })
    });
    let mut rep = ExperimentReport::new(
        cfg.clone(),
        &[
            "path_index",
            "fd_error_first_half",
            "fd_error_constant",
            "fd_error_middle",
            "grid_vs_per_u",
            "adaptedness",
            "frechet_norm",
            "c_tilde",
            "c_nu",
        ],
    );
    for (i, r) in &ok {
        let mut row = vec![i.to_string()];
        row.extend(r.fd_relative_error.iter().map(|e| float_cell(*e)));
        row.extend([r.grid_vs_per_u, r.adaptedness, r.frechet_norm, r.c_tilde, r.c_nu].map(float_cell));
        rep.push_row(row);
        rep.records.push((*i, to_value(r)));
    }
    rep.summary = json!({
        "epsilon": eps,
        "max_fd_relative_error": max(ok.iter().flat_map(|(_, r)| r.fd_relative_error.clone())),
        "max_grid_vs_per_u": max(ok.iter().map(|(_, r)| r.grid_vs_per_u)),
        "max_adaptedness": max(ok.iter().map(|(_, r)| r.adaptedness)),
        "max_c_tilde": max(ok.iter().map(|(_, r)| r.c_tilde)),
        "max_c_nu": max(ok.iter().map(|(_, r)| r.c_nu)),
    });
    rep.failures = failures;
    Ok(rep)
}

fn anticipating(cfg: &ResolvedConfig, basis: &SpectralBasis) -> Result<ExperimentReport> {
    let field = cfg.field(basis)?;
    let finest = *cfg.levels.last().expect("levels are validated nonempty");
    for &n in &cfg.levels {
        let grid = TimeGrid::new(cfg.horizon, n)?;
        field
            .nodes(&grid)
            .map_err(|e| Error::Config(format!("field times at {n} steps: {e}")))?;
        for frac in &cfg.t_fractions {
            Partition::uniform(grid, cfg.partition_factor, frac * cfg.horizon)
                .map_err(|e| Error::Config(format!("partition at {n} steps: {e}")))?;
        }
    }
    let (ok, failures) = run_paths(cfg, |i| {
        refinement_study(
            basis,
            &field,
            &path(cfg, finest, i)?,
            cfg.sigma,
            cfg.nu,
            cfg.scheme,
            &cfg.levels,
            cfg.partition_factor,
            &cfg.t_fractions,
        )
    });
    let mut rep = ExperimentReport::new(
        cfg.clone(),
        &[
            "path_index",
            "n_steps",
            "t",
            "ito",
            "stratonovich",
            "ablated",
            "scale",
            "relative_ito",
        ],
    );
    for (i, levels) in &ok {
        for l in levels {
            for r in &l.residuals {
                let mut row = vec![i.to_string(), l.n_steps.to_string()];
                row.extend([r.t, r.ito, r.stratonovich, r.ablated, r.scale, r.ito / r.scale].map(float_cell));
                rep.push_row(row);
            }
        }
        rep.records.push((*i, json!({ "levels": levels })));
    }
    let relative = |l: &LevelReport, pick: fn(&crate::anticipating::ResidualReport) -> f64| {
        l.residuals.iter().map(move |r| pick(r) / r.scale).collect::<Vec<f64>>()
    };
    let per_level: Vec<Value> = (0..cfg.levels.len())
        .map(|k| {
            let ito: Vec<f64> = ok.iter().flat_map(|(_, ls)| relative(&ls[k], |r| r.ito)).collect();
            let ablated: Vec<f64> = ok.iter().flat_map(|(_, ls)| relative(&ls[k], |r| r.ablated)).collect();
            let rms = |xs: &[f64]| mean(xs.iter().map(|x| x * x)).sqrt();
            json!({
                "n_steps": cfg.levels[k],
                "rms_relative_ito": rms(&ito),
                "max_relative_ito": max(ito.iter().copied()),
                "rms_relative_ablated": rms(&ablated),
            })
        })
        .collect();
    rep.summary = json!({ "levels": per_level });
    rep.failures = failures;
    Ok(rep)
}

fn b_audit(cfg: &ResolvedConfig, basis: &SpectralBasis) -> Result<ExperimentReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let single = audit_b_estimates(basis, cfg.b_samples, cfg.nu, cfg.b_cap, &mut rng)?;
    let doubled = audit_b_estimates(basis, 2 * cfg.b_samples, cfg.nu, cfg.b_cap, &mut rng)?;
    let mut rep = ExperimentReport::new(cfg.clone(), &["estimate", "max_ratio", "max_ratio_doubled"]);
    for ((name, a), (_, b)) in single.ratios().iter().zip(doubled.ratios()) {
        rep.push_row(vec![name.to_string(), float_cell(*a), float_cell(b)]);
    }
    rep.summary = json!({
        "modes": basis.len(),
        "within_cap": single.within_cap() && doubled.within_cap(),
        "samples": single,
        "doubled": doubled,
    });
    Ok(rep)
}

#[derive(Serialize)]
struct EnsembleRecord {
    w_end: f64,
    q_end: f64,
    sup_q: f64,
    v_end: f64,
    u_end: f64,
    sup_u: f64,
}

fn ensemble(cfg: &ResolvedConfig, basis: &SpectralBasis) -> Result<ExperimentReport> {
    let f = cfg.initial_state(basis)?;
    let solver = solver(cfg, cfg.n_steps)?;
    let (ok, failures) = run_paths(cfg, |i| {
        let w = path(cfg, cfg.n_steps, i)?;
        let q = growth_process(&w, cfg.sigma);
        let v = integrate_random_nse(basis, &f, &q, &solver)?;
        let u = v.scaled_by(basis, &q)?;
        Ok(EnsembleRecord {
            w_end: *w.values().last().expect("path is nonempty"),
            q_end: *q.values().last().expect("path is nonempty"),
            sup_q: q.sup_norm(),
            v_end: v.last().h_norm(),
            u_end: u.last().h_norm(),
            sup_u: u.sup_h(),
        })
    });
    let mut rep = ExperimentReport::new(
        cfg.clone(),
        &["path_index", "w_end", "q_end", "sup_q", "v_end", "u_end", "sup_u"],
    );
    for (i, r) in &ok {
        let mut row = vec![i.to_string()];
        row.extend([r.w_end, r.q_end, r.sup_q, r.v_end, r.u_end, r.sup_u].map(float_cell));
        rep.push_row(row);
        rep.records.push((*i, to_value(r)));
    }
    let m_w = mean(ok.iter().map(|(_, r)| r.w_end));
    rep.summary = json!({
        "mean_w_end": m_w,
        "var_w_end": mean(ok.iter().map(|(_, r)| (r.w_end - m_w).powi(2))),
        "mean_q_end": mean(ok.iter().map(|(_, r)| r.q_end)),
        "mean_sup_q": mean(ok.iter().map(|(_, r)| r.sup_q)),
        "mean_u_end": mean(ok.iter().map(|(_, r)| r.u_end)),
        "mean_sup_u": mean(ok.iter().map(|(_, r)| r.sup_u)),
    });
    rep.failures = failures;
    Ok(rep)
}
