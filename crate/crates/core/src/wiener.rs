//! Brownian driving paths, the growth process `Q = exp(σW)` and its Malliavin
//! derivative, and Cameron-Martin perturbations of paths.
//!
//! Every path lives on a uniform [`TimeGrid`]; the dynamics, the growth process
//! and all time integrals reuse that same grid.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when matching a time against a grid node.
const NODE_TOL: f64 = 1e-9;

/// Uniform time grid `t_i = i T / N`, `i = 0..=N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        if n_steps == 0 {
            return Err(Error::InvalidArgument("n_steps must be at least 1".into()));
        }
        Ok(Self { horizon, n_steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of nodes, `N + 1`.
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        if i == self.n_steps {
            self.horizon
        } else {
            self.horizon * i as f64 / self.n_steps as f64
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    /// Index of the node at time `t`, or an error if `t` is out of range or
    /// off the grid.
    pub fn node(&self, t: f64) -> Result<usize> {
        self.check_range(t)?;
        let x = t / self.dt();
        let i = x.round();
        if (x - i).abs() > NODE_TOL * x.abs().max(1.0) {
            return Err(Error::OffGrid(t));
        }
        Ok((i as usize).min(self.n_steps))
    }

    pub fn check_range(&self, t: f64) -> Result<()> {
        let tol = NODE_TOL * self.horizon;
        if !t.is_finite() || t < -tol || t > self.horizon + tol {
            return Err(Error::OutOfRange {
                time: t,
                horizon: self.horizon,
            });
        }
        Ok(())
    }

    /// The grid with every `factor`-th node of this one.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.n_steps % factor != 0 {
            return Err(Error::InvalidArgument(format!(
                "coarsening factor {factor} does not divide {} steps",
                self.n_steps
            )));
        }
        Self::new(self.horizon, self.n_steps / factor)
    }

    pub fn ensure_same(&self, other: &TimeGrid, what: &str) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!(
                "{what}: (T={}, N={}) vs (T={}, N={})",
                self.horizon, self.n_steps, other.horizon, other.n_steps
            )));
        }
        Ok(())
    }
}

/// Noise intensities `σ_k` of independent scalar Brownian motions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    sigmas: Vec<f64>,
}

impl NoiseSpec {
    pub fn new(sigmas: Vec<f64>) -> Result<Self> {
        if let Some(s) = sigmas.iter().find(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise intensity {s} is not finite"
            )));
        }
        Ok(Self { sigmas })
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    /// Root-sum-square of the intensities; zero for an empty spec.
    pub fn collapsed_sigma(&self) -> f64 {
        self.sigmas.iter().map(|s| s * s).sum::<f64>().sqrt()
    }
}

/// Collapses `Σ σ_k u ∘ dW_k` into a single `σ u ∘ dW` with
/// `σ = (Σ σ_k²)^{1/2}`.
pub fn collapse_noise(spec: &NoiseSpec) -> Result<f64> {
    if spec.sigmas.iter().all(|&s| s == 0.0) {
        return Err(Error::DegenerateNoise);
    }
    Ok(spec.collapsed_sigma())
}

/// A discretized scalar Brownian path on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerPath {
    grid: TimeGrid,
    values: Vec<f64>,
    seed: Option<u64>,
    stream: u64,
}

impl WienerPath {
    /// Samples the path for `(T, N, seed)` on stream 0.
    pub fn sample(horizon: f64, n_steps: usize, seed: u64) -> Result<Self> {
        Self::sample_indexed(horizon, n_steps, seed, 0)
    }

    /// Samples the `index`-th path of the ensemble keyed by `seed`.
    ///
    /// Each `(seed, index)` pair owns a ChaCha8 stream, so ensemble members
    /// do not depend on generation order.
    pub fn sample_indexed(horizon: f64, n_steps: usize, seed: u64, index: u64) -> Result<Self> {
        let grid = TimeGrid::new(horizon, n_steps)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let sd = grid.dt().sqrt();
        let mut values = Vec::with_capacity(grid.len());
        let mut w = 0.0;
        values.push(w);
        for _ in 0..n_steps {
            let z: f64 = StandardNormal.sample(&mut rng);
            w += sd * z;
            values.push(w);
        }
        Ok(Self {
            grid,
            values,
            seed: Some(seed),
            stream: index,
        })
    }

    /// Builds a path from explicit node values (no seed provenance).
    pub fn from_values(horizon: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidArgument(
                "a path needs at least two nodes".into(),
            ));
        }
        let grid = TimeGrid::new(horizon, values.len() - 1)?;
        if values[0] != 0.0 {
            return Err(Error::InvalidArgument(format!(
                "path must start at W(0) = 0, got {}",
                values[0]
            )));
        }
        if values.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument("path values must be finite".into()));
        }
        Ok(Self {
            grid,
            values,
            seed: None,
            stream: 0,
        })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn horizon(&self) -> f64 {
        self.grid.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.grid.n_steps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// `W(t_{i+1}) - W(t_i)`.
    pub fn increment(&self, i: usize) -> f64 {
        self.values[i + 1] - self.values[i]
    }

    /// Value at a grid node time.
    pub fn at(&self, t: f64) -> Result<f64> {
        Ok(self.values[self.grid.node(t)?])
    }

    /// Subsamples every `factor`-th node; the coarse path is the same Brownian
    /// path observed on a coarser grid.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        let grid = self.grid.coarsen(factor)?;
        Ok(Self {
            grid,
            values: self.values.iter().step_by(factor).copied().collect(),
            seed: self.seed,
            stream: self.stream,
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["t", "W"])?;
        for (i, w) in self.values.iter().enumerate() {
            wtr.serialize((self.grid.time(i), w))?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads a `(t, W)` CSV; the time column must be a uniform grid from 0.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut times = Vec::new();
        let mut values = Vec::new();
        for rec in rdr.deserialize() {
            let (t, w): (f64, f64) = rec?;
            times.push(t);
            values.push(w);
        }
        let horizon = *times
            .last()
            .ok_or_else(|| Error::InvalidArgument("empty path file".into()))?;
        let path = Self::from_values(horizon, values)?;
        for (i, &t) in times.iter().enumerate() {
            let expect = path.grid.time(i);
            if (t - expect).abs() > NODE_TOL * horizon.max(1.0) {
                return Err(Error::GridMismatch(format!(
                    "row {i}: t = {t} is not on the uniform grid (expected {expect})"
                )));
            }
        }
        Ok(path)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// A step function on the cells `[t_j, t_{j+1})` of a grid; used as a
/// Cameron-Martin direction `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl StepFunction {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_steps() {
            return Err(Error::GridMismatch(format!(
                "step function has {} cells, grid has {}",
                values.len(),
                grid.n_steps()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: TimeGrid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.n_steps()],
        }
    }

    /// Indicator of `[a, b]`: one on every cell contained in the interval.
    pub fn indicator(grid: TimeGrid, a: f64, b: f64) -> Self {
        let tol = NODE_TOL * grid.horizon();
        let values = (0..grid.n_steps())
            .map(|j| {
                if grid.time(j) >= a - tol && grid.time(j + 1) <= b + tol {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `∫_0^{t_i} h(s) ds` at every node.
    pub fn primitive(&self) -> Vec<f64> {
        let dt = self.grid.dt();
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.grid.len());
        out.push(0.0);
        for h in &self.values {
            acc += h * dt;
            out.push(acc);
        }
        out
    }
}

/// Shifts a path by `ε ∫_0^t h(s) ds`.
pub fn cameron_martin_shift(path: &WienerPath, h: &StepFunction, eps: f64) -> Result<WienerPath> {
    path.grid.ensure_same(&h.grid, "Cameron-Martin direction")?;
    let values = path
        .values
        .iter()
        .zip(h.primitive())
        .map(|(w, p)| w + eps * p)
        .collect();
    Ok(WienerPath {
        grid: path.grid,
        values,
        seed: path.seed,
        stream: path.stream,
    })
}

/// The growth process `Q(t) = exp(σ W(t))` at grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthPath {
    grid: TimeGrid,
    sigma: f64,
    values: Vec<f64>,
    sup_norm: f64,
}

impl GrowthPath {
    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `‖Q‖_∞ = max_i Q(t_i)`.
    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    /// Malliavin derivative `D_u Q(t) = σ Q(t) χ_{[0,t]}(u)`; `t` must be a
    /// grid node.
    pub fn malliavin(&self, u: f64, t: f64) -> Result<f64> {
        self.grid.check_range(u)?;
        let i = self.grid.node(t)?;
        Ok(if u <= t { self.sigma * self.values[i] } else { 0.0 })
    }

    /// `sup_{t ≥ u} |D_u Q(t)|` over grid nodes.
    pub fn malliavin_sup(&self, u_index: usize) -> f64 {
        self.sigma.abs()
            * self.values[u_index.min(self.values.len() - 1)..]
                .iter()
                .fold(0.0_f64, |m, &q| m.max(q))
    }

    /// A constant growth path `Q ≡ 1` (the `σ = 0` model).
    pub fn unit(grid: TimeGrid) -> Self {
        Self {
            grid,
            sigma: 0.0,
            values: vec![1.0; grid.len()],
            sup_norm: 1.0,
        }
    }
}

pub fn growth_process(path: &WienerPath, sigma: f64) -> GrowthPath {
    let values: Vec<f64> = path.values.iter().map(|w| (sigma * w).exp()).collect();
    let sup_norm = values.iter().fold(f64::NEG_INFINITY, |m, &q| m.max(q));
    GrowthPath {
        grid: path.grid,
        sigma,
        values,
        sup_norm,
    }
}

/// Stochastic Heun integration of `dQ = σ Q ∘ dW`, `Q(0) = 1`.
pub fn integrate_growth_heun(path: &WienerPath, sigma: f64) -> Vec<f64> {
    let mut q = 1.0;
    let mut out = Vec::with_capacity(path.grid.len());
    out.push(q);
    for i in 0..path.n_steps() {
        let dw = path.increment(i);
        let pred = q + sigma * q * dw;
        q += 0.5 * sigma * (q + pred) * dw;
        out.push(q);
    }
    out
}
