//! Divergence-free spectral basis, Stokes operator, and the sparse trilinear
//! tensor `b(e_i, e_j, e_l)` of the convective term.
//!
//! The built-in basis lives on the periodic box `[0, 2π)²`. For a wavevector
//! `k` in the half-lattice `{k₁ > 0} ∪ {k₁ = 0, k₂ > 0}` with `0 < |k|² ≤ K²`
//! there are two modes
//!
//! ```text
//! e_{k,cos}(x) = (k⊥/|k|) cos(k·x) / (√2 π),   e_{k,sin}(x) = (k⊥/|k|) sin(k·x) / (√2 π),
//! ```
//!
//! with `k⊥ = (-k₂, k₁)`. They are L²-orthonormal, divergence-free, and
//! eigenvectors of `-Δ` with eigenvalue `|k|²`. The Stokes operator is stored
//! as the positive operator `A e_i = ν μ_i e_i`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for antisymmetry and diagonal checks on loaded tensors.
pub const ANTISYMMETRY_TOL: f64 = 1e-12;

/// Default cap on the number of modes built by [`build_torus_basis`].
pub const DEFAULT_MODE_BUDGET: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Cos,
    Sin,
}

/// A torus mode: half-lattice wavevector and trigonometric phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mode {
    pub k: [i32; 2],
    pub phase: Phase,
}

impl Mode {
    pub fn norm_sq(&self) -> i64 {
        let [a, b] = self.k;
        (a as i64).pow(2) + (b as i64).pow(2)
    }

    /// Unit polarization `k⊥/|k|`.
    pub fn polarization(&self) -> [f64; 2] {
        let n = (self.norm_sq() as f64).sqrt();
        [-self.k[1] as f64 / n, self.k[0] as f64 / n]
    }

    /// Velocity of the mode at `x`.
    pub fn velocity(&self, x: [f64; 2]) -> [f64; 2] {
        let a = self.polarization();
        let phi = self.k[0] as f64 * x[0] + self.k[1] as f64 * x[1];
        let s = match self.phase {
            Phase::Cos => phi.cos(),
            Phase::Sin => phi.sin(),
        } * mode_normalization();
        [a[0] * s, a[1] * s]
    }

    /// Velocity gradient `∂_d e_c` at `x`, indexed `[d][c]`.
    pub fn gradient(&self, x: [f64; 2]) -> [[f64; 2]; 2] {
        let a = self.polarization();
        let phi = self.k[0] as f64 * x[0] + self.k[1] as f64 * x[1];
        let ds = match self.phase {
            Phase::Cos => -phi.sin(),
            Phase::Sin => phi.cos(),
        } * mode_normalization();
        let k = [self.k[0] as f64, self.k[1] as f64];
        [
            [k[0] * ds * a[0], k[0] * ds * a[1]],
            [k[1] * ds * a[0], k[1] * ds * a[1]],
        ]
    }
}

/// `1/(√2 π)`, the L² normalization of a trigonometric mode on `[0, 2π)²`.
pub fn mode_normalization() -> f64 {
    1.0 / (2.0_f64.sqrt() * PI)
}

/// One stored tensor entry `b(e_i, e_j, e_l)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub i: usize,
    pub j: usize,
    pub l: usize,
    pub value: f64,
}

/// Coefficients of a velocity field against `e_1..e_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VelocityCoeffs(pub Vec<f64>);

impl VelocityCoeffs {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    /// Unit coefficient vector of mode `i`.
    pub fn unit(n: usize, i: usize) -> Self {
        let mut c = Self::zeros(n);
        c.0[i] = 1.0;
        c
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    /// `|v|_H`.
    pub fn h_norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(&self, a: f64) -> Self {
        Self(self.0.iter().map(|x| a * x).collect())
    }

    /// `self + a·other`.
    pub fn axpy(&self, a: f64, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(x, y)| x + a * y).collect())
    }

    pub fn add_scaled(&mut self, a: f64, other: &Self) {
        for (x, y) in self.0.iter_mut().zip(&other.0) {
            *x += a * y;
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.axpy(-1.0, other)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

/// Standard Gaussian coefficient vector.
pub fn random_coeffs<R: Rng + ?Sized>(rng: &mut R, n: usize) -> VelocityCoeffs {
    VelocityCoeffs((0..n).map(|_| rng.sample(StandardNormal)).collect())
}

/// `|v|_H`, `‖v‖_V` and `|Av|_H` of one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateNorms {
    pub h: f64,
    pub v: f64,
    pub a: f64,
}

/// Orthonormal divergence-free modes with Stokes eigenvalues and the sparse
/// trilinear tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    modes: Option<Vec<Mode>>,
    eigenvalues: Vec<f64>,
    /// Sorted by `(l, i, j)`; `entry(i,l,j) == -entry(i,j,l)` bit-for-bit.
    entries: Vec<TensorEntry>,
}

impl SpectralBasis {
    /// Validates raw data and canonicalizes the tensor so that antisymmetry
    /// holds exactly.
    pub fn from_parts(
        modes: Option<Vec<Mode>>,
        eigenvalues: Vec<f64>,
        entries: Vec<TensorEntry>,
    ) -> Result<Self> {
        let n = eigenvalues.len();
        if n == 0 {
            return Err(Error::InvalidBasis("basis has no modes".into()));
        }
        if let Some(mu) = eigenvalues.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
            return Err(Error::InvalidBasis(format!(
                "eigenvalue {mu} is not positive and finite"
            )));
        }
        if let Some(m) = &modes {
            if m.len() != n {
                return Err(Error::InvalidBasis(format!(
                    "{} mode descriptors for {n} eigenvalues",
                    m.len()
                )));
            }
        }
        let mut raw: HashMap<(usize, usize, usize), f64> = HashMap::with_capacity(entries.len());
        for e in &entries {
            if e.i >= n || e.j >= n || e.l >= n {
                return Err(Error::InvalidBasis(format!(
                    "entry ({}, {}, {}) out of range for {n} modes",
                    e.i, e.j, e.l
                )));
            }
            if !e.value.is_finite() {
                return Err(Error::InvalidBasis(format!(
                    "entry ({}, {}, {}) is not finite",
                    e.i, e.j, e.l
                )));
            }
            if raw.insert((e.i, e.j, e.l), e.value).is_some() {
                return Err(Error::InvalidBasis(format!(
                    "duplicate entry ({}, {}, {})",
                    e.i, e.j, e.l
                )));
            }
        }
        let mut canonical = Vec::with_capacity(raw.len());
        for (&(i, j, l), &value) in &raw {
            if j == l {
                if value.abs() > ANTISYMMETRY_TOL {
                    return Err(Error::InvalidBasis(format!(
                        "entry ({i}, {j}, {j}) = {value} violates b(u,v,v) = 0"
                    )));
                }
                continue;
            }
            let partner = raw.get(&(i, l, j)).copied().unwrap_or(0.0);
            if (value + partner).abs() > ANTISYMMETRY_TOL {
                return Err(Error::InvalidBasis(format!(
                    "entries ({i}, {j}, {l}) = {value} and ({i}, {l}, {j}) = {partner} are not antisymmetric"
                )));
            }
            if j < l && (value != 0.0 || partner != 0.0) {
                // Keep the lower-index value as the reference for the pair.
                let v = if raw.contains_key(&(i, j, l)) { value } else { -partner };
                canonical.push(TensorEntry { i, j, l, value: v });
                canonical.push(TensorEntry {
                    i,
                    j: l,
                    l: j,
                    value: -v,
                });
            } else if j > l && !raw.contains_key(&(i, l, j)) && value != 0.0 {
                canonical.push(TensorEntry {
                    i,
                    j: l,
                    l: j,
                    value: -value,
                });
                canonical.push(TensorEntry { i, j, l, value });
            }
        }
        canonical.sort_by_key(|e| (e.l, e.i, e.j));
        Ok(Self {
            modes,
            eigenvalues,
            entries: canonical,
        })
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn modes(&self) -> Option<&[Mode]> {
        self.modes.as_deref()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn entries(&self) -> &[TensorEntry] {
        &self.entries
    }

    /// Stored value of `b(e_i, e_j, e_l)` (zero when absent).
    pub fn entry(&self, i: usize, j: usize, l: usize) -> f64 {
        let start = self.entries.partition_point(|e| (e.l, e.i, e.j) < (l, i, j));
        match self.entries.get(start) {
            Some(e) if e.l == l && e.i == i && e.j == j => e.value,
            _ => 0.0,
        }
    }

    pub fn mu_min(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn mu_max(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(0.0, f64::max)
    }

    /// Index of the torus mode with wavevector `k` (or `-k`) and `phase`.
    pub fn find_mode(&self, k: [i32; 2], phase: Phase) -> Option<usize> {
        let modes = self.modes.as_ref()?;
        let target = canonical_wavevector(k)?;
        modes
            .iter()
            .position(|m| m.k == target && m.phase == phase)
    }

    pub fn check_dim(&self, v: &VelocityCoeffs) -> Result<()> {
        if v.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: v.len(),
            });
        }
        Ok(())
    }

    /// `‖v‖_V = (Σ μ_i c_i²)^{1/2}`.
    pub fn v_norm(&self, v: &VelocityCoeffs) -> f64 {
        v.0.iter()
            .zip(&self.eigenvalues)
            .map(|(c, mu)| mu * c * c)
            .sum::<f64>()
            .sqrt()
    }

    /// `|Av|_H = ν (Σ μ_i² c_i²)^{1/2}`.
    pub fn a_norm(&self, v: &VelocityCoeffs, nu: f64) -> f64 {
        nu * v
            .0
            .iter()
            .zip(&self.eigenvalues)
            .map(|(c, mu)| (mu * c).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// `|v|_{V'} = sup_{‖w‖_V ≤ 1} ⟨v, w⟩ = (Σ c_i²/μ_i)^{1/2}`.
    pub fn dual_norm(&self, v: &VelocityCoeffs) -> f64 {
        v.0.iter()
            .zip(&self.eigenvalues)
            .map(|(c, mu)| c * c / mu)
            .sum::<f64>()
            .sqrt()
    }

    pub fn norms(&self, v: &VelocityCoeffs, nu: f64) -> StateNorms {
        StateNorms {
            h: v.h_norm(),
            v: self.v_norm(v),
            a: self.a_norm(v, nu),
        }
    }

    /// `(Av)_i = ν μ_i v_i`.
    pub fn apply_a(&self, v: &VelocityCoeffs, nu: f64) -> VelocityCoeffs {
        VelocityCoeffs(
            v.0.iter()
                .zip(&self.eigenvalues)
                .map(|(c, mu)| nu * mu * c)
                .collect(),
        )
    }

    /// Projected convective term `P_n B(u, w)`, `(.)_l = Σ u_i w_j b(e_i,e_j,e_l)`.
    pub fn apply_b(&self, u: &VelocityCoeffs, w: &VelocityCoeffs) -> Result<VelocityCoeffs> {
        self.check_dim(u)?;
        self.check_dim(w)?;
        let mut out = VelocityCoeffs::zeros(self.len());
        self.apply_b_into(u, w, &mut out.0);
        Ok(out)
    }

    /// Unchecked accumulation `out += P_n B(u, w)`.
    pub(crate) fn apply_b_into(&self, u: &VelocityCoeffs, w: &VelocityCoeffs, out: &mut [f64]) {
        for e in &self.entries {
            out[e.l] += u.0[e.i] * w.0[e.j] * e.value;
        }
    }

    /// `P_n [B(a, b) + B(b, a)]`, the symmetric linearization of `B`.
    pub(crate) fn apply_b_sym_into(&self, a: &VelocityCoeffs, b: &VelocityCoeffs, out: &mut [f64]) {
        for e in &self.entries {
            out[e.l] += (a.0[e.i] * b.0[e.j] + b.0[e.i] * a.0[e.j]) * e.value;
        }
    }

    /// `b(u, v, w) = Σ u_i v_j w_l b(e_i, e_j, e_l)`.
    pub fn b_form(&self, u: &VelocityCoeffs, v: &VelocityCoeffs, w: &VelocityCoeffs) -> Result<f64> {
        self.check_dim(u)?;
        self.check_dim(v)?;
        self.check_dim(w)?;
        Ok(self
            .entries
            .iter()
            .map(|e| u.0[e.i] * v.0[e.j] * w.0[e.l] * e.value)
            .sum())
    }

    /// Writes the NDJSON basis file: a header record followed by one record
    /// per stored tensor entry.
    pub fn write_ndjson<W: Write>(&self, mut writer: W) -> Result<()> {
        let header = BasisHeader {
            record: "header".into(),
            schema: BASIS_SCHEMA.into(),
            n_modes: self.len(),
            eigenvalues: self.eigenvalues.clone(),
            modes: self.modes.clone(),
        };
        serde_json::to_writer(&mut writer, &header)?;
        writer.write_all(b"\n")?;
        for e in &self.entries {
            serde_json::to_writer(
                &mut writer,
                &EntryRecord {
                    record: "entry".into(),
                    i: e.i,
                    j: e.j,
                    l: e.l,
                    value: e.value,
                },
            )?;
            writer.write_all(b"\n")?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn read_ndjson<R: Read>(reader: R) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines();
        let first = loop {
            match lines.next() {
                Some(line) => {
                    let line = line?;
                    if !line.trim().is_empty() {
                        break line;
                    }
                }
                None => return Err(Error::InvalidBasis("empty basis file".into())),
            }
        };
        let header: BasisHeader = serde_json::from_str(&first)
            .map_err(|e| Error::InvalidBasis(format!("bad header record: {e}")))?;
        if header.record != "header" {
            return Err(Error::InvalidBasis("first record must be the header".into()));
        }
        if header.schema != BASIS_SCHEMA {
            return Err(Error::InvalidBasis(format!(
                "unsupported schema {:?}",
                header.schema
            )));
        }
        if header.n_modes != header.eigenvalues.len() {
            return Err(Error::InvalidBasis(format!(
                "header declares {} modes but lists {} eigenvalues",
                header.n_modes,
                header.eigenvalues.len()
            )));
        }
        let mut entries = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: EntryRecord = serde_json::from_str(&line).map_err(|e| {
                Error::InvalidBasis(format!("bad entry record on line {}: {e}", lineno + 2))
            })?;
            if rec.record != "entry" {
                return Err(Error::InvalidBasis(format!(
                    "unexpected record kind {:?} on line {}",
                    rec.record,
                    lineno + 2
                )));
            }
            entries.push(TensorEntry {
                i: rec.i,
                j: rec.j,
                l: rec.l,
                value: rec.value,
            });
        }
        Self::from_parts(header.modes, header.eigenvalues, entries)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_ndjson(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

/// Loads and re-validates a basis file.
pub fn load_basis(path: &Path) -> Result<SpectralBasis> {
    SpectralBasis::read_ndjson(std::fs::File::open(path)?)
}

pub const BASIS_SCHEMA: &str = "snse-basis/1";

#[derive(Debug, Serialize, Deserialize)]
struct BasisHeader {
    record: String,
    schema: String,
    n_modes: usize,
    eigenvalues: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    modes: Option<Vec<Mode>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EntryRecord {
    record: String,
    i: usize,
    j: usize,
    l: usize,
    value: f64,
}

fn canonical_wavevector(k: [i32; 2]) -> Option<[i32; 2]> {
    match k {
        [0, 0] => None,
        [a, b] if a > 0 || (a == 0 && b > 0) => Some([a, b]),
        [a, b] => Some([-a, -b]),
    }
}

/// Torus modes with `0 < |k|² ≤ K²`, ordered by `(|k|², k₁, k₂, phase)`.
pub fn torus_modes(max_wavenumber: u32) -> Vec<Mode> {
    let kmax = max_wavenumber as i32;
    let k2max = (kmax as i64).pow(2);
    let mut modes = Vec::new();
    for a in 0..=kmax {
        for b in -kmax..=kmax {
            if canonical_wavevector([a, b]) != Some([a, b]) {
                continue;
            }
            let m = Mode {
                k: [a, b],
                phase: Phase::Cos,
            };
            if m.norm_sq() > k2max {
                continue;
            }
            modes.push(m);
            modes.push(Mode {
                k: [a, b],
                phase: Phase::Sin,
            });
        }
    }
    modes.sort_by_key(|m| (m.norm_sq(), m.k[0], m.k[1], m.phase == Phase::Sin));
    modes
}

/// Builds the torus basis with the default mode budget.
pub fn build_torus_basis(max_wavenumber: u32) -> Result<SpectralBasis> {
    build_torus_basis_with_budget(max_wavenumber, DEFAULT_MODE_BUDGET)
}

pub fn build_torus_basis_with_budget(max_wavenumber: u32, budget: usize) -> Result<SpectralBasis> {
    if max_wavenumber == 0 {
        return Err(Error::InvalidArgument(
            "max wavenumber must be at least 1".into(),
        ));
    }
    let modes = torus_modes(max_wavenumber);
    if modes.len() > budget {
        return Err(Error::BasisTooLarge {
            max_wavenumber,
            modes: modes.len(),
            budget,
        });
    }
    let eigenvalues = modes.iter().map(|m| m.norm_sq() as f64).collect();
    let entries = torus_tensor_entries(&modes);
    SpectralBasis::from_parts(Some(modes), eigenvalues, entries)
}

/// Exponential coefficients `(α₊, α₋)` of a phase function, `f(θ) = α₊e^{iθ} + α₋e^{-iθ}`.
fn exp_coeffs(phase: Phase, derivative: bool) -> [Complex64; 2] {
    let half = Complex64::new(0.5, 0.0);
    let half_i = Complex64::new(0.0, 0.5);
    match (phase, derivative) {
        (Phase::Cos, false) => [half, half],
        // sin θ = (e^{iθ} - e^{-iθ}) / 2i
        (Phase::Sin, false) => [-half_i, half_i],
        // d/dθ cos = -sin
        (Phase::Cos, true) => [half_i, -half_i],
        // d/dθ sin = cos
        (Phase::Sin, true) => [half, half],
    }
}

/// `∫_{[0,2π)²} f_i(k_i·x) f_j'(k_j·x) f_l(k_l·x) dx` via exponential expansion.
fn triple_integral(mi: &Mode, mj: &Mode, ml: &Mode) -> f64 {
    let ci = exp_coeffs(mi.phase, false);
    let cj = exp_coeffs(mj.phase, true);
    let cl = exp_coeffs(ml.phase, false);
    let signs = [1i32, -1];
    let mut acc = Complex64::new(0.0, 0.0);
    for (si, ai) in signs.iter().zip(ci) {
        for (sj, aj) in signs.iter().zip(cj) {
            for (sl, al) in signs.iter().zip(cl) {
                let kx = si * mi.k[0] + sj * mj.k[0] + sl * ml.k[0];
                let ky = si * mi.k[1] + sj * mj.k[1] + sl * ml.k[1];
                if kx == 0 && ky == 0 {
                    acc += ai * aj * al;
                }
            }
        }
    }
    4.0 * PI * PI * acc.re
}

/// Closed-form `b(e_i, e_j, e_l)` for torus modes.
pub fn torus_b_entry(mi: &Mode, mj: &Mode, ml: &Mode) -> f64 {
    let ai = mi.polarization();
    let aj = mj.polarization();
    let al = ml.polarization();
    let ai_kj = ai[0] * mj.k[0] as f64 + ai[1] * mj.k[1] as f64;
    let aj_al = aj[0] * al[0] + aj[1] * al[1];
    if ai_kj == 0.0 || aj_al == 0.0 {
        return 0.0;
    }
    mode_normalization().powi(3) * ai_kj * aj_al * triple_integral(mi, mj, ml)
}

/// Enumerates the nonzero entries through the triad condition
/// `k_l = ±k_i ± k_j`; stores `(i, j, l)` for `j < l` and its negated partner.
fn torus_tensor_entries(modes: &[Mode]) -> Vec<TensorEntry> {
    let mut by_k: HashMap<[i32; 2], Vec<usize>> = HashMap::new();
    for (idx, m) in modes.iter().enumerate() {
        by_k.entry(m.k).or_default().push(idx);
    }
    let mut entries = Vec::new();
    for (i, mi) in modes.iter().enumerate() {
        for (j, mj) in modes.iter().enumerate() {
            let mut seen: Vec<[i32; 2]> = Vec::with_capacity(4);
            for (si, sj) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
                let q = [
                    si * mi.k[0] + sj * mj.k[0],
                    si * mi.k[1] + sj * mj.k[1],
                ];
                let Some(q) = canonical_wavevector(q) else {
                    continue;
                };
                if seen.contains(&q) {
                    continue;
                }
                seen.push(q);
                let Some(ls) = by_k.get(&q) else { continue };
                for &l in ls {
                    if l <= j {
                        continue;
                    }
                    let value = torus_b_entry(mi, mj, &modes[l]);
                    if value.abs() > 1e-14 {
                        entries.push(TensorEntry { i, j, l, value });
                        entries.push(TensorEntry {
                            i,
                            j: l,
                            l: j,
                            value: -value,
                        });
                    }
                }
            }
        }
    }
    entries
}

/// Empirical constants of the classical estimates for `b` on random fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BEstimateReport {
    pub n_samples: usize,
    pub skipped: usize,
    pub nu: f64,
    /// `|b(u,v,w)| / (‖u‖ ‖v‖ ‖w‖)`.
    pub max_trilinear_v: f64,
    /// `|b(u,v,w)| / (|u| ‖v‖ |Aw|)`.
    pub max_h_v_a: f64,
    /// `|b(u,v,w)| / (‖u‖ |v| |Aw|)`.
    pub max_v_h_a: f64,
    /// `|b(u,v,w)| / (‖u‖^½ |u|^½ ‖w‖^½ |w|^½ ‖v‖)`.
    pub max_ladyzhenskaya: f64,
    /// `|B(u,w)|_{V'} / (‖u‖^½ |u|^½ ‖w‖^½ |w|^½)`.
    pub max_dual: f64,
    /// The Ladyzhenskaya ratio evaluated at the maximizing `v` of the dual
    /// norm; equals `max_dual` up to rounding.
    pub max_ladyzhenskaya_dual_route: f64,
    /// `|B(v)|_H / (|v|^½ ‖v‖ |Av|^½)`.
    pub max_b_h: f64,
    pub cap: f64,
}

impl BEstimateReport {
    pub fn ratios(&self) -> [(&'static str, f64); 7] {
        [
            ("trilinear_v", self.max_trilinear_v),
            ("h_v_a", self.max_h_v_a),
            ("v_h_a", self.max_v_h_a),
            ("ladyzhenskaya", self.max_ladyzhenskaya),
            ("dual", self.max_dual),
            ("ladyzhenskaya_dual_route", self.max_ladyzhenskaya_dual_route),
            ("b_h", self.max_b_h),
        ]
    }

    /// All maxima finite and at most `cap`.
    pub fn within_cap(&self) -> bool {
        self.ratios()
            .iter()
            .all(|(_, r)| r.is_finite() && *r <= self.cap)
    }
}

/// Samples Gaussian coefficient triples and records the largest ratio of
/// `|b|` to each right-hand side. Samples where a denominator vanishes are
/// skipped.
pub fn audit_b_estimates<R: Rng + ?Sized>(
    basis: &SpectralBasis,
    n_samples: usize,
    nu: f64,
    cap: f64,
    rng: &mut R,
) -> Result<BEstimateReport> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    let n = basis.len();
    let mut rep = BEstimateReport {
        n_samples,
        skipped: 0,
        nu,
        max_trilinear_v: 0.0,
        max_h_v_a: 0.0,
        max_v_h_a: 0.0,
        max_ladyzhenskaya: 0.0,
        max_dual: 0.0,
        max_ladyzhenskaya_dual_route: 0.0,
        max_b_h: 0.0,
        cap,
    };
    for _ in 0..n_samples {
        let u = random_coeffs(rng, n);
        let v = random_coeffs(rng, n);
        let w = random_coeffs(rng, n);
        let (nu_u, nv, nw) = (basis.norms(&u, nu), basis.norms(&v, nu), basis.norms(&w, nu));
        let denoms = [nu_u.h, nu_u.v, nv.h, nv.v, nw.h, nw.v, nw.a, nv.a];
        if denoms.iter().any(|d| *d == 0.0) {
            rep.skipped += 1;
            continue;
        }
        let b = basis.b_form(&u, &v, &w)?.abs();
        let lady = (nu_u.v * nu_u.h * nw.v * nw.h).sqrt();
        rep.max_trilinear_v = rep.max_trilinear_v.max(b / (nu_u.v * nv.v * nw.v));
        rep.max_h_v_a = rep.max_h_v_a.max(b / (nu_u.h * nv.v * nw.a));
        rep.max_v_h_a = rep.max_v_h_a.max(b / (nu_u.v * nv.h * nw.a));
        rep.max_ladyzhenskaya = rep.max_ladyzhenskaya.max(b / (lady * nv.v));

        // Dual norm of B(u, w) in closed form, and through the maximizer
        // v* = μ^{-1} B(u, w), for which |b(u, v*, w)| / ‖v*‖ = |B(u,w)|_{V'}.
        let g = basis.apply_b(&u, &w)?;
        let dual = basis.dual_norm(&g);
        rep.max_dual = rep.max_dual.max(dual / lady);
        let vstar = VelocityCoeffs(
            g.0.iter()
                .zip(basis.eigenvalues())
                .map(|(x, mu)| x / mu)
                .collect(),
        );
        let vs_norm = basis.v_norm(&vstar);
        if vs_norm > 0.0 {
            let bstar = basis.b_form(&u, &vstar, &w)?.abs();
            rep.max_ladyzhenskaya_dual_route =
                rep.max_ladyzhenskaya_dual_route.max(bstar / (lady * vs_norm));
        }

        let bv = basis.apply_b(&v, &v)?.h_norm();
        rep.max_b_h = rep
            .max_b_h
            .max(bv / (nv.h.sqrt() * nv.v * nv.a.sqrt()));
    }
    Ok(rep)
}
