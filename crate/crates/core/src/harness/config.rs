use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::anticipating::{FieldComponent, RandomInitialField};
use crate::basis::{build_torus_basis, load_basis, Phase, SpectralBasis, VelocityCoeffs};
use crate::error::{Error, Result};
use crate::galerkin::Scheme;
use crate::wiener::{collapse_noise, NoiseSpec};

pub const CONFIG_SCHEMA: &str = "snse-config/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    TransformCheck,
    EnergyAudit,
    MalliavinCheck,
    AnticipatingCheck,
    Convergence,
    BAudit,
    Ensemble,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::TransformCheck => "transform-check",
            Self::EnergyAudit => "energy-audit",
            Self::MalliavinCheck => "malliavin-check",
            Self::AnticipatingCheck => "anticipating-check",
            Self::Convergence => "convergence",
            Self::BAudit => "b-audit",
            Self::Ensemble => "ensemble",
        }
    }
}

/// A basis mode given either by index or by wavevector and phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModeRef {
    Index { mode: usize },
    Wave { k: [i32; 2], phase: Phase },
}

impl ModeRef {
    fn resolve(&self, basis: &SpectralBasis) -> Result<usize> {
        match self {
            ModeRef::Index { mode } if *mode < basis.len() => Ok(*mode),
            ModeRef::Index { mode } => Err(Error::Config(format!(
                "mode {mode} out of range for {} modes",
                basis.len()
            ))),
            ModeRef::Wave { k, phase } => basis.find_mode(*k, *phase).ok_or_else(|| {
                Error::Config(format!("no {phase:?} mode with wavevector {k:?} in the basis"))
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialMode {
    #[serde(flatten)]
    pub mode: ModeRef,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldComponentSpec {
    #[serde(flatten)]
    pub mode: ModeRef,
    pub expr: crate::anticipating::Expr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    #[serde(default)]
    pub times: Vec<f64>,
    pub components: Vec<FieldComponentSpec>,
}

/// Configuration file as written by the user. Optional fields take the
/// defaults listed in [`ResolvedConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: String,
    #[serde(default)]
    pub experiment: Option<ExperimentKind>,
    pub nu: f64,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub sigmas: Option<Vec<f64>>,
    pub horizon: f64,
    pub n_steps: usize,
    #[serde(default)]
    pub max_wavenumber: Option<u32>,
    #[serde(default)]
    pub basis_file: Option<PathBuf>,
    #[serde(default)]
    pub n_paths: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub scheme: Option<Scheme>,
    #[serde(default)]
    pub initial: Option<Vec<InitialMode>>,
    #[serde(default)]
    pub y_spec: Option<FieldSpec>,
    #[serde(default)]
    pub partition_factor: Option<usize>,
    #[serde(default)]
    pub levels: Option<Vec<usize>>,
    #[serde(default)]
    pub t_fractions: Option<Vec<f64>>,
    #[serde(default)]
    pub malliavin_points: Option<usize>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub b_samples: Option<usize>,
    #[serde(default)]
    pub b_cap: Option<f64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// Fully resolved configuration; serializing it and loading the result
/// reproduces the same experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub schema: String,
    pub experiment: ExperimentKind,
    pub nu: f64,
    /// Collapsed noise intensity.
    pub sigma: f64,
    pub horizon: f64,
    pub n_steps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_wavenumber: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basis_file: Option<PathBuf>,
    pub n_paths: usize,
    pub seed: u64,
    pub scheme: Scheme,
    pub initial: Vec<InitialMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y_spec: Option<FieldSpec>,
    pub partition_factor: usize,
    pub levels: Vec<usize>,
    pub t_fractions: Vec<f64>,
    pub malliavin_points: usize,
    pub epsilon: f64,
    pub b_samples: usize,
    pub b_cap: f64,
}

fn default_initial() -> Vec<InitialMode> {
    vec![
        InitialMode {
            mode: ModeRef::Wave {
                k: [0, 1],
                phase: Phase::Cos,
            },
            amplitude: 0.8,
        },
        InitialMode {
            mode: ModeRef::Wave {
                k: [1, 1],
                phase: Phase::Cos,
            },
            amplitude: 0.6,
        },
    ]
}

fn cfg_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Validates, collapses the noise, and fills defaults.
    pub fn resolve(&self, kind: ExperimentKind) -> Result<ResolvedConfig> {
        if self.schema != CONFIG_SCHEMA {
            return cfg_err(format!(
                "unsupported schema {:?}, expected {CONFIG_SCHEMA:?}",
                self.schema
            ));
        }
        if let Some(k) = self.experiment {
            if k != kind {
                return cfg_err(format!(
                    "config is for {} but {} was requested",
                    k.name(),
                    kind.name()
                ));
            }
        }
        if !(self.nu.is_finite() && self.nu > 0.0) {
            return cfg_err(format!("nu must be positive, got {}", self.nu));
        }
        let sigma = match (self.sigma, &self.sigmas) {
            (Some(_), Some(_)) => return cfg_err("give either sigma or sigmas, not both"),
            (Some(s), None) if s.is_finite() && s >= 0.0 => s,
            (Some(s), None) => return cfg_err(format!("sigma must be finite and nonnegative, got {s}")),
            (None, Some(list)) => collapse_noise(&NoiseSpec::new(list.clone()).map_err(|e| Error::Config(e.to_string()))?)
                .map_err(|e| Error::Config(e.to_string()))?,
            (None, None) => return cfg_err("missing sigma or sigmas"),
        };
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return cfg_err(format!("horizon must be positive, got {}", self.horizon));
        }
        if self.n_steps == 0 {
            return cfg_err("n_steps must be at least 1");
        }
        match (self.max_wavenumber, &self.basis_file) {
            (Some(_), Some(_)) => return cfg_err("give either max_wavenumber or basis_file, not both"),
            (None, None) => return cfg_err("missing max_wavenumber or basis_file"),
            (Some(0), None) => return cfg_err("max_wavenumber must be at least 1"),
            _ => {}
        }
        let n_paths = self.n_paths.unwrap_or(1);
        if n_paths == 0 {
            return cfg_err("n_paths must be at least 1");
        }
        let partition_factor = self.partition_factor.unwrap_or(8);
        if partition_factor == 0 {
            return cfg_err("partition_factor must be positive");
        }
        let levels = self.levels.clone().unwrap_or_else(|| match kind {
            ExperimentKind::AnticipatingCheck => vec![self.n_steps],
            _ => (10..=14).map(|p| 1usize << p).collect(),
        });
        let refinement = matches!(kind, ExperimentKind::Convergence)
            || (kind == ExperimentKind::AnticipatingCheck && levels.len() > 1);
        if levels.is_empty() || levels.iter().any(|&n| n == 0) {
            return cfg_err("levels must be positive step counts");
        }
        if refinement {
            if let Some(n) = levels.iter().find(|n| !n.is_power_of_two()) {
                return cfg_err(format!("refinement levels must be powers of two, got {n}"));
            }
            if levels.windows(2).any(|w| w[0] >= w[1]) {
                return cfg_err("refinement levels must increase");
            }
        }
        let t_fractions = self.t_fractions.clone().unwrap_or_else(|| vec![0.25, 0.5, 1.0]);
        if t_fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return cfg_err("t_fractions must lie in (0, 1]");
        }
        let malliavin_points = self.malliavin_points.unwrap_or_else(|| self.n_steps.min(16));
        if malliavin_points == 0 || self.n_steps % malliavin_points != 0 {
            return cfg_err(format!(
                "malliavin_points {malliavin_points} must divide n_steps {}",
                self.n_steps
            ));
        }
        let epsilon = self.epsilon.unwrap_or(1e-3);
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return cfg_err("epsilon must be positive");
        }
        let b_samples = self.b_samples.unwrap_or(1000);
        if b_samples == 0 {
            return cfg_err("b_samples must be at least 1");
        }
        let b_cap = self.b_cap.unwrap_or(10.0);
        if !(b_cap.is_finite() && b_cap > 0.0) {
            return cfg_err("b_cap must be positive");
        }
        let initial = self.initial.clone().unwrap_or_else(default_initial);
        if initial.iter().any(|m| !m.amplitude.is_finite()) {
            return cfg_err("initial amplitudes must be finite");
        }
        Ok(ResolvedConfig {
            schema: CONFIG_SCHEMA.into(),
            experiment: kind,
            nu: self.nu,
            sigma,
            horizon: self.horizon,
            n_steps: self.n_steps,
            max_wavenumber: self.max_wavenumber,
            basis_file: self.basis_file.clone(),
            n_paths,
            seed: self.seed.unwrap_or(0),
            scheme: self.scheme.unwrap_or_default(),
            initial,
            y_spec: self.y_spec.clone(),
            partition_factor,
            levels,
            t_fractions,
            malliavin_points,
            epsilon,
            b_samples,
            b_cap,
        })
    }
}

impl ResolvedConfig {
    pub fn basis(&self) -> Result<SpectralBasis> {
        let b = match (&self.max_wavenumber, &self.basis_file) {
            (Some(k), _) => build_torus_basis(*k),
            (None, Some(p)) => load_basis(p),
            (None, None) => return cfg_err("missing basis"),
        };
        b.map_err(|e| match e {
            Error::Io(io) => Error::Config(format!("cannot read basis file: {io}")),
            other => Error::Config(other.to_string()),
        })
    }

    pub fn initial_state(&self, basis: &SpectralBasis) -> Result<VelocityCoeffs> {
        let mut f = VelocityCoeffs::zeros(basis.len());
        for m in &self.initial {
            f.0[m.mode.resolve(basis)?] += m.amplitude;
        }
        Ok(f)
    }

    /// The random initial field, or the deterministic initial state when no
    /// field is configured.
    pub fn field(&self, basis: &SpectralBasis) -> Result<RandomInitialField> {
        match &self.y_spec {
            None => Ok(RandomInitialField::deterministic(&self.initial_state(basis)?)),
            Some(spec) => {
                let components = spec
                    .components
                    .iter()
                    .map(|c| {
                        Ok(FieldComponent {
                            mode: c.mode.resolve(basis)?,
                            expr: c.expr.clone(),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                for t in &spec.times {
                    if *t > self.horizon {
                        return cfg_err(format!("field time {t} beyond the horizon"));
                    }
                }
                RandomInitialField::new(spec.times.clone(), components, basis.len())
                    .map_err(|e| Error::Config(e.to_string()))
            }
        }
    }
}
