//! Cylindrical random initial fields `Y = Σ_j φ_j(W(τ_1), …, W(τ_m)) e_j`
//! with closed-form Malliavin derivatives.

use serde::{Deserialize, Serialize};

use crate::basis::VelocityCoeffs;
use crate::error::{Error, Result};
use crate::wiener::{StepFunction, TimeGrid, WienerPath};

/// Expression over the arguments `x_l = W(τ_l)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Expr {
    Const { value: f64 },
    Arg { index: usize },
    Add { args: Vec<Expr> },
    Mul { args: Vec<Expr> },
    Neg { arg: Box<Expr> },
    Sin { arg: Box<Expr> },
    Cos { arg: Box<Expr> },
    Exp { arg: Box<Expr> },
    Pow { arg: Box<Expr>, exponent: i32 },
}

impl Expr {
    pub fn constant(value: f64) -> Self {
        Expr::Const { value }
    }

    pub fn arg(index: usize) -> Self {
        Expr::Arg { index }
    }

    pub fn sin(self) -> Self {
        Expr::Sin { arg: Box::new(self) }
    }

    pub fn cos(self) -> Self {
        Expr::Cos { arg: Box::new(self) }
    }

    pub fn exp(self) -> Self {
        Expr::Exp { arg: Box::new(self) }
    }

    pub fn pow(self, exponent: i32) -> Self {
        Expr::Pow {
            arg: Box::new(self),
            exponent,
        }
    }

    pub fn plus(self, other: Expr) -> Self {
        Expr::Add {
            args: vec![self, other],
        }
    }

    pub fn times(self, other: Expr) -> Self {
        Expr::Mul {
            args: vec![self, other],
        }
    }

    fn max_arg(&self) -> Option<usize> {
        match self {
            Expr::Const { .. } => None,
            Expr::Arg { index } => Some(*index),
            Expr::Add { args } | Expr::Mul { args } => args.iter().filter_map(Expr::max_arg).max(),
            Expr::Neg { arg } | Expr::Sin { arg } | Expr::Cos { arg } | Expr::Exp { arg } | Expr::Pow { arg, .. } => {
                arg.max_arg()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Expr::Const { value } if !value.is_finite() => {
                Err(Error::InvalidField(format!("constant {value} is not finite")))
            }
            Expr::Add { args } | Expr::Mul { args } if args.is_empty() => {
                Err(Error::InvalidField("empty sum or product".into()))
            }
            Expr::Add { args } | Expr::Mul { args } => args.iter().try_for_each(Expr::validate),
            Expr::Pow { exponent, .. } if *exponent < 0 => Err(Error::InvalidField(format!(
                "negative exponent {exponent} is not supported"
            ))),
            Expr::Neg { arg } | Expr::Sin { arg } | Expr::Cos { arg } | Expr::Exp { arg } | Expr::Pow { arg, .. } => {
                arg.validate()
            }
            _ => Ok(()),
        }
    }

    /// Value and gradient with respect to the arguments, by forward-mode
    /// differentiation.
    pub fn eval_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let m = x.len();
        match self {
            Expr::Const { value } => (*value, vec![0.0; m]),
            Expr::Arg { index } => {
                let mut g = vec![0.0; m];
                g[*index] = 1.0;
                (x[*index], g)
            }
            Expr::Add { args } => args.iter().fold((0.0, vec![0.0; m]), |(v, mut g), a| {
                let (av, ag) = a.eval_grad(x);
                g.iter_mut().zip(&ag).for_each(|(gi, ai)| *gi += ai);
                (v + av, g)
            }),
            Expr::Mul { args } => args.iter().fold((1.0, vec![0.0; m]), |(v, g), a| {
                let (av, ag) = a.eval_grad(x);
                let g = g.iter().zip(&ag).map(|(gi, ai)| gi * av + v * ai).collect();
                (v * av, g)
            }),
            Expr::Neg { arg } => {
                let (v, g) = arg.eval_grad(x);
                (-v, g.into_iter().map(|d| -d).collect())
            }
            Expr::Sin { arg } => Self::chain(arg, x, f64::sin, f64::cos),
            Expr::Cos { arg } => Self::chain(arg, x, f64::cos, |y| -y.sin()),
            Expr::Exp { arg } => Self::chain(arg, x, f64::exp, f64::exp),
            Expr::Pow { arg, exponent } => {
                let n = *exponent;
                Self::chain(
                    arg,
                    x,
                    |y| y.powi(n),
                    |y| if n == 0 { 0.0 } else { n as f64 * y.powi(n - 1) },
                )
            }
        }
    }

    fn chain(arg: &Expr, x: &[f64], f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64) -> (f64, Vec<f64>) {
        let (v, g) = arg.eval_grad(x);
        let d = df(v);
        (f(v), g.into_iter().map(|gi| d * gi).collect())
    }
}

/// One nonzero component `φ(W(τ)) e_mode`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldComponent {
    pub mode: usize,
    pub expr: Expr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomInitialField {
    times: Vec<f64>,
    components: Vec<FieldComponent>,
    n_modes: usize,
}

impl RandomInitialField {
    pub fn new(times: Vec<f64>, components: Vec<FieldComponent>, n_modes: usize) -> Result<Self> {
        if let Some(w) = times.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidField(format!(
                "evaluation times must increase strictly: {} then {}",
                w[0], w[1]
            )));
        }
        if let Some(t) = times.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(Error::InvalidField(format!(
                "evaluation time {t} must be positive"
            )));
        }
        for c in &components {
            if c.mode >= n_modes {
                return Err(Error::InvalidField(format!(
                    "mode {} out of range for {n_modes} modes",
                    c.mode
                )));
            }
            c.expr.validate()?;
            if let Some(a) = c.expr.max_arg() {
                if a >= times.len() {
                    return Err(Error::InvalidField(format!(
                        "argument {a} refers to a missing evaluation time ({} given)",
                        times.len()
                    )));
                }
            }
        }
        Ok(Self {
            times,
            components,
            n_modes,
        })
    }

    /// A deterministic field.
    pub fn deterministic(f: &VelocityCoeffs) -> Self {
        let components = f
            .0
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(mode, c)| FieldComponent {
                mode,
                expr: Expr::constant(*c),
            })
            .collect();
        Self {
            times: Vec::new(),
            components,
            n_modes: f.len(),
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn components(&self) -> &[FieldComponent] {
        &self.components
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn is_deterministic(&self) -> bool {
        self.times.is_empty()
    }

    /// Grid indices of the evaluation times.
    pub fn nodes(&self, grid: &TimeGrid) -> Result<Vec<usize>> {
        self.times.iter().map(|&t| grid.node(t)).collect()
    }

    fn arguments(&self, path: &WienerPath) -> Result<Vec<f64>> {
        let grid = path.grid();
        Ok(self
            .nodes(&grid)?
            .into_iter()
            .map(|i| path.values()[i])
            .collect())
    }

    /// `Y(ω)` and the gradients `∂_l Y` (one coefficient vector per `τ_l`).
    pub fn evaluate_with_gradient(&self, path: &WienerPath) -> Result<(VelocityCoeffs, Vec<VelocityCoeffs>)> {
        let x = self.arguments(path)?;
        let mut y = VelocityCoeffs::zeros(self.n_modes);
        let mut grads = vec![VelocityCoeffs::zeros(self.n_modes); x.len()];
        for c in &self.components {
            let (v, g) = c.expr.eval_grad(&x);
            y.0[c.mode] += v;
            for (gl, d) in grads.iter_mut().zip(g) {
                gl.0[c.mode] += d;
            }
        }
        if !y.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::InvalidField("field is not finite on this path".into()));
        }
        Ok((y, grads))
    }

    pub fn evaluate(&self, path: &WienerPath) -> Result<VelocityCoeffs> {
        Ok(self.evaluate_with_gradient(path)?.0)
    }

    /// `D_s Y = Σ_l ∂_l φ χ_{[0, τ_l)}(s)`.
    pub fn malliavin(&self, path: &WienerPath, s: f64) -> Result<VelocityCoeffs> {
        path.grid().check_range(s)?;
        let (_, grads) = self.evaluate_with_gradient(path)?;
        let mut d = VelocityCoeffs::zeros(self.n_modes);
        for (t, g) in self.times.iter().zip(&grads) {
            if s < *t - 1e-9 * path.horizon() {
                d.add_scaled(1.0, g);
            }
        }
        Ok(d)
    }

    /// `∫ D_s Y h(s) ds = Σ_l ∂_l φ ∫_0^{τ_l} h`.
    pub fn directional(&self, path: &WienerPath, h: &StepFunction) -> Result<VelocityCoeffs> {
        path.grid().ensure_same(&h.grid(), "direction")?;
        let (_, grads) = self.evaluate_with_gradient(path)?;
        let prim = h.primitive();
        let mut d = VelocityCoeffs::zeros(self.n_modes);
        for (i, g) in self.nodes(&path.grid())?.into_iter().zip(&grads) {
            d.add_scaled(prim[i], g);
        }
        Ok(d)
    }
}
