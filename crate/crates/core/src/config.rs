//! TOML model definitions.
//!
//! ```toml
//! [model]
//! dim = 2
//! horizon = 1.0
//! c = 2.0
//! networks = "affine"        # attach exact networks for the built-in kinds
//! mode = "networked"         # evaluate coefficients through those networks
//! benchmark = "linear_exp"   # closed form used by convergence studies
//!
//! [model.diffusion]
//! kind = "constant"
//! matrix = [[1.0, 0.0], [0.0, 1.0]]
//!
//! [model.terminal]
//! kind = "linear"
//! coeffs = [1.0, 1.0]
//!
//! [model.nonlinearity]
//! kind = "linear"
//! slope = 1.0
//! ```
//!
//! Omitted coefficients are zero. Matrices are nested arrays, one inner
//! array per row. A `preset` (`const_affine` or `linear_exp`) replaces the
//! coefficient sections with the corresponding benchmark model.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::compiler::build_pl_f_network;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{
    BenchmarkId, EvalMode, GaussianMarks, LevySpec, MatrixField, NetworkCoefficientSet, Nonlinearity,
    PideModel, ScalarField, VectorField,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VectorSpec {
    Zero,
    Constant { value: Vec<f64> },
    Linear { matrix: Vec<Vec<f64>> },
    Affine { matrix: Vec<Vec<f64>>, offset: Vec<f64> },
}

/// `linear` and `affine` mean `x ↦ diag(A x)` and `x ↦ diag(A x + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MatrixSpec {
    Zero,
    Identity {
        #[serde(default = "one")]
        scale: f64,
    },
    Constant { matrix: Vec<Vec<f64>> },
    Linear { matrix: Vec<Vec<f64>> },
    Affine { matrix: Vec<Vec<f64>>, offset: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TerminalSpec {
    Zero,
    Constant { value: f64 },
    Linear { coeffs: Vec<f64> },
    Affine { coeffs: Vec<f64>, offset: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedFunction {
    Tanh,
    Sin,
    Abs,
    Relu,
}

impl NamedFunction {
    fn eval(self, w: f64) -> f64 {
        match self {
            NamedFunction::Tanh => w.tanh(),
            NamedFunction::Sin => w.sin(),
            NamedFunction::Abs => w.abs(),
            NamedFunction::Relu => w.max(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NonlinearitySpec {
    Zero,
    Constant { value: f64 },
    Linear { slope: f64 },
    Affine { slope: f64, offset: f64 },
    /// A named function; its network is the piecewise-linear interpolant
    /// on `[−radius, radius]` with spacing at most `grid`.
    Interpolated {
        function: NamedFunction,
        #[serde(default = "one")]
        lipschitz: f64,
        radius: f64,
        grid: f64,
    },
}

/// Compound Poisson jumps with Gaussian marks `z ~ N(mark_mean, mark_std² I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpSpec {
    pub intensity: f64,
    pub mark_mean: Vec<f64>,
    pub mark_std: f64,
    pub factor: MatrixSpec,
    pub mark_map: VectorSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkSpec {
    #[default]
    None,
    Affine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum PresetSpec {
    ConstAffine { g0: f64, f0: f64 },
    LinearExp {
        coeffs: Vec<f64>,
        #[serde(default = "one")]
        sigma: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn two() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default = "one")]
    pub horizon: f64,
    #[serde(default = "two")]
    pub c: f64,
    #[serde(default)]
    pub preset: Option<PresetSpec>,
    #[serde(default)]
    pub benchmark: Option<BenchmarkId>,
    #[serde(default)]
    pub networks: NetworkSpec,
    #[serde(default)]
    pub mode: EvalMode,
    #[serde(default)]
    pub drift: Option<VectorSpec>,
    #[serde(default)]
    pub diffusion: Option<MatrixSpec>,
    #[serde(default)]
    pub jumps: Option<JumpSpec>,
    #[serde(default)]
    pub terminal: Option<TerminalSpec>,
    #[serde(default)]
    pub nonlinearity: Option<NonlinearitySpec>,
}

fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<Matrix> {
    Matrix::from_rows(rows).map_err(|e| Error::config(format!("{name}: {e}")))
}

impl VectorSpec {
    fn build(&self, name: &str) -> Result<VectorField> {
        Ok(match self {
            VectorSpec::Zero => VectorField::Zero,
            VectorSpec::Constant { value } => VectorField::Constant(value.clone()),
            VectorSpec::Linear { matrix: m } => VectorField::Linear(matrix(name, m)?),
            VectorSpec::Affine { matrix: m, offset } => VectorField::Affine(matrix(name, m)?, offset.clone()),
        })
    }
}

impl MatrixSpec {
    fn build(&self, name: &str, d: usize) -> Result<MatrixField> {
        Ok(match self {
            MatrixSpec::Zero => MatrixField::Zero,
            MatrixSpec::Identity { scale } => MatrixField::Constant(Matrix::identity(d).scale(*scale)),
            MatrixSpec::Constant { matrix: m } => MatrixField::Constant(matrix(name, m)?),
            MatrixSpec::Linear { matrix: m } => MatrixField::DiagAffine(matrix(name, m)?, vec![0.0; d]),
            MatrixSpec::Affine { matrix: m, offset } => MatrixField::DiagAffine(matrix(name, m)?, offset.clone()),
        })
    }
}

impl TerminalSpec {
    fn build(&self) -> ScalarField {
        match self {
            TerminalSpec::Zero => ScalarField::Zero,
            TerminalSpec::Constant { value } => ScalarField::Constant(*value),
            TerminalSpec::Linear { coeffs } => ScalarField::Linear(coeffs.clone()),
            TerminalSpec::Affine { coeffs, offset } => ScalarField::Affine(coeffs.clone(), *offset),
        }
    }
}

impl ModelSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Wrapper {
            model: ModelSpec,
        }
        toml::from_str::<Wrapper>(text)
            .map(|w| w.model)
            .map_err(|e| Error::config(e.to_string()))
    }

    /// Benchmark id named explicitly or implied by the preset.
    pub fn benchmark_id(&self) -> Option<BenchmarkId> {
        self.benchmark.or(match self.preset {
            Some(PresetSpec::ConstAffine { .. }) => Some(BenchmarkId::ConstAffine),
            Some(PresetSpec::LinearExp { .. }) => Some(BenchmarkId::LinearExp),
            None => None,
        })
    }

    pub fn build(&self) -> Result<PideModel> {
        let model = match &self.preset {
            Some(PresetSpec::ConstAffine { g0, f0 }) => {
                let d = self.dim.ok_or_else(|| Error::config("model.dim is required"))?;
                PideModel::const_affine(d, self.horizon, self.c, *g0, *f0)?
            }
            Some(PresetSpec::LinearExp { coeffs, sigma }) => {
                if let Some(d) = self.dim {
                    if d != coeffs.len() {
                        return Err(Error::config(format!(
                            "model.dim = {d} but the preset has {} coefficients",
                            coeffs.len()
                        )));
                    }
                }
                PideModel::linear_exp(self.horizon, self.c, coeffs.clone(), *sigma)?
            }
            None => self.build_explicit()?,
        };
        let model = match (self.networks, &self.nonlinearity) {
            (NetworkSpec::None, _) => model,
            (NetworkSpec::Affine, Some(NonlinearitySpec::Interpolated { function, lipschitz, radius, grid })) => {
                let f = *function;
                let phi_f = build_pl_f_network(move |w| f.eval(w), *lipschitz, *radius, *grid)?;
                let nets = NetworkCoefficientSet::from_affine_coefficients(&model, phi_f)?;
                model.with_networks(nets)?
            }
            (NetworkSpec::Affine, _) => model.networked_affine()?,
        };
        model.with_mode(self.mode)
    }

    fn build_explicit(&self) -> Result<PideModel> {
        let d = self.dim.ok_or_else(|| Error::config("model.dim is required"))?;
        let mut model = PideModel::new(d, self.horizon, self.c)?;
        if let Some(spec) = &self.drift {
            model = model.with_drift(spec.build("model.drift")?)?;
        }
        if let Some(spec) = &self.diffusion {
            model = model.with_diffusion(spec.build("model.diffusion", d)?)?;
        }
        if let Some(j) = &self.jumps {
            let mark_map = j.mark_map.build("model.jumps.mark_map")?;
            let levy = LevySpec::gaussian_affine(
                j.intensity,
                GaussianMarks::new(j.mark_mean.clone(), j.mark_std),
                &mark_map,
                d,
            )?;
            model = model.with_jumps(j.factor.build("model.jumps.factor", d)?, mark_map, levy)?;
        }
        if let Some(spec) = &self.terminal {
            model = model.with_terminal(spec.build())?;
        }
        if let Some(spec) = &self.nonlinearity {
            model = model.with_nonlinearity(match spec {
                NonlinearitySpec::Zero => Nonlinearity::Zero,
                NonlinearitySpec::Constant { value } => Nonlinearity::Constant(*value),
                NonlinearitySpec::Linear { slope } => Nonlinearity::Linear(*slope),
                NonlinearitySpec::Affine { slope, offset } => Nonlinearity::Affine(*slope, *offset),
                NonlinearitySpec::Interpolated { function, .. } => {
                    let f = *function;
                    Nonlinearity::Custom(Arc::new(move |w| f.eval(w)))
                }
            });
        }
        Ok(model)
    }
}
