//! Problem definitions for semilinear jump-diffusion PIDEs.
//!
//! A [`PideModel`] bundles the drift `β`, diffusion `σ`, factored jump
//! coefficient `γ(y, z) = F(y) G(z)`, a finite-activity Lévy measure, the
//! nonlinearity `f` and the terminal condition `g`. Coefficients are given
//! either by one of the built-in kinds (zero, constant, linear, affine) or
//! by an arbitrary closure. Optionally a [`NetworkCoefficientSet`] supplies
//! ReLU networks realizing the same maps; in [`EvalMode::Networked`] every
//! coefficient is evaluated through those networks.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::randomness::{MarkDraws, RngStream};
use crate::relunet::{self, DimVector, ReluNetwork};

pub type VectorFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(&[f64]) -> Matrix + Send + Sync>;
pub type ScalarFieldFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Map `R^d -> R^q`.
#[derive(Clone)]
pub enum VectorField {
    Zero,
    Constant(Vec<f64>),
    Linear(Matrix),
    Affine(Matrix, Vec<f64>),
    Custom(VectorFn),
}

impl VectorField {
    pub fn eval(&self, x: &[f64], out_dim: usize) -> Vec<f64> {
        match self {
            VectorField::Zero => vec![0.0; out_dim],
            VectorField::Constant(v) => v.clone(),
            VectorField::Linear(a) => a.matvec(x),
            VectorField::Affine(a, b) => {
                let mut y = a.matvec(x);
                for (yi, bi) in y.iter_mut().zip(b) {
                    *yi += bi;
                }
                y
            }
            VectorField::Custom(f) => f(x),
        }
    }

    /// `(A, b)` with `x ↦ A x + b`, when the field is of a built-in kind.
    pub fn as_affine(&self, in_dim: usize, out_dim: usize) -> Option<(Matrix, Vec<f64>)> {
        match self {
            VectorField::Zero => Some((Matrix::zeros(out_dim, in_dim), vec![0.0; out_dim])),
            VectorField::Constant(v) => Some((Matrix::zeros(out_dim, in_dim), v.clone())),
            VectorField::Linear(a) => Some((a.clone(), vec![0.0; out_dim])),
            VectorField::Affine(a, b) => Some((a.clone(), b.clone())),
            VectorField::Custom(_) => None,
        }
    }

    pub fn is_identically_zero(&self) -> bool {
        match self {
            VectorField::Zero => true,
            VectorField::Constant(v) => v.iter().all(|x| *x == 0.0),
            VectorField::Linear(a) => a.is_zero(),
            VectorField::Affine(a, b) => a.is_zero() && b.iter().all(|x| *x == 0.0),
            VectorField::Custom(_) => false,
        }
    }

    fn check_shape(&self, name: &str, in_dim: usize, out_dim: usize) -> Result<()> {
        let ok = match self {
            VectorField::Zero | VectorField::Custom(_) => true,
            VectorField::Constant(v) => v.len() == out_dim,
            VectorField::Linear(a) => a.rows() == out_dim && a.cols() == in_dim,
            VectorField::Affine(a, b) => {
                a.rows() == out_dim && a.cols() == in_dim && b.len() == out_dim
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::shape(format!("{name} must map R^{in_dim} to R^{out_dim}")))
        }
    }
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VectorField::Zero => write!(f, "Zero"),
            VectorField::Constant(v) => write!(f, "Constant({v:?})"),
            VectorField::Linear(a) => write!(f, "Linear({:?})", a.to_rows()),
            VectorField::Affine(a, b) => write!(f, "Affine({:?}, {b:?})", a.to_rows()),
            VectorField::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Map `R^d -> R^{d×d}`.
///
/// `DiagAffine(A, b)` is `x ↦ diag(A x + b)`, so `σ(x) v = diag(v)(A x + b)`
/// stays affine in `x` for every fixed direction `v`.
#[derive(Clone)]
pub enum MatrixField {
    Zero,
    Constant(Matrix),
    DiagAffine(Matrix, Vec<f64>),
    Custom(MatrixFn),
}

impl MatrixField {
    pub fn eval(&self, x: &[f64], d: usize) -> Matrix {
        match self {
            MatrixField::Zero => Matrix::zeros(d, d),
            MatrixField::Constant(m) => m.clone(),
            MatrixField::DiagAffine(a, b) => {
                let mut diag = a.matvec(x);
                for (v, o) in diag.iter_mut().zip(b) {
                    *v += o;
                }
                Matrix::diagonal(&diag)
            }
            MatrixField::Custom(f) => f(x),
        }
    }

    /// `M(x) v`.
    pub fn apply(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        match self {
            MatrixField::Zero => vec![0.0; v.len()],
            MatrixField::Constant(m) => m.matvec(v),
            MatrixField::DiagAffine(a, b) => a
                .matvec(x)
                .iter()
                .zip(b)
                .zip(v)
                .map(|((ax, bi), vi)| (ax + bi) * vi)
                .collect(),
            MatrixField::Custom(f) => f(x).matvec(v),
        }
    }

    /// Affine form of `x ↦ M(x) v` for built-in kinds.
    pub fn directional_affine(&self, v: &[f64], d: usize) -> Option<(Matrix, Vec<f64>)> {
        match self {
            MatrixField::Zero => Some((Matrix::zeros(d, d), vec![0.0; d])),
            MatrixField::Constant(m) => Some((Matrix::zeros(d, d), m.matvec(v))),
            MatrixField::DiagAffine(a, b) => Some((
                a.scale_rows(v),
                b.iter().zip(v).map(|(bi, vi)| bi * vi).collect(),
            )),
            MatrixField::Custom(_) => None,
        }
    }

    pub fn is_identically_zero(&self) -> bool {
        match self {
            MatrixField::Zero => true,
            MatrixField::Constant(m) => m.is_zero(),
            MatrixField::DiagAffine(a, b) => a.is_zero() && b.iter().all(|x| *x == 0.0),
            MatrixField::Custom(_) => false,
        }
    }

    fn check_shape(&self, name: &str, d: usize) -> Result<()> {
        let ok = match self {
            MatrixField::Zero | MatrixField::Custom(_) => true,
            MatrixField::Constant(m) => m.rows() == d && m.cols() == d,
            MatrixField::DiagAffine(a, b) => a.rows() == d && a.cols() == d && b.len() == d,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::shape(format!("{name} must be {d}x{d}-valued on R^{d}")))
        }
    }
}

impl fmt::Debug for MatrixField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixField::Zero => write!(f, "Zero"),
            MatrixField::Constant(m) => write!(f, "Constant({:?})", m.to_rows()),
            MatrixField::DiagAffine(a, b) => write!(f, "DiagAffine({:?}, {b:?})", a.to_rows()),
            MatrixField::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Map `R^d -> R` (terminal condition).
#[derive(Clone)]
pub enum ScalarField {
    Zero,
    Constant(f64),
    Linear(Vec<f64>),
    Affine(Vec<f64>, f64),
    Custom(ScalarFieldFn),
}

impl ScalarField {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            ScalarField::Zero => 0.0,
            ScalarField::Constant(c) => *c,
            ScalarField::Linear(a) => linalg::dot(a, x),
            ScalarField::Affine(a, b) => linalg::dot(a, x) + b,
            ScalarField::Custom(f) => f(x),
        }
    }

    pub fn as_affine(&self, d: usize) -> Option<(Vec<f64>, f64)> {
        match self {
            ScalarField::Zero => Some((vec![0.0; d], 0.0)),
            ScalarField::Constant(c) => Some((vec![0.0; d], *c)),
            ScalarField::Linear(a) => Some((a.clone(), 0.0)),
            ScalarField::Affine(a, b) => Some((a.clone(), *b)),
            ScalarField::Custom(_) => None,
        }
    }

    fn check_shape(&self, d: usize) -> Result<()> {
        match self {
            ScalarField::Linear(a) | ScalarField::Affine(a, _) if a.len() != d => Err(
                Error::shape(format!("terminal condition needs {d} coefficients, got {}", a.len())),
            ),
            _ => Ok(()),
        }
    }
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarField::Zero => write!(f, "Zero"),
            ScalarField::Constant(c) => write!(f, "Constant({c})"),
            ScalarField::Linear(a) => write!(f, "Linear({a:?})"),
            ScalarField::Affine(a, b) => write!(f, "Affine({a:?}, {b})"),
            ScalarField::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// The nonlinearity `f: R -> R`.
#[derive(Clone)]
pub enum Nonlinearity {
    Zero,
    Constant(f64),
    /// `w ↦ a w`.
    Linear(f64),
    /// `w ↦ a w + b`.
    Affine(f64, f64),
    Custom(RealFn),
}

impl Nonlinearity {
    pub fn eval(&self, w: f64) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Constant(c) => *c,
            Nonlinearity::Linear(a) => a * w,
            Nonlinearity::Affine(a, b) => a * w + b,
            Nonlinearity::Custom(f) => f(w),
        }
    }

    pub fn as_affine(&self) -> Option<(f64, f64)> {
        match self {
            Nonlinearity::Zero => Some((0.0, 0.0)),
            Nonlinearity::Constant(c) => Some((0.0, *c)),
            Nonlinearity::Linear(a) => Some((*a, 0.0)),
            Nonlinearity::Affine(a, b) => Some((*a, *b)),
            Nonlinearity::Custom(_) => None,
        }
    }
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Nonlinearity::Zero => write!(f, "Zero"),
            Nonlinearity::Constant(c) => write!(f, "Constant({c})"),
            Nonlinearity::Linear(a) => write!(f, "Linear({a})"),
            Nonlinearity::Affine(a, b) => write!(f, "Affine({a}, {b})"),
            Nonlinearity::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Draws one jump mark `z` from the normalized Lévy measure `ν / λ`.
pub trait JumpSampler: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn sample(&self, draws: &mut MarkDraws) -> Vec<f64>;
}

/// Marks `z ~ N(mean, std² I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMarks {
    pub mean: Vec<f64>,
    pub std_dev: f64,
}

impl GaussianMarks {
    pub fn new(mean: Vec<f64>, std_dev: f64) -> Self {
        GaussianMarks { mean, std_dev }
    }
}

impl JumpSampler for GaussianMarks {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn sample(&self, draws: &mut MarkDraws) -> Vec<f64> {
        self.mean
            .iter()
            .map(|m| m + self.std_dev * draws.next_gaussian())
            .collect()
    }
}

/// Every jump has the same mark.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedMarks(pub Vec<f64>);

impl JumpSampler for FixedMarks {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn sample(&self, _draws: &mut MarkDraws) -> Vec<f64> {
        self.0.clone()
    }
}

/// Finite-activity (compound Poisson) Lévy measure.
#[derive(Debug, Clone)]
pub struct LevySpec {
    intensity: f64,
    sampler: Arc<dyn JumpSampler>,
    g_mean: Vec<f64>,
    g_second_moment_bound: f64,
}

impl LevySpec {
    /// `g_mean` is `∫ G dν` and `g_second_moment_bound` an upper bound on
    /// `∫ ‖G‖² dν`, both supplied analytically.
    pub fn new(
        intensity: f64,
        sampler: Arc<dyn JumpSampler>,
        g_mean: Vec<f64>,
        g_second_moment_bound: f64,
    ) -> Result<Self> {
        if !(intensity >= 0.0) || !intensity.is_finite() {
            return Err(Error::config(format!("jump intensity must be >= 0, got {intensity}")));
        }
        if !(g_second_moment_bound >= 0.0) {
            return Err(Error::config("jump second-moment bound must be >= 0"));
        }
        if intensity == 0.0 && g_mean.iter().any(|v| *v != 0.0) {
            return Err(Error::config("zero jump intensity requires a zero compensator"));
        }
        Ok(LevySpec {
            intensity,
            sampler,
            g_mean,
            g_second_moment_bound,
        })
    }

    /// No jumps in dimension `d`.
    pub fn none(d: usize) -> Self {
        LevySpec {
            intensity: 0.0,
            sampler: Arc::new(FixedMarks(vec![0.0; d])),
            g_mean: vec![0.0; d],
            g_second_moment_bound: 0.0,
        }
    }

    /// Gaussian marks with an affine mark map `G(z) = A z + b`; the
    /// compensator and second moment are computed in closed form.
    pub fn gaussian_affine(intensity: f64, marks: GaussianMarks, mark_map: &VectorField, d: usize) -> Result<Self> {
        let (a, b) = mark_map
            .as_affine(marks.dim(), d)
            .ok_or_else(|| Error::config("closed-form compensator needs an affine mark map"))?;
        let mean_g: Vec<f64> = a
            .matvec(&marks.mean)
            .iter()
            .zip(&b)
            .map(|(x, y)| x + y)
            .collect();
        let second = linalg::norm_sq(&mean_g) + marks.std_dev * marks.std_dev * a.frobenius_sq();
        LevySpec::new(
            intensity,
            Arc::new(marks),
            mean_g.iter().map(|v| intensity * v).collect(),
            intensity * second,
        )
    }

    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    pub fn sampler(&self) -> &dyn JumpSampler {
        self.sampler.as_ref()
    }

    pub fn g_mean(&self) -> &[f64] {
        &self.g_mean
    }

    pub fn g_second_moment_bound(&self) -> f64 {
        self.g_second_moment_bound
    }
}

/// Builds, for a direction `v`, a network realizing `x ↦ M(x) v`.
#[derive(Clone)]
pub struct DirectionalNet {
    factory: Arc<dyn Fn(&[f64]) -> ReluNetwork + Send + Sync>,
}

impl DirectionalNet {
    pub fn new(factory: impl Fn(&[f64]) -> ReluNetwork + Send + Sync + 'static) -> Self {
        DirectionalNet {
            factory: Arc::new(factory),
        }
    }

    pub fn build(&self, v: &[f64]) -> ReluNetwork {
        (self.factory)(v)
    }

    /// Dimension vector at direction zero.
    pub fn dims(&self, d: usize) -> DimVector {
        self.build(&vec![0.0; d]).dims()
    }
}

impl fmt::Debug for DirectionalNet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("DirectionalNet(..)")
    }
}

/// Networks realizing the model coefficients.
#[derive(Debug, Clone)]
pub struct NetworkCoefficientSet {
    pub phi_beta: ReluNetwork,
    pub phi_sigma_dir: DirectionalNet,
    pub phi_jump_dir: DirectionalNet,
    pub phi_g: ReluNetwork,
    pub phi_f: ReluNetwork,
}

impl NetworkCoefficientSet {
    /// Exact networks for models whose coefficients are all built-in kinds.
    pub fn from_affine_model(model: &PideModel) -> Result<Self> {
        let (a, b) = model
            .nonlinearity_kind()
            .as_affine()
            .ok_or_else(|| Error::config("nonlinearity is not affine; supply a network for it"))?;
        let phi_f = relunet::affine_net(&Matrix::new(1, 1, vec![a])?, &[b])?;
        Self::from_affine_coefficients(model, phi_f)
    }

    /// Exact networks for the built-in coefficient kinds plus a supplied
    /// network for `f`.
    pub fn from_affine_coefficients(model: &PideModel, phi_f: ReluNetwork) -> Result<Self> {
        let d = model.dim();
        let not_affine = |name: &str| Error::config(format!("{name} is not of a built-in affine kind"));
        let (a, b) = model.drift_kind().as_affine(d, d).ok_or_else(|| not_affine("drift"))?;
        let phi_beta = relunet::affine_net(&a, &b)?;
        let (ga, gb) = model.terminal_kind().as_affine(d).ok_or_else(|| not_affine("terminal condition"))?;
        let phi_g = relunet::affine_net(&Matrix::new(1, d, ga)?, &[gb])?;
        let sigma = model.diffusion_kind().clone();
        if sigma.directional_affine(&vec![0.0; d], d).is_none() {
            return Err(not_affine("diffusion"));
        }
        let jump = model.jump_factor_kind().clone();
        if jump.directional_affine(&vec![0.0; d], d).is_none() {
            return Err(not_affine("jump factor"));
        }
        let phi_sigma_dir = DirectionalNet::new(move |v: &[f64]| {
            let (a, b) = sigma.directional_affine(v, v.len()).expect("checked affine");
            relunet::affine_net(&a, &b).expect("square affine map")
        });
        let phi_jump_dir = DirectionalNet::new(move |v: &[f64]| {
            let (a, b) = jump.directional_affine(v, v.len()).expect("checked affine");
            relunet::affine_net(&a, &b).expect("square affine map")
        });
        Ok(NetworkCoefficientSet {
            phi_beta,
            phi_sigma_dir,
            phi_jump_dir,
            phi_g,
            phi_f,
        })
    }

    fn check_shapes(&self, d: usize) -> Result<()> {
        let expect = |name: &str, net: &ReluNetwork, inp: usize, out: usize| -> Result<()> {
            if net.input_dim() != inp || net.output_dim() != out {
                return Err(Error::shape(format!(
                    "{name} network has shape {} but must map R^{inp} to R^{out}",
                    net.dims()
                )));
            }
            if net.depth() < 3 {
                return Err(Error::shape(format!("{name} network needs at least one hidden layer")));
            }
            Ok(())
        };
        expect("drift", &self.phi_beta, d, d)?;
        expect("diffusion", &self.phi_sigma_dir.build(&vec![0.0; d]), d, d)?;
        expect("jump factor", &self.phi_jump_dir.build(&vec![0.0; d]), d, d)?;
        expect("terminal", &self.phi_g, d, 1)?;
        expect("nonlinearity", &self.phi_f, 1, 1)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Evaluate the coefficient kinds directly.
    #[default]
    Plain,
    /// Evaluate every coefficient through its network.
    Networked,
}

/// A semilinear PIDE instance on `[0, T] × R^d`.
#[derive(Debug, Clone)]
pub struct PideModel {
    d: usize,
    horizon: f64,
    c: f64,
    beta: VectorField,
    sigma: MatrixField,
    jump_f: MatrixField,
    jump_g: VectorField,
    levy: LevySpec,
    f: Nonlinearity,
    g: ScalarField,
    nets: Option<Arc<NetworkCoefficientSet>>,
    mode: EvalMode,
}

impl PideModel {
    /// Model with all coefficients zero and no jumps.
    pub fn new(d: usize, horizon: f64, c: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::config("dimension must be >= 1"));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::config(format!("horizon must be positive, got {horizon}")));
        }
        if !(c >= 2.0) || !c.is_finite() {
            return Err(Error::config(format!("constant c must be >= 2, got {c}")));
        }
        Ok(PideModel {
            d,
            horizon,
            c,
            beta: VectorField::Zero,
            sigma: MatrixField::Zero,
            jump_f: MatrixField::Zero,
            jump_g: VectorField::Zero,
            levy: LevySpec::none(d),
            f: Nonlinearity::Zero,
            g: ScalarField::Zero,
            nets: None,
            mode: EvalMode::Plain,
        })
    }

    pub fn with_drift(mut self, beta: VectorField) -> Result<Self> {
        beta.check_shape("drift", self.d, self.d)?;
        self.beta = beta;
        Ok(self)
    }

    pub fn with_diffusion(mut self, sigma: MatrixField) -> Result<Self> {
        sigma.check_shape("diffusion", self.d)?;
        self.sigma = sigma;
        Ok(self)
    }

    /// Jump coefficient `γ(y, z) = F(y) G(z)`.
    pub fn with_jumps(mut self, factor: MatrixField, mark_map: VectorField, levy: LevySpec) -> Result<Self> {
        factor.check_shape("jump factor", self.d)?;
        mark_map.check_shape("jump mark map", levy.sampler().dim(), self.d)?;
        if levy.g_mean().len() != self.d {
            return Err(Error::shape(format!(
                "jump compensator has length {} in dimension {}",
                levy.g_mean().len(),
                self.d
            )));
        }
        self.jump_f = factor;
        self.jump_g = mark_map;
        self.levy = levy;
        Ok(self)
    }

    pub fn with_nonlinearity(mut self, f: Nonlinearity) -> Self {
        self.f = f;
        self
    }

    pub fn with_terminal(mut self, g: ScalarField) -> Result<Self> {
        g.check_shape(self.d)?;
        self.g = g;
        Ok(self)
    }

    pub fn with_networks(mut self, nets: NetworkCoefficientSet) -> Result<Self> {
        nets.check_shapes(self.d)?;
        self.nets = Some(Arc::new(nets));
        Ok(self)
    }

    /// Attaches exact networks derived from the built-in coefficient kinds.
    pub fn networked_affine(self) -> Result<Self> {
        let nets = NetworkCoefficientSet::from_affine_model(&self)?;
        self.with_networks(nets)
    }

    pub fn with_mode(mut self, mode: EvalMode) -> Result<Self> {
        if mode == EvalMode::Networked && self.nets.is_none() {
            return Err(Error::config("networked evaluation needs a network coefficient set"));
        }
        self.mode = mode;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn levy(&self) -> &LevySpec {
        &self.levy
    }

    pub fn networks(&self) -> Option<&NetworkCoefficientSet> {
        self.nets.as_deref()
    }

    pub fn mode(&self) -> EvalMode {
        self.mode
    }

    pub fn drift_kind(&self) -> &VectorField {
        &self.beta
    }

    pub fn diffusion_kind(&self) -> &MatrixField {
        &self.sigma
    }

    pub fn jump_factor_kind(&self) -> &MatrixField {
        &self.jump_f
    }

    pub fn jump_mark_kind(&self) -> &VectorField {
        &self.jump_g
    }

    pub fn nonlinearity_kind(&self) -> &Nonlinearity {
        &self.f
    }

    pub fn terminal_kind(&self) -> &ScalarField {
        &self.g
    }

    fn net_mode(&self) -> Option<&NetworkCoefficientSet> {
        match self.mode {
            EvalMode::Networked => self.nets.as_deref(),
            EvalMode::Plain => None,
        }
    }

    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        match self.net_mode() {
            Some(n) => n.phi_beta.eval(x),
            None => self.beta.eval(x, self.d),
        }
    }

    /// `σ(x) v`.
    pub fn diffusion_apply(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        match self.net_mode() {
            Some(n) => n.phi_sigma_dir.build(v).eval(x),
            None => self.sigma.apply(x, v),
        }
    }

    /// `F(x) v`.
    pub fn jump_apply(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        match self.net_mode() {
            Some(n) => n.phi_jump_dir.build(v).eval(x),
            None => self.jump_f.apply(x, v),
        }
    }

    /// `G(z)`.
    pub fn jump_mark(&self, z: &[f64]) -> Vec<f64> {
        self.jump_g.eval(z, self.d)
    }

    /// `γ(y, z) = F(y) G(z)`.
    pub fn gamma(&self, y: &[f64], z: &[f64]) -> Vec<f64> {
        self.jump_apply(y, &self.jump_mark(z))
    }

    pub fn terminal(&self, x: &[f64]) -> f64 {
        match self.net_mode() {
            Some(n) => n.phi_g.eval_scalar(x),
            None => self.g.eval(x),
        }
    }

    pub fn nonlinearity(&self, w: f64) -> f64 {
        match self.net_mode() {
            Some(n) => n.phi_f.eval_scalar(&[w]),
            None => self.f.eval(w),
        }
    }

    /// `g0 + f0 (T - t)` benchmark: constant `g ≡ g0`, `f ≡ f0`, unit
    /// diffusion and no drift.
    pub fn const_affine(d: usize, horizon: f64, c: f64, g0: f64, f0: f64) -> Result<Self> {
        PideModel::new(d, horizon, c)?
            .with_diffusion(MatrixField::Constant(Matrix::identity(d)))?
            .with_terminal(ScalarField::Constant(g0))
            .map(|m| m.with_nonlinearity(Nonlinearity::Constant(f0)))
    }

    /// `g(x) e^{T-t}` benchmark: linear `g(x) = a·x`, `f(u) = u`, no drift and
    /// diffusion `σ ≡ sigma_scale · I`.
    pub fn linear_exp(horizon: f64, c: f64, coeffs: Vec<f64>, sigma_scale: f64) -> Result<Self> {
        let d = coeffs.len();
        PideModel::new(d, horizon, c)?
            .with_diffusion(MatrixField::Constant(Matrix::identity(d).scale(sigma_scale)))?
            .with_terminal(ScalarField::Linear(coeffs))
            .map(|m| m.with_nonlinearity(Nonlinearity::Linear(1.0)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkId {
    ConstAffine,
    LinearExp,
}

impl std::str::FromStr for BenchmarkId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "const_affine" | "constaffine" => Ok(BenchmarkId::ConstAffine),
            "linear_exp" | "linearexp" => Ok(BenchmarkId::LinearExp),
            other => Err(Error::config(format!("unknown benchmark `{other}`"))),
        }
    }
}

/// Closed-form solution of a benchmark model at `(t, x)`.
pub fn benchmark_solution(model: &PideModel, id: BenchmarkId, t: f64, x: &[f64]) -> Result<f64> {
    let horizon = model.horizon();
    if !(0.0..=horizon).contains(&t) {
        return Err(Error::invalid(format!("time {t} outside [0, {horizon}]")));
    }
    if x.len() != model.dim() {
        return Err(Error::shape(format!("point of length {} in dimension {}", x.len(), model.dim())));
    }
    match id {
        BenchmarkId::ConstAffine => {
            let g0 = match model.terminal_kind() {
                ScalarField::Zero => 0.0,
                ScalarField::Constant(c) => *c,
                other => {
                    return Err(Error::config(format!(
                        "constant benchmark needs a constant terminal condition, got {other:?}"
                    )))
                }
            };
            let f0 = match model.nonlinearity_kind() {
                Nonlinearity::Zero => 0.0,
                Nonlinearity::Constant(c) => *c,
                other => {
                    return Err(Error::config(format!(
                        "constant benchmark needs a constant nonlinearity, got {other:?}"
                    )))
                }
            };
            Ok(g0 + f0 * (horizon - t))
        }
        BenchmarkId::LinearExp => {
            if !model.drift_kind().is_identically_zero() {
                return Err(Error::config("exponential benchmark needs zero drift"));
            }
            match model.nonlinearity_kind() {
                Nonlinearity::Linear(a) if *a == 1.0 => {}
                Nonlinearity::Affine(a, b) if *a == 1.0 && *b == 0.0 => {}
                other => {
                    return Err(Error::config(format!(
                        "exponential benchmark needs f(u) = u, got {other:?}"
                    )))
                }
            }
            if matches!(model.terminal_kind(), ScalarField::Custom(_)) {
                return Err(Error::config("exponential benchmark needs an affine terminal condition"));
            }
            Ok(model.terminal_kind().eval(x) * (horizon - t).exp())
        }
    }
}

/// One sampled inequality of the standing assumptions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub name: String,
    /// Largest observed `lhs / rhs`.
    pub worst_ratio: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub checks: Vec<AssumptionCheck>,
    /// Hypotheses that are recorded but not sampled.
    pub not_checked: Vec<String>,
    pub pass: bool,
    pub violated: Vec<String>,
}

pub const CHECK_LIPSCHITZ_COEFFICIENTS: &str = "lipschitz drift/diffusion/jump";
pub const CHECK_LIPSCHITZ_F: &str = "lipschitz f";
pub const CHECK_LIPSCHITZ_G: &str = "lipschitz g";
pub const CHECK_GROWTH_AT_ZERO: &str = "growth at zero";

const RATIO_SLACK: f64 = 1e-9;

fn finite_vec(name: &'static str, point: &[f64], v: Vec<f64>) -> Result<Vec<f64>> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err(Error::NonFiniteCoefficient {
            coefficient: name,
            point: point.to_vec(),
        })
    }
}

fn finite_scalar(name: &'static str, point: &[f64], v: f64) -> Result<f64> {
    finite_vec(name, point, vec![v]).map(|v| v[0])
}

/// Sampling-based check of the Lipschitz and growth conditions.
///
/// Point pairs are `10 · N(0, I)` draws from `stream`. The jump integral
/// `∫ ‖(F(x) − F(y)) G(z)‖² ν(dz)` is bounded by
/// `‖F(x) − F(y)‖_F² · ∫ ‖G‖² dν` using the supplied second-moment bound.
/// A failed check is advisory; only non-finite coefficient values error.
pub fn validate_assumptions(
    model: &PideModel,
    sample_count: usize,
    stream: &RngStream,
) -> Result<AssumptionReport> {
    if sample_count < 2 {
        return Err(Error::invalid("assumption check needs at least 2 samples"));
    }
    let d = model.dim();
    let c = model.c();
    let horizon = model.horizon();
    let dc = (d as f64).powf(c);
    let m2 = model.levy().g_second_moment_bound();
    let mut counter = 0u64;
    let mut gaussian = |scale: f64, n: usize| -> Vec<f64> {
        (0..n)
            .map(|_| {
                counter += 1;
                scale * stream.gaussian(counter)
            })
            .collect()
    };
    let sigma_of = |x: &[f64]| -> Result<Matrix> {
        let m = model.diffusion_kind().eval(x, d);
        finite_vec("diffusion", x, m.data().to_vec())?;
        Ok(m)
    };
    let jump_of = |x: &[f64]| -> Result<Matrix> {
        let m = model.jump_factor_kind().eval(x, d);
        finite_vec("jump factor", x, m.data().to_vec())?;
        Ok(m)
    };

    let (mut worst_coef, mut worst_f, mut worst_g) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..sample_count {
        let x = gaussian(10.0, d);
        let y = gaussian(10.0, d);
        let dist = linalg::norm_sq(&linalg::sub(&x, &y));
        if dist == 0.0 {
            continue;
        }
        let bx = finite_vec("drift", &x, model.drift_kind().eval(&x, d))?;
        let by = finite_vec("drift", &y, model.drift_kind().eval(&y, d))?;
        let lhs = linalg::norm_sq(&linalg::sub(&bx, &by))
            + sigma_of(&x)?.sub(&sigma_of(&y)?).frobenius_sq()
            + jump_of(&x)?.sub(&jump_of(&y)?).frobenius_sq() * m2;
        worst_coef = worst_coef.max(lhs / (c * dist));

        let gx = finite_scalar("terminal", &x, model.terminal_kind().eval(&x))?;
        let gy = finite_scalar("terminal", &y, model.terminal_kind().eval(&y))?;
        worst_g = worst_g.max((gx - gy).powi(2) / (c * dc / horizon * dist));

        let w = gaussian(10.0, 2);
        if w[0] != w[1] {
            let fa = finite_scalar("nonlinearity", &w[..1], model.nonlinearity_kind().eval(w[0]))?;
            let fb = finite_scalar("nonlinearity", &w[1..], model.nonlinearity_kind().eval(w[1]))?;
            worst_f = worst_f.max((fa - fb).powi(2) / (c * (w[0] - w[1]).powi(2)));
        }
    }

    let zero = vec![0.0; d];
    let b0 = finite_vec("drift", &zero, model.drift_kind().eval(&zero, d))?;
    let f0 = finite_scalar("nonlinearity", &[0.0], model.nonlinearity_kind().eval(0.0))?;
    let g0 = finite_scalar("terminal", &zero, model.terminal_kind().eval(&zero))?;
    let growth = linalg::norm_sq(&b0)
        + sigma_of(&zero)?.frobenius_sq()
        + jump_of(&zero)?.frobenius_sq() * m2
        + horizon.powi(3) * (f0.abs() + 1.0).powi(2)
        + horizon * g0 * g0;
    let growth_ratio = growth / (c * dc);

    let checks: Vec<AssumptionCheck> = [
        (CHECK_LIPSCHITZ_COEFFICIENTS, worst_coef),
        (CHECK_LIPSCHITZ_F, worst_f),
        (CHECK_LIPSCHITZ_G, worst_g),
        (CHECK_GROWTH_AT_ZERO, growth_ratio),
    ]
    .into_iter()
    .map(|(name, ratio)| AssumptionCheck {
        name: name.to_string(),
        worst_ratio: ratio,
        pass: ratio <= 1.0 + RATIO_SLACK,
    })
    .collect();
    let violated: Vec<String> = checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect();
    Ok(AssumptionReport {
        pass: violated.is_empty(),
        violated,
        checks,
        not_checked: vec![
            "pointwise jump bound with constant C_d".to_string(),
            "jacobian non-degeneracy of the jump map".to_string(),
        ],
    })
}

/// Largest deviations between the coefficient kinds and their networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkAgreement {
    pub drift: f64,
    pub diffusion: f64,
    pub jump: f64,
    pub terminal: f64,
    pub nonlinearity: f64,
    pub pass: bool,
}

/// Compares every network against the plain coefficient at Gaussian points
/// (and random directions for the matrix-valued ones). Deviations are
/// measured as `|net − exact| / (1 + ‖exact‖)`; the model counts as exactly
/// networked when all stay at or below `1e-9`.
pub fn check_network_agreement(
    model: &PideModel,
    points: usize,
    directions: usize,
    stream: &RngStream,
) -> Result<NetworkAgreement> {
    let nets = model
        .networks()
        .ok_or_else(|| Error::config("model has no network coefficient set"))?;
    let d = model.dim();
    let mut counter = 0u64;
    let mut gaussian = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|_| {
                counter += 1;
                stream.gaussian(counter)
            })
            .collect()
    };
    let rel = |net: &[f64], exact: &[f64]| -> f64 {
        linalg::norm_sq(&linalg::sub(net, exact)).sqrt() / (1.0 + linalg::norm_sq(exact).sqrt())
    };
    let dirs: Vec<Vec<f64>> = (0..directions).map(|_| gaussian(d)).collect();
    let sigma_nets: Vec<ReluNetwork> = dirs.iter().map(|v| nets.phi_sigma_dir.build(v)).collect();
    let jump_nets: Vec<ReluNetwork> = dirs.iter().map(|v| nets.phi_jump_dir.build(v)).collect();
    let mut out = NetworkAgreement {
        drift: 0.0,
        diffusion: 0.0,
        jump: 0.0,
        terminal: 0.0,
        nonlinearity: 0.0,
        pass: true,
    };
    for _ in 0..points {
        let x = gaussian(d);
        out.drift = out.drift.max(rel(&nets.phi_beta.eval(&x), &model.drift_kind().eval(&x, d)));
        out.terminal = out.terminal.max(rel(
            &nets.phi_g.eval(&x),
            &[model.terminal_kind().eval(&x)],
        ));
        let w = x[0] * 3.0;
        out.nonlinearity = out.nonlinearity.max(rel(
            &nets.phi_f.eval(&[w]),
            &[model.nonlinearity_kind().eval(w)],
        ));
        for (v, (sn, jn)) in dirs.iter().zip(sigma_nets.iter().zip(&jump_nets)) {
            out.diffusion = out.diffusion.max(rel(&sn.eval(&x), &model.diffusion_kind().apply(&x, v)));
            out.jump = out.jump.max(rel(&jn.eval(&x), &model.jump_factor_kind().apply(&x, v)));
        }
    }
    let zero_dims = nets.phi_sigma_dir.dims(d);
    let jump_dims = nets.phi_jump_dir.dims(d);
    let dims_fixed = dirs.iter().all(|v| {
        nets.phi_sigma_dir.build(v).dims() == zero_dims && nets.phi_jump_dir.build(v).dims() == jump_dims
    });
    out.pass = dims_fixed
        && [out.drift, out.diffusion, out.jump, out.terminal, out.nonlinearity]
            .iter()
            .all(|v| *v <= 1e-9);
    Ok(out)
}
