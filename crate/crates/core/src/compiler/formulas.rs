use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{MatrixField, NetworkCoefficientSet, Nonlinearity, PideModel, ScalarField};
use crate::relunet::DimVector;

use super::pl::build_pl_f_network;

/// Length of the compiled `U_n` network:
/// `(n+1)[K(max{ℓ_β, ℓ_σ, ℓ_F} − 1) + 1] + n(ℓ_f − 2) + ℓ_g − 1`, where every
/// argument is the length of a dimension vector.
pub fn predicted_depth(
    n: usize,
    cells: usize,
    dims_beta: usize,
    dims_sigma: usize,
    dims_jump: usize,
    dims_f: usize,
    dims_g: usize,
) -> usize {
    let coeff = dims_beta.max(dims_sigma).max(dims_jump);
    (n + 1) * (cells * (coeff - 1) + 1) + n * (dims_f - 2) + dims_g - 1
}

/// `c_{d,ε} = 2d + ‖D(Φ_f)‖∞ + ‖D(Φ_g)‖∞ + ‖D(Φ_β)‖∞ + ‖D(Φ_σ,0)‖∞ + ‖D(Φ_F,0)‖∞`.
pub fn width_constant(d: usize, dims: &[&DimVector; 5]) -> usize {
    2 * d + dims.iter().map(|v| v.sup_norm()).sum::<usize>()
}

/// Right-hand side `C d^{3c+12c²+2c(6+δ)} ε^{−6c−6−δ}` of the parameter
/// bound, with the constant `C_δ η` supplied by the caller.
pub fn theorem_param_envelope(c: f64, d: usize, eps: f64, delta: f64, c_delta_eta: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("need ε, δ in (0, 1), got ε = {eps}, δ = {delta}")));
    }
    if !(c >= 2.0) || d == 0 || !(c_delta_eta > 0.0) {
        return Err(Error::invalid("need c >= 2, d >= 1 and a positive constant"));
    }
    Ok(c_delta_eta * (d as f64).powf(envelope_d_exponent(c, delta)) * eps.powf(-6.0 * c - 6.0 - delta))
}

/// Exponent of `d` in [`theorem_param_envelope`].
pub fn envelope_d_exponent(c: f64, delta: f64) -> f64 {
    3.0 * c + 12.0 * c * c + 2.0 * c * (6.0 + delta)
}

/// Parameter budget `b d^c ε^{−c} / 4` every coefficient network must
/// respect for the complexity statement to apply.
pub fn coefficient_param_budget(b: f64, c: f64, d: usize, eps: f64) -> f64 {
    b * (d as f64).powf(c) * eps.powf(-c) / 4.0
}

/// Reference family for parameter scaling runs: Brownian motion with
/// diffusion `I/√d`, terminal `g(x) = mean(x)` and `f` the piecewise-linear
/// interpolation of `tanh` on `[−1, 1]` with grid `ε`. All networks are
/// exact for the coefficients except `f`, whose network is the interpolant.
pub fn scaling_family(d: usize, c: f64, eps: f64) -> Result<PideModel> {
    let base = PideModel::new(d, 1.0, c)?
        .with_diffusion(MatrixField::Constant(Matrix::identity(d).scale(1.0 / (d as f64).sqrt())))?
        .with_terminal(ScalarField::Linear(vec![1.0 / d as f64; d]))?
        .with_nonlinearity(Nonlinearity::Custom(std::sync::Arc::new(f64::tanh)));
    let phi_f = build_pl_f_network(f64::tanh, 1.0, 1.0, eps.min(1.0))?;
    let nets = NetworkCoefficientSet::from_affine_coefficients(&base, phi_f)?;
    base.with_networks(nets)
}
