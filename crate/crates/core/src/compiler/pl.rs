use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::relunet::ReluNetwork;

/// One-hidden-layer network interpolating `f` at equispaced breakpoints on
/// `[−R, R]` and extending the end slopes linearly outside.
///
/// With `N = ⌈2R / h⌉` the breakpoints are `ξ_j = −R + j · 2R/N`, so the
/// spacing never exceeds `h`. The hidden layer has the `N` units
/// `max(w − ξ_j, 0)` for `j < N` plus `max(ξ_0 − w, 0)`; the dimension
/// vector is `(1, N + 1, 1)`.
pub fn build_pl_f_network(
    f: impl Fn(f64) -> f64,
    lipschitz: f64,
    radius: f64,
    grid_h: f64,
) -> Result<ReluNetwork> {
    if !(lipschitz >= 0.0) || !lipschitz.is_finite() {
        return Err(Error::invalid(format!("Lipschitz constant must be >= 0, got {lipschitz}")));
    }
    if !(radius > 0.0) || !radius.is_finite() || !(grid_h > 0.0) || grid_h > radius {
        return Err(Error::invalid(format!(
            "need R > 0 and 0 < h <= R, got R = {radius}, h = {grid_h}"
        )));
    }
    let cells = (2.0 * radius / grid_h).ceil() as usize;
    let spacing = 2.0 * radius / cells as f64;
    let knots: Vec<f64> = (0..=cells)
        .map(|j| if j == cells { radius } else { -radius + j as f64 * spacing })
        .collect();
    let values = knots
        .iter()
        .map(|&xi| {
            let v = f(xi);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFiniteCoefficient {
                    coefficient: "nonlinearity",
                    point: vec![xi],
                })
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let slopes: Vec<f64> = (0..cells)
        .map(|j| (values[j + 1] - values[j]) / (knots[j + 1] - knots[j]))
        .collect();

    let mut w1 = vec![1.0; cells + 1];
    w1[cells] = -1.0;
    let mut b1: Vec<f64> = knots[..cells].iter().map(|xi| -xi).collect();
    b1.push(knots[0]);
    let mut w2 = Vec::with_capacity(cells + 1);
    w2.push(slopes[0]);
    w2.extend((1..cells).map(|j| slopes[j] - slopes[j - 1]));
    w2.push(-slopes[0]);
    ReluNetwork::from_dense(vec![
        (Matrix::new(cells + 1, 1, w1)?, b1),
        (Matrix::new(1, cells + 1, w2)?, vec![values[0]]),
    ])
}
