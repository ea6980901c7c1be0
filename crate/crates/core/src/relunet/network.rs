use crate::error::{Error, Result};
use crate::linalg::Matrix;

use super::dims::DimVector;
use super::sparse::SparseMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: SparseMatrix,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn new(weights: SparseMatrix, bias: Vec<f64>) -> Result<Self> {
        if weights.rows() != bias.len() {
            return Err(Error::shape(format!(
                "layer has {} rows but bias of length {}",
                weights.rows(),
                bias.len()
            )));
        }
        Ok(Layer { weights, bias })
    }

    pub fn dense(weights: &Matrix, bias: Vec<f64>) -> Result<Self> {
        Layer::new(SparseMatrix::from_matrix(weights), bias)
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }
}

/// Feed-forward ReLU network: affine layers with ReLU after every layer but
/// the last. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluNetwork {
    layers: Vec<Layer>,
}

impl ReluNetwork {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::shape("network needs at least one layer"));
        }
        for (n, w) in layers.windows(2).enumerate() {
            if w[1].in_dim() != w[0].out_dim() {
                return Err(Error::shape(format!(
                    "layer {} outputs {} values but layer {} expects {}",
                    n + 1,
                    w[0].out_dim(),
                    n + 2,
                    w[1].in_dim()
                )));
            }
        }
        if layers.iter().any(|l| l.in_dim() == 0 || l.out_dim() == 0) {
            return Err(Error::shape("network layer with zero width"));
        }
        Ok(ReluNetwork { layers })
    }

    /// Convenience constructor from dense `(weight, bias)` pairs.
    pub fn from_dense(layers: Vec<(Matrix, Vec<f64>)>) -> Result<Self> {
        let layers = layers
            .into_iter()
            .map(|(w, b)| Layer::dense(&w, b))
            .collect::<Result<Vec<_>>>()?;
        ReluNetwork::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn into_layers(self) -> Vec<Layer> {
        self.layers
    }

    pub fn dims(&self) -> DimVector {
        let mut v = Vec::with_capacity(self.layers.len() + 1);
        v.push(self.layers[0].in_dim());
        v.extend(self.layers.iter().map(Layer::out_dim));
        DimVector::new(v).expect("layer widths are positive")
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Length of the dimension vector (hidden layers + 2).
    pub fn depth(&self) -> usize {
        self.layers.len() + 1
    }

    /// Number of weight and bias scalars of the dense layer shapes.
    pub fn stored_scalar_count(&self) -> u128 {
        self.layers
            .iter()
            .map(|l| (l.out_dim() as u128) * (l.in_dim() as u128) + l.bias.len() as u128)
            .sum()
    }

    pub fn nonzero_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.nnz()).sum()
    }

    pub fn realize(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::shape(format!(
                "network expects input of length {}, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        Ok(self.eval(x))
    }

    /// Forward pass without the input check; panics on a length mismatch.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.input_dim(), "network input length");
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (n, layer) in self.layers.iter().enumerate() {
            layer.weights.affine_into(&cur, &layer.bias, &mut next);
            if n < last {
                for v in &mut next {
                    *v = v.max(0.0);
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    pub fn eval_scalar(&self, x: &[f64]) -> f64 {
        self.eval(x)[0]
    }
}
