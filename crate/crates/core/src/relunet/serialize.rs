//! JSON network record: the dimension vector followed by dense row-major
//! weights and biases for every layer. Floats round-trip bit-exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::dims::DimVector;
use super::network::{Layer, ReluNetwork};
use super::sparse::SparseMatrix;

pub const FORMAT_TAG: &str = "relu-network";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    /// `k_n x k_{n-1}` entries, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkRecord {
    pub format: String,
    pub version: u32,
    pub dims: DimVector,
    pub layers: Vec<LayerRecord>,
}

impl NetworkRecord {
    pub fn from_network(net: &ReluNetwork) -> Self {
        NetworkRecord {
            format: FORMAT_TAG.to_string(),
            version: FORMAT_VERSION,
            dims: net.dims(),
            layers: net
                .layers()
                .iter()
                .map(|l| LayerRecord {
                    weights: l.weights.to_dense(),
                    bias: l.bias.clone(),
                })
                .collect(),
        }
    }

    pub fn into_network(self) -> Result<ReluNetwork> {
        if self.format != FORMAT_TAG || self.version != FORMAT_VERSION {
            return Err(Error::Serialization(format!(
                "unsupported record `{}` version {}",
                self.format, self.version
            )));
        }
        let dims = self.dims.as_slice();
        if self.layers.len() + 1 != dims.len() {
            return Err(Error::Serialization(format!(
                "record lists {} layers for dimension vector {}",
                self.layers.len(),
                self.dims
            )));
        }
        let layers = self
            .layers
            .iter()
            .zip(dims.windows(2))
            .map(|(rec, w)| {
                let weights = SparseMatrix::from_dense(w[1], w[0], &rec.weights)?;
                Layer::new(weights, rec.bias.clone())
            })
            .collect::<Result<Vec<_>>>()?;
        ReluNetwork::new(layers)
    }
}

pub fn to_json(net: &ReluNetwork) -> Result<String> {
    serde_json::to_string(&NetworkRecord::from_network(net))
        .map_err(|e| Error::Serialization(e.to_string()))
}

pub fn from_json(text: &str) -> Result<ReluNetwork> {
    let record: NetworkRecord =
        serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))?;
    record.into_network()
}
