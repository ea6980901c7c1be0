//! ReLU feed-forward networks with the dimension-vector algebra (`⊙`, `⊞`,
//! standard identity shapes) and the constructive operations built on it.

mod dims;
mod network;
mod ops;
pub mod serialize;
mod sparse;

pub use dims::DimVector;
pub use network::{Layer, ReluNetwork};
pub use ops::{
    affine_net, affine_wrap, compose_nets, extend_depth, identity_net, linear_identity,
    sum_nets, sup_norm_chain_bound_check, zero_net,
};
pub use sparse::SparseMatrix;

/// Parameter count of a dimension vector.
pub fn param_count(dims: &DimVector) -> u128 {
    dims.param_count()
}
