//! Compilation of Euler–Maruyama trajectories and of the MLP estimator into
//! explicit ReLU networks for one frozen scenario.
//!
//! The scenario is fixed by a [`ScenarioBinding`]; every random time and
//! draw is regenerated from it, so the compiled network and
//! [`crate::mlp::mlp_estimate`] consume identical randomness. Shapes are
//! predicted by a dimension-vector recursion before anything is built, and
//! the built network is checked against that prediction.

mod formulas;
mod mlp_net;
mod pl;
mod trajectory;

pub use formulas::{
    coefficient_param_budget, envelope_d_exponent, predicted_depth, scaling_family,
    theorem_param_envelope, width_constant,
};
pub use mlp_net::{
    compile_mlp, predicted_structure, relative_deviation, verify_equivalence, Architecture,
    CompileOptions, CompiledMlp, EquivalenceReport, EquivalenceRow, ScenarioBinding, StructureRow,
    DEFAULT_PARAM_CEILING, EQUIVALENCE_TOLERANCE,
};
pub use pl::build_pl_f_network;
pub use trajectory::{compile_em_trajectory, step_dims, trajectory_dims};
