//! Run configuration: the model plus one optional table per subcommand.
//! Command-line flags override the matching fields.

use std::path::{Path, PathBuf};

use picard_core::config::ModelSpec;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub model: ModelSpec,
    #[serde(default)]
    pub solve: SolveSection,
    #[serde(default)]
    pub convergence: ConvergenceSection,
    #[serde(default)]
    pub compile: CompileSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub count_params: CountParamsSection,
    #[serde(default)]
    pub dump_streams: DumpStreamsSection,
    #[serde(default)]
    pub check_assumptions: AssumptionsSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveSection {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub t: f64,
    pub x: Option<Vec<f64>>,
    pub reps: usize,
    /// Fails the run when `|mean − exact|` exceeds this (needs a benchmark).
    pub max_abs_error: Option<f64>,
}

impl Default for SolveSection {
    fn default() -> Self {
        SolveSection {
            n: 2,
            m: 2,
            k: 4,
            t: 0.0,
            x: None,
            reps: 1,
            max_abs_error: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceSection {
    pub levels: Vec<usize>,
    pub reps: usize,
    pub k_rule: String,
    pub t: f64,
    pub x: Option<Vec<f64>>,
    pub max_rmse: Option<f64>,
    /// Fails the run when some RMSE exceeds `bound_slack` times the a-priori bound.
    pub bound_slack: Option<f64>,
}

impl Default for ConvergenceSection {
    fn default() -> Self {
        ConvergenceSection {
            levels: vec![1, 2, 3],
            reps: 20,
            k_rule: "square".into(),
            t: 0.0,
            x: None,
            max_rmse: None,
            bound_slack: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompileSection {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub t: f64,
    /// `0` disables the guard.
    pub param_ceiling: Option<u128>,
}

impl Default for CompileSection {
    fn default() -> Self {
        CompileSection {
            n: 1,
            m: 1,
            k: 1,
            t: 0.0,
            param_ceiling: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub t: f64,
    pub points: Option<Vec<Vec<f64>>>,
    pub random_points: usize,
    pub tolerance: f64,
    pub param_ceiling: Option<u128>,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            n: 1,
            m: 1,
            k: 1,
            t: 0.0,
            points: None,
            random_points: 20,
            tolerance: picard_core::compiler::EQUIVALENCE_TOLERANCE,
            param_ceiling: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CountParamsSection {
    /// Dimensions of the reference scaling family; when absent the
    /// configured model is used.
    pub dims: Option<Vec<usize>>,
    pub eps: f64,
    pub n: Vec<usize>,
    pub m: Vec<usize>,
    pub k: Vec<usize>,
    /// Also compile each network and compare it with the prediction.
    pub build: bool,
}

impl Default for CountParamsSection {
    fn default() -> Self {
        CountParamsSection {
            dims: None,
            eps: 0.25,
            n: vec![0, 1, 2],
            m: vec![1, 2],
            k: vec![1, 2],
            build: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DumpStreamsSection {
    pub theta: String,
    pub purpose: String,
    pub count: usize,
}

impl Default for DumpStreamsSection {
    fn default() -> Self {
        DumpStreamsSection {
            theta: "(0)".into(),
            purpose: "gaussian".into(),
            count: 16,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssumptionsSection {
    pub samples: usize,
    pub require_pass: bool,
}

impl Default for AssumptionsSection {
    fn default() -> Self {
        AssumptionsSection {
            samples: 1000,
            require_pass: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}
