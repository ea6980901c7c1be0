use crate::error::{Error, Result};
use crate::model::{NetworkCoefficientSet, PideModel};
use crate::randomness::ThetaIndex;
use crate::relunet::{compose_nets, extend_depth, identity_net, sum_nets, DimVector, ReluNetwork};
use crate::sde::{trajectory_draws, SegmentDraws};

pub(crate) fn networks(model: &PideModel) -> Result<&NetworkCoefficientSet> {
    model
        .networks()
        .ok_or_else(|| Error::config("model has no network coefficient set"))
}

/// Dimension vectors of the drift, diffusion and jump-factor networks
/// (the latter two at direction zero).
pub(crate) fn coefficient_dims(model: &PideModel) -> Result<[DimVector; 3]> {
    let nets = networks(model)?;
    let d = model.dim();
    Ok([nets.phi_beta.dims(), nets.phi_sigma_dir.dims(d), nets.phi_jump_dir.dims(d)])
}

/// Shape of `extend_depth(net, extra)` for a network of shape `dims`.
pub(crate) fn extended_dims(dims: &DimVector, extra: usize) -> Result<DimVector> {
    let q = dims.output();
    match extra {
        0 => Ok(dims.clone()),
        1 => DimVector::new(vec![q, q])?.compose(dims),
        _ => DimVector::standard(extra + 1, q)?.compose(dims),
    }
}

/// Common length the three coefficient networks are extended to.
pub(crate) fn harmonized_len(model: &PideModel) -> Result<usize> {
    Ok(coefficient_dims(model)?.iter().map(DimVector::len).max().expect("three nets"))
}

/// Predicted shape of one Euler step network.
pub fn step_dims(model: &PideModel) -> Result<DimVector> {
    let dims = coefficient_dims(model)?;
    let len = harmonized_len(model)?;
    let mut acc = DimVector::standard(len, model.dim())?;
    for d in &dims {
        acc = acc.boxplus(&extended_dims(d, len - d.len())?)?;
    }
    Ok(acc)
}

/// Predicted shape of a compiled trajectory on a `K`-cell grid.
pub fn trajectory_dims(model: &PideModel, cells: usize) -> Result<DimVector> {
    if cells == 0 {
        return Err(Error::invalid("grid resolution K must be >= 1"));
    }
    let step = step_dims(model)?;
    let mut acc = step.clone();
    for _ in 1..cells {
        acc = step.compose(&acc)?;
    }
    Ok(acc)
}

/// Builds trajectory networks for one model, reusing the depth-extended
/// drift network across steps.
pub(crate) struct TrajectoryCompiler<'a> {
    model: &'a PideModel,
    nets: &'a NetworkCoefficientSet,
    len: usize,
    identity: ReluNetwork,
    beta: ReluNetwork,
    cells: usize,
}

impl<'a> TrajectoryCompiler<'a> {
    pub(crate) fn new(model: &'a PideModel, cells: usize) -> Result<Self> {
        if cells == 0 {
            return Err(Error::invalid("grid resolution K must be >= 1"));
        }
        let nets = networks(model)?;
        let len = harmonized_len(model)?;
        let beta = extend_depth(&nets.phi_beta, len - nets.phi_beta.depth())?;
        Ok(TrajectoryCompiler {
            model,
            nets,
            len,
            identity: identity_net(model.dim(), len)?,
            beta,
            cells,
        })
    }

    fn harmonize(&self, net: ReluNetwork) -> Result<ReluNetwork> {
        let depth = net.depth();
        if depth > self.len {
            return Err(Error::shape(format!(
                "directional network {} is deeper than at direction zero",
                net.dims()
            )));
        }
        extend_depth(&net, self.len - depth)
    }

    fn step(&self, delta: f64, dw: &[f64], jump: &[f64]) -> Result<ReluNetwork> {
        let sigma = self.harmonize(self.nets.phi_sigma_dir.build(dw))?;
        let jump = self.harmonize(self.nets.phi_jump_dir.build(jump))?;
        sum_nets(
            &[1.0, delta, 1.0, 1.0],
            &[self.identity.clone(), self.beta.clone(), sigma, jump],
        )
    }

    /// Chains one step per grid cell; cells without a segment get zero
    /// draws and realize the identity.
    pub(crate) fn from_draws(&self, draws: &[SegmentDraws]) -> Result<ReluNetwork> {
        let d = self.model.dim();
        let zeros = vec![0.0; d];
        let mut net: Option<ReluNetwork> = None;
        for cell in 1..=self.cells {
            let step = match draws.iter().find(|s| s.segment.cell == cell) {
                Some(s) => self.step(s.segment.length(), &s.dw, &s.jump)?,
                None => self.step(0.0, &zeros, &zeros)?,
            };
            net = Some(match net {
                None => step,
                Some(prev) => compose_nets(&step, &prev)?,
            });
        }
        Ok(net.expect("K >= 1"))
    }
}

/// Network realizing `x ↦ X^{θ}_s` for the Euler–Maruyama scheme started
/// at `(t, x)`, with the draws of `(seed, theta)` frozen into its weights.
pub fn compile_em_trajectory(
    model: &PideModel,
    theta: &ThetaIndex,
    cells: usize,
    t: f64,
    s: f64,
    seed: u64,
) -> Result<ReluNetwork> {
    let compiler = TrajectoryCompiler::new(model, cells)?;
    let draws = trajectory_draws(model, seed, theta, cells, t, s)?;
    compiler.from_draws(&draws)
}
