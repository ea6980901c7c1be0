use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::{mlp_estimate_with, DrawRecord, MlpOptions, MlpParams};
use crate::model::{EvalMode, PideModel};
use crate::randomness::{random_time, sample_time_fraction, ThetaIndex};
use crate::relunet::{compose_nets, identity_net, sum_nets, zero_net, DimVector, ReluNetwork};
use crate::sde::trajectory_draws;

use super::formulas::{predicted_depth, width_constant};
use super::trajectory::{coefficient_dims, networks, trajectory_dims, TrajectoryCompiler};

/// Default ceiling on the predicted parameter count of a compiled network.
pub const DEFAULT_PARAM_CEILING: u128 = 50_000_000;

/// The tuple that freezes one scenario of the estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioBinding {
    pub master_seed: u64,
    pub root_theta: ThetaIndex,
    pub t: f64,
    pub n: usize,
    pub m: usize,
    pub k: usize,
}

impl ScenarioBinding {
    pub fn params(&self, x: Vec<f64>) -> MlpParams {
        MlpParams {
            n: self.n,
            m: self.m,
            k: self.k,
            t: self.t,
            x,
            root_theta: self.root_theta.clone(),
            seed: self.master_seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompileOptions {
    /// `None` disables the resource guard.
    pub param_ceiling: Option<u128>,
    pub record_draws: bool,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            param_ceiling: Some(DEFAULT_PARAM_CEILING),
            record_draws: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompiledMlp {
    pub network: ReluNetwork,
    pub predicted_depth: usize,
    pub predicted_dims: DimVector,
    pub predicted_width_bound: f64,
    pub c_deps: usize,
    pub scenario: ScenarioBinding,
    /// Draws regenerated during compilation, in construction order; empty
    /// unless requested.
    pub draw_log: Vec<DrawRecord>,
}

/// Shapes every compiled level is built from.
#[derive(Debug, Clone)]
pub struct Architecture {
    pub trajectory: DimVector,
    pub f: DimVector,
    pub g: DimVector,
    pub coefficients: [DimVector; 3],
    pub d: usize,
    pub cells: usize,
}

impl Architecture {
    pub fn of(model: &PideModel, cells: usize) -> Result<Self> {
        let nets = networks(model)?;
        Ok(Architecture {
            trajectory: trajectory_dims(model, cells)?,
            f: nets.phi_f.dims(),
            g: nets.phi_g.dims(),
            coefficients: coefficient_dims(model)?,
            d: model.dim(),
            cells,
        })
    }

    /// `ℓ_f − 2 + L` with `L` the trajectory length: the length one Picard
    /// level adds.
    fn level_stride(&self) -> usize {
        self.f.len() - 2 + self.trajectory.len()
    }

    /// Length of the scalar identity padding that lifts a term `gap`
    /// levels up; `1` means no padding.
    fn padding_len(&self, gap: usize) -> usize {
        gap * self.level_stride() + 1
    }

    fn padded(&self, gap: usize, inner: &DimVector) -> Result<DimVector> {
        match self.padding_len(gap) {
            1 => Ok(inner.clone()),
            p => DimVector::standard(p, 1)?.compose(inner),
        }
    }

    /// Predicted dimension vectors of `U_0, ..., U_n`.
    pub fn level_dims(&self, n: usize, m: usize) -> Result<Vec<DimVector>> {
        let mut out = vec![self.g.compose(&self.trajectory)?];
        for level in 1..=n {
            let g_term = self.padded(level, &self.g.compose(&self.trajectory)?)?;
            let mut acc = repeat(&g_term, m.pow(level as u32));
            for l in 0..level {
                let reps = m.pow((level - l) as u32);
                let pos = self.f.compose(&self.padded(level - 1 - l, &out[l].compose(&self.trajectory)?)?)?;
                acc = acc.boxplus(&repeat(&pos, reps))?;
                if l >= 1 {
                    let neg = self.f.compose(&self.padded(level - l, &out[l - 1].compose(&self.trajectory)?)?)?;
                    acc = acc.boxplus(&repeat(&neg, reps))?;
                }
            }
            out.push(acc);
        }
        Ok(out)
    }

    pub fn predicted_depth(&self, n: usize) -> usize {
        let [b, s, f] = &self.coefficients;
        predicted_depth(n, self.cells, b.len(), s.len(), f.len(), self.f.len(), self.g.len())
    }

    pub fn c_deps(&self) -> usize {
        let [b, s, f] = &self.coefficients;
        width_constant(self.d, &[&self.f, &self.g, b, s, f])
    }

    pub fn width_bound(&self, n: usize, m: usize) -> f64 {
        self.c_deps() as f64 * (3.0 * m as f64).powi(n as i32)
    }
}

/// `⊞` of `count` copies: interior entries scale, endpoints stay.
fn repeat(dims: &DimVector, count: usize) -> DimVector {
    let v = dims.as_slice();
    let last = v.len() - 1;
    let scaled = v
        .iter()
        .enumerate()
        .map(|(i, &x)| if i == 0 || i == last { x } else { x * count })
        .collect();
    DimVector::new(scaled).expect("positive entries")
}

struct Builder<'a> {
    model: &'a PideModel,
    arch: Architecture,
    traj: TrajectoryCompiler<'a>,
    phi_f: &'a ReluNetwork,
    phi_g: &'a ReluNetwork,
    m: usize,
    seed: u64,
    record: bool,
    log: Vec<DrawRecord>,
}

impl Builder<'_> {
    fn trajectory(&mut self, theta: &ThetaIndex, t: f64, s: f64) -> Result<ReluNetwork> {
        let draws = trajectory_draws(self.model, self.seed, theta, self.arch.cells, t, s)?;
        let net = self.traj.from_draws(&draws)?;
        if self.record {
            self.log.push(DrawRecord {
                theta: theta.clone(),
                t,
                s,
                segments: draws,
            });
        }
        Ok(net)
    }

    fn pad(&self, gap: usize, net: ReluNetwork) -> Result<ReluNetwork> {
        match self.arch.padding_len(gap) {
            1 => Ok(net),
            p => compose_nets(&identity_net(1, p)?, &net),
        }
    }

    fn level(&mut self, theta: &ThetaIndex, n: usize, t: f64, dims: &[DimVector]) -> Result<ReluNetwork> {
        if n == 0 {
            return Ok(zero_net(&dims[0]));
        }
        let horizon = self.model.horizon();
        let m = self.m;
        let mn = m.pow(n as u32);
        let mut coeffs = Vec::new();
        let mut terms = Vec::new();
        for i in 1..=mn {
            let x = self.trajectory(&theta.child(0, -(i as i64)), t, horizon)?;
            let g_x = compose_nets(self.phi_g, &x)?;
            terms.push(self.pad(n, g_x)?);
            coeffs.push(1.0 / mn as f64);
        }
        for l in 0..n {
            let reps = m.pow((n - l) as u32);
            let weight = (horizon - t) / reps as f64;
            for i in 1..=reps {
                let th = theta.child(l as i64, i as i64);
                let tau = random_time(t, sample_time_fraction(self.seed, &th), horizon);
                let x = self.trajectory(&th, t, tau)?;
                let hi = self.level(&th, l, tau, dims)?;
                let hi_x = self.pad(n - 1 - l, compose_nets(&hi, &x)?)?;
                terms.push(compose_nets(self.phi_f, &hi_x)?);
                coeffs.push(weight);
                if l >= 1 {
                    let lo = self.level(&theta.child(-(l as i64), i as i64), l - 1, tau, dims)?;
                    let lo_x = self.pad(n - l, compose_nets(&lo, &x)?)?;
                    terms.push(compose_nets(self.phi_f, &lo_x)?);
                    coeffs.push(-weight);
                }
            }
        }
        let depth = terms[0].depth();
        if let Some(bad) = terms.iter().find(|t| t.depth() != depth) {
            return Err(Error::shape(format!(
                "level {n} terms have lengths {depth} and {} before the parallel sum",
                bad.depth()
            )));
        }
        let net = sum_nets(&coeffs, &terms)?;
        if net.dims() != dims[n] {
            return Err(Error::shape(format!(
                "level {n} network has shape {} but {} was predicted",
                net.dims(),
                dims[n]
            )));
        }
        Ok(net)
    }
}

/// Network realizing `x ↦ U_{n,m}(t, x)` for the scenario of `binding`.
pub fn compile_mlp(model: &PideModel, binding: &ScenarioBinding, opts: CompileOptions) -> Result<CompiledMlp> {
    if binding.m == 0 || binding.k == 0 {
        return Err(Error::invalid("m and K must be >= 1"));
    }
    if !(0.0..=model.horizon()).contains(&binding.t) {
        return Err(Error::invalid(format!("time {} outside [0, {}]", binding.t, model.horizon())));
    }
    let nets = networks(model)?;
    let arch = Architecture::of(model, binding.k)?;
    let dims = arch.level_dims(binding.n, binding.m)?;
    let predicted = dims[binding.n].clone();
    if let Some(ceiling) = opts.param_ceiling {
        let count = predicted.param_count();
        if count > ceiling {
            return Err(Error::ResourceLimit {
                predicted: count,
                ceiling,
            });
        }
    }
    let predicted_depth = arch.predicted_depth(binding.n);
    let predicted_width_bound = arch.width_bound(binding.n, binding.m);
    let c_deps = arch.c_deps();
    let mut builder = Builder {
        model,
        traj: TrajectoryCompiler::new(model, binding.k)?,
        arch,
        phi_f: &nets.phi_f,
        phi_g: &nets.phi_g,
        m: binding.m,
        seed: binding.master_seed,
        record: opts.record_draws,
        log: Vec::new(),
    };
    let network = builder.level(&binding.root_theta, binding.n, binding.t, &dims)?;
    Ok(CompiledMlp {
        network,
        predicted_depth,
        predicted_dims: predicted,
        predicted_width_bound,
        c_deps,
        scenario: binding.clone(),
        draw_log: builder.log,
    })
}

/// Shape summary of a compiled network next to its predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureRow {
    pub d: usize,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub depth: usize,
    pub predicted_depth: usize,
    pub width: usize,
    pub width_bound: f64,
    pub params: u128,
}

/// Structure of the `U_{n,m}` network from the shape recursion alone.
pub fn predicted_structure(model: &PideModel, n: usize, m: usize, k: usize) -> Result<StructureRow> {
    let arch = Architecture::of(model, k)?;
    let dims = arch.level_dims(n, m)?;
    let top = &dims[n];
    Ok(StructureRow {
        d: model.dim(),
        n,
        m,
        k,
        depth: top.len(),
        predicted_depth: arch.predicted_depth(n),
        width: top.sup_norm(),
        width_bound: arch.width_bound(n, m),
        params: top.param_count(),
    })
}

/// `|a − b| / max(|a|, |b|)`, and `0` when both vanish.
pub fn relative_deviation(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

pub const EQUIVALENCE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceRow {
    pub index: usize,
    pub x: Vec<f64>,
    pub mlp: f64,
    pub network: f64,
    pub abs_deviation: f64,
    pub rel_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub rows: Vec<EquivalenceRow>,
    pub max_abs_deviation: f64,
    pub max_rel_deviation: f64,
    pub pass: bool,
}

/// Evaluates the estimator and the compiled network at every point. The
/// estimator runs in networked mode so both sides share one `f`.
pub fn verify_equivalence(
    model: &PideModel,
    binding: &ScenarioBinding,
    points: &[Vec<f64>],
    opts: CompileOptions,
) -> Result<EquivalenceReport> {
    let networked = model.clone().with_mode(EvalMode::Networked)?;
    let compiled = compile_mlp(&networked, binding, opts)?;
    let rows = points
        .par_iter()
        .enumerate()
        .map(|(index, x)| {
            let (res, _) = mlp_estimate_with(
                &networked,
                &binding.params(x.clone()),
                MlpOptions { parallel: false, record_draws: false },
            )?;
            let network = compiled.network.realize(x)?[0];
            Ok(EquivalenceRow {
                index,
                x: x.clone(),
                mlp: res.value,
                network,
                abs_deviation: (res.value - network).abs(),
                rel_deviation: relative_deviation(res.value, network),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_abs_deviation = rows.iter().map(|r| r.abs_deviation).fold(0.0, f64::max);
    let max_rel_deviation = rows.iter().map(|r| r.rel_deviation).fold(0.0, f64::max);
    Ok(EquivalenceReport {
        pass: max_rel_deviation <= EQUIVALENCE_TOLERANCE && rows.iter().all(|r| r.network.is_finite()),
        rows,
        max_abs_deviation,
        max_rel_deviation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::model::MatrixField;
    use crate::randomness::{Purpose, RngStream};

    fn binding(n: usize, m: usize, k: usize) -> ScenarioBinding {
        ScenarioBinding {
            master_seed: 99,
            root_theta: ThetaIndex::root(),
            t: 0.0,
            n,
            m,
            k,
        }
    }

    fn gaussian_points(count: usize, d: usize) -> Vec<Vec<f64>> {
        let s = RngStream::new(3, &ThetaIndex::root(), Purpose::Gaussian);
        (0..count)
            .map(|i| (0..d).map(|j| s.gaussian((i * d + j) as u64)).collect())
            .collect()
    }

    fn const_affine() -> PideModel {
        PideModel::const_affine(2, 1.0, 2.0, 2.0, 1.0).unwrap().networked_affine().unwrap()
    }

    #[test]
    fn level_zero_is_zero_everywhere() {
        let report = verify_equivalence(&const_affine(), &binding(0, 2, 2), &gaussian_points(5, 2), CompileOptions::default()).unwrap();
        assert_eq!(report.max_abs_deviation, 0.0);
        assert!(report.rows.iter().all(|r| r.mlp == 0.0 && r.network == 0.0));
        assert!(report.pass);
    }

    #[test]
    fn const_affine_one_level() {
        let report = verify_equivalence(&const_affine(), &binding(1, 1, 1), &gaussian_points(10, 2), CompileOptions::default()).unwrap();
        for row in &report.rows {
            assert!((row.mlp - 3.0).abs() <= 1e-12 && (row.network - 3.0).abs() <= 1e-12, "{row:?}");
        }
        assert!(report.max_abs_deviation <= 1e-12);
    }

    #[test]
    fn linear_exp_two_levels() {
        let model = PideModel::linear_exp(1.0, 2.0, vec![1.0, -0.5], 1.0).unwrap().networked_affine().unwrap();
        let report = verify_equivalence(&model, &binding(2, 2, 2), &gaussian_points(20, 2), CompileOptions::default()).unwrap();
        assert!(report.pass, "max rel {}", report.max_rel_deviation);
    }

    #[test]
    fn structure_matches_prediction() {
        let model = PideModel::linear_exp(1.0, 2.0, vec![1.0], 1.0).unwrap().networked_affine().unwrap();
        let compiled = compile_mlp(&model, &binding(1, 1, 1), CompileOptions::default()).unwrap();
        assert_eq!(compiled.predicted_depth, 9);
        assert_eq!(compiled.network.depth(), 9);
        assert_eq!(compiled.network.dims(), compiled.predicted_dims);
        assert!(compiled.network.dims().sup_norm() as f64 <= compiled.predicted_width_bound);
        assert_eq!(compiled.network.stored_scalar_count(), compiled.network.dims().param_count());
    }

    #[test]
    fn draw_logs_agree() {
        let model = PideModel::linear_exp(1.0, 2.0, vec![1.0], 1.0)
            .unwrap()
            .with_diffusion(MatrixField::Constant(Matrix::identity(1)))
            .unwrap()
            .networked_affine()
            .unwrap()
            .with_mode(EvalMode::Networked)
            .unwrap();
        let b = binding(2, 2, 3);
        let compiled = compile_mlp(&model, &b, CompileOptions { param_ceiling: None, record_draws: true }).unwrap();
        let (_, mut mlp_log) = mlp_estimate_with(&model, &b.params(vec![0.3]), MlpOptions { parallel: true, record_draws: true }).unwrap();
        let mut net_log = compiled.draw_log.clone();
        let key = |r: &DrawRecord| r.theta.to_string();
        mlp_log.sort_by_key(key);
        net_log.sort_by_key(key);
        assert_eq!(mlp_log, net_log);
    }

    #[test]
    fn resource_guard() {
        let model = PideModel::linear_exp(1.0, 2.0, vec![1.0; 3], 1.0).unwrap().networked_affine().unwrap();
        let err = compile_mlp(&model, &binding(3, 3, 3), CompileOptions { param_ceiling: Some(1000), record_draws: false });
        match err {
            Err(Error::ResourceLimit { predicted, ceiling }) => {
                assert_eq!(ceiling, 1000);
                assert_eq!(predicted, predicted_structure(&model, 3, 3, 3).unwrap().params);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn relative_deviation_definition() {
        assert_eq!(relative_deviation(0.0, 0.0), 0.0);
        assert_eq!(relative_deviation(1.0, 0.0), 1.0);
        assert!((relative_deviation(2.0, 2.0 + 2e-9) - 1e-9).abs() < 1e-15);
    }
}
