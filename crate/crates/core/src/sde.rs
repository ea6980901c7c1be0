//! Euler–Maruyama simulation of the jump-diffusion on the global grid
//! `{0, T/K, ..., T}`.
//!
//! Only endpoints are simulated. A trajectory from `t` to `s` is split into
//! the non-empty intersections of `[t, s]` with the grid cells; each such
//! segment consumes its own Gaussian increment and Poisson marks, addressed
//! by the segment's position in the plan.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{PideModel, ScalarField};
use crate::randomness::{ThetaIndex, ThetaStreams};

/// Grid point `k T / K`, with the last point pinned to `T`.
pub fn grid_point(k: usize, cells: usize, horizon: f64) -> f64 {
    if k >= cells {
        horizon
    } else {
        k as f64 * horizon / cells as f64
    }
}

/// Largest grid point strictly below `t`, or `0` if there is none.
pub fn grid_floor(t: f64, cells: usize, horizon: f64) -> f64 {
    assert!(cells >= 1 && horizon > 0.0, "grid needs K >= 1 and T > 0");
    if t <= 0.0 {
        return 0.0;
    }
    let mut j = ((t / horizon * cells as f64).ceil() as usize).min(cells + 1);
    j = j.saturating_sub(1);
    while j > 0 && grid_point(j, cells, horizon) >= t {
        j -= 1;
    }
    while j < cells && grid_point(j + 1, cells, horizon) < t {
        j += 1;
    }
    grid_point(j, cells, horizon)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmTrajectoryRequest {
    pub theta: ThetaIndex,
    pub k: usize,
    pub t: f64,
    pub s: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    /// Time of the state the coefficients are frozen at.
    pub anchor: f64,
    /// Grid cell `1..=K` containing the segment.
    pub cell: usize,
}

impl Segment {
    pub fn length(&self) -> f64 {
        self.end - self.start
    }
}

/// Non-empty pieces of `[t, s]` cut at the grid points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmSegmentPlan {
    pub segments: Vec<Segment>,
}

pub fn plan_segments(cells: usize, horizon: f64, t: f64, s: f64) -> Result<EmSegmentPlan> {
    if cells == 0 {
        return Err(Error::invalid("grid resolution K must be >= 1"));
    }
    if !(0.0 <= t && t <= s && s <= horizon) {
        return Err(Error::invalid(format!(
            "trajectory interval [{t}, {s}] is not inside [0, {horizon}]"
        )));
    }
    let mut segments = Vec::new();
    for cell in 1..=cells {
        let start = t.max(grid_point(cell - 1, cells, horizon));
        let end = s.min(grid_point(cell, cells, horizon));
        if end > start {
            segments.push(Segment {
                start,
                end,
                anchor: start,
                cell,
            });
        }
    }
    Ok(EmSegmentPlan { segments })
}

/// Random inputs of one Euler step: the Gaussian increment `ΔW` and the
/// compensated jump sum `J = Σ G(z_j) − Δ ∫ G dν`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentDraws {
    pub segment: Segment,
    pub dw: Vec<f64>,
    pub jump: Vec<f64>,
}

/// Regenerates the draws of the trajectory owned by `theta` on `[t, s]`.
pub fn trajectory_draws(
    model: &PideModel,
    seed: u64,
    theta: &ThetaIndex,
    cells: usize,
    t: f64,
    s: f64,
) -> Result<Vec<SegmentDraws>> {
    let plan = plan_segments(cells, model.horizon(), t, s)?;
    let streams = ThetaStreams::new(seed, theta);
    let d = model.dim();
    let levy = model.levy();
    plan.segments
        .into_iter()
        .enumerate()
        .map(|(index, segment)| {
            let delta = segment.length();
            let mut dw = vec![0.0; d];
            streams.gaussian_increment_into(index, delta, &mut dw);
            let mut jump: Vec<f64> = levy.g_mean().iter().map(|g| -delta * g).collect();
            if levy.intensity() > 0.0 {
                for z in streams.poisson_marks(index, delta, levy)? {
                    for (j, g) in jump.iter_mut().zip(model.jump_mark(&z)) {
                        *j += g;
                    }
                }
            }
            Ok(SegmentDraws { segment, dw, jump })
        })
        .collect()
}

/// One Euler–Maruyama update `x + β(x) Δ + σ(x) ΔW + F(x) J`.
pub fn euler_step(model: &PideModel, x: &[f64], draws: &SegmentDraws) -> Vec<f64> {
    let delta = draws.segment.length();
    let drift = model.drift(x);
    let diffusion = model.diffusion_apply(x, &draws.dw);
    let jump = model.jump_apply(x, &draws.jump);
    x.iter()
        .zip(drift)
        .zip(diffusion)
        .zip(jump)
        .map(|(((xi, b), s), j)| xi + b * delta + s + j)
        .collect()
}

fn run_steps(
    model: &PideModel,
    theta: &ThetaIndex,
    x: &[f64],
    draws: &[SegmentDraws],
    mut visit: impl FnMut(f64, &[f64]),
) -> Result<Vec<f64>> {
    let mut state = x.to_vec();
    for (index, step) in draws.iter().enumerate() {
        state = euler_step(model, &state, step);
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::Simulation {
                theta: theta.clone(),
                segment: index,
            });
        }
        visit(step.segment.end, &state);
    }
    Ok(state)
}

fn check_request(model: &PideModel, req: &EmTrajectoryRequest) -> Result<()> {
    if req.x.len() != model.dim() {
        return Err(Error::shape(format!(
            "start point of length {} in dimension {}",
            req.x.len(),
            model.dim()
        )));
    }
    Ok(())
}

/// Endpoint `X_s` of the Euler–Maruyama scheme started at `(t, x)`.
pub fn em_endpoint(model: &PideModel, req: &EmTrajectoryRequest, seed: u64) -> Result<Vec<f64>> {
    check_request(model, req)?;
    let draws = trajectory_draws(model, seed, &req.theta, req.k, req.t, req.s)?;
    run_steps(model, &req.theta, &req.x, &draws, |_, _| {})
}

/// Same as [`em_endpoint`] but keeps the state after every segment,
/// starting with `(t, x)`.
pub fn em_path(model: &PideModel, req: &EmTrajectoryRequest, seed: u64) -> Result<Vec<(f64, Vec<f64>)>> {
    check_request(model, req)?;
    let draws = trajectory_draws(model, seed, &req.theta, req.k, req.t, req.s)?;
    let mut path = vec![(req.t, req.x.clone())];
    run_steps(model, &req.theta, &req.x, &draws, |time, state| {
        path.push((time, state.to_vec()))
    })?;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleCheck {
    pub mc_mean: f64,
    /// Three standard errors; NaN when fewer than two samples were drawn.
    pub ci_halfwidth: f64,
    pub target: f64,
    /// `None` when the interval is undefined.
    pub within: Option<bool>,
}

/// Monte Carlo estimate of `E[g(X_T)]` over fresh θ-indices `(1), (2), ...`
/// for a driftless model with affine `g`, where the exact mean is `g(x)`.
pub fn exact_endpoint_martingale_check(
    model: &PideModel,
    t: f64,
    x: &[f64],
    n_samples: usize,
    cells: usize,
    seed: u64,
) -> Result<MartingaleCheck> {
    if !model.drift_kind().is_identically_zero() {
        return Err(Error::config("martingale check needs zero drift"));
    }
    if matches!(model.terminal_kind(), ScalarField::Custom(_)) {
        return Err(Error::config("martingale check needs an affine terminal condition"));
    }
    if n_samples == 0 {
        return Err(Error::invalid("martingale check needs at least one sample"));
    }
    let values = (1..=n_samples as i64)
        .into_par_iter()
        .map(|i| {
            let req = EmTrajectoryRequest {
                theta: ThetaIndex::new(vec![i])?,
                k: cells,
                t,
                s: model.horizon(),
                x: x.to_vec(),
            };
            Ok(model.terminal_kind().eval(&em_endpoint(model, &req, seed)?))
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = values.len() as f64;
    let mc_mean = values.iter().sum::<f64>() / n;
    let target = model.terminal_kind().eval(x);
    if values.len() < 2 {
        return Ok(MartingaleCheck {
            mc_mean,
            ci_halfwidth: f64::NAN,
            target,
            within: None,
        });
    }
    let var = values.iter().map(|v| (v - mc_mean).powi(2)).sum::<f64>() / (n - 1.0);
    let ci_halfwidth = 3.0 * (var / n).sqrt();
    Ok(MartingaleCheck {
        mc_mean,
        ci_halfwidth,
        target,
        within: Some((mc_mean - target).abs() <= ci_halfwidth),
    })
}

/// Empirical `E[d^c + ‖X_s‖²]` over the θ-indices `(1), ..., (n_samples)`
/// next to the envelope `(d^c + ‖x‖²) e^{7c(s−t)}`.
pub fn second_moment_study(
    model: &PideModel,
    t: f64,
    s: f64,
    x: &[f64],
    n_samples: usize,
    cells: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let dc = (model.dim() as f64).powf(model.c());
    let values = (1..=n_samples as i64)
        .into_par_iter()
        .map(|i| {
            let req = EmTrajectoryRequest {
                theta: ThetaIndex::new(vec![i])?,
                k: cells,
                t,
                s,
                x: x.to_vec(),
            };
            Ok(dc + linalg::norm_sq(&em_endpoint(model, &req, seed)?))
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = values.iter().sum::<f64>() / n_samples.max(1) as f64;
    let envelope = (dc + linalg::norm_sq(x)) * (7.0 * model.c() * (s - t)).exp();
    Ok((mean, envelope))
}
