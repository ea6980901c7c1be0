//! Full-history recursive multilevel Picard estimator.
//!
//! `U_n(t, x)` averages `m^n` terminal values `g(X_T)` and, for every level
//! `ℓ < n`, `m^{n−ℓ}` Picard corrections `f(U_ℓ) − f(U_{ℓ−1})` taken at a
//! uniformly drawn time `𝔗 ∈ [t, T]` along an Euler–Maruyama path. Every
//! path, random time and inner estimator is addressed by a θ-index extended
//! with `(ℓ, ±i)`, so the value is a pure function of the parameters.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{benchmark_solution, BenchmarkId, PideModel};
use crate::randomness::{random_time, sample_time_fraction, ThetaIndex};
use crate::sde::{euler_step, trajectory_draws, SegmentDraws};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub t: f64,
    pub x: Vec<f64>,
    pub root_theta: ThetaIndex,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpCounters {
    pub paths: u64,
    pub f_evals: u64,
    pub g_evals: u64,
}

impl MlpCounters {
    fn add(&mut self, other: &MlpCounters) {
        self.paths += other.paths;
        self.f_evals += other.f_evals;
        self.g_evals += other.g_evals;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpResult {
    pub value: f64,
    pub evaluations: MlpCounters,
    pub depth_reached: usize,
}

/// Draws consumed by one trajectory of the recursion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawRecord {
    pub theta: ThetaIndex,
    pub t: f64,
    pub s: f64,
    pub segments: Vec<SegmentDraws>,
}

/// Options that do not change the estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpOptions {
    /// Evaluate sibling terms on the rayon pool.
    pub parallel: bool,
    pub record_draws: bool,
}

impl Default for MlpOptions {
    fn default() -> Self {
        MlpOptions {
            parallel: true,
            record_draws: false,
        }
    }
}

struct Ctx<'a> {
    model: &'a PideModel,
    m: usize,
    k: usize,
    seed: u64,
    opts: MlpOptions,
}

#[derive(Default)]
struct Partial {
    value: f64,
    counters: MlpCounters,
    log: Vec<DrawRecord>,
}

impl Ctx<'_> {
    fn endpoint(&self, theta: &ThetaIndex, t: f64, s: f64, x: &[f64], out: &mut Partial) -> Result<Vec<f64>> {
        let draws = trajectory_draws(self.model, self.seed, theta, self.k, t, s)?;
        let mut state = x.to_vec();
        for (index, step) in draws.iter().enumerate() {
            state = euler_step(self.model, &state, step);
            if state.iter().any(|v| !v.is_finite()) {
                return Err(Error::Simulation {
                    theta: theta.clone(),
                    segment: index,
                });
            }
        }
        out.counters.paths += 1;
        if self.opts.record_draws {
            out.log.push(DrawRecord {
                theta: theta.clone(),
                t,
                s,
                segments: draws,
            });
        }
        Ok(state)
    }

    fn terminal_term(&self, theta: &ThetaIndex, i: usize, t: f64, x: &[f64]) -> Result<Partial> {
        let mut out = Partial::default();
        let th = theta.child(0, -(i as i64));
        let end = self.endpoint(&th, t, self.model.horizon(), x, &mut out)?;
        out.value = self.model.terminal(&end);
        out.counters.g_evals += 1;
        Ok(out)
    }

    fn picard_term(&self, theta: &ThetaIndex, level: usize, i: usize, t: f64, x: &[f64]) -> Result<Partial> {
        let mut out = Partial::default();
        let th = theta.child(level as i64, i as i64);
        let tau = random_time(t, sample_time_fraction(self.seed, &th), self.model.horizon());
        let y = self.endpoint(&th, t, tau, x, &mut out)?;
        let hi = self.estimate(&th, level, tau, &y, false)?;
        out.merge(&hi);
        out.value = self.model.nonlinearity(hi.value);
        out.counters.f_evals += 1;
        if level >= 1 {
            let lo = self.estimate(&theta.child(-(level as i64), i as i64), level - 1, tau, &y, false)?;
            out.merge(&lo);
            out.value -= self.model.nonlinearity(lo.value);
            out.counters.f_evals += 1;
        }
        Ok(out)
    }

    fn estimate(&self, theta: &ThetaIndex, n: usize, t: f64, x: &[f64], top: bool) -> Result<Partial> {
        if n == 0 {
            return Ok(Partial::default());
        }
        let m = self.m;
        let mn = m.pow(n as u32);
        let mut jobs: Vec<(usize, usize)> = (1..=mn).map(|i| (usize::MAX, i)).collect();
        for level in 0..n {
            jobs.extend((1..=m.pow((n - level) as u32)).map(|i| (level, i)));
        }
        let run = |&(level, i): &(usize, usize)| -> Result<Partial> {
            if level == usize::MAX {
                self.terminal_term(theta, i, t, x)
            } else {
                self.picard_term(theta, level, i, t, x)
            }
        };
        let parts: Vec<Partial> = if top && self.opts.parallel {
            jobs.par_iter().map(run).collect::<Result<_>>()?
        } else {
            jobs.iter().map(run).collect::<Result<_>>()?
        };

        let mut out = Partial::default();
        let mut parts = parts.into_iter();
        let mut g_sum = 0.0;
        for p in parts.by_ref().take(mn) {
            g_sum += p.value;
            out.merge(&p);
        }
        let mut value = g_sum / mn as f64;
        let span = self.model.horizon() - t;
        for level in 0..n {
            let reps = m.pow((n - level) as u32);
            let mut s = 0.0;
            for p in parts.by_ref().take(reps) {
                s += p.value;
                out.merge(&p);
            }
            value += span / reps as f64 * s;
        }
        out.value = value;
        Ok(out)
    }
}

impl Partial {
    fn merge(&mut self, other: &Partial) {
        self.counters.add(&other.counters);
        self.log.extend(other.log.iter().cloned());
    }
}

fn check_params(model: &PideModel, p: &MlpParams) -> Result<()> {
    if p.m == 0 || p.k == 0 {
        return Err(Error::invalid("m and K must be >= 1"));
    }
    if !(0.0..=model.horizon()).contains(&p.t) {
        return Err(Error::invalid(format!("time {} outside [0, {}]", p.t, model.horizon())));
    }
    if p.x.len() != model.dim() {
        return Err(Error::shape(format!("point of length {} in dimension {}", p.x.len(), model.dim())));
    }
    if (p.m as f64).powi(p.n as i32) > 1e12 {
        return Err(Error::invalid(format!("m^n = {}^{} is out of range", p.m, p.n)));
    }
    Ok(())
}

/// `U_{n,m}(t, x)` for the scenario addressed by `(seed, root_theta)`.
pub fn mlp_estimate(model: &PideModel, p: &MlpParams) -> Result<MlpResult> {
    mlp_estimate_with(model, p, MlpOptions::default()).map(|(r, _)| r)
}

/// [`mlp_estimate`] with explicit options; also returns the draw log when
/// `record_draws` is set (empty otherwise).
pub fn mlp_estimate_with(model: &PideModel, p: &MlpParams, opts: MlpOptions) -> Result<(MlpResult, Vec<DrawRecord>)> {
    check_params(model, p)?;
    let ctx = Ctx {
        model,
        m: p.m,
        k: p.k,
        seed: p.seed,
        opts,
    };
    let out = ctx.estimate(&p.root_theta, p.n, p.t, &p.x, true)?;
    Ok((
        MlpResult {
            value: out.value,
            evaluations: out.counters,
            depth_reached: p.n,
        },
        out.log,
    ))
}

/// Number of simulated paths of `U_{n,m}` from the recurrence
/// `P(n) = m^n + Σ_{ℓ<n} m^{n−ℓ} (1 + P(ℓ) + 1{ℓ≥1} P(ℓ−1))`, `P(0) = 0`.
pub fn path_count(n: usize, m: usize) -> u128 {
    let m = m as u128;
    let mut p: Vec<u128> = vec![0];
    for level in 1..=n {
        let mut total = m.pow(level as u32);
        for l in 0..level {
            let prev = if l >= 1 { p[l - 1] } else { 0 };
            total += m.pow((level - l) as u32) * (1 + p[l] + prev);
        }
        p.push(total);
    }
    p[n]
}

/// `6 e^{m/2} m^{−n/2} e^{12cTn} (c d^c / T)^{1/2} (d^c + ‖x‖²)^{1/2}`.
pub fn mlp_error_bound(c: f64, d: usize, horizon: f64, n: usize, m: usize, x: &[f64]) -> f64 {
    let m = m as f64;
    let n = n as f64;
    let dc = (d as f64).powf(c);
    6.0 * (m / 2.0).exp()
        * m.powf(-n / 2.0)
        * (12.0 * c * horizon * n).exp()
        * (c * dc / horizon).sqrt()
        * (dc + linalg::norm_sq(x)).sqrt()
}

/// How the Euler grid grows with the level in a convergence study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "value")]
pub enum KRule {
    /// `K = n²`.
    #[default]
    Square,
    /// `K = n`.
    Linear,
    Fixed(usize),
}

impl KRule {
    pub fn cells(self, n: usize) -> usize {
        match self {
            KRule::Square => (n * n).max(1),
            KRule::Linear => n.max(1),
            KRule::Fixed(k) => k.max(1),
        }
    }
}

impl std::str::FromStr for KRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "square" => Ok(KRule::Square),
            "linear" => Ok(KRule::Linear),
            other => other
                .parse::<usize>()
                .ok()
                .filter(|k| *k >= 1)
                .map(KRule::Fixed)
                .ok_or_else(|| Error::config(format!("unknown K rule `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub reps: usize,
    pub exact: f64,
    pub mean: f64,
    pub bias: f64,
    pub rmse: f64,
    pub bound: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSpec {
    /// Values of `n = m`.
    pub levels: Vec<usize>,
    pub reps: usize,
    pub k_rule: KRule,
    pub t: f64,
    pub x: Vec<f64>,
    pub seed: u64,
}

/// Master seed of repetition `r`; repetitions are paired across levels.
pub fn rep_seed(seed: u64, r: usize) -> u64 {
    seed.wrapping_add(r as u64)
}

/// Per-repetition values at one level (`n = m = level`).
pub fn level_samples(model: &PideModel, level: usize, k: usize, spec: &ConvergenceSpec) -> Result<Vec<f64>> {
    (0..spec.reps)
        .into_par_iter()
        .map(|r| {
            let p = MlpParams {
                n: level,
                m: level.max(1),
                k,
                t: spec.t,
                x: spec.x.clone(),
                root_theta: ThetaIndex::root(),
                seed: rep_seed(spec.seed, r),
            };
            mlp_estimate_with(model, &p, MlpOptions { parallel: false, record_draws: false })
                .map(|(res, _)| res.value)
        })
        .collect()
}

/// RMSE table against the closed-form benchmark solution.
pub fn convergence_study(model: &PideModel, benchmark: BenchmarkId, spec: &ConvergenceSpec) -> Result<Vec<ConvergenceRow>> {
    if spec.reps == 0 {
        return Err(Error::invalid("convergence study needs reps >= 1"));
    }
    let exact = benchmark_solution(model, benchmark, spec.t, &spec.x)?;
    spec.levels
        .iter()
        .map(|&level| {
            let k = spec.k_rule.cells(level);
            let start = Instant::now();
            let values = level_samples(model, level, k, spec)?;
            let wall_seconds = start.elapsed().as_secs_f64();
            let reps = values.len() as f64;
            let mean = values.iter().sum::<f64>() / reps;
            let rmse = (values.iter().map(|v| (v - exact).powi(2)).sum::<f64>() / reps).sqrt();
            Ok(ConvergenceRow {
                n: level,
                m: level.max(1),
                k,
                reps: values.len(),
                exact,
                mean,
                bias: mean - exact,
                rmse,
                bound: mlp_error_bound(model.c(), model.dim(), model.horizon(), level.max(1), level.max(1), &spec.x),
                wall_seconds,
            })
        })
        .collect()
}
