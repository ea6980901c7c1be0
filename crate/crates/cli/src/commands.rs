use std::time::Instant;

use picard_core::compiler::{
    compile_mlp, predicted_structure, scaling_family, verify_equivalence, CompileOptions,
    ScenarioBinding, DEFAULT_PARAM_CEILING,
};
use picard_core::mlp::{convergence_study, mlp_estimate, rep_seed, ConvergenceSpec, KRule, MlpParams};
use picard_core::model::{benchmark_solution, validate_assumptions, PideModel};
use picard_core::randomness::{dump_stream, Purpose, RngStream, ThetaIndex};
use picard_core::relunet::serialize;
use picard_core::sde::{em_path, EmTrajectoryRequest};
use serde::Serialize;
use serde_json::{json, Value};

use crate::output::{join_point, record, Artifacts};
use crate::run_config::RunConfig;
use crate::{CliError, Overrides};

pub struct Context {
    pub config: RunConfig,
    pub model: PideModel,
    pub seed: u64,
    pub out: Artifacts,
}

fn start_point(model: &PideModel, x: Option<Vec<f64>>) -> Result<Vec<f64>, CliError> {
    let x = x.unwrap_or_else(|| vec![0.0; model.dim()]);
    if x.len() != model.dim() {
        return Err(CliError::Config(format!(
            "point has {} coordinates but the model dimension is {}",
            x.len(),
            model.dim()
        )));
    }
    Ok(x)
}

fn ceiling(value: Option<u128>) -> Option<u128> {
    match value {
        None => Some(DEFAULT_PARAM_CEILING),
        Some(0) => None,
        Some(c) => Some(c),
    }
}

fn to_u64(v: u128) -> u64 {
    u64::try_from(v).unwrap_or(u64::MAX)
}

#[derive(Serialize)]
struct SolveRow {
    n: usize,
    m: usize,
    k: usize,
    t: f64,
    x: String,
    reps: usize,
    mean: f64,
    std_dev: f64,
    min: f64,
    max: f64,
    exact: Option<f64>,
    abs_error: Option<f64>,
}

pub fn solve(ctx: &Context, o: &Overrides, dump_path: bool) -> Result<(), CliError> {
    let s = &ctx.config.solve;
    let (n, m, k, t) = (o.n.unwrap_or(s.n), o.m.unwrap_or(s.m), o.k.unwrap_or(s.k), o.t.unwrap_or(s.t));
    let reps = o.reps.unwrap_or(s.reps).max(1);
    let x = start_point(&ctx.model, o.x.clone().or_else(|| s.x.clone()))?;
    let mut values = Vec::with_capacity(reps);
    let mut records = Vec::with_capacity(reps);
    for r in 0..reps {
        let seed = rep_seed(ctx.seed, r);
        let p = MlpParams {
            n,
            m,
            k,
            t,
            x: x.clone(),
            root_theta: ThetaIndex::root(),
            seed,
        };
        let start = Instant::now();
        let res = mlp_estimate(&ctx.model, &p)?;
        let mut rec = record([
            ("subcommand", json!("solve")),
            ("rep", json!(r)),
            ("seed", json!(seed)),
            ("n", json!(n)),
            ("m", json!(m)),
            ("k", json!(k)),
            ("t", json!(t)),
            ("x", json!(x)),
            ("value", json!(res.value)),
            ("paths", json!(res.evaluations.paths)),
            ("f_evals", json!(res.evaluations.f_evals)),
            ("g_evals", json!(res.evaluations.g_evals)),
        ]);
        if let Some(w) = ctx.out.wall(start.elapsed().as_secs_f64()) {
            rec.insert("wall_seconds".into(), json!(w));
        }
        records.push(ctx.out.stamp(rec));
        values.push(res.value);
    }
    ctx.out.jsonl("solve.jsonl", &records)?;

    let mean = values.iter().sum::<f64>() / reps as f64;
    let var = if reps > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64
    } else {
        0.0
    };
    let exact = match ctx.config.model.benchmark_id() {
        Some(id) => Some(benchmark_solution(&ctx.model, id, t, &x)?),
        None => None,
    };
    let row = SolveRow {
        n,
        m,
        k,
        t,
        x: join_point(&x),
        reps,
        mean,
        std_dev: var.sqrt(),
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        exact,
        abs_error: exact.map(|e| (mean - e).abs()),
    };
    ctx.out.csv("solve.csv", &[&row])?;

    if dump_path {
        let req = EmTrajectoryRequest {
            theta: ThetaIndex::root().child(0, -1),
            k,
            t,
            s: ctx.model.horizon(),
            x: x.clone(),
        };
        let path = em_path(&ctx.model, &req, ctx.seed)?;
        let mut text = String::from("time");
        for j in 0..x.len() {
            text.push_str(&format!(",x{j}"));
        }
        text.push('\n');
        for (time, state) in path {
            text.push_str(&time.to_string());
            for v in state {
                text.push_str(&format!(",{v}"));
            }
            text.push('\n');
        }
        ctx.out.write("trajectory.csv", text.as_bytes())?;
    }

    if let Some(limit) = s.max_abs_error {
        let err = row
            .abs_error
            .ok_or_else(|| CliError::Config("solve.max_abs_error needs a benchmark".into()))?;
        if err > limit {
            return Err(CliError::Threshold(format!(
                "solve: |mean - exact| = {err} exceeds {limit} (n={n}, m={m}, k={k})"
            )));
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct ConvergenceCsvRow {
    n: usize,
    m: usize,
    k: usize,
    reps: usize,
    exact: f64,
    mean: f64,
    bias: f64,
    rmse: f64,
    bound: f64,
    wall_seconds: Option<f64>,
}

pub fn convergence(ctx: &Context, o: &Overrides) -> Result<(), CliError> {
    let c = &ctx.config.convergence;
    let benchmark = ctx
        .config
        .model
        .benchmark_id()
        .ok_or_else(|| CliError::Config("convergence needs model.benchmark or a preset".into()))?;
    let spec = ConvergenceSpec {
        levels: c.levels.clone(),
        reps: o.reps.unwrap_or(c.reps),
        k_rule: c.k_rule.parse::<KRule>()?,
        t: o.t.unwrap_or(c.t),
        x: start_point(&ctx.model, o.x.clone().or_else(|| c.x.clone()))?,
        seed: ctx.seed,
    };
    let rows = convergence_study(&ctx.model, benchmark, &spec)?;
    let csv_rows: Vec<ConvergenceCsvRow> = rows
        .iter()
        .map(|r| ConvergenceCsvRow {
            n: r.n,
            m: r.m,
            k: r.k,
            reps: r.reps,
            exact: r.exact,
            mean: r.mean,
            bias: r.bias,
            rmse: r.rmse,
            bound: r.bound,
            wall_seconds: ctx.out.wall(r.wall_seconds),
        })
        .collect();
    let records: Vec<Value> = csv_rows
        .iter()
        .map(|r| {
            let mut rec = record([("subcommand", json!("convergence"))]);
            if let Value::Object(fields) = json!(r) {
                rec.extend(fields.into_iter().filter(|(_, v)| !v.is_null()));
            }
            ctx.out.stamp(rec)
        })
        .collect();
    ctx.out.jsonl("convergence.jsonl", &records)?;
    ctx.out.csv("convergence.csv", &csv_rows)?;

    for r in &rows {
        if let Some(limit) = c.max_rmse {
            if r.rmse > limit {
                return Err(CliError::Threshold(format!(
                    "convergence: n={} m={} k={} rmse {} exceeds {limit}",
                    r.n, r.m, r.k, r.rmse
                )));
            }
        }
        if let Some(slack) = c.bound_slack {
            if r.rmse > slack * r.bound {
                return Err(CliError::Threshold(format!(
                    "convergence: n={} m={} k={} rmse {} exceeds {slack} x bound {}",
                    r.n, r.m, r.k, r.rmse, r.bound
                )));
            }
        }
    }
    Ok(())
}

fn binding(ctx: &Context, n: usize, m: usize, k: usize, t: f64) -> ScenarioBinding {
    ScenarioBinding {
        master_seed: ctx.seed,
        root_theta: ThetaIndex::root(),
        t,
        n,
        m,
        k,
    }
}

pub fn compile_dnn(ctx: &Context, o: &Overrides) -> Result<(), CliError> {
    let c = &ctx.config.compile;
    let (n, m, k, t) = (o.n.unwrap_or(c.n), o.m.unwrap_or(c.m), o.k.unwrap_or(c.k), o.t.unwrap_or(c.t));
    let b = binding(ctx, n, m, k, t);
    let start = Instant::now();
    let compiled = compile_mlp(
        &ctx.model,
        &b,
        CompileOptions {
            param_ceiling: ceiling(c.param_ceiling),
            record_draws: false,
        },
    )?;
    let net = &compiled.network;
    let mut rec = record([
        ("subcommand", json!("compile-dnn")),
        ("scenario", json!(compiled.scenario)),
        ("dims", json!(net.dims())),
        ("depth", json!(net.depth())),
        ("predicted_depth", json!(compiled.predicted_depth)),
        ("width", json!(net.dims().sup_norm())),
        ("predicted_width_bound", json!(compiled.predicted_width_bound)),
        ("c_deps", json!(compiled.c_deps)),
        ("params", json!(to_u64(net.dims().param_count()))),
        ("stored_scalars", json!(to_u64(net.stored_scalar_count()))),
        ("nonzeros", json!(net.nonzero_count())),
        ("network_file", json!("network.json")),
    ]);
    if let Some(w) = ctx.out.wall(start.elapsed().as_secs_f64()) {
        rec.insert("wall_seconds".into(), json!(w));
    }
    ctx.out.write("network.json", serialize::to_json(net)?.as_bytes())?;
    ctx.out.jsonl("compile.jsonl", &[ctx.out.stamp(rec)])?;
    if net.depth() != compiled.predicted_depth || net.dims() != compiled.predicted_dims {
        return Err(CliError::Threshold(format!(
            "compile-dnn: depth {} differs from predicted {}",
            net.depth(),
            compiled.predicted_depth
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct EquivalenceCsvRow {
    index: usize,
    x: String,
    mlp: f64,
    network: f64,
    abs_deviation: f64,
    rel_deviation: f64,
}

/// `count` standard Gaussian points from a stream no estimator uses.
pub fn gaussian_points(seed: u64, count: usize, d: usize) -> Vec<Vec<f64>> {
    let theta = ThetaIndex::new(vec![-1]).expect("non-empty");
    let s = RngStream::new(seed, &theta, Purpose::Gaussian);
    (0..count)
        .map(|i| (0..d).map(|j| s.gaussian((i * d + j) as u64)).collect())
        .collect()
}

pub fn verify(ctx: &Context, o: &Overrides) -> Result<(), CliError> {
    let v = &ctx.config.verify;
    let (n, m, k, t) = (o.n.unwrap_or(v.n), o.m.unwrap_or(v.m), o.k.unwrap_or(v.k), o.t.unwrap_or(v.t));
    let points = match &v.points {
        Some(p) => p.clone(),
        None => gaussian_points(ctx.seed, v.random_points, ctx.model.dim()),
    };
    for p in &points {
        start_point(&ctx.model, Some(p.clone()))?;
    }
    let report = verify_equivalence(
        &ctx.model,
        &binding(ctx, n, m, k, t),
        &points,
        CompileOptions {
            param_ceiling: ceiling(v.param_ceiling),
            record_draws: false,
        },
    )?;
    let rows: Vec<EquivalenceCsvRow> = report
        .rows
        .iter()
        .map(|r| EquivalenceCsvRow {
            index: r.index,
            x: join_point(&r.x),
            mlp: r.mlp,
            network: r.network,
            abs_deviation: r.abs_deviation,
            rel_deviation: r.rel_deviation,
        })
        .collect();
    ctx.out.csv("equivalence.csv", &rows)?;
    let pass = report.max_rel_deviation <= v.tolerance;
    let rec = record([
        ("subcommand", json!("verify-equivalence")),
        ("n", json!(n)),
        ("m", json!(m)),
        ("k", json!(k)),
        ("t", json!(t)),
        ("points", json!(points.len())),
        ("max_abs_deviation", json!(report.max_abs_deviation)),
        ("max_rel_deviation", json!(report.max_rel_deviation)),
        ("tolerance", json!(v.tolerance)),
        ("pass", json!(pass)),
    ]);
    ctx.out.jsonl("equivalence.jsonl", &[ctx.out.stamp(rec)])?;
    if !pass {
        let worst = report
            .rows
            .iter()
            .max_by(|a, b| a.rel_deviation.total_cmp(&b.rel_deviation))
            .expect("failing report has rows");
        return Err(CliError::Threshold(format!(
            "verify-equivalence: point {} deviates by {} (mlp {}, network {})",
            worst.index, worst.rel_deviation, worst.mlp, worst.network
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct CountRow {
    d: usize,
    eps: Option<f64>,
    n: usize,
    m: usize,
    k: usize,
    depth: usize,
    predicted_depth: usize,
    width: usize,
    width_bound: f64,
    params: u64,
    built: bool,
}

pub fn count_params(ctx: &Context) -> Result<(), CliError> {
    let c = &ctx.config.count_params;
    let models: Vec<(Option<f64>, PideModel)> = match &c.dims {
        Some(dims) => dims
            .iter()
            .map(|&d| Ok((Some(c.eps), scaling_family(d, ctx.model.c(), c.eps)?)))
            .collect::<Result<_, picard_core::Error>>()?,
        None => vec![(None, ctx.model.clone())],
    };
    let mut rows = Vec::new();
    for (eps, model) in &models {
        for &n in &c.n {
            for &m in &c.m {
                for &k in &c.k {
                    let s = predicted_structure(model, n, m, k)?;
                    let mut row = CountRow {
                        d: s.d,
                        eps: *eps,
                        n,
                        m,
                        k,
                        depth: s.depth,
                        predicted_depth: s.predicted_depth,
                        width: s.width,
                        width_bound: s.width_bound,
                        params: to_u64(s.params),
                        built: false,
                    };
                    if c.build {
                        let compiled = compile_mlp(
                            model,
                            &binding(ctx, n, m, k, 0.0),
                            CompileOptions::default(),
                        )?;
                        let dims = compiled.network.dims();
                        row.depth = dims.len();
                        row.width = dims.sup_norm();
                        row.params = to_u64(compiled.network.stored_scalar_count());
                        row.built = true;
                    }
                    rows.push(row);
                }
            }
        }
    }
    ctx.out.csv("count_params.csv", &rows)?;
    let records: Vec<Value> = rows
        .iter()
        .map(|r| {
            let mut rec = record([("subcommand", json!("count-params"))]);
            if let Value::Object(fields) = json!(r) {
                rec.extend(fields);
            }
            ctx.out.stamp(rec)
        })
        .collect();
    ctx.out.jsonl("count_params.jsonl", &records)?;
    if let Some(bad) = rows
        .iter()
        .find(|r| r.depth != r.predicted_depth || r.width as f64 > r.width_bound)
    {
        return Err(CliError::Threshold(format!(
            "count-params: d={} n={} m={} k={} depth {} (predicted {}), width {} (bound {})",
            bad.d, bad.n, bad.m, bad.k, bad.depth, bad.predicted_depth, bad.width, bad.width_bound
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct StreamRow {
    counter: u64,
    bits: String,
    value: f64,
}

pub fn dump_streams(ctx: &Context, theta: Option<String>, purpose: Option<String>, count: Option<usize>) -> Result<(), CliError> {
    let s = &ctx.config.dump_streams;
    let theta: ThetaIndex = theta.unwrap_or_else(|| s.theta.clone()).parse()?;
    let purpose: Purpose = purpose.unwrap_or_else(|| s.purpose.clone()).parse()?;
    let rows: Vec<StreamRow> = dump_stream(ctx.seed, &theta, purpose, count.unwrap_or(s.count))
        .into_iter()
        .map(|(counter, bits, value)| StreamRow {
            counter,
            bits: format!("{bits:016x}"),
            value,
        })
        .collect();
    ctx.out.csv("streams.csv", &rows)?;
    let rec = record([
        ("subcommand", json!("dump-streams")),
        ("theta", json!(theta.to_string())),
        ("purpose", json!(purpose)),
        ("count", json!(rows.len())),
        ("file", json!("streams.csv")),
    ]);
    ctx.out.jsonl("streams.jsonl", &[ctx.out.stamp(rec)])
}

pub fn check_assumptions(ctx: &Context) -> Result<(), CliError> {
    let a = &ctx.config.check_assumptions;
    let stream = RngStream::new(ctx.seed, &ThetaIndex::new(vec![-2]).expect("non-empty"), Purpose::Gaussian);
    let report = validate_assumptions(&ctx.model, a.samples, &stream)?;
    let mut rec = record([("subcommand", json!("check-assumptions"))]);
    if let Value::Object(fields) = json!(report) {
        rec.extend(fields);
    }
    ctx.out.jsonl("assumptions.jsonl", &[ctx.out.stamp(rec)])?;
    if a.require_pass && !report.pass {
        return Err(CliError::Threshold(format!(
            "check-assumptions: violated {}",
            report.violated.join(", ")
        )));
    }
    Ok(())
}
