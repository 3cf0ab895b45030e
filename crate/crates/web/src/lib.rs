//! Browser bindings: direction sampling, side-by-side GFM / GFM+ paths on
//! two-dimensional test functions, and the GFM+ planner.
//!
//! Each exported function has a plain Rust counterpart returning
//! `Result<_, String>` so the logic is testable without a JS host.

use gzoo::algorithms::{run_gfm, run_gfm_plus, GfmConfig, GfmPlusConfig, RunResult};
use gzoo::oracle::{sample_ball, sample_sphere};
use gzoo::problems::{NormPlusHalf, ProbeQuadratic};
use gzoo::{derived_constants, plan_gfm_plus, DenseVector, RandomStream, ScaledL1, StochasticOracle};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Longest path the demo will trace; each point replays a prefix run.
pub const MAX_STEPS: usize = 400;

/// `count` unit-sphere (or unit-ball) samples in `dim` dimensions, flattened
/// row-major.
pub fn directions(dim: usize, count: usize, seed: u64, ball: bool) -> Result<Vec<f64>, String> {
    if dim == 0 || dim > 64 || count > 100_000 {
        return Err(format!("need 1 <= dim <= 64 and count <= 100000, got dim={dim} count={count}"));
    }
    let mut rng = RandomStream::from_seed(seed);
    let mut out = Vec::with_capacity(dim * count);
    for _ in 0..count {
        let v = if ball { sample_ball(&mut rng, dim) } else { sample_sphere(&mut rng, dim) };
        out.extend(v.iter());
    }
    Ok(out)
}

fn demo_problem(name: &str) -> Result<Box<dyn StochasticOracle>, String> {
    let p: Box<dyn StochasticOracle> = match name {
        "scaled-l1" => Box::new(ScaledL1::new(2, 1.0).map_err(|e| e.to_string())?),
        "norm-plus-half" => {
            Box::new(NormPlusHalf::new(1.0, DenseVector::from_vec(vec![1.0, 0.5])).map_err(|e| e.to_string())?)
        }
        "quadratic" => Box::new(ProbeQuadratic { dim: 2, radius: 4.0 }),
        other => return Err(format!("unknown demo problem {other:?}")),
    };
    Ok(p)
}

#[derive(Debug, Serialize, PartialEq)]
pub struct Path {
    pub points: Vec<[f64; 2]>,
    pub values: Vec<f64>,
    pub calls: Vec<u64>,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct PathPair {
    pub gfm: Path,
    pub gfm_plus: Path,
}

#[derive(Debug, Clone, Copy)]
pub struct PathSettings {
    pub delta: f64,
    pub eta: f64,
    pub steps: usize,
    pub epoch_length: usize,
    pub batch: usize,
    pub epoch_batch: usize,
    pub seed: u64,
}

fn trace(
    oracle: &dyn StochasticOracle,
    steps: usize,
    run: impl Fn(usize) -> gzoo::Result<RunResult>,
    x0: &DenseVector,
) -> Result<Path, String> {
    let mut path = Path { points: vec![[x0[0], x0[1]]], values: Vec::new(), calls: vec![0] };
    path.values.push(oracle.exact_value(x0).ok_or("no closed-form value")?);
    for k in 1..=steps {
        let r = run(k).map_err(|e| e.to_string())?;
        path.points.push([r.x_last[0], r.x_last[1]]);
        path.values.push(oracle.exact_value(&r.x_last).ok_or("no closed-form value")?);
        path.calls.push(r.total_oracle_calls);
    }
    Ok(path)
}

/// Iterate paths of GFM and GFM+ from the same start and seed.
pub fn paths(problem: &str, start: [f64; 2], s: PathSettings) -> Result<PathPair, String> {
    if s.steps > MAX_STEPS {
        return Err(format!("at most {MAX_STEPS} steps, got {}", s.steps));
    }
    let oracle = demo_problem(problem)?;
    let x0 = DenseVector::from_vec(start.to_vec());
    let rng = RandomStream::from_seed(s.seed);
    let gfm = |k| run_gfm(&*oracle, &x0, &GfmConfig { eta: s.eta, iterations: k, delta: s.delta }, &rng);
    let plus = |k| {
        let cfg = GfmPlusConfig {
            eta: s.eta,
            iterations: k,
            epoch_length: s.epoch_length,
            batch: s.batch,
            epoch_batch: s.epoch_batch,
            delta: s.delta,
        };
        run_gfm_plus(&*oracle, &x0, &cfg, &rng)
    };
    Ok(PathPair { gfm: trace(&*oracle, s.steps, gfm, &x0)?, gfm_plus: trace(&*oracle, s.steps, plus, &x0)? })
}

#[derive(Debug, Serialize)]
pub struct PlanReport {
    pub config: GfmPlusConfig,
    pub oracle_calls: u64,
    pub order_level_calls: u64,
    pub sigma_squared: f64,
    pub smooth_lipschitz: f64,
    pub ms_lipschitz: f64,
}

pub fn plan(dim: usize, lipschitz: f64, gap: f64, delta: f64, epsilon: f64) -> Result<PlanReport, String> {
    let config = plan_gfm_plus(dim, lipschitz, gap, delta, epsilon, 1.0).map_err(|e| e.to_string())?;
    let k = derived_constants(dim, lipschitz, delta, gap, 1.0).map_err(|e| e.to_string())?;
    Ok(PlanReport {
        config,
        oracle_calls: config.oracle_calls(),
        order_level_calls: config.order_level_calls(),
        sigma_squared: k.variance,
        smooth_lipschitz: k.smooth_lipschitz,
        ms_lipschitz: k.ms_lipschitz,
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string())).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = sampleDirections)]
pub fn sample_directions_js(dim: usize, count: usize, seed: u32, ball: bool) -> Result<Vec<f64>, JsValue> {
    directions(dim, count, seed.into(), ball).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = comparePaths)]
#[allow(clippy::too_many_arguments)]
pub fn compare_paths_js(
    problem: &str,
    x: f64,
    y: f64,
    delta: f64,
    eta: f64,
    steps: usize,
    epoch_length: usize,
    batch: usize,
    epoch_batch: usize,
    seed: u32,
) -> Result<String, JsValue> {
    let s = PathSettings { delta, eta, steps, epoch_length, batch, epoch_batch, seed: seed.into() };
    to_js(paths(problem, [x, y], s))
}

#[wasm_bindgen(js_name = planGfmPlus)]
pub fn plan_js(dim: usize, lipschitz: f64, gap: f64, delta: f64, epsilon: f64) -> Result<String, JsValue> {
    to_js(plan(dim, lipschitz, gap, delta, epsilon))
}
