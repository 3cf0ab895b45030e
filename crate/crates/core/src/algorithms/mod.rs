//! Gradient-free drivers: plain two-point descent (GFM), its recursive
//! variance-reduced variant (GFM+), and the warm-started compositions of the
//! two. Planners that turn problem constants into configurations live in
//! [`planner`].
//!
//! All randomness is addressed by label. Iteration `t` draws its sample set
//! from [`iteration_stream`]`(rng, t)`, the returned iterate index comes from
//! a dedicated substream, and checkpoint estimates use their own substreams,
//! so enabling checkpoints never moves the optimization path.

pub mod planner;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, OracleError, Result};
use crate::oracle::{CountingOracle, StochasticOracle};
use crate::rng::{purpose, RandomStream};
use crate::smoothing::{self, check_delta, minibatch_gradient, recursive_update, SampleSet};
use crate::vector::DenseVector;

pub use planner::{plan_gfm_convex, plan_gfm_nonconvex, plan_gfm_plus, plan_ws_gfm, plan_ws_gfm_plus, WarmStartPlan};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GfmConfig {
    pub eta: f64,
    pub iterations: usize,
    pub delta: f64,
}

impl GfmConfig {
    pub fn validate(&self) -> Result<()> {
        check_eta(self.eta)?;
        if self.iterations == 0 {
            return Err(Error::param("iteration count must be at least 1"));
        }
        check_delta(self.delta)
    }

    /// Evaluations consumed by a full run: two per step.
    pub fn oracle_calls(&self) -> u64 {
        2 * self.iterations as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GfmPlusConfig {
    pub eta: f64,
    pub iterations: usize,
    /// Steps per epoch `m`.
    pub epoch_length: usize,
    /// Inner batch size `b`.
    pub batch: usize,
    /// Epoch-start batch size `b'`.
    pub epoch_batch: usize,
    pub delta: f64,
}

impl GfmPlusConfig {
    pub fn validate(&self) -> Result<()> {
        check_eta(self.eta)?;
        for (name, v) in [
            ("iteration count", self.iterations),
            ("epoch length", self.epoch_length),
            ("batch size", self.batch),
            ("epoch batch size", self.epoch_batch),
        ] {
            if v == 0 {
                return Err(Error::param(format!("{name} must be at least 1")));
            }
        }
        check_delta(self.delta)
    }

    /// Number of epoch starts (`t mod m == 0`) among `t = 0..T`.
    pub fn epoch_starts(&self) -> u64 {
        self.iterations.div_ceil(self.epoch_length) as u64
    }

    /// Exact evaluation count of a run: `2 b'` per epoch start, `4 b` per inner step.
    pub fn oracle_calls(&self) -> u64 {
        let starts = self.epoch_starts();
        let inner = self.iterations as u64 - starts;
        starts * 2 * self.epoch_batch as u64 + inner * 4 * self.batch as u64
    }

    /// Order-level count `T (ceil(b'/m) + 2 b)` used in complexity statements.
    pub fn order_level_calls(&self) -> u64 {
        self.iterations as u64 * (self.epoch_batch.div_ceil(self.epoch_length) as u64 + 2 * self.batch as u64)
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if eta > 0.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("step size must be positive, got {eta}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    /// The only phase of a single run, or the second phase of a warm start.
    Main,
    /// First (plain GFM) phase of a warm-started run.
    Warm,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Main => "main",
            Phase::Warm => "warm",
        }
    }

    fn label(self) -> u64 {
        match self {
            Phase::Main => 0,
            Phase::Warm => 1,
        }
    }
}

/// One step of a run. `f_estimate` is the checkpoint metric at `x_t` (the
/// iterate entering step `t`); `oracle_calls_cumulative` counts evaluations
/// up to and including the computation of `v_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    pub phase: Phase,
    pub f_estimate: Option<f64>,
    pub v_norm: f64,
    pub oracle_calls_cumulative: u64,
    pub wall_ns: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    /// Iterate at `output_index`, drawn uniformly from `0..iterations`.
    pub x_out: DenseVector,
    pub output_index: usize,
    /// Size of the set the output was drawn from (`T` of the last phase).
    pub iterations: usize,
    /// The iterate after the final step.
    pub x_last: DenseVector,
    pub trace: Vec<IterationRecord>,
    pub total_oracle_calls: u64,
    pub seed: u64,
    /// Checkpoint metric at `x_last`, when checkpoints are enabled.
    pub final_estimate: Option<f64>,
    /// Set when [`RunOptions::stop_at`] ended the run before `T` steps.
    pub stopped_early: bool,
}

/// Quantity recorded at checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CheckpointMetric {
    /// Monte-Carlo estimate of `f_delta` with the given sample count.
    SmoothedValue { samples: usize },
    /// Closed-form `f(x)`; the oracle must provide it.
    ExactValue,
    /// Norm of the Monte-Carlo estimate of `grad f_delta`.
    GoldsteinResidual { samples: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    /// Record the metric every this many steps (and after the last step);
    /// zero disables checkpoints.
    pub checkpoint_every: usize,
    pub metric: CheckpointMetric,
    /// Stop at the first checkpoint whose metric is at or below this level.
    pub stop_at: Option<f64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { checkpoint_every: 0, metric: CheckpointMetric::SmoothedValue { samples: 256 }, stop_at: None }
    }
}

impl RunOptions {
    pub fn checkpoints(every: usize, metric: CheckpointMetric) -> Self {
        Self { checkpoint_every: every, metric, stop_at: None }
    }
}

/// Stream from which iteration `t` draws its sample set.
pub fn iteration_stream(rng: &RandomStream, t: usize) -> RandomStream {
    rng.derive(&[purpose::BATCH, t as u64])
}

/// Stream from which the returned iterate index is drawn.
pub fn output_index_stream(rng: &RandomStream) -> RandomStream {
    rng.derive(&[purpose::OUTPUT_INDEX])
}

/// Evaluates a checkpoint metric at `x`.
pub fn checkpoint_value<O: StochasticOracle + ?Sized>(
    oracle: &O,
    x: &[f64],
    delta: f64,
    metric: CheckpointMetric,
    rng: &RandomStream,
) -> Result<f64> {
    match metric {
        CheckpointMetric::SmoothedValue { samples } => {
            Ok(smoothing::estimate_smoothed_value(oracle, x, delta, samples, rng)?.0)
        }
        CheckpointMetric::ExactValue => {
            oracle.exact_value(x).ok_or_else(|| Error::param("problem has no closed-form objective value"))
        }
        CheckpointMetric::GoldsteinResidual { samples } => {
            Ok(smoothing::estimate_smoothed_gradient(oracle, x, delta, samples, rng)?.0.norm())
        }
    }
}

struct Recorder<'a> {
    opts: &'a RunOptions,
    start: Instant,
    trace: Vec<IterationRecord>,
    base_calls: u64,
    stopped: bool,
}

impl<'a> Recorder<'a> {
    fn new(opts: &'a RunOptions) -> Self {
        Self { opts, start: Instant::now(), trace: Vec::new(), base_calls: 0, stopped: false }
    }

    fn wall_ns(&self) -> u64 {
        self.start.elapsed().as_nanos() as u64
    }

    fn checkpoint<O: StochasticOracle + ?Sized>(
        &self,
        oracle: &O,
        x: &[f64],
        delta: f64,
        rng: &RandomStream,
        phase: Phase,
        t: usize,
    ) -> Result<Option<f64>, OracleError> {
        let every = self.opts.checkpoint_every;
        if every == 0 || t % every != 0 {
            return Ok(None);
        }
        self.metric_at(oracle, x, delta, rng, phase, t).map(Some)
    }

    fn metric_at<O: StochasticOracle + ?Sized>(
        &self,
        oracle: &O,
        x: &[f64],
        delta: f64,
        rng: &RandomStream,
        phase: Phase,
        t: usize,
    ) -> Result<f64, OracleError> {
        let stream = rng.derive(&[purpose::CHECKPOINT, phase.label(), t as u64]);
        match checkpoint_value(oracle, x, delta, self.opts.metric, &stream) {
            Ok(v) => Ok(v),
            Err(Error::Oracle(e)) => Err(e),
            Err(other) => Err(OracleError::new(other.to_string())),
        }
    }

    fn abort_oracle(&mut self, iteration: usize, source: OracleError) -> Error {
        Error::RunOracle { iteration, source, trace: std::mem::take(&mut self.trace) }
    }

    fn abort_divergence(&mut self, iteration: usize) -> Error {
        Error::Divergence { iteration, trace: std::mem::take(&mut self.trace) }
    }
}

struct PhaseOutcome {
    x_out: DenseVector,
    output_index: usize,
    x_last: DenseVector,
}

/// Shared loop of both algorithms; `direction` computes `v_t` through the
/// counting oracle.
#[allow(clippy::too_many_arguments)]
fn drive<O, D>(
    oracle: &O,
    x0: &DenseVector,
    iterations: usize,
    eta: f64,
    delta: f64,
    rng: &RandomStream,
    phase: Phase,
    rec: &mut Recorder<'_>,
    mut direction: D,
) -> Result<PhaseOutcome>
where
    O: StochasticOracle + ?Sized,
    D: FnMut(&CountingOracle<&O>, usize, &DenseVector, &DenseVector) -> Result<DenseVector, OracleError>,
{
    if x0.dim() != oracle.dim() {
        return Err(Error::param(format!("initial point has dimension {}, oracle expects {}", x0.dim(), oracle.dim())));
    }
    let counted = CountingOracle::new(oracle);
    let output_index = output_index_stream(rng).below(iterations as u64) as usize;
    let mut x = x0.clone();
    let mut x_prev = x0.clone();
    let mut x_out = None;
    for t in 0..iterations {
        if t == output_index {
            x_out = Some(x.clone());
        }
        let f_estimate = match rec.checkpoint(oracle, &x, delta, rng, phase, t) {
            Ok(v) => v,
            Err(e) => return Err(rec.abort_oracle(t, e)),
        };
        if let (Some(target), Some(value)) = (rec.opts.stop_at, f_estimate) {
            if value <= target {
                rec.stopped = true;
                rec.trace.push(IterationRecord {
                    t,
                    phase,
                    f_estimate,
                    v_norm: f64::NAN,
                    oracle_calls_cumulative: rec.base_calls + counted.calls(),
                    wall_ns: rec.wall_ns(),
                });
                break;
            }
        }
        let v = match direction(&counted, t, &x, &x_prev) {
            Ok(v) => v,
            Err(e) => return Err(rec.abort_oracle(t, e)),
        };
        rec.trace.push(IterationRecord {
            t,
            phase,
            f_estimate,
            v_norm: v.norm(),
            oracle_calls_cumulative: rec.base_calls + counted.calls(),
            wall_ns: rec.wall_ns(),
        });
        let next = x.add_scaled(-eta, &v);
        if !next.is_finite() {
            return Err(rec.abort_divergence(t));
        }
        x_prev = std::mem::replace(&mut x, next);
    }
    rec.base_calls += counted.calls();
    Ok(PhaseOutcome { x_out: x_out.unwrap_or_else(|| x.clone()), output_index, x_last: x })
}

fn gfm_phase<O: StochasticOracle + ?Sized>(
    oracle: &O,
    x0: &DenseVector,
    cfg: &GfmConfig,
    rng: &RandomStream,
    phase: Phase,
    rec: &mut Recorder<'_>,
) -> Result<PhaseOutcome> {
    cfg.validate()?;
    drive(oracle, x0, cfg.iterations, cfg.eta, cfg.delta, rng, phase, rec, |counted, t, x, _| {
        let set = SampleSet::draw(counted, &iteration_stream(rng, t), 1);
        minibatch_gradient(counted, x, &set, cfg.delta)
    })
}

fn gfm_plus_phase<O: StochasticOracle + ?Sized>(
    oracle: &O,
    x0: &DenseVector,
    cfg: &GfmPlusConfig,
    rng: &RandomStream,
    phase: Phase,
    rec: &mut Recorder<'_>,
) -> Result<PhaseOutcome> {
    cfg.validate()?;
    let mut v_prev = DenseVector::zeros(x0.dim());
    drive(oracle, x0, cfg.iterations, cfg.eta, cfg.delta, rng, phase, rec, |counted, t, x, x_prev| {
        let stream = iteration_stream(rng, t);
        let v = if t % cfg.epoch_length == 0 {
            let set = SampleSet::draw(counted, &stream, cfg.epoch_batch);
            minibatch_gradient(counted, x, &set, cfg.delta)?
        } else {
            let set = SampleSet::draw(counted, &stream, cfg.batch);
            recursive_update(&v_prev, counted, x, x_prev, &set, cfg.delta)?
        };
        v_prev = v.clone();
        Ok(v)
    })
}

fn finish<O: StochasticOracle + ?Sized>(
    oracle: &O,
    outcome: PhaseOutcome,
    iterations: usize,
    delta: f64,
    rng: &RandomStream,
    mut rec: Recorder<'_>,
) -> Result<RunResult> {
    let final_estimate = if rec.opts.checkpoint_every > 0 && !rec.stopped {
        match rec.metric_at(oracle, &outcome.x_last, delta, rng, Phase::Main, iterations) {
            Ok(v) => Some(v),
            Err(e) => return Err(rec.abort_oracle(iterations, e)),
        }
    } else {
        None
    };
    Ok(RunResult {
        x_out: outcome.x_out,
        output_index: outcome.output_index,
        iterations,
        x_last: outcome.x_last,
        total_oracle_calls: rec.base_calls,
        trace: rec.trace,
        seed: rng.seed(),
        final_estimate,
        stopped_early: rec.stopped,
    })
}

/// Plain two-point descent: `x_{t+1} = x_t - eta g(x_t; w_t, xi_t)`.
pub fn run_gfm<O: StochasticOracle + ?Sized>(
    oracle: &O,
    x0: &DenseVector,
    cfg: &GfmConfig,
    rng: &RandomStream,
) -> Result<RunResult> {
    run_gfm_with(oracle, x0, cfg, rng, &RunOptions::default())
}

pub fn run_gfm_with<O: StochasticOracle + ?Sized>(
    oracle: &O,
    x0: &DenseVector,
    cfg: &GfmConfig,
    rng: &RandomStream,
    opts: &RunOptions,
) -> Result<RunResult> {
    let mut rec = Recorder::new(opts);
    let outcome = gfm_phase(oracle, x0, cfg, rng, Phase::Main, &mut rec)?;
    finish(oracle, outcome, cfg.iterations, cfg.delta, rng, rec)
}

/// Recursive variance-reduced descent. At epoch starts (`t mod m == 0`) the
/// direction is a fresh `b'`-sample batch estimate; in between it is updated
/// recursively from a fresh `b`-sample set shared by `x_t` and `x_{t-1}`.
pub fn run_gfm_plus<O: StochasticOracle + ?Sized>(
    oracle: &O,
    x0: &DenseVector,
    cfg: &GfmPlusConfig,
    rng: &RandomStream,
) -> Result<RunResult> {
    run_gfm_plus_with(oracle, x0, cfg, rng, &RunOptions::default())
}

pub fn run_gfm_plus_with<O: StochasticOracle + ?Sized>(
    oracle: &O,
    x0: &DenseVector,
    cfg: &GfmPlusConfig,
    rng: &RandomStream,
    opts: &RunOptions,
) -> Result<RunResult> {
    let mut rec = Recorder::new(opts);
    let outcome = gfm_plus_phase(oracle, x0, cfg, rng, Phase::Main, &mut rec)?;
    finish(oracle, outcome, cfg.iterations, cfg.delta, rng, rec)
}

/// Runs the warm-start phase (plain GFM on the substream
/// `rng.derive(&[WARM_START])`) and returns the point handed to phase two.
/// A zero-iteration warm phase hands over `x0` unchanged.
fn warm_phase<O: StochasticOracle + ?Sized>(
    oracle: &O,
    x0: &DenseVector,
    warm: &GfmConfig,
    rng: &RandomStream,
    rec: &mut Recorder<'_>,
) -> Result<DenseVector> {
    if warm.iterations == 0 {
        return Ok(x0.clone());
    }
    let warm_rng = rng.derive(&[purpose::WARM_START]);
    let outcome = gfm_phase(oracle, x0, warm, &warm_rng, Phase::Warm, rec)?;
    Ok(outcome.x_out)
}

/// GFM warm start followed by GFM+ from the warm phase's output.
pub fn run_ws_gfm_plus<O: StochasticOracle + ?Sized>(
    oracle: &O,
    x0: &DenseVector,
    phase1: &GfmConfig,
    phase2: &GfmPlusConfig,
    rng: &RandomStream,
) -> Result<RunResult> {
    run_ws_gfm_plus_with(oracle, x0, phase1, phase2, rng, &RunOptions::default())
}

pub fn run_ws_gfm_plus_with<O: StochasticOracle + ?Sized>(
    oracle: &O,
    x0: &DenseVector,
    phase1: &GfmConfig,
    phase2: &GfmPlusConfig,
    rng: &RandomStream,
    opts: &RunOptions,
) -> Result<RunResult> {
    let mut rec = Recorder::new(opts);
    let x1 = warm_phase(oracle, x0, phase1, rng, &mut rec)?;
    if rec.stopped {
        return finish(
            oracle,
            PhaseOutcome { x_out: x1.clone(), output_index: 0, x_last: x1 },
            0,
            phase2.delta,
            rng,
            rec,
        );
    }
    let outcome = gfm_plus_phase(oracle, &x1, phase2, rng, Phase::Main, &mut rec)?;
    finish(oracle, outcome, phase2.iterations, phase2.delta, rng, rec)
}

/// GFM warm start followed by a second GFM phase.
pub fn run_ws_gfm<O: StochasticOracle + ?Sized>(
    oracle: &O,
    x0: &DenseVector,
    phase1: &GfmConfig,
    phase2: &GfmConfig,
    rng: &RandomStream,
) -> Result<RunResult> {
    run_ws_gfm_with(oracle, x0, phase1, phase2, rng, &RunOptions::default())
}

pub fn run_ws_gfm_with<O: StochasticOracle + ?Sized>(
    oracle: &O,
    x0: &DenseVector,
    phase1: &GfmConfig,
    phase2: &GfmConfig,
    rng: &RandomStream,
    opts: &RunOptions,
) -> Result<RunResult> {
    let mut rec = Recorder::new(opts);
    let x1 = warm_phase(oracle, x0, phase1, rng, &mut rec)?;
    if rec.stopped {
        return finish(
            oracle,
            PhaseOutcome { x_out: x1.clone(), output_index: 0, x_last: x1 },
            0,
            phase2.delta,
            rng,
            rec,
        );
    }
    let outcome = gfm_phase(oracle, &x1, phase2, rng, Phase::Main, &mut rec)?;
    finish(oracle, outcome, phase2.iterations, phase2.delta, rng, rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{make_counting, FnOracle};

    fn constant(d: usize) -> impl StochasticOracle {
        FnOracle::new(d, 1.0, |_, _| 2.5)
    }

    fn l1(d: usize) -> impl StochasticOracle {
        FnOracle::new(d, (d as f64).sqrt(), |x, _| x.iter().map(|a| a.abs()).sum())
    }

    fn plus_cfg(t: usize, m: usize, b: usize, bp: usize) -> GfmPlusConfig {
        GfmPlusConfig { eta: 0.01, iterations: t, epoch_length: m, batch: b, epoch_batch: bp, delta: 0.1 }
    }

    #[test]
    fn gfm_on_constant_returns_start() {
        let x0 = DenseVector::from_vec(vec![1.0, -2.0]);
        let cfg = GfmConfig { eta: 3.0, iterations: 1, delta: 0.1 };
        let r = run_gfm(&constant(2), &x0, &cfg, &RandomStream::from_seed(1)).unwrap();
        assert_eq!(r.x_out, x0);
        assert_eq!(r.total_oracle_calls, 2);
    }

    #[test]
    fn gfm_call_count_and_trace() {
        let cfg = GfmConfig { eta: 0.01, iterations: 100, delta: 0.1 };
        let counted = make_counting(l1(3));
        let r = run_gfm(&counted, &DenseVector::filled(3, 1.0), &cfg, &RandomStream::from_seed(2)).unwrap();
        assert_eq!(r.total_oracle_calls, 200);
        assert_eq!(counted.calls(), 200);
        assert_eq!(r.trace.len(), 100);
        assert!(r.trace.windows(2).all(|w| w[1].oracle_calls_cumulative > w[0].oracle_calls_cumulative));
    }

    #[test]
    fn gfm_drifts_against_linear_gradient() {
        let f = FnOracle::new(2, 1.0, |x, _| x[0]);
        let cfg = GfmConfig { eta: 0.1, iterations: 2000, delta: 0.1 };
        let r = run_gfm(&f, &DenseVector::zeros(2), &cfg, &RandomStream::from_seed(3)).unwrap();
        // mean drift is -eta * c per step
        assert!(r.x_last[0] < -100.0, "x_last = {:?}", r.x_last);
    }

    #[test]
    fn gfm_plus_call_count_worked_example() {
        let counted = make_counting(l1(2));
        let r =
            run_gfm_plus(&counted, &DenseVector::filled(2, 1.0), &plus_cfg(10, 5, 2, 8), &RandomStream::from_seed(4))
                .unwrap();
        assert_eq!(r.total_oracle_calls, 96);
        assert_eq!(counted.calls(), 96);
        assert_eq!(plus_cfg(10, 5, 2, 8).oracle_calls(), 96);
    }

    #[test]
    fn gfm_plus_with_unit_epochs_is_minibatch_gfm() {
        let f = l1(3);
        let x0 = DenseVector::from_vec(vec![0.4, -1.0, 2.0]);
        let cfg = plus_cfg(20, 1, 3, 4);
        let rng = RandomStream::from_seed(5);
        let r = run_gfm_plus(&f, &x0, &cfg, &rng).unwrap();
        let mut x = x0.clone();
        for t in 0..cfg.iterations {
            let set = SampleSet::draw(&f, &iteration_stream(&rng, t), cfg.epoch_batch);
            let g = minibatch_gradient(&f, &x, &set, cfg.delta).unwrap();
            x = x.add_scaled(-cfg.eta, &g);
        }
        assert_eq!(r.x_last, x);
        assert_eq!(r.total_oracle_calls, 20 * 8);
    }

    #[test]
    fn gfm_plus_on_constant_stays_put() {
        let x0 = DenseVector::from_vec(vec![5.0, 6.0, 7.0]);
        let r = run_gfm_plus(&constant(3), &x0, &plus_cfg(12, 4, 2, 3), &RandomStream::from_seed(6)).unwrap();
        assert_eq!(r.x_out, x0);
        assert!(r.trace.iter().all(|rec| rec.v_norm == 0.0));
    }

    #[test]
    fn same_seed_same_run() {
        let f = l1(4);
        let x0 = DenseVector::filled(4, 0.7);
        let a = run_gfm_plus(&f, &x0, &plus_cfg(30, 7, 2, 5), &RandomStream::from_seed(7)).unwrap();
        let b = run_gfm_plus(&f, &x0, &plus_cfg(30, 7, 2, 5), &RandomStream::from_seed(7)).unwrap();
        assert_eq!(a.x_out, b.x_out);
        assert_eq!(a.x_last, b.x_last);
        let c = run_gfm_plus(&f, &x0, &plus_cfg(30, 7, 2, 5), &RandomStream::from_seed(8)).unwrap();
        assert_ne!(a.x_last, c.x_last);
    }

    #[test]
    fn checkpoints_do_not_perturb_the_path() {
        let f = l1(3);
        let x0 = DenseVector::filled(3, 1.0);
        let rng = RandomStream::from_seed(9);
        let plain = run_gfm_plus(&f, &x0, &plus_cfg(25, 5, 2, 4), &rng).unwrap();
        let opts = RunOptions::checkpoints(3, CheckpointMetric::SmoothedValue { samples: 16 });
        let checked = run_gfm_plus_with(&f, &x0, &plus_cfg(25, 5, 2, 4), &rng, &opts).unwrap();
        assert_eq!(plain.x_last, checked.x_last);
        assert_eq!(plain.total_oracle_calls, checked.total_oracle_calls);
        let populated = checked.trace.iter().filter(|r| r.f_estimate.is_some()).count();
        assert_eq!(populated, 9);
        assert!(checked.final_estimate.is_some());
    }

    #[test]
    fn warm_start_with_empty_first_phase_is_plain_run() {
        let f = l1(2);
        let x0 = DenseVector::from_vec(vec![1.0, 2.0]);
        let rng = RandomStream::from_seed(10);
        let empty = GfmConfig { eta: 0.1, iterations: 0, delta: 0.1 };
        let plus = plus_cfg(15, 4, 2, 3);
        let ws = run_ws_gfm_plus(&f, &x0, &empty, &plus, &rng).unwrap();
        let plain = run_gfm_plus(&f, &x0, &plus, &rng).unwrap();
        assert_eq!(ws.x_out, plain.x_out);
        assert_eq!(ws.total_oracle_calls, plain.total_oracle_calls);

        let gfm = GfmConfig { eta: 0.01, iterations: 9, delta: 0.1 };
        let ws = run_ws_gfm(&f, &x0, &empty, &gfm, &rng).unwrap();
        assert_eq!(ws.x_out, run_gfm(&f, &x0, &gfm, &rng).unwrap().x_out);
    }

    #[test]
    fn warm_start_accounting_and_phase_tags() {
        let f = l1(2);
        let x0 = DenseVector::from_vec(vec![1.0, 2.0]);
        let warm = GfmConfig { eta: 0.01, iterations: 11, delta: 0.2 };
        let main = GfmConfig { eta: 0.01, iterations: 7, delta: 0.1 };
        let r = run_ws_gfm(&f, &x0, &warm, &main, &RandomStream::from_seed(11)).unwrap();
        assert_eq!(r.total_oracle_calls, 2 * 11 + 2 * 7);
        assert_eq!(r.trace.iter().filter(|t| t.phase == Phase::Warm).count(), 11);
        assert_eq!(r.trace.iter().filter(|t| t.phase == Phase::Main).count(), 7);
        assert!(r.trace.windows(2).all(|w| w[1].oracle_calls_cumulative > w[0].oracle_calls_cumulative));

        let plus = plus_cfg(10, 5, 2, 8);
        let r = run_ws_gfm_plus(&f, &x0, &warm, &plus, &RandomStream::from_seed(12)).unwrap();
        assert_eq!(r.total_oracle_calls, 22 + 96);
    }

    #[test]
    fn divergence_is_reported_with_partial_trace() {
        let f = FnOracle::new(1, 1.0, |x, _| x[0] * x[0] * 1e300);
        let cfg = GfmConfig { eta: 1e10, iterations: 50, delta: 0.1 };
        let err = run_gfm(&f, &DenseVector::from_vec(vec![1.0]), &cfg, &RandomStream::from_seed(13)).unwrap_err();
        match err {
            Error::Divergence { iteration, trace } => {
                assert_eq!(trace.len(), iteration + 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let f = l1(1);
        let x0 = DenseVector::zeros(1);
        let rng = RandomStream::from_seed(0);
        assert!(run_gfm(&f, &x0, &GfmConfig { eta: 0.0, iterations: 1, delta: 0.1 }, &rng).is_err());
        assert!(run_gfm(&f, &x0, &GfmConfig { eta: 0.1, iterations: 0, delta: 0.1 }, &rng).is_err());
        assert!(run_gfm_plus(&f, &x0, &plus_cfg(1, 0, 1, 1), &rng).is_err());
        assert!(run_gfm(&f, &DenseVector::zeros(2), &GfmConfig { eta: 0.1, iterations: 1, delta: 0.1 }, &rng).is_err());
    }

    #[test]
    fn early_stop_at_target() {
        let f = l1(2);
        let opts = RunOptions { checkpoint_every: 1, metric: CheckpointMetric::ExactValue, stop_at: Some(10.0) };
        let r = run_gfm_with(
            &FnOracleWithExact(f),
            &DenseVector::filled(2, 1.0),
            &GfmConfig { eta: 0.1, iterations: 5, delta: 0.1 },
            &RandomStream::from_seed(1),
            &opts,
        )
        .unwrap();
        assert!(r.stopped_early);
        assert_eq!(r.trace.len(), 1);
        assert_eq!(r.total_oracle_calls, 0);
    }

    struct FnOracleWithExact<O>(O);

    impl<O: StochasticOracle> StochasticOracle for FnOracleWithExact<O> {
        fn dim(&self) -> usize {
            self.0.dim()
        }
        fn eval(&self, x: &[f64], xi: crate::oracle::IndexSample) -> Result<f64, OracleError> {
            self.0.eval(x, xi)
        }
        fn lipschitz(&self) -> f64 {
            self.0.lipschitz()
        }
        fn exact_value(&self, x: &[f64]) -> Option<f64> {
            self.0.eval(x, crate::oracle::IndexSample(0)).ok()
        }
    }
}
