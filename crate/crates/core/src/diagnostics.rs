//! Monte-Carlo audits of the estimator and the smoothed problem, plus
//! head-to-head run comparisons.
//!
//! Every check gates at three standard errors, so a correct implementation
//! fails an individual audit with probability around 0.3%.

use serde::Serialize;

use crate::algorithms::{
    run_gfm_plus_with, run_gfm_with, CheckpointMetric, GfmConfig, GfmPlusConfig, RunOptions, RunResult,
};
use crate::error::{Error, Result};
use crate::oracle::{sample_ball, sample_sphere, StochasticOracle};
use crate::par;
use crate::rng::{purpose, RandomStream};
use crate::smoothing::{
    check_delta, estimate_smoothed_gradient, estimate_smoothed_value, mean_and_stderr, second_moment_factor,
    vector_mean_and_stderr, zo_gradient,
};
use crate::vector::DenseVector;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditVerdict {
    pub name: String,
    pub statistic: f64,
    pub bound: f64,
    pub stderr: f64,
    pub pass: bool,
    pub n_samples: usize,
    pub seed: u64,
}

impl AuditVerdict {
    /// Passes when `statistic <= bound + 3 stderr`.
    pub fn one_sided(name: &str, statistic: f64, bound: f64, stderr: f64, n_samples: usize, seed: u64) -> Self {
        let pass = statistic <= bound + 3.0 * stderr;
        Self { name: name.into(), statistic, bound, stderr, pass, n_samples, seed }
    }

    /// Passes when `|statistic - bound| <= 3 stderr`.
    pub fn two_sided(name: &str, statistic: f64, bound: f64, stderr: f64, n_samples: usize, seed: u64) -> Self {
        let pass = (statistic - bound).abs() <= 3.0 * stderr;
        Self { name: name.into(), statistic, bound, stderr, pass, n_samples, seed }
    }
}

/// Norm of the mean of `n_samples` two-point estimates at `x`, and its
/// standard error. Since `grad f_delta(x)` lies in the Goldstein
/// `delta`-subdifferential, a small value certifies approximate stationarity.
/// The norm of a noisy mean is biased upward by roughly one standard error.
pub fn goldstein_residual<O: StochasticOracle + ?Sized>(
    oracle: &O,
    x: &[f64],
    delta: f64,
    n_samples: usize,
    rng: &RandomStream,
) -> Result<(f64, f64)> {
    if n_samples < 100 {
        return Err(Error::param(format!("goldstein_residual needs at least 100 samples, got {n_samples}")));
    }
    let (mean, stderr) = estimate_smoothed_gradient(oracle, x, delta, n_samples, rng)?;
    Ok((mean.norm(), stderr))
}

/// Unbiasedness and second-moment checks at `x`.
///
/// The first verdict compares the empirical mean against the oracle's
/// closed-form `grad f_delta` and is `None` when the oracle has none. The
/// second compares `E|g|^2` against `16 sqrt(2 pi) d L^2`.
pub fn moment_audit<O: StochasticOracle + ?Sized>(
    oracle: &O,
    x: &[f64],
    delta: f64,
    n_samples: usize,
    rng: &RandomStream,
) -> Result<(Option<AuditVerdict>, AuditVerdict)> {
    check_delta(delta)?;
    if n_samples < 2 {
        return Err(Error::param("moment audit needs at least 2 samples"));
    }
    let d = x.len();
    let draws = par::try_map(n_samples, |i| {
        let mut s = rng.derive(&[i as u64]);
        let w = sample_sphere(&mut s, d);
        let xi = oracle.sample_index(&mut s);
        zo_gradient(oracle, x, &w, xi, delta)
    })?;
    let seed = rng.seed();
    let unbiased = oracle.smoothed_gradient(x, delta).map(|exact| {
        let (mean, stderr) = vector_mean_and_stderr(&draws, d);
        AuditVerdict::two_sided("unbiasedness", mean.distance(&exact), 0.0, stderr, n_samples, seed)
    });
    let sq: Vec<f64> = draws.iter().map(DenseVector::norm_squared).collect();
    let (m2, m2_se) = mean_and_stderr(&sq);
    let bound = second_moment_factor() * d as f64 * oracle.lipschitz().powi(2);
    let second = AuditVerdict::one_sided("second_moment", m2, bound, m2_se, n_samples, seed);
    Ok((unbiased, second))
}

/// `E_xi |g(x; w, xi) - g(y; w, xi)|^2` over `n_xi` index draws with `w`
/// fixed, and the bound `(d L / delta)^2 |x - y|^2`.
pub fn ms_lipschitz_pair<O: StochasticOracle + ?Sized>(
    oracle: &O,
    x: &[f64],
    y: &[f64],
    w: &DenseVector,
    delta: f64,
    n_xi: usize,
    rng: &RandomStream,
) -> Result<(f64, f64)> {
    check_delta(delta)?;
    if n_xi == 0 {
        return Err(Error::param("need at least one index draw"));
    }
    let sq = par::try_map(n_xi, |j| {
        let xi = oracle.sample_index(&mut rng.derive(&[j as u64]));
        let gx = zo_gradient(oracle, x, w, xi, delta)?;
        let gy = zo_gradient(oracle, y, w, xi, delta)?;
        Ok::<_, Error>(gx.sub(&gy).norm_squared())
    })?;
    let stat = sq.iter().sum::<f64>() / n_xi as f64;
    let dist_sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
    let scale = x.len() as f64 * oracle.lipschitz() / delta;
    Ok((stat, scale * scale * dist_sq))
}

/// Worst ratio of [`ms_lipschitz_pair`] statistic to bound over `n_pairs`
/// random pairs. Each pair draws `x` standard Gaussian, `y` uniform in the
/// `delta`-ball around `x`, and `w` uniform on the sphere. Passes when the
/// ratio stays below `1 + 3 / sqrt(n_xi)`.
pub fn ms_lipschitz_audit<O: StochasticOracle + ?Sized>(
    oracle: &O,
    delta: f64,
    n_pairs: usize,
    n_xi: usize,
    rng: &RandomStream,
) -> Result<AuditVerdict> {
    if n_pairs < 10 || n_xi < 1000 {
        return Err(Error::param(format!("need n_pairs >= 10 and n_xi >= 1000, got {n_pairs} and {n_xi}")));
    }
    let d = oracle.dim();
    let mut worst: f64 = 0.0;
    for k in 0..n_pairs {
        let mut s = rng.derive(&[purpose::PROBE_POINTS, k as u64]);
        let x: DenseVector = (0..d).map(|_| s.standard_normal()).collect();
        let y = x.add_scaled(delta, &sample_ball(&mut s, d));
        let w = sample_sphere(&mut s, d);
        let (stat, bound) =
            ms_lipschitz_pair(oracle, &x, &y, &w, delta, n_xi, &rng.derive(&[purpose::AUDIT, k as u64]))?;
        let ratio = if stat == 0.0 { 0.0 } else { stat / bound };
        worst = worst.max(ratio);
    }
    let bound = 1.0 + 3.0 / (n_xi as f64).sqrt();
    Ok(AuditVerdict::one_sided("ms_lipschitz", worst, bound, 0.0, n_pairs * n_xi, rng.seed()))
}

/// Largest `|f_delta(p) - f(p)| - 3 stderr` over `points`, checked against
/// `delta L`. Needs the oracle's closed-form objective.
pub fn smoothing_gap_audit<O: StochasticOracle + ?Sized>(
    oracle: &O,
    points: &[DenseVector],
    delta: f64,
    n_samples: usize,
    rng: &RandomStream,
) -> Result<AuditVerdict> {
    let mut worst = f64::NEG_INFINITY;
    for (k, p) in points.iter().enumerate() {
        let exact =
            oracle.exact_value(p).ok_or_else(|| Error::param("smoothing-gap audit needs a closed-form objective"))?;
        let (est, se) = estimate_smoothed_value(oracle, p, delta, n_samples, &rng.derive(&[k as u64]))?;
        worst = worst.max((est - exact).abs() - 3.0 * se);
    }
    let bound = delta * oracle.lipschitz();
    Ok(AuditVerdict::one_sided("smoothing_gap", worst, bound, 0.0, points.len() * n_samples, rng.seed()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub verdicts: Vec<AuditVerdict>,
    pub skipped: Vec<String>,
    pub all_pass: bool,
}

impl AuditReport {
    pub fn new(verdicts: Vec<AuditVerdict>, skipped: Vec<String>) -> Self {
        let all_pass = verdicts.iter().all(|v| v.pass);
        Self { verdicts, skipped, all_pass }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Full audit battery at `x`: moments with `n_samples` draws, the
/// mean-squared Lipschitz check on 10 pairs, and the smoothing gap at `x`
/// and 19 Gaussian perturbations of it when a closed form exists.
pub fn audit_suite<O: StochasticOracle + ?Sized>(
    oracle: &O,
    x: &[f64],
    delta: f64,
    n_samples: usize,
    rng: &RandomStream,
) -> Result<AuditReport> {
    let mut verdicts = Vec::new();
    let mut skipped = Vec::new();
    let (unbiased, second) = moment_audit(oracle, x, delta, n_samples, &rng.derive(&[purpose::AUDIT, 0]))?;
    match unbiased {
        Some(v) => verdicts.push(v),
        None => skipped.push("unbiasedness: no closed-form smoothed gradient".into()),
    }
    verdicts.push(second);
    verdicts.push(ms_lipschitz_audit(oracle, delta, 10, 1000, &rng.derive(&[purpose::AUDIT, 1]))?);
    if oracle.exact_value(x).is_some() {
        let mut s = rng.derive(&[purpose::PROBE_POINTS]);
        let base = DenseVector::from_vec(x.to_vec());
        let mut points = vec![base.clone()];
        for _ in 1..20 {
            let z: DenseVector = (0..x.len()).map(|_| s.standard_normal()).collect();
            points.push(base.add(&z));
        }
        verdicts.push(smoothing_gap_audit(oracle, &points, delta, n_samples, &rng.derive(&[purpose::AUDIT, 2]))?);
    } else {
        skipped.push("smoothing_gap: no closed-form objective".into());
    }
    Ok(AuditReport::new(verdicts, skipped))
}

/// What counts as reaching the target in [`compare_runs`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    pub level: f64,
    pub metric: CheckpointMetric,
    pub checkpoint_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub seed: u64,
    /// `None` when the target was never reached.
    pub gfm_calls: Option<u64>,
    pub gfm_plus_calls: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub median_gfm: f64,
    pub median_gfm_plus: f64,
}

/// Writes an unreached count as the literal `inf`.
pub fn format_calls(calls: Option<u64>) -> String {
    calls.map_or_else(|| "inf".into(), |c| c.to_string())
}

/// Oracle calls spent before the first checkpoint at or below the target.
pub fn calls_to_target(run: &RunResult, level: f64) -> Option<u64> {
    let mut before = 0u64;
    for r in &run.trace {
        if r.f_estimate.is_some_and(|f| f <= level) {
            return Some(before);
        }
        before = r.oracle_calls_cumulative;
    }
    run.final_estimate.filter(|f| *f <= level).map(|_| run.total_oracle_calls)
}

/// Median treating unreached as `+inf`.
pub fn median_calls(calls: &[Option<u64>]) -> f64 {
    let mut v: Vec<f64> = calls.iter().map(|c| c.map_or(f64::INFINITY, |c| c as f64)).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else if v[n / 2 - 1].is_infinite() || v[n / 2].is_infinite() {
        v[n / 2].max(v[n / 2 - 1])
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Stream used for seed `i` of a sweep rooted at `base`.
pub fn seed_stream(base: &RandomStream, i: usize) -> RandomStream {
    base.derive(&[purpose::SEED_SWEEP, i as u64])
}

/// Runs both algorithms on `n_seeds` seed streams and records the calls each
/// needs to reach the target.
pub fn compare_runs<O: StochasticOracle + ?Sized>(
    oracle: &O,
    x0: &DenseVector,
    gfm: &GfmConfig,
    gfm_plus: &GfmPlusConfig,
    n_seeds: usize,
    target: Target,
    base: &RandomStream,
) -> Result<Comparison> {
    if gfm.delta != gfm_plus.delta {
        return Err(Error::param("compared configurations must share delta"));
    }
    let opts =
        RunOptions { checkpoint_every: target.checkpoint_every, metric: target.metric, stop_at: Some(target.level) };
    let mut rows = Vec::with_capacity(n_seeds);
    for i in 0..n_seeds {
        let rng = seed_stream(base, i);
        let a = run_gfm_with(oracle, x0, gfm, &rng, &opts)?;
        let b = run_gfm_plus_with(oracle, x0, gfm_plus, &rng, &opts)?;
        rows.push(ComparisonRow {
            seed: i as u64,
            gfm_calls: calls_to_target(&a, target.level),
            gfm_plus_calls: calls_to_target(&b, target.level),
        });
    }
    let median_gfm = median_calls(&rows.iter().map(|r| r.gfm_calls).collect::<Vec<_>>());
    let median_gfm_plus = median_calls(&rows.iter().map(|r| r.gfm_plus_calls).collect::<Vec<_>>());
    Ok(Comparison { rows, median_gfm, median_gfm_plus })
}
