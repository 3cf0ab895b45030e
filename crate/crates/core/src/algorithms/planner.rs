//! Hyperparameter planners derived from the convergence analyses.
//!
//! Every planner validates its inputs, computes [`DerivedConstants`] and
//! applies ceilings in a fixed order so results are reproducible to the last
//! integer.

use serde::{Deserialize, Serialize};

use super::{GfmConfig, GfmPlusConfig};
use crate::error::{Error, Result};
use crate::smoothing::{derived_constants, second_moment_factor, DerivedConstants};

/// Planned iteration counts beyond this are rejected as unrunnable.
const MAX_PLANNED: f64 = 1e12;

fn ceil_count(value: f64, what: &str) -> Result<usize> {
    if !value.is_finite() || value > MAX_PLANNED {
        return Err(Error::param(format!("planned {what} ({value:e}) is too large to run")));
    }
    Ok((value.ceil() as usize).max(1))
}

fn positive(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("{name} must be positive, got {value}")))
    }
}

/// GFM+ configuration reaching an `epsilon`-stationary point of `f_delta`
/// in expectation:
///
/// ```text
/// b' = ceil(2 sigma^2 / eps^2)
/// m  = ceil(L_delta sqrt(b') / M_delta)
/// b  = ceil(2 b' / m)
/// eta = sqrt(b') / (m M_delta)
/// T  = ceil(4 Delta_delta / (eta eps^2))
/// ```
pub fn plan_gfm_plus(d: usize, lipschitz: f64, gap: f64, delta: f64, epsilon: f64, c: f64) -> Result<GfmPlusConfig> {
    positive("epsilon", epsilon)?;
    let k = derived_constants(d, lipschitz, delta, gap, c)?;
    Ok(gfm_plus_from_constants(&k, epsilon)?.0)
}

pub(crate) fn gfm_plus_from_constants(k: &DerivedConstants, epsilon: f64) -> Result<(GfmPlusConfig, DerivedConstants)> {
    let eps2 = epsilon * epsilon;
    let epoch_batch = ceil_count(2.0 * k.variance / eps2, "epoch batch")?;
    let sqrt_bp = (epoch_batch as f64).sqrt();
    let epoch_length = ceil_count(k.smooth_lipschitz * sqrt_bp / k.ms_lipschitz, "epoch length")?;
    let batch = ceil_count(2.0 * epoch_batch as f64 / epoch_length as f64, "batch")?;
    let eta = sqrt_bp / (epoch_length as f64 * k.ms_lipschitz);
    let iterations = ceil_count(4.0 * k.gap_bound / (eta * eps2), "iteration count")?;
    Ok((GfmPlusConfig { eta, iterations, epoch_length, batch, epoch_batch, delta: k.delta }, *k))
}

/// GFM configuration reaching expected suboptimality `zeta` on a convex
/// problem with `dist(x0, X*) <= radius`:
///
/// ```text
/// delta = zeta / (4 L),  T = ceil(4 sigma^2 R^2 / zeta^2),  eta = R / (sigma sqrt(T))
/// ```
///
/// With this step size the averaged-regret bound is `R sigma / sqrt(T)`, which
/// the iteration count holds to `zeta / 2`; the `2 L delta` smoothing bias
/// takes the other half.
pub fn plan_gfm_convex(d: usize, lipschitz: f64, radius: f64, zeta: f64) -> Result<GfmConfig> {
    positive("radius", radius)?;
    positive("zeta", zeta)?;
    positive("Lipschitz constant", lipschitz)?;
    let delta = zeta / (4.0 * lipschitz);
    let k = derived_constants(d, lipschitz, delta, 0.0, 1.0)?;
    let iterations = ceil_count(4.0 * k.variance * radius * radius / (zeta * zeta), "iteration count")?;
    let eta = radius / (k.sigma() * (iterations as f64).sqrt());
    Ok(GfmConfig { eta, iterations, delta })
}

/// GFM configuration reaching an `epsilon`-stationary point of `f_delta` on a
/// nonconvex problem. From the one-step descent bound
/// `E|grad f_delta(x_out)|^2 <= Delta_delta / (eta T) + L_delta eta sigma^2 / 2`:
///
/// ```text
/// eta = eps^2 / (L_delta sigma^2),  T = ceil(2 Delta_delta / (eta eps^2))
/// ```
pub fn plan_gfm_nonconvex(d: usize, lipschitz: f64, gap: f64, delta: f64, epsilon: f64, c: f64) -> Result<GfmConfig> {
    positive("epsilon", epsilon)?;
    let k = derived_constants(d, lipschitz, delta, gap, c)?;
    let eps2 = epsilon * epsilon;
    let eta = eps2 / (k.smooth_lipschitz * k.variance);
    let iterations = ceil_count(2.0 * k.gap_bound / (eta * eps2), "iteration count")?;
    Ok(GfmConfig { eta, iterations, delta })
}

/// Two-phase plan: a convex GFM warm start targeting `zeta`, then a
/// stationarity phase planned with `Delta = zeta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarmStartPlan<P> {
    pub zeta: f64,
    /// Coefficient `a` of the `a zeta` term in the total complexity.
    pub a: f64,
    /// Coefficient `b` of the `b / zeta^2` term.
    pub b: f64,
    pub phase1: GfmConfig,
    pub phase2: P,
}

/// Minimizer of `2 a zeta + b / zeta^2`, i.e. `(b / a)^(1/3)`.
pub fn balance_zeta(a: f64, b: f64) -> f64 {
    (b / a).cbrt()
}

fn check_common(d: usize, lipschitz: f64, radius: f64, delta: f64, epsilon: f64) -> Result<()> {
    if d == 0 {
        return Err(Error::param("dimension must be positive"));
    }
    positive("Lipschitz constant", lipschitz)?;
    positive("radius", radius)?;
    positive("delta", delta)?;
    positive("epsilon", epsilon)
}

/// Warm-started GFM+ with `a = d^{3/2} L^3 / (delta eps^3)`, `b = d R^2 L^2`.
pub fn plan_ws_gfm_plus(
    d: usize,
    lipschitz: f64,
    radius: f64,
    delta: f64,
    epsilon: f64,
    c: f64,
) -> Result<WarmStartPlan<GfmPlusConfig>> {
    check_common(d, lipschitz, radius, delta, epsilon)?;
    let df = d as f64;
    let a = df.powf(1.5) * lipschitz.powi(3) / (delta * epsilon.powi(3));
    let b = df * radius * radius * lipschitz * lipschitz;
    let zeta = balance_zeta(a, b);
    let phase1 = plan_gfm_convex(d, lipschitz, radius, zeta)?;
    let phase2 = plan_gfm_plus(d, lipschitz, zeta, delta, epsilon, c)?;
    Ok(WarmStartPlan { zeta, a, b, phase1, phase2 })
}

/// Warm-started GFM with `a = d^{3/2} L^4 / (delta eps^4)`, `b = d R^2 L^2`;
/// the second phase uses [`plan_gfm_nonconvex`] with `Delta = zeta`.
pub fn plan_ws_gfm(
    d: usize,
    lipschitz: f64,
    radius: f64,
    delta: f64,
    epsilon: f64,
    c: f64,
) -> Result<WarmStartPlan<GfmConfig>> {
    check_common(d, lipschitz, radius, delta, epsilon)?;
    let df = d as f64;
    let a = df.powf(1.5) * lipschitz.powi(4) / (delta * epsilon.powi(4));
    let b = df * radius * radius * lipschitz * lipschitz;
    let zeta = balance_zeta(a, b);
    let phase1 = plan_gfm_convex(d, lipschitz, radius, zeta)?;
    let phase2 = plan_gfm_nonconvex(d, lipschitz, zeta, delta, epsilon, c)?;
    Ok(WarmStartPlan { zeta, a, b, phase1, phase2 })
}

/// Shorthand used by reports: `16 sqrt(2 pi) d L^2`.
pub fn variance_bound(d: usize, lipschitz: f64) -> f64 {
    second_moment_factor() * d as f64 * lipschitz * lipschitz
}
