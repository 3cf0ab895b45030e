//! Uniform randomized smoothing: two-point gradient estimators, the recursive
//! (variance-reduced) update, Monte-Carlo access to `f_delta` and its
//! gradient, and the derived constants that drive the planners.
//!
//! The smoothed surrogate is `f_delta(x) = E_u f(x + delta u)` with `u` uniform
//! on the unit ball. For `w` uniform on the unit sphere the two-point estimator
//!
//! ```text
//! g(x; w, xi) = d / (2 delta) * (F(x + delta w; xi) - F(x - delta w; xi)) * w
//! ```
//!
//! is unbiased for `grad f_delta(x)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, OracleError, Result};
use crate::oracle::{sample_ball, sample_sphere, IndexSample, StochasticOracle};
use crate::par;
use crate::rng::RandomStream;
use crate::vector::DenseVector;

/// `16 sqrt(2 pi)`: the second-moment bound is this factor times `d L^2`.
pub fn second_moment_factor() -> f64 {
    16.0 * (2.0 * PI).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingParams {
    pub delta: f64,
}

impl SmoothingParams {
    pub fn new(delta: f64) -> Result<Self> {
        check_delta(delta)?;
        Ok(Self { delta })
    }
}

pub(crate) fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("smoothing radius must be positive, got {delta}")))
    }
}

/// Pairs `(w_i, xi_i)` shared by every gradient evaluation of one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pairs: Vec<(DenseVector, IndexSample)>,
}

impl SampleSet {
    /// Draws `b` i.i.d. pairs. Slot `i` uses the substream `rng.derive(&[i])`,
    /// so the set is the same however it is materialized.
    pub fn draw<O: StochasticOracle + ?Sized>(oracle: &O, rng: &RandomStream, b: usize) -> Self {
        let d = oracle.dim();
        let pairs = (0..b as u64)
            .map(|i| {
                let mut s = rng.derive(&[i]);
                let w = sample_sphere(&mut s, d);
                let xi = oracle.sample_index(&mut s);
                (w, xi)
            })
            .collect();
        Self { pairs }
    }

    pub fn from_pairs(pairs: Vec<(DenseVector, IndexSample)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::param("sample set must be nonempty"));
        }
        if let Some((w, _)) = pairs.iter().find(|(w, _)| (w.norm() - 1.0).abs() > 1e-9) {
            return Err(Error::param(format!("direction has norm {}, expected 1", w.norm())));
        }
        Ok(Self { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(DenseVector, IndexSample)] {
        &self.pairs
    }
}

/// Scalar `d/(2 delta) * (F(x + delta w) - F(x - delta w))`.
fn two_point_coefficient<O: StochasticOracle + ?Sized>(
    oracle: &O,
    x: &[f64],
    w: &[f64],
    xi: IndexSample,
    delta: f64,
) -> Result<f64, OracleError> {
    let plus: Vec<f64> = x.iter().zip(w).map(|(a, b)| a + delta * b).collect();
    let minus: Vec<f64> = x.iter().zip(w).map(|(a, b)| a - delta * b).collect();
    let f_plus = oracle.eval(&plus, xi)?;
    let f_minus = oracle.eval(&minus, xi)?;
    Ok(x.len() as f64 / (2.0 * delta) * (f_plus - f_minus))
}

/// Single two-point estimate; exactly two oracle evaluations sharing `xi`.
pub fn zo_gradient<O: StochasticOracle + ?Sized>(
    oracle: &O,
    x: &[f64],
    w: &DenseVector,
    xi: IndexSample,
    delta: f64,
) -> Result<DenseVector, OracleError> {
    assert_eq!(x.len(), w.dim(), "dimension mismatch");
    let coef = two_point_coefficient(oracle, x, w, xi, delta)?;
    Ok(w.scaled(coef))
}

/// Mean of [`zo_gradient`] over the batch; exactly `2 b` evaluations.
///
/// Samples may be evaluated in parallel; the reduction always sums in slot
/// order.
pub fn minibatch_gradient<O: StochasticOracle + ?Sized>(
    oracle: &O,
    x: &[f64],
    set: &SampleSet,
    delta: f64,
) -> Result<DenseVector, OracleError> {
    let coefs = par::try_map(set.len(), |i| {
        let (w, xi) = &set.pairs[i];
        two_point_coefficient(oracle, x, w, *xi, delta)
    })?;
    let mut sum = DenseVector::zeros(x.len());
    for (coef, (w, _)) in coefs.iter().zip(&set.pairs) {
        sum.axpy(*coef, w);
    }
    sum.scale_mut(1.0 / set.len() as f64);
    Ok(sum)
}

/// `v_prev + (g(x_curr; S) - g(x_prev; S))` with one shared sample set;
/// exactly `4 b` evaluations.
///
/// The difference is formed first, so `x_curr == x_prev` returns `v_prev`
/// bit for bit.
pub fn recursive_update<O: StochasticOracle + ?Sized>(
    v_prev: &DenseVector,
    oracle: &O,
    x_curr: &[f64],
    x_prev: &[f64],
    set: &SampleSet,
    delta: f64,
) -> Result<DenseVector, OracleError> {
    let g_curr = minibatch_gradient(oracle, x_curr, set, delta)?;
    let g_prev = minibatch_gradient(oracle, x_prev, set, delta)?;
    Ok(v_prev.add(&g_curr.sub(&g_prev)))
}

fn check_samples(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::param(format!("need at least 2 Monte-Carlo samples, got {n}")));
    }
    Ok(())
}

/// Monte-Carlo mean and standard error of `F(x + delta u; xi)` with `u`
/// uniform on the unit ball. Sample `i` uses `rng.derive(&[i])`.
pub fn estimate_smoothed_value<O: StochasticOracle + ?Sized>(
    oracle: &O,
    x: &[f64],
    delta: f64,
    n_samples: usize,
    rng: &RandomStream,
) -> Result<(f64, f64)> {
    check_delta(delta)?;
    check_samples(n_samples)?;
    let d = x.len();
    let values = par::try_map(n_samples, |i| {
        let mut s = rng.derive(&[i as u64]);
        let u = sample_ball(&mut s, d);
        let xi = oracle.sample_index(&mut s);
        let point: Vec<f64> = x.iter().zip(u.iter()).map(|(a, b)| a + delta * b).collect();
        oracle.eval(&point, xi)
    })?;
    Ok(mean_and_stderr(&values))
}

/// Mean of `n_samples` independent two-point estimates and the scalar
/// standard error `sqrt(sum_j var_j / n)`.
pub fn estimate_smoothed_gradient<O: StochasticOracle + ?Sized>(
    oracle: &O,
    x: &[f64],
    delta: f64,
    n_samples: usize,
    rng: &RandomStream,
) -> Result<(DenseVector, f64)> {
    check_delta(delta)?;
    check_samples(n_samples)?;
    let d = x.len();
    let draws = par::try_map(n_samples, |i| {
        let mut s = rng.derive(&[i as u64]);
        let w = sample_sphere(&mut s, d);
        let xi = oracle.sample_index(&mut s);
        zo_gradient(oracle, x, &w, xi, delta)
    })?;
    Ok(vector_mean_and_stderr(&draws, d))
}

pub(crate) fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub(crate) fn vector_mean_and_stderr(draws: &[DenseVector], d: usize) -> (DenseVector, f64) {
    let n = draws.len() as f64;
    let mut mean = DenseVector::zeros(d);
    for g in draws {
        mean.axpy(1.0, g);
    }
    mean.scale_mut(1.0 / n);
    let total_var: f64 = draws.iter().map(|g| g.sub(&mean).norm_squared()).sum::<f64>() / (n - 1.0);
    (mean, (total_var / n).sqrt())
}

/// Constants of the smoothed problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub dim: usize,
    pub lipschitz: f64,
    pub delta: f64,
    pub gap: f64,
    pub smoothness_constant: f64,
    /// Gradient Lipschitz constant of `f_delta`: `c sqrt(d) L / delta`.
    pub smooth_lipschitz: f64,
    /// Mean-squared Lipschitz constant of the estimator: `d L / delta`.
    pub ms_lipschitz: f64,
    /// Estimator variance bound `16 sqrt(2 pi) d L^2`.
    pub variance: f64,
    /// Smoothed optimality gap bound `Delta + L delta`.
    pub gap_bound: f64,
}

impl DerivedConstants {
    pub fn sigma(&self) -> f64 {
        self.variance.sqrt()
    }
}

pub fn derived_constants(d: usize, lipschitz: f64, delta: f64, gap: f64, c: f64) -> Result<DerivedConstants> {
    if d == 0 {
        return Err(Error::param("dimension must be positive"));
    }
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(Error::param(format!("Lipschitz constant must be positive, got {lipschitz}")));
    }
    check_delta(delta)?;
    if !(gap >= 0.0 && gap.is_finite()) {
        return Err(Error::param(format!("optimality gap estimate must be nonnegative, got {gap}")));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::param(format!("smoothness constant must be positive, got {c}")));
    }
    let df = d as f64;
    Ok(DerivedConstants {
        dim: d,
        lipschitz,
        delta,
        gap,
        smoothness_constant: c,
        smooth_lipschitz: c * df.sqrt() * lipschitz / delta,
        ms_lipschitz: df * lipschitz / delta,
        variance: second_moment_factor() * df * lipschitz * lipschitz,
        gap_bound: gap + lipschitz * delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{make_counting, FnOracle};
    use approx::assert_relative_eq;

    fn linear(c: Vec<f64>) -> impl StochasticOracle {
        let l = c.iter().map(|a| a * a).sum::<f64>().sqrt();
        FnOracle::new(c.len(), l, move |x, _| x.iter().zip(&c).map(|(a, b)| a * b).sum())
    }

    #[test]
    fn constant_objective_gives_zero_gradient() {
        let f = FnOracle::new(3, 1.0, |_, _| 7.0);
        let w = DenseVector::from_vec(vec![0.0, 1.0, 0.0]);
        let g = zo_gradient(&f, &[1.0, 2.0, 3.0], &w, IndexSample(0), 0.5).unwrap();
        assert_eq!(g, DenseVector::zeros(3));
    }

    #[test]
    fn linear_objective_two_point_values() {
        let f = linear(vec![1.0, 0.0]);
        let e1 = DenseVector::from_vec(vec![1.0, 0.0]);
        let e2 = DenseVector::from_vec(vec![0.0, 1.0]);
        let g1 = zo_gradient(&f, &[0.3, -0.7], &e1, IndexSample(0), 0.1).unwrap();
        assert_relative_eq!(g1[0], 2.0, max_relative = 1e-12);
        assert_eq!(g1[1], 0.0);
        let g2 = zo_gradient(&f, &[0.3, -0.7], &e2, IndexSample(0), 0.1).unwrap();
        assert_eq!(g2, DenseVector::zeros(2));
    }

    #[test]
    fn zo_gradient_costs_two_calls() {
        let f = make_counting(linear(vec![1.0, 2.0]));
        let w = DenseVector::from_vec(vec![1.0, 0.0]);
        zo_gradient(&f, &[0.0, 0.0], &w, IndexSample(3), 0.1).unwrap();
        assert_eq!(f.calls(), 2);
    }

    #[test]
    fn batch_of_one_equals_single_estimate() {
        let f = FnOracle::new(3, 1.0, |x, xi| x.iter().map(|a| a.abs()).sum::<f64>() * (1.0 + (xi.0 % 3) as f64));
        let set = SampleSet::draw(&f, &RandomStream::from_seed(1), 1);
        let x = [0.2, -0.4, 1.0];
        let (w, xi) = &set.pairs()[0];
        assert_eq!(minibatch_gradient(&f, &x, &set, 0.05).unwrap(), zo_gradient(&f, &x, w, *xi, 0.05).unwrap());
    }

    #[test]
    fn batch_is_arithmetic_mean() {
        let f = linear(vec![1.0, 0.0]);
        let set = SampleSet::from_pairs(vec![
            (DenseVector::from_vec(vec![1.0, 0.0]), IndexSample(0)),
            (DenseVector::from_vec(vec![0.0, 1.0]), IndexSample(1)),
        ])
        .unwrap();
        let counted = make_counting(&f);
        let g = minibatch_gradient(&counted, &[0.0, 0.0], &set, 0.1).unwrap();
        assert_relative_eq!(g[0], 1.0, max_relative = 1e-12);
        assert_eq!(g[1], 0.0);
        assert_eq!(counted.calls(), 4);
    }

    #[test]
    fn empty_sample_set_is_rejected() {
        assert!(SampleSet::from_pairs(vec![]).is_err());
    }

    #[test]
    fn recursive_update_identity_when_points_coincide() {
        let f = FnOracle::new(4, 1.0, |x, xi| x.iter().map(|a| a.abs()).sum::<f64>() + xi.0 as f64 * 1e-3);
        let set = SampleSet::draw(&f, &RandomStream::from_seed(2), 5);
        let v = DenseVector::from_vec(vec![0.1, -3.3, 1e-7, 42.0]);
        let x = [0.5, 0.25, -1.0, 2.0];
        let counted = make_counting(&f);
        let out = recursive_update(&v, &counted, &x, &x, &set, 0.01).unwrap();
        assert_eq!(out, v);
        assert_eq!(counted.calls(), 20);
    }

    #[test]
    fn recursive_update_on_linear_keeps_previous_estimate() {
        let f = linear(vec![1.0, -2.0, 0.5]);
        let set = SampleSet::draw(&f, &RandomStream::from_seed(3), 4);
        let v = DenseVector::from_vec(vec![0.3, 0.2, 0.1]);
        let out = recursive_update(&v, &f, &[1.0, 2.0, 3.0], &[-4.0, 0.0, 9.0], &set, 0.1).unwrap();
        for (a, b) in out.iter().zip(v.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_objective_estimates_are_exact() {
        let f = FnOracle::new(2, 1.0, |_, _| 3.0);
        let rng = RandomStream::from_seed(4);
        assert_eq!(estimate_smoothed_value(&f, &[1.0, 1.0], 0.5, 100, &rng).unwrap(), (3.0, 0.0));
        let (g, se) = estimate_smoothed_gradient(&f, &[1.0, 1.0], 0.5, 100, &rng).unwrap();
        assert_eq!(g, DenseVector::zeros(2));
        assert_eq!(se, 0.0);
    }

    #[test]
    fn smoothed_abs_at_origin_is_one_half() {
        let f = FnOracle::new(1, 1.0, |x, _| x[0].abs());
        let (mean, se) = estimate_smoothed_value(&f, &[0.0], 1.0, 100_000, &RandomStream::from_seed(5)).unwrap();
        assert!((mean - 0.5).abs() <= 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn smoothing_of_linear_is_exact_in_the_limit() {
        let f = linear(vec![2.0, -1.0]);
        let x = [0.5, 1.5];
        let (mean, se) = estimate_smoothed_value(&f, &x, 0.3, 50_000, &RandomStream::from_seed(6)).unwrap();
        assert!((mean - (-0.5)).abs() <= 3.0 * se);
    }

    #[test]
    fn too_few_samples_is_a_parameter_error() {
        let f = linear(vec![1.0]);
        assert!(matches!(
            estimate_smoothed_value(&f, &[0.0], 1.0, 1, &RandomStream::from_seed(0)),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn derived_constants_worked_example() {
        let k = derived_constants(4, 1.0, 0.1, 1.0, 1.0).unwrap();
        assert_relative_eq!(k.ms_lipschitz, 40.0, max_relative = 1e-12);
        assert_relative_eq!(k.smooth_lipschitz, 20.0, max_relative = 1e-12);
        assert_relative_eq!(k.variance, 64.0 * (2.0 * std::f64::consts::PI).sqrt(), max_relative = 1e-12);
        assert_relative_eq!(k.variance, 160.4242, max_relative = 1e-6);
        assert_relative_eq!(k.gap_bound, 1.1, max_relative = 1e-12);

        let unit = derived_constants(1, 1.0, 1.0, 0.0, 1.0).unwrap();
        assert_eq!((unit.ms_lipschitz, unit.smooth_lipschitz, unit.gap_bound), (1.0, 1.0, 1.0));
    }

    #[test]
    fn doubling_delta_halves_lipschitz_constants() {
        let a = derived_constants(7, 2.0, 0.3, 0.5, 1.5).unwrap();
        let b = derived_constants(7, 2.0, 0.6, 0.5, 1.5).unwrap();
        assert_relative_eq!(b.ms_lipschitz, a.ms_lipschitz / 2.0, max_relative = 1e-12);
        assert_relative_eq!(b.smooth_lipschitz, a.smooth_lipschitz / 2.0, max_relative = 1e-12);
        assert_eq!(a.variance, b.variance);
    }

    #[test]
    fn derived_constants_reject_bad_input() {
        assert!(derived_constants(4, 0.0, 0.1, 1.0, 1.0).is_err());
        assert!(derived_constants(4, 1.0, -0.1, 1.0, 1.0).is_err());
        assert!(derived_constants(0, 1.0, 0.1, 1.0, 1.0).is_err());
    }
}
