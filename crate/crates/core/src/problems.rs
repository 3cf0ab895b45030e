//! Built-in stochastic objectives.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::SparseDataset;
use crate::error::{Error, OracleError, Result};
use crate::oracle::{IndexSample, StochasticOracle};
use crate::rng::RandomStream;
use crate::smoothing::{check_delta, zo_gradient};
use crate::vector::DenseVector;

/// Nonconvex penalized linear SVM:
/// `f(x) = (1/n) sum_i max(1 - b_i a_i^T x, 0) + lambda sum_j min(|x_j|, alpha)`.
///
/// The random index picks one row of the hinge term; the capped-l1 penalty is
/// deterministic and added to every component.
#[derive(Debug, Clone)]
pub struct CappedL1Svm {
    data: Arc<SparseDataset>,
    pub lambda: f64,
    pub alpha: f64,
    lipschitz: f64,
}

impl CappedL1Svm {
    pub const DEFAULT_ALPHA: f64 = 2.0;

    /// Default penalty: `lambda = 1e-5 / n`, `alpha = 2`.
    pub fn new(data: impl Into<Arc<SparseDataset>>) -> Result<Self> {
        let data = data.into();
        let lambda = 1e-5 / data.len().max(1) as f64;
        Self::with_params(data, lambda, Self::DEFAULT_ALPHA)
    }

    pub fn with_params(data: impl Into<Arc<SparseDataset>>, lambda: f64, alpha: f64) -> Result<Self> {
        let data = data.into();
        if data.is_empty() {
            return Err(Error::param("SVM dataset has no rows"));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) || !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::param(format!("invalid penalty lambda={lambda} alpha={alpha}")));
        }
        let mut svm = Self { data, lambda, alpha, lipschitz: 0.0 };
        svm.lipschitz = svm_lipschitz_bound(&svm);
        Ok(svm)
    }

    pub fn data(&self) -> &SparseDataset {
        &self.data
    }

    fn penalty(&self, x: &[f64]) -> f64 {
        self.lambda * x.iter().map(|v| v.abs().min(self.alpha)).sum::<f64>()
    }

    fn hinge(&self, x: &[f64], i: usize) -> f64 {
        let margin = self.data.labels()[i] * self.data.rows()[i].dot(x);
        (1.0 - margin).max(0.0)
    }

    /// Full objective `f(x)` averaged over every row.
    pub fn loss(&self, x: &[f64]) -> f64 {
        let n = self.data.len();
        (0..n).map(|i| self.hinge(x, i)).sum::<f64>() / n as f64 + self.penalty(x)
    }
}

/// Component `F(x; i)`: hinge loss of row `i` plus the penalty.
pub fn svm_component(model: &CappedL1Svm, x: &[f64], i: usize) -> Result<f64> {
    let n = model.data.len();
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, len: n });
    }
    Ok(model.hinge(x, i) + model.penalty(x))
}

/// `sqrt((1/n) sum_i (|a_i| + lambda sqrt(d))^2)`: component `i` is
/// `(|a_i| + lambda sqrt(d))`-Lipschitz.
pub fn svm_lipschitz_bound(model: &CappedL1Svm) -> f64 {
    let n = model.data.len();
    if n == 0 {
        return 0.0;
    }
    let reg = model.lambda * (model.data.dim() as f64).sqrt();
    let mean_sq = model.data.rows().iter().map(|r| (r.norm() + reg).powi(2)).sum::<f64>() / n as f64;
    mean_sq.sqrt()
}

impl StochasticOracle for CappedL1Svm {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn eval(&self, x: &[f64], xi: IndexSample) -> Result<f64, OracleError> {
        let i = (xi.0 % self.data.len() as u64) as usize;
        Ok(self.hinge(x, i) + self.penalty(x))
    }

    fn sample_index(&self, rng: &mut RandomStream) -> IndexSample {
        IndexSample(rng.below(self.data.len() as u64))
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn exact_value(&self, x: &[f64]) -> Option<f64> {
        Some(self.loss(x))
    }
}

/// `F(x; xi) = (L / sqrt(d)) |x|_1` for every `xi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledL1 {
    pub dim: usize,
    pub lipschitz: f64,
}

impl ScaledL1 {
    pub fn new(dim: usize, lipschitz: f64) -> Result<Self> {
        if dim == 0 || !(lipschitz > 0.0 && lipschitz.is_finite()) {
            return Err(Error::param(format!("scaled-l1 needs d >= 1 and L > 0, got d={dim} L={lipschitz}")));
        }
        Ok(Self { dim, lipschitz })
    }
}

pub fn scaled_l1_eval(p: &ScaledL1, x: &[f64]) -> f64 {
    p.lipschitz / (p.dim as f64).sqrt() * x.iter().map(|v| v.abs()).sum::<f64>()
}

impl StochasticOracle for ScaledL1 {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64], _xi: IndexSample) -> Result<f64, OracleError> {
        Ok(scaled_l1_eval(self, x))
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn exact_value(&self, x: &[f64]) -> Option<f64> {
        Some(scaled_l1_eval(self, x))
    }

    /// Known only where every coordinate is at least `delta` away from zero,
    /// where the objective is linear on the whole smoothing ball.
    fn smoothed_gradient(&self, x: &[f64], delta: f64) -> Option<DenseVector> {
        if x.iter().all(|v| v.abs() > delta) {
            let s = self.lipschitz / (self.dim as f64).sqrt();
            Some(x.iter().map(|v| s * v.signum()).collect())
        } else {
            None
        }
    }
}

/// Tightness fixture for the mean-squared Lipschitz constant of the
/// two-point estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct TightnessFixture {
    /// `delta * 1`
    pub x: DenseVector,
    /// `-delta * 1`
    pub y: DenseVector,
    /// `1 / sqrt(d)`
    pub w: DenseVector,
    /// Two-point estimate at `x`; equals `d L w` in exact arithmetic.
    pub g_x: DenseVector,
    /// Two-point estimate at `y`; equals `-d L w` in exact arithmetic.
    pub g_y: DenseVector,
    /// `M_delta |x - y| = 2 d^{3/2} L`.
    pub bound: f64,
}

/// Builds the fixture and evaluates the two-point formula on it directly
/// (without going through an oracle). Needs `d >= 2` so that every entry of
/// `x +- delta w` keeps its sign.
pub fn tightness_fixture(p: &ScaledL1, delta: f64) -> Result<TightnessFixture> {
    if p.dim < 2 {
        return Err(Error::FixtureDomain(format!("fixture needs d >= 2, got {}", p.dim)));
    }
    check_delta(delta)?;
    let d = p.dim;
    let x = DenseVector::filled(d, delta);
    let y = DenseVector::filled(d, -delta);
    let w = DenseVector::filled(d, 1.0 / (d as f64).sqrt());
    let two_point = |at: &DenseVector| {
        let plus: Vec<f64> = at.iter().zip(w.iter()).map(|(a, b)| a + delta * b).collect();
        let minus: Vec<f64> = at.iter().zip(w.iter()).map(|(a, b)| a - delta * b).collect();
        let coef = d as f64 / (2.0 * delta) * (scaled_l1_eval(p, &plus) - scaled_l1_eval(p, &minus));
        w.scaled(coef)
    };
    let g_x = two_point(&x);
    let g_y = two_point(&y);
    let bound = d as f64 * p.lipschitz / delta * x.distance(&y);
    Ok(TightnessFixture { x, y, w, g_x, g_y, bound })
}

/// Checks the fixture against the library estimator; used by tests and
/// the audit suite.
pub fn tightness_matches_estimator(p: &ScaledL1, delta: f64) -> Result<bool> {
    let fx = tightness_fixture(p, delta)?;
    let gx = zo_gradient(p, &fx.x, &fx.w, IndexSample(0), delta)?;
    let gy = zo_gradient(p, &fx.y, &fx.w, IndexSample(0), delta)?;
    Ok(gx == fx.g_x && gy == fx.g_y)
}

/// `f(x) = (L/2)|x| + (L/2)|x^T y / |y|^2 - 1/2|`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormPlusHalf {
    pub lipschitz: f64,
    anchor: DenseVector,
    anchor_norm_sq: f64,
}

impl NormPlusHalf {
    pub fn new(lipschitz: f64, anchor: DenseVector) -> Result<Self> {
        let anchor_norm_sq = anchor.norm_squared();
        if anchor_norm_sq.is_nan() || anchor_norm_sq <= 0.0 || lipschitz.is_nan() || lipschitz <= 0.0 {
            return Err(Error::param("norm-plus-half needs a nonzero anchor and L > 0"));
        }
        Ok(Self { lipschitz, anchor, anchor_norm_sq })
    }

    fn value(&self, x: &[f64]) -> f64 {
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let proj = x.iter().zip(self.anchor.iter()).map(|(a, b)| a * b).sum::<f64>() / self.anchor_norm_sq;
        0.5 * self.lipschitz * norm + 0.5 * self.lipschitz * (proj - 0.5).abs()
    }
}

impl StochasticOracle for NormPlusHalf {
    fn dim(&self) -> usize {
        self.anchor.dim()
    }

    fn eval(&self, x: &[f64], _xi: IndexSample) -> Result<f64, OracleError> {
        Ok(self.value(x))
    }

    /// `L` when `|y| >= 1`; the projection term is `L / (2|y|)`-Lipschitz, so
    /// shorter anchors inflate the constant.
    fn lipschitz(&self) -> f64 {
        0.5 * self.lipschitz * (1.0 + 1.0 / self.anchor_norm_sq.sqrt().min(1.0))
    }

    fn exact_value(&self, x: &[f64]) -> Option<f64> {
        Some(self.value(x))
    }
}

/// Deterministic `F(x) = c^T x`; `grad f_delta = c` for every `delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeLinear {
    pub c: DenseVector,
}

pub fn probe_linear(c: DenseVector) -> ProbeLinear {
    ProbeLinear { c }
}

impl StochasticOracle for ProbeLinear {
    fn dim(&self) -> usize {
        self.c.dim()
    }

    fn eval(&self, x: &[f64], _xi: IndexSample) -> Result<f64, OracleError> {
        Ok(self.c.iter().zip(x).map(|(a, b)| a * b).sum())
    }

    fn lipschitz(&self) -> f64 {
        self.c.norm()
    }

    fn exact_value(&self, x: &[f64]) -> Option<f64> {
        Some(self.c.iter().zip(x).map(|(a, b)| a * b).sum())
    }

    fn smoothed_gradient(&self, _x: &[f64], _delta: f64) -> Option<DenseVector> {
        Some(self.c.clone())
    }
}

/// Deterministic `F(x) = |x|^2 / 2`; `grad f_delta(x) = x`.
///
/// The objective is not globally Lipschitz; [`StochasticOracle::lipschitz`]
/// reports `radius`, its constant on the ball of that radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeQuadratic {
    pub dim: usize,
    pub radius: f64,
}

pub fn probe_quadratic(dim: usize) -> ProbeQuadratic {
    ProbeQuadratic { dim, radius: 1.0 }
}

impl StochasticOracle for ProbeQuadratic {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64], _xi: IndexSample) -> Result<f64, OracleError> {
        Ok(0.5 * x.iter().map(|v| v * v).sum::<f64>())
    }

    fn lipschitz(&self) -> f64 {
        self.radius
    }

    fn exact_value(&self, x: &[f64]) -> Option<f64> {
        Some(0.5 * x.iter().map(|v| v * v).sum::<f64>())
    }

    fn smoothed_gradient(&self, x: &[f64], _delta: f64) -> Option<DenseVector> {
        Some(DenseVector::from_vec(x.to_vec()))
    }
}

/// `F = value` everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constant {
    pub dim: usize,
    pub value: f64,
}

impl StochasticOracle for Constant {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, _x: &[f64], _xi: IndexSample) -> Result<f64, OracleError> {
        Ok(self.value)
    }

    fn lipschitz(&self) -> f64 {
        0.0
    }

    fn exact_value(&self, _x: &[f64]) -> Option<f64> {
        Some(self.value)
    }

    fn smoothed_gradient(&self, _x: &[f64], _delta: f64) -> Option<DenseVector> {
        Some(DenseVector::zeros(self.dim))
    }
}
