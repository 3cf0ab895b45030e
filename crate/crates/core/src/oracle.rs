//! Stochastic zeroth-order oracles, unit sphere/ball sampling and call
//! accounting.
//!
//! Every optimizer in this crate touches its objective only through
//! [`StochasticOracle::eval`], one evaluation of a component `F(x; xi)` per call.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, OracleError, Result};
use crate::rng::RandomStream;
use crate::vector::DenseVector;

/// Opaque random index `xi`. Each problem interprets it (a dataset row is
/// `xi mod n`, deterministic objectives ignore it).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IndexSample(pub u64);

/// Two-argument evaluator `F(x; xi)` with `f(x) = E_xi F(x; xi)`.
///
/// `eval` must be deterministic in `(x, xi)` and safe to call concurrently.
pub trait StochasticOracle: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[f64], xi: IndexSample) -> Result<f64, OracleError>;

    fn sample_index(&self, rng: &mut RandomStream) -> IndexSample {
        IndexSample(rand::RngCore::next_u64(rng))
    }

    /// Root-mean-square Lipschitz budget `L` with `E[L(xi)^2] <= L^2`.
    fn lipschitz(&self) -> f64;

    /// Closed-form `f(x)`, when the problem has one.
    fn exact_value(&self, _x: &[f64]) -> Option<f64> {
        None
    }

    /// Closed-form gradient of the uniformly smoothed objective, when known.
    fn smoothed_gradient(&self, _x: &[f64], _delta: f64) -> Option<DenseVector> {
        None
    }
}

macro_rules! forward_oracle {
    ($($ty:ty),*) => {$(
        impl<O: StochasticOracle + ?Sized> StochasticOracle for $ty {
            fn dim(&self) -> usize { (**self).dim() }
            fn eval(&self, x: &[f64], xi: IndexSample) -> Result<f64, OracleError> { (**self).eval(x, xi) }
            fn sample_index(&self, rng: &mut RandomStream) -> IndexSample { (**self).sample_index(rng) }
            fn lipschitz(&self) -> f64 { (**self).lipschitz() }
            fn exact_value(&self, x: &[f64]) -> Option<f64> { (**self).exact_value(x) }
            fn smoothed_gradient(&self, x: &[f64], delta: f64) -> Option<DenseVector> { (**self).smoothed_gradient(x, delta) }
        }
    )*};
}

forward_oracle!(&O, Box<O>, Arc<O>);

/// Counts every evaluation forwarded to the inner oracle.
pub struct CountingOracle<O> {
    inner: O,
    calls: AtomicU64,
}

impl<O: StochasticOracle> CountingOracle<O> {
    pub fn new(inner: O) -> Self {
        Self { inner, calls: AtomicU64::new(0) }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }

    pub fn into_inner(self) -> O {
        self.inner
    }
}

/// Wraps `oracle` in a call counter starting at zero.
pub fn make_counting<O: StochasticOracle>(oracle: O) -> CountingOracle<O> {
    CountingOracle::new(oracle)
}

impl<O: StochasticOracle> StochasticOracle for CountingOracle<O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval(&self, x: &[f64], xi: IndexSample) -> Result<f64, OracleError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.eval(x, xi)
    }

    fn sample_index(&self, rng: &mut RandomStream) -> IndexSample {
        self.inner.sample_index(rng)
    }

    fn lipschitz(&self) -> f64 {
        self.inner.lipschitz()
    }

    fn exact_value(&self, x: &[f64]) -> Option<f64> {
        self.inner.exact_value(x)
    }

    fn smoothed_gradient(&self, x: &[f64], delta: f64) -> Option<DenseVector> {
        self.inner.smoothed_gradient(x, delta)
    }
}

/// Oracle backed by a closure; `xi` draws are uniform 64-bit integers.
pub struct FnOracle<F> {
    dim: usize,
    lipschitz: f64,
    f: F,
}

impl<F> FnOracle<F>
where
    F: Fn(&[f64], IndexSample) -> f64 + Send + Sync,
{
    pub fn new(dim: usize, lipschitz: f64, f: F) -> Self {
        Self { dim, lipschitz, f }
    }
}

impl<F> StochasticOracle for FnOracle<F>
where
    F: Fn(&[f64], IndexSample) -> f64 + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64], xi: IndexSample) -> Result<f64, OracleError> {
        Ok((self.f)(x, xi))
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
}

/// Uniform draw from the unit sphere in `R^d`, by normalizing a standard
/// Gaussian vector. An all-zero Gaussian draw is redrawn.
pub fn sample_sphere(rng: &mut RandomStream, d: usize) -> DenseVector {
    assert!(d >= 1, "sphere dimension must be positive");
    loop {
        let mut w: DenseVector = (0..d).map(|_| rng.standard_normal()).collect();
        let norm = w.norm();
        if d == 1 && norm > 0.0 {
            w[0] = w[0].signum();
            return w;
        }
        if norm > 0.0 && norm.is_finite() {
            w.scale_mut(1.0 / norm);
            return w;
        }
    }
}

/// Uniform draw from the unit ball: `r^(1/d) * w` with `w` on the sphere and
/// `r` uniform on `[0, 1)`.
pub fn sample_ball(rng: &mut RandomStream, d: usize) -> DenseVector {
    let mut w = sample_sphere(rng, d);
    let r = rng.uniform().powf(1.0 / d as f64);
    w.scale_mut(r);
    w
}

/// Environment variable overriding the external oracle response timeout.
pub const TIMEOUT_ENV: &str = "GZOO_ORACLE_TIMEOUT_MS";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

struct ChildIo {
    child: Child,
    stdin: ChildStdin,
    responses: Receiver<std::io::Result<String>>,
    failed: Option<OracleError>,
}

/// Oracle evaluated by a child process over a line protocol.
///
/// Each evaluation writes `EVAL <xi> <x_1> ... <x_d>` and reads back one line
/// holding a single real. Numbers are written in shortest round-trip decimal
/// form. Requests are serialized; the child sees one request at a time.
///
/// Once the child exits, times out or writes garbage the oracle is poisoned
/// and every later call fails with the first error.
pub struct ExternalProcessOracle {
    command: String,
    dim: usize,
    lipschitz: f64,
    timeout: Duration,
    io: Mutex<ChildIo>,
}

impl ExternalProcessOracle {
    /// Launches `command` through `sh -c`. The timeout is read from
    /// [`TIMEOUT_ENV`] when set, else [`DEFAULT_TIMEOUT`].
    pub fn spawn(command: &str, dim: usize, lipschitz: f64) -> Result<Self> {
        let timeout = match std::env::var(TIMEOUT_ENV) {
            Ok(ms) => Duration::from_millis(
                ms.trim().parse().map_err(|_| Error::param(format!("{TIMEOUT_ENV}={ms:?} is not an integer")))?,
            ),
            Err(_) => DEFAULT_TIMEOUT,
        };
        Self::spawn_with_timeout(command, dim, lipschitz, timeout)
    }

    pub fn spawn_with_timeout(command: &str, dim: usize, lipschitz: f64, timeout: Duration) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("external oracle dimension must be positive"));
        }
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self {
            command: command.to_owned(),
            dim,
            lipschitz,
            timeout,
            io: Mutex::new(ChildIo { child, stdin, responses: rx, failed: None }),
        })
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    fn request(io: &mut ChildIo, line: &str, timeout: Duration) -> Result<f64, OracleError> {
        io.stdin
            .write_all(line.as_bytes())
            .and_then(|_| io.stdin.flush())
            .map_err(|e| OracleError::new(format!("writing to oracle process: {e}")))?;
        let raw = match io.responses.recv_timeout(timeout) {
            Ok(Ok(raw)) => raw,
            Ok(Err(e)) => return Err(OracleError::new(format!("reading from oracle process: {e}"))),
            Err(RecvTimeoutError::Timeout) => {
                return Err(OracleError::new(format!("no response within {} ms", timeout.as_millis())))
            }
            Err(RecvTimeoutError::Disconnected) => {
                let status = io.child.try_wait().ok().flatten();
                return Err(OracleError::new(match status {
                    Some(s) => format!("oracle process exited ({s})"),
                    None => "oracle process closed its output".to_owned(),
                }));
            }
        };
        raw.trim().parse::<f64>().map_err(|_| OracleError::with_response("malformed oracle response", raw.clone()))
    }
}

impl StochasticOracle for ExternalProcessOracle {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64], xi: IndexSample) -> Result<f64, OracleError> {
        let mut line = format!("EVAL {}", xi.0);
        for v in x {
            line.push(' ');
            line.push_str(&format!("{v:?}"));
        }
        line.push('\n');
        let mut io = self.io.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(err) = &io.failed {
            return Err(err.clone());
        }
        let result = Self::request(&mut io, &line, self.timeout);
        if let Err(err) = &result {
            io.failed = Some(err.clone());
            let _ = io.child.kill();
        }
        result
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
}

impl Drop for ExternalProcessOracle {
    fn drop(&mut self) {
        let io = self.io.get_mut().unwrap_or_else(|p| p.into_inner());
        let _ = io.child.kill();
        let _ = io.child.wait();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_in_one_dimension_is_plus_minus_one() {
        let mut rng = RandomStream::from_seed(5);
        for _ in 0..100 {
            let w = sample_sphere(&mut rng, 1);
            assert!(w[0] == 1.0 || w[0] == -1.0);
        }
    }

    #[test]
    fn sphere_draws_have_unit_norm() {
        let mut rng = RandomStream::from_seed(6);
        for d in [2, 3, 17, 100] {
            for _ in 0..100 {
                assert!((sample_sphere(&mut rng, d).norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ball_draws_stay_inside() {
        let mut rng = RandomStream::from_seed(8);
        for d in [1, 2, 5] {
            for _ in 0..1000 {
                assert!(sample_ball(&mut rng, d).norm() <= 1.0);
            }
        }
    }

    #[test]
    fn one_dimensional_ball_is_uniform_interval() {
        let mut rng = RandomStream::from_seed(10);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_ball(&mut rng, 1)[0]).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let second = draws.iter().map(|u| u * u).sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 * (1.0f64 / 3.0 / n as f64).sqrt());
        assert!((second - 1.0 / 3.0).abs() < 0.01);
    }

    #[test]
    fn counting_starts_at_zero_and_counts_each_eval() {
        let counted = make_counting(FnOracle::new(2, 1.0, |_, _| 0.0));
        assert_eq!(counted.calls(), 0);
        for _ in 0..5 {
            counted.eval(&[0.0, 0.0], IndexSample(0)).unwrap();
        }
        assert_eq!(counted.calls(), 5);
    }

    #[test]
    fn counting_is_exact_under_concurrency() {
        let counted = make_counting(FnOracle::new(1, 1.0, |x, _| x[0]));
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| {
                    for _ in 0..1000 {
                        counted.eval(&[1.0], IndexSample(0)).unwrap();
                    }
                });
            }
        });
        assert_eq!(counted.calls(), 8000);
    }
}
