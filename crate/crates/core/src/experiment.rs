//! Batch experiment driver behind the `gzoo` command-line tool.
//!
//! Each `cmd_*` function takes fully merged [`Settings`], writes its primary
//! output and diagnostics to the given writers, and returns the process exit
//! code.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use crate::algorithms::{
    plan_gfm_nonconvex, plan_gfm_plus, plan_ws_gfm, plan_ws_gfm_plus, run_gfm_plus_with, run_gfm_with,
    run_ws_gfm_plus_with, run_ws_gfm_with, CheckpointMetric, GfmConfig, GfmPlusConfig, IterationRecord, RunOptions,
    RunResult,
};
use crate::data::{generate_synthetic, load_libsvm, ParseOptions};
use crate::diagnostics::{audit_suite, compare_runs, format_calls, goldstein_residual, Target};
use crate::error::{Error, OracleError, Result};
use crate::oracle::{ExternalProcessOracle, IndexSample, StochasticOracle};
use crate::problems::{probe_linear, CappedL1Svm, Constant, ProbeQuadratic, ScaledL1};
use crate::rng::{purpose, RandomStream};
use crate::vector::DenseVector;

pub const EXIT_OK: i32 = 0;
pub const EXIT_AUDIT_FAILED: i32 = 1;
pub const EXIT_BAD_PARAMS: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;
pub const EXIT_ORACLE: i32 = 4;

pub const TRACE_HEADER: &str = "t,phase,f_estimate,v_norm,calls,wall_ns";

/// Samples behind each trace `f_estimate`.
pub const TRACE_SAMPLES: usize = 256;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Divergence { .. } => EXIT_DIVERGENCE,
        Error::Oracle(_) | Error::RunOracle { .. } => EXIT_ORACLE,
        _ => EXIT_BAD_PARAMS,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Gfm,
    GfmPlus,
    WsGfm,
    WsGfmPlus,
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gfm" => Ok(Self::Gfm),
            "gfm-plus" => Ok(Self::GfmPlus),
            "ws-gfm" => Ok(Self::WsGfm),
            "ws-gfm-plus" => Ok(Self::WsGfmPlus),
            _ => Err(Error::param(format!("unknown algorithm '{s}' (gfm, gfm-plus, ws-gfm, ws-gfm-plus)"))),
        }
    }
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Gfm => "gfm",
            Self::GfmPlus => "gfm-plus",
            Self::WsGfm => "ws-gfm",
            Self::WsGfmPlus => "ws-gfm-plus",
        }
    }
}

/// Every setting accepted on the command line or in a config file. `None`
/// means "not given"; defaults are applied when the settings are used.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub problem: Option<String>,
    pub algo: Option<String>,
    pub delta: Option<f64>,
    pub epsilon: Option<f64>,
    /// A number, or `auto` for the problem's own constant.
    pub lipschitz: Option<String>,
    pub delta_f: Option<f64>,
    pub c: Option<f64>,
    pub eta: Option<f64>,
    pub t: Option<usize>,
    pub m: Option<usize>,
    pub b: Option<usize>,
    pub b_prime: Option<usize>,
    pub warm_eta: Option<f64>,
    pub warm_t: Option<usize>,
    /// Warm-phase delta; defaults to `delta`.
    pub warm_delta: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub checkpoint_every: Option<usize>,
    pub samples: Option<usize>,
    /// Comma-separated coordinates, or one value repeated in every coordinate.
    pub x0: Option<String>,
    pub radius: Option<f64>,
    pub n_seeds: Option<usize>,
    pub target: Option<f64>,
    pub gfm_eta: Option<f64>,
}

/// Keys written by `plan` for information only; accepted and ignored when a
/// plan is read back as a config file.
const INFO_KEYS: &[&str] = &["dim", "lipschitz-used", "zeta", "predicted-calls", "order-level-calls"];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::param(format!("invalid value for {key}: '{value}'")))
}

impl Settings {
    /// Fills every unset field from `fallback`.
    pub fn or(self, fallback: Settings) -> Settings {
        macro_rules! pick {
            ($($f:ident),*) => { Settings { $($f: self.$f.or(fallback.$f)),* } };
        }
        pick!(
            problem,
            algo,
            delta,
            epsilon,
            lipschitz,
            delta_f,
            c,
            eta,
            t,
            m,
            b,
            b_prime,
            warm_eta,
            warm_t,
            warm_delta,
            seed,
            out,
            checkpoint_every,
            samples,
            x0,
            radius,
            n_seeds,
            target,
            gfm_eta
        )
    }

    /// Parses flat `key = value` text. Keys are flag names without the
    /// leading dashes; `#` starts a comment.
    pub fn from_config_text(text: &str) -> Result<Settings> {
        let mut s = Settings::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::param(format!("config line {}: expected key = value", n + 1)))?;
            let (key, value) = (key.trim(), value.trim().to_owned());
            match key {
                "problem" => s.problem = Some(value),
                "algo" => s.algo = Some(value),
                "delta" => s.delta = Some(parse_value(key, &value)?),
                "epsilon" => s.epsilon = Some(parse_value(key, &value)?),
                "lipschitz" => s.lipschitz = Some(value),
                "delta-f" => s.delta_f = Some(parse_value(key, &value)?),
                "c" => s.c = Some(parse_value(key, &value)?),
                "eta" => s.eta = Some(parse_value(key, &value)?),
                "T" => s.t = Some(parse_value(key, &value)?),
                "m" => s.m = Some(parse_value(key, &value)?),
                "b" => s.b = Some(parse_value(key, &value)?),
                "b-prime" => s.b_prime = Some(parse_value(key, &value)?),
                "warm-eta" => s.warm_eta = Some(parse_value(key, &value)?),
                "warm-T" => s.warm_t = Some(parse_value(key, &value)?),
                "warm-delta" => s.warm_delta = Some(parse_value(key, &value)?),
                "seed" => s.seed = Some(parse_value(key, &value)?),
                "out" => s.out = Some(PathBuf::from(value)),
                "checkpoint-every" => s.checkpoint_every = Some(parse_value(key, &value)?),
                "samples" => s.samples = Some(parse_value(key, &value)?),
                "x0" => s.x0 = Some(value),
                "radius" => s.radius = Some(parse_value(key, &value)?),
                "n-seeds" => s.n_seeds = Some(parse_value(key, &value)?),
                "target" => s.target = Some(parse_value(key, &value)?),
                "gfm-eta" => s.gfm_eta = Some(parse_value(key, &value)?),
                k if INFO_KEYS.contains(&k) => {}
                k => return Err(Error::param(format!("config line {}: unknown key '{k}'", n + 1))),
            }
        }
        Ok(s)
    }

    pub fn load_config(path: &std::path::Path) -> Result<Settings> {
        Self::from_config_text(&fs::read_to_string(path)?)
    }

    fn algorithm(&self) -> Result<Algorithm> {
        self.algo.as_deref().unwrap_or("gfm-plus").parse()
    }

    fn require_delta(&self) -> Result<f64> {
        match self.delta {
            Some(d) if d > 0.0 && d.is_finite() => Ok(d),
            Some(d) => Err(Error::param(format!("--delta must be positive, got {d}"))),
            None => Err(Error::param("--delta is required")),
        }
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn samples(&self) -> usize {
        self.samples.unwrap_or(10_000)
    }
}

/// A problem built from its textual description.
pub struct Problem {
    pub oracle: Box<dyn StochasticOracle>,
    /// Known lower bound on `f`, used to default the initial gap.
    pub lower_bound: Option<f64>,
    /// Known minimizer, used to default the warm-start radius.
    pub minimizer: Option<DenseVector>,
}

/// Overrides the Lipschitz constant an oracle reports.
struct Declared {
    inner: Box<dyn StochasticOracle>,
    lipschitz: f64,
}

impl StochasticOracle for Declared {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval(&self, x: &[f64], xi: IndexSample) -> Result<f64, OracleError> {
        self.inner.eval(x, xi)
    }

    fn sample_index(&self, rng: &mut RandomStream) -> IndexSample {
        self.inner.sample_index(rng)
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn exact_value(&self, x: &[f64]) -> Option<f64> {
        self.inner.exact_value(x)
    }

    fn smoothed_gradient(&self, x: &[f64], delta: f64) -> Option<DenseVector> {
        self.inner.smoothed_gradient(x, delta)
    }
}

fn declared_lipschitz(s: &Settings) -> Result<Option<f64>> {
    match s.lipschitz.as_deref() {
        None | Some("auto") => Ok(None),
        Some(v) => {
            let l: f64 = parse_value("--lipschitz", v)?;
            if l > 0.0 && l.is_finite() {
                Ok(Some(l))
            } else {
                Err(Error::param(format!("--lipschitz must be positive or 'auto', got {v}")))
            }
        }
    }
}

fn parse_vector(text: &str, dim: Option<usize>) -> Result<DenseVector> {
    let parts: Vec<f64> =
        text.split(',').map(|p| parse_value::<f64>("vector entry", p.trim())).collect::<Result<_>>()?;
    match (parts.len(), dim) {
        (1, Some(d)) => Ok(DenseVector::filled(d, parts[0])),
        (n, Some(d)) if n != d => Err(Error::param(format!("vector has {n} entries, problem dimension is {d}"))),
        _ => Ok(DenseVector::from_vec(parts)),
    }
}

fn arg<T: FromStr>(words: &[&str], i: usize, what: &str) -> Result<T> {
    let w = words.get(i).ok_or_else(|| Error::param(format!("problem description is missing {what}")))?;
    parse_value(what, w)
}

fn opt_arg<T: FromStr>(words: &[&str], i: usize, what: &str, default: T) -> Result<T> {
    if words.len() > i {
        arg(words, i, what)
    } else {
        Ok(default)
    }
}

/// Builds the oracle described by `--problem`:
///
/// ```text
/// svm <path>                       LIBSVM file (.gz accepted)
/// svm-synthetic <n> <d> [data-seed]
/// scaled-l1 <d> [L]
/// probe-linear [c1,c2,...]         default 1,0
/// probe-quadratic [d]              default 2; --radius sets its Lipschitz radius
/// constant <d> [value]
/// external <command...>            dimension from --x0, L from --lipschitz
/// ```
///
/// A numeric `--lipschitz` replaces the constant the problem reports.
pub fn build_problem(s: &Settings) -> Result<Problem> {
    let desc = s.problem.as_deref().ok_or_else(|| Error::param("--problem is required"))?;
    let words: Vec<&str> = desc.split_whitespace().collect();
    let kind = *words.first().ok_or_else(|| Error::param("--problem is empty"))?;
    let declared = declared_lipschitz(s)?;
    let mut problem = match kind {
        "svm" => {
            let path = desc.trim_start()["svm".len()..].trim();
            if path.is_empty() {
                return Err(Error::param("svm needs a dataset path"));
            }
            let (data, _) = load_libsvm(path, ParseOptions::default())?;
            Problem { oracle: Box::new(CappedL1Svm::new(data)?), lower_bound: Some(0.0), minimizer: None }
        }
        "svm-synthetic" => {
            let n: usize = arg(&words, 1, "row count")?;
            let d: usize = arg(&words, 2, "dimension")?;
            let data_seed: u64 = opt_arg(&words, 3, "data seed", 0)?;
            let rng = RandomStream::from_seed(data_seed).derive(&[purpose::DATA]);
            let data = generate_synthetic(n, d, 0.1, 0.05, &rng)?;
            Problem { oracle: Box::new(CappedL1Svm::new(data)?), lower_bound: Some(0.0), minimizer: None }
        }
        "scaled-l1" => {
            let d: usize = arg(&words, 1, "dimension")?;
            let l: f64 = opt_arg(&words, 2, "Lipschitz constant", 1.0)?;
            Problem {
                oracle: Box::new(ScaledL1::new(d, l)?),
                lower_bound: Some(0.0),
                minimizer: Some(DenseVector::zeros(d)),
            }
        }
        "probe-linear" => {
            let c = match words.get(1) {
                Some(text) => parse_vector(text, None)?,
                None => DenseVector::from_vec(vec![1.0, 0.0]),
            };
            Problem { oracle: Box::new(probe_linear(c)), lower_bound: None, minimizer: None }
        }
        "probe-quadratic" => {
            let d: usize = opt_arg(&words, 1, "dimension", 2)?;
            let radius = s.radius.unwrap_or(1.0);
            if d == 0 || radius.is_nan() || radius <= 0.0 {
                return Err(Error::param("probe-quadratic needs d >= 1 and a positive radius"));
            }
            Problem {
                oracle: Box::new(ProbeQuadratic { dim: d, radius }),
                lower_bound: Some(0.0),
                minimizer: Some(DenseVector::zeros(d)),
            }
        }
        "constant" => {
            let d: usize = arg(&words, 1, "dimension")?;
            let value: f64 = opt_arg(&words, 2, "value", 0.0)?;
            if d == 0 {
                return Err(Error::param("constant needs d >= 1"));
            }
            Problem { oracle: Box::new(Constant { dim: d, value }), lower_bound: Some(value), minimizer: None }
        }
        "external" => {
            let command = desc.trim_start()["external".len()..].trim();
            if command.is_empty() {
                return Err(Error::param("external needs a command"));
            }
            let x0 = s.x0.as_deref().ok_or_else(|| Error::param("external problems need --x0 to fix the dimension"))?;
            let dim = parse_vector(x0, None)?.dim();
            let l = declared.ok_or_else(|| Error::param("external problems need a numeric --lipschitz"))?;
            Problem {
                oracle: Box::new(ExternalProcessOracle::spawn(command, dim, l)?),
                lower_bound: None,
                minimizer: None,
            }
        }
        other => return Err(Error::param(format!("unknown problem kind '{other}'"))),
    };
    if let Some(l) = declared {
        problem.oracle = Box::new(Declared { inner: problem.oracle, lipschitz: l });
    }
    Ok(problem)
}

/// `--x0`, defaulting to the origin.
pub fn initial_point(s: &Settings, dim: usize) -> Result<DenseVector> {
    match s.x0.as_deref() {
        Some(text) => parse_vector(text, Some(dim)),
        None => Ok(DenseVector::zeros(dim)),
    }
}

/// A runnable configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Plan {
    Gfm(GfmConfig),
    GfmPlus(GfmPlusConfig),
    WsGfm { warm: GfmConfig, main: GfmConfig, zeta: Option<f64> },
    WsGfmPlus { warm: GfmConfig, main: GfmPlusConfig, zeta: Option<f64> },
}

impl Plan {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            Plan::Gfm(_) => Algorithm::Gfm,
            Plan::GfmPlus(_) => Algorithm::GfmPlus,
            Plan::WsGfm { .. } => Algorithm::WsGfm,
            Plan::WsGfmPlus { .. } => Algorithm::WsGfmPlus,
        }
    }

    /// Exact evaluation count of a full run, checkpoints excluded.
    pub fn oracle_calls(&self) -> u64 {
        match self {
            Plan::Gfm(c) => c.oracle_calls(),
            Plan::GfmPlus(c) => c.oracle_calls(),
            Plan::WsGfm { warm, main, .. } => warm.oracle_calls() + main.oracle_calls(),
            Plan::WsGfmPlus { warm, main, .. } => warm.oracle_calls() + main.oracle_calls(),
        }
    }

    /// `T (ceil(b'/m) + 2b)` for the GFM+ part, exact counts elsewhere.
    pub fn order_level_calls(&self) -> u64 {
        match self {
            Plan::Gfm(c) => c.oracle_calls(),
            Plan::GfmPlus(c) => c.order_level_calls(),
            Plan::WsGfm { warm, main, .. } => warm.oracle_calls() + main.oracle_calls(),
            Plan::WsGfmPlus { warm, main, .. } => warm.oracle_calls() + main.order_level_calls(),
        }
    }

    /// Delta of the final phase.
    pub fn delta(&self) -> f64 {
        match self {
            Plan::Gfm(c) | Plan::WsGfm { main: c, .. } => c.delta,
            Plan::GfmPlus(c) | Plan::WsGfmPlus { main: c, .. } => c.delta,
        }
    }

    pub fn iterations(&self) -> usize {
        match self {
            Plan::Gfm(c) | Plan::WsGfm { main: c, .. } => c.iterations,
            Plan::GfmPlus(c) | Plan::WsGfmPlus { main: c, .. } => c.iterations,
        }
    }

    pub fn run<O: StochasticOracle + ?Sized>(
        &self,
        oracle: &O,
        x0: &DenseVector,
        rng: &RandomStream,
        opts: &RunOptions,
    ) -> Result<RunResult> {
        match self {
            Plan::Gfm(c) => run_gfm_with(oracle, x0, c, rng, opts),
            Plan::GfmPlus(c) => run_gfm_plus_with(oracle, x0, c, rng, opts),
            Plan::WsGfm { warm, main, .. } => run_ws_gfm_with(oracle, x0, warm, main, rng, opts),
            Plan::WsGfmPlus { warm, main, .. } => run_ws_gfm_plus_with(oracle, x0, warm, main, rng, opts),
        }
    }

    /// Config-file text that reproduces this plan.
    pub fn to_config_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "algo = {}", self.algorithm().as_str());
        match self {
            Plan::Gfm(c) => write_gfm(&mut out, c),
            Plan::GfmPlus(c) => write_gfm_plus(&mut out, c),
            Plan::WsGfm { warm, main, zeta } => {
                write_warm(&mut out, warm, *zeta);
                write_gfm(&mut out, main);
            }
            Plan::WsGfmPlus { warm, main, zeta } => {
                write_warm(&mut out, warm, *zeta);
                write_gfm_plus(&mut out, main);
            }
        }
        let _ = writeln!(out, "predicted-calls = {}", self.oracle_calls());
        let _ = writeln!(out, "order-level-calls = {}", self.order_level_calls());
        out
    }
}

fn write_gfm(out: &mut String, c: &GfmConfig) {
    let _ = writeln!(out, "delta = {}\neta = {}\nT = {}", c.delta, c.eta, c.iterations);
}

fn write_gfm_plus(out: &mut String, c: &GfmPlusConfig) {
    let _ = writeln!(
        out,
        "delta = {}\neta = {}\nT = {}\nm = {}\nb = {}\nb-prime = {}",
        c.delta, c.eta, c.iterations, c.epoch_length, c.batch, c.epoch_batch
    );
}

fn write_warm(out: &mut String, c: &GfmConfig, zeta: Option<f64>) {
    if let Some(z) = zeta {
        let _ = writeln!(out, "zeta = {z}");
    }
    let _ = writeln!(out, "warm-delta = {}\nwarm-eta = {}\nwarm-T = {}", c.delta, c.eta, c.iterations);
}

fn need<T>(v: Option<T>, flag: &str, algo: Algorithm) -> Result<T> {
    v.ok_or_else(|| Error::param(format!("explicit {} configuration needs {flag}", algo.as_str())))
}

fn explicit_plan(s: &Settings, algo: Algorithm, delta: f64) -> Result<Plan> {
    let eta = need(s.eta, "--eta", algo)?;
    let t = need(s.t, "--T", algo)?;
    let gfm = GfmConfig { eta, iterations: t, delta };
    let plus = || -> Result<GfmPlusConfig> {
        Ok(GfmPlusConfig {
            eta,
            iterations: t,
            epoch_length: need(s.m, "--m", algo)?,
            batch: need(s.b, "--b", algo)?,
            epoch_batch: need(s.b_prime, "--b-prime", algo)?,
            delta,
        })
    };
    let warm = || -> Result<GfmConfig> {
        Ok(GfmConfig {
            eta: need(s.warm_eta, "--warm-eta", algo)?,
            iterations: need(s.warm_t, "--warm-T", algo)?,
            delta: s.warm_delta.unwrap_or(delta),
        })
    };
    let plan = match algo {
        Algorithm::Gfm => Plan::Gfm(gfm),
        Algorithm::GfmPlus => Plan::GfmPlus(plus()?),
        Algorithm::WsGfm => Plan::WsGfm { warm: warm()?, main: gfm, zeta: None },
        Algorithm::WsGfmPlus => Plan::WsGfmPlus { warm: warm()?, main: plus()?, zeta: None },
    };
    validate_plan(&plan)?;
    Ok(plan)
}

fn validate_plan(plan: &Plan) -> Result<()> {
    match plan {
        Plan::Gfm(c) => c.validate(),
        Plan::GfmPlus(c) => c.validate(),
        Plan::WsGfm { warm, main, .. } => {
            if warm.iterations > 0 {
                warm.validate()?;
            }
            main.validate()
        }
        Plan::WsGfmPlus { warm, main, .. } => {
            if warm.iterations > 0 {
                warm.validate()?;
            }
            main.validate()
        }
    }
}

/// Resolves the configuration: explicit when `--eta` or `--T` is given,
/// otherwise planned from the problem constants.
pub fn resolve_plan(s: &Settings, problem: &Problem, x0: &DenseVector) -> Result<Plan> {
    let algo = s.algorithm()?;
    let delta = s.require_delta()?;
    if s.eta.is_some() || s.t.is_some() {
        return explicit_plan(s, algo, delta);
    }
    let oracle = &problem.oracle;
    let d = oracle.dim();
    let l = oracle.lipschitz();
    let c = s.c.unwrap_or(1.0);
    let epsilon = match s.epsilon {
        Some(e) if e > 0.0 && e.is_finite() => e,
        Some(e) => return Err(Error::param(format!("--epsilon must be positive, got {e}"))),
        None => return Err(Error::param("automatic planning needs --epsilon")),
    };
    let gap = || -> Result<f64> {
        if let Some(g) = s.delta_f {
            return Ok(g);
        }
        match (oracle.exact_value(x0), problem.lower_bound) {
            (Some(f0), Some(lb)) => Ok(f0 - lb),
            _ => Err(Error::param("automatic planning needs --delta-f for this problem")),
        }
    };
    // On probe-quadratic, --radius is the Lipschitz radius, not dist(x0, X*).
    let radius = || -> Result<f64> {
        if let Some(r) = s.radius.filter(|_| !s.problem.as_deref().unwrap_or("").starts_with("probe-quadratic")) {
            return Ok(r);
        }
        match &problem.minimizer {
            Some(xs) => Ok(x0.distance(xs)),
            None => Err(Error::param("warm-start planning needs --radius for this problem")),
        }
    };
    Ok(match algo {
        Algorithm::Gfm => Plan::Gfm(plan_gfm_nonconvex(d, l, gap()?, delta, epsilon, c)?),
        Algorithm::GfmPlus => Plan::GfmPlus(plan_gfm_plus(d, l, gap()?, delta, epsilon, c)?),
        Algorithm::WsGfm => {
            let p = plan_ws_gfm(d, l, radius()?, delta, epsilon, c)?;
            Plan::WsGfm { warm: p.phase1, main: p.phase2, zeta: Some(p.zeta) }
        }
        Algorithm::WsGfmPlus => {
            let p = plan_ws_gfm_plus(d, l, radius()?, delta, epsilon, c)?;
            Plan::WsGfmPlus { warm: p.phase1, main: p.phase2, zeta: Some(p.zeta) }
        }
    })
}

fn report(err: &mut dyn Write, e: &Error) -> i32 {
    let _ = writeln!(err, "error: {e}");
    exit_code(e)
}

/// Prints the resolved configuration as config-file text, including the
/// exact predicted call count and the order-level count.
pub fn cmd_plan(s: &Settings, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = (|| -> Result<String> {
        let problem = build_problem(s)?;
        let x0 = initial_point(s, problem.oracle.dim())?;
        let plan = resolve_plan(s, &problem, &x0)?;
        let mut text = format!("dim = {}\nlipschitz-used = {}\n", problem.oracle.dim(), problem.oracle.lipschitz());
        text.push_str(&plan.to_config_text());
        Ok(text)
    })();
    match result {
        Ok(text) => {
            let _ = out.write_all(text.as_bytes());
            EXIT_OK
        }
        Err(e) => report(err, &e),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Trace CSV: the header, every checkpoint row, and a terminal row at
/// `t = T` when `final_estimate` is given.
pub fn trace_csv(trace: &[IterationRecord], terminal: Option<(usize, f64, u64, u64)>) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in trace.iter().filter(|r| r.f_estimate.is_some()) {
        let v = if r.v_norm.is_nan() { String::new() } else { r.v_norm.to_string() };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.t,
            r.phase.as_str(),
            fmt_opt(r.f_estimate),
            v,
            r.oracle_calls_cumulative,
            r.wall_ns
        );
    }
    if let Some((t, f, calls, wall)) = terminal {
        let _ = writeln!(out, "{t},main,{f},,{calls},{wall}");
    }
    out
}

fn write_output(s: &Settings, out: &mut dyn Write, text: &str) -> Result<()> {
    match &s.out {
        Some(path) => fs::write(path, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Runs one experiment. The trace goes to `--out` (or `out` when unset); the
/// summary line goes to `out` when a file was written and to `err` otherwise.
pub fn cmd_run(s: &Settings, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let started = Instant::now();
    let setup = (|| -> Result<_> {
        let problem = build_problem(s)?;
        let x0 = initial_point(s, problem.oracle.dim())?;
        let plan = resolve_plan(s, &problem, &x0)?;
        let every = s.checkpoint_every.unwrap_or(10);
        Ok((problem, x0, plan, every))
    })();
    let (problem, x0, plan, every) = match setup {
        Ok(v) => v,
        Err(e) => return report(err, &e),
    };
    let rng = RandomStream::from_seed(s.seed());
    let opts = RunOptions::checkpoints(every, CheckpointMetric::SmoothedValue { samples: TRACE_SAMPLES });
    let run = match plan.run(&*problem.oracle, &x0, &rng, &opts) {
        Ok(r) => r,
        Err(e) => {
            if let Some(trace) = e.partial_trace() {
                if let Err(io) = write_output(s, out, &trace_csv(trace, None)) {
                    let _ = writeln!(err, "error: writing partial trace: {io}");
                }
            }
            return report(err, &e);
        }
    };
    let terminal =
        run.final_estimate.map(|f| (run.iterations, f, run.total_oracle_calls, started.elapsed().as_nanos() as u64));
    if let Err(e) = write_output(s, out, &trace_csv(&run.trace, terminal)) {
        return report(err, &e);
    }
    let residual =
        goldstein_residual(&*problem.oracle, &run.x_out, plan.delta(), s.samples(), &rng.derive(&[purpose::AUDIT]));
    let (res, se) = match residual {
        Ok(v) => v,
        Err(e) => return report(err, &e),
    };
    let line = format!(
        "algo={} total_calls={} predicted_calls={} residual={} residual_stderr={} output_index={} wall_s={:.3}\n",
        plan.algorithm().as_str(),
        run.total_oracle_calls,
        plan.oracle_calls(),
        res,
        se,
        run.output_index,
        started.elapsed().as_secs_f64()
    );
    let sink: &mut dyn Write = if s.out.is_some() { out } else { err };
    let _ = sink.write_all(line.as_bytes());
    EXIT_OK
}

/// Runs the audit battery at `--x0` and writes the JSON report. Exit code 1
/// when any audit fails.
pub fn cmd_audit(s: &Settings, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = (|| -> Result<_> {
        let problem = build_problem(s)?;
        let x0 = initial_point(s, problem.oracle.dim())?;
        let delta = s.require_delta()?;
        let rng = RandomStream::from_seed(s.seed());
        let report = audit_suite(&*problem.oracle, &x0, delta, s.samples(), &rng)?;
        let mut json = report.to_json();
        json.push('\n');
        write_output(s, out, &json)?;
        Ok(report.all_pass)
    })();
    match result {
        Ok(true) => EXIT_OK,
        Ok(false) => {
            let _ = writeln!(err, "audit failed");
            EXIT_AUDIT_FAILED
        }
        Err(e) => report(err, &e),
    }
}

/// Compares GFM+ (the resolved gfm-plus configuration) against GFM with a
/// matched call budget over `--n-seeds` seeds. GFM uses `--gfm-eta`, or the
/// GFM+ step size. Without `--target` the level is the median final value
/// GFM reaches. Writes the per-seed CSV and prints the median ratio.
pub fn cmd_bench(s: &Settings, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = (|| -> Result<String> {
        let problem = build_problem(s)?;
        let oracle = &*problem.oracle;
        let x0 = initial_point(s, oracle.dim())?;
        let mut plus_settings = s.clone();
        plus_settings.algo = Some("gfm-plus".into());
        let Plan::GfmPlus(plus) = resolve_plan(&plus_settings, &problem, &x0)? else {
            unreachable!("gfm-plus settings resolve to a gfm-plus plan")
        };
        let n_seeds = s.n_seeds.unwrap_or(20);
        if n_seeds == 0 {
            return Err(Error::param("--n-seeds must be at least 1"));
        }
        let gfm = GfmConfig {
            eta: s.gfm_eta.unwrap_or(plus.eta),
            iterations: (plus.oracle_calls() / 2) as usize,
            delta: plus.delta,
        };
        gfm.validate()?;
        let metric = if oracle.exact_value(&x0).is_some() {
            CheckpointMetric::ExactValue
        } else {
            CheckpointMetric::SmoothedValue { samples: TRACE_SAMPLES }
        };
        let every = s.checkpoint_every.unwrap_or(10);
        let base = RandomStream::from_seed(s.seed());
        let level = match s.target {
            Some(t) => t,
            None => {
                let opts = RunOptions::checkpoints(every, metric);
                let mut finals = Vec::with_capacity(n_seeds);
                for i in 0..n_seeds {
                    let run = run_gfm_with(oracle, &x0, &gfm, &crate::diagnostics::seed_stream(&base, i), &opts)?;
                    finals.push(run.final_estimate.unwrap_or(f64::INFINITY));
                }
                finals.sort_by(f64::total_cmp);
                finals[finals.len() / 2]
            }
        };
        let target = Target { level, metric, checkpoint_every: every };
        let cmp = compare_runs(oracle, &x0, &gfm, &plus, n_seeds, target, &base)?;
        let mut csv = String::from("seed,gfm_calls,gfm_plus_calls\n");
        for r in &cmp.rows {
            let _ = writeln!(csv, "{},{},{}", r.seed, format_calls(r.gfm_calls), format_calls(r.gfm_plus_calls));
        }
        let med = |v: f64| if v.is_infinite() { "inf".to_string() } else { v.to_string() };
        let _ = writeln!(csv, "median,{},{}", med(cmp.median_gfm), med(cmp.median_gfm_plus));
        write_output(s, out, &csv)?;
        let ratio = if cmp.median_gfm == cmp.median_gfm_plus { 1.0 } else { cmp.median_gfm / cmp.median_gfm_plus };
        Ok(format!(
            "target={level} gfm_budget={} median_gfm={} median_gfm_plus={} ratio={ratio}\n",
            gfm.oracle_calls(),
            med(cmp.median_gfm),
            med(cmp.median_gfm_plus)
        ))
    })();
    match result {
        Ok(line) => {
            let sink: &mut dyn Write = if s.out.is_some() { out } else { err };
            let _ = sink.write_all(line.as_bytes());
            EXIT_OK
        }
        Err(e) => report(err, &e),
    }
}
