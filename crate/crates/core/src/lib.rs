//! Gradient-free optimization of nonsmooth nonconvex stochastic objectives.
//!
//! The library estimates gradients of the uniformly smoothed objective from
//! pairs of function values, runs plain and variance-reduced descent on those
//! estimates, and audits the results statistically.
//!
//! ```
//! use gzoo::{plan_gfm_plus, run_gfm_plus, DenseVector, RandomStream, ScaledL1};
//!
//! let problem = ScaledL1::new(4, 1.0).unwrap();
//! let cfg = plan_gfm_plus(4, 1.0, 1.0, 0.1, 0.5, 1.0).unwrap();
//! let run = run_gfm_plus(&problem, &DenseVector::filled(4, 0.5), &cfg, &RandomStream::from_seed(7)).unwrap();
//! assert_eq!(run.total_oracle_calls, cfg.oracle_calls());
//! ```

pub mod algorithms;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod oracle;
mod par;
pub mod problems;
pub mod rng;
pub mod smoothing;
pub mod vector;

pub use algorithms::{
    plan_gfm_convex, plan_gfm_nonconvex, plan_gfm_plus, plan_ws_gfm, plan_ws_gfm_plus, run_gfm, run_gfm_plus,
    run_ws_gfm, run_ws_gfm_plus, GfmConfig, GfmPlusConfig, IterationRecord, RunOptions, RunResult,
};
pub use error::{Error, OracleError, ParseError, Result};
pub use oracle::{CountingOracle, ExternalProcessOracle, IndexSample, StochasticOracle};
pub use problems::{CappedL1Svm, ScaledL1};
pub use rng::RandomStream;
pub use smoothing::{derived_constants, zo_gradient, DerivedConstants};
pub use vector::DenseVector;
