use std::process::Command;
use std::time::Duration;

use gzoo::oracle::sample_sphere;
use gzoo::{zo_gradient, Error, ExternalProcessOracle, IndexSample, RandomStream, ScaledL1, StochasticOracle};

fn awk() -> &'static str {
    match Command::new("awk").args(["-W", "version"]).output() {
        Ok(o) if String::from_utf8_lossy(&o.stdout).contains("mawk") => "awk -W interactive",
        _ => "awk",
    }
}

fn spawn(script: &str, dim: usize, lipschitz: f64) -> ExternalProcessOracle {
    ExternalProcessOracle::spawn_with_timeout(&format!("{} '{script}'", awk()), dim, lipschitz, Duration::from_secs(10))
        .unwrap()
}

const L1: &str =
    r#"{ s = 0; for (i = 3; i <= NF; i++) { v = $i + 0; s += (v < 0 ? -v : v) } printf "%.17g\n", s; fflush() }"#;

#[test]
fn constant_child() {
    let o = spawn("{ print 0; fflush() }", 3, 1.0);
    for k in 0..20 {
        assert_eq!(o.eval(&[k as f64, -1.0, 2.5], IndexSample(k)).unwrap(), 0.0);
    }
}

#[test]
fn child_sees_index_and_point() {
    let o = spawn(r#"{ printf "%.17g\n", $2 + 10 * $3 - $4; fflush() }"#, 2, 1.0);
    assert_eq!(o.eval(&[0.25, 3.0], IndexSample(7)).unwrap(), 7.0 + 2.5 - 3.0);
}

#[test]
fn l1_child_matches_builtin_estimator() {
    for d in [1usize, 4, 9] {
        let ext = spawn(L1, d, (d as f64).sqrt());
        let builtin = ScaledL1::new(d, (d as f64).sqrt()).unwrap();
        let mut rng = RandomStream::from_seed(d as u64);
        for _ in 0..25 {
            let x: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
            let w = sample_sphere(&mut rng, d);
            let a = zo_gradient(&ext, &x, &w, IndexSample(1), 0.1).unwrap();
            let b = zo_gradient(&builtin, &x, &w, IndexSample(1), 0.1).unwrap();
            assert!(a.distance(&b) <= 1e-9 * (1.0 + b.norm()), "{a:?} vs {b:?}");
        }
    }
}

#[test]
fn dead_child_poisons_oracle() {
    let o = spawn("NR > 2 { exit 3 } { print 1; fflush() }", 1, 1.0);
    assert_eq!(o.eval(&[0.0], IndexSample(0)).unwrap(), 1.0);
    assert_eq!(o.eval(&[0.0], IndexSample(0)).unwrap(), 1.0);
    let first = o.eval(&[0.0], IndexSample(0)).unwrap_err();
    let again = o.eval(&[0.0], IndexSample(0)).unwrap_err();
    assert_eq!(first, again);
}

#[test]
fn malformed_response_keeps_raw_text() {
    let o = spawn(r#"{ print "1.5 extra"; fflush() }"#, 1, 1.0);
    let err = o.eval(&[0.0], IndexSample(0)).unwrap_err();
    assert_eq!(err.raw_response.as_deref(), Some("1.5 extra"));
}

#[test]
fn silent_child_times_out() {
    let o = ExternalProcessOracle::spawn_with_timeout("sleep 30", 1, 1.0, Duration::from_millis(200)).unwrap();
    let err = o.eval(&[0.0], IndexSample(0)).unwrap_err();
    assert!(err.message.contains("no response"), "{err}");
}

#[test]
fn run_failure_keeps_partial_trace() {
    use gzoo::algorithms::{run_gfm_with, CheckpointMetric, GfmConfig, RunOptions};
    let o = spawn("NR > 40 { exit 1 } { print NR; fflush() }", 2, 1.0);
    let cfg = GfmConfig { eta: 0.1, iterations: 100, delta: 0.1 };
    let opts = RunOptions::checkpoints(0, CheckpointMetric::ExactValue);
    let err = run_gfm_with(&o, &gzoo::DenseVector::zeros(2), &cfg, &RandomStream::from_seed(1), &opts).unwrap_err();
    match &err {
        Error::RunOracle { iteration, trace, .. } => {
            assert_eq!(*iteration, 20);
            assert_eq!(trace.len(), 20);
            assert_eq!(trace.last().unwrap().oracle_calls_cumulative, 40);
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(err.partial_trace().unwrap().len(), 20);
}
