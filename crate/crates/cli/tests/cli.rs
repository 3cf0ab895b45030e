use std::path::Path;
use std::process::{Command, Output};

fn gzoo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gzoo")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn without_wall_time(csv: &str) -> String {
    csv.lines().map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head)).collect::<Vec<_>>().join("\n")
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

/// An awk that answers each line as soon as it arrives; mawk block-buffers
/// pipe input unless told otherwise.
fn awk() -> &'static str {
    let version = Command::new("awk").args(["-W", "version"]).output();
    match version {
        Ok(o) if String::from_utf8_lossy(&o.stdout).contains("mawk") => "awk -W interactive",
        _ => "awk",
    }
}

fn external(script: &str) -> String {
    format!("external {} '{script}'", awk())
}

const L1_SCRIPT: &str =
    r#"{ s = 0; for (i = 3; i <= NF; i++) { v = $i + 0; s += (v < 0 ? -v : v) } printf "%.17g\n", s; fflush() }"#;

#[test]
fn plan_prints_worked_configuration() {
    let o = gzoo(&["plan", "--problem", "scaled-l1 4", "--delta", "0.1", "--epsilon", "0.5", "--delta-f", "1"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    for line in ["T = 354", "m = 18", "b = 143", "b-prime = 1284"] {
        assert!(text.lines().any(|l| l == line), "missing {line} in\n{text}");
    }
}

#[test]
fn bad_parameters_exit_two() {
    let o = gzoo(&["plan", "--problem", "scaled-l1 4", "--delta", "0.1", "--epsilon", "-1", "--delta-f", "1"]);
    assert_eq!(code(&o), 2);
    let o = gzoo(&["run", "--problem", "scaled-l1 4"]);
    assert_eq!(code(&o), 2);
    let o = gzoo(&["run", "--no-such-flag"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn run_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let mut traces = Vec::new();
    for (i, seed) in ["3", "3", "4"].iter().enumerate() {
        let out = dir.path().join(format!("t{i}.csv"));
        let o = gzoo(&[
            "run",
            "--problem",
            "svm-synthetic 60 5",
            "--algo",
            "gfm-plus",
            "--delta",
            "0.1",
            "--eta",
            "0.05",
            "--T",
            "40",
            "--m",
            "5",
            "--b",
            "3",
            "--b-prime",
            "12",
            "--seed",
            seed,
            "--samples",
            "200",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        traces.push(without_wall_time(&read(&out)));
    }
    assert_eq!(traces[0], traces[1]);
    assert_ne!(traces[0], traces[2]);
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "problem = constant 2 1.5\nalgo = gfm\ndelta = 0.1\neta = 0.1\nT = 20\ncheckpoint-every = 5\nsamples = 100\n",
    )
    .unwrap();
    let out = dir.path().join("t.csv");
    let o = gzoo(&["run", "--config", cfg.to_str().unwrap(), "--T", "10", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(&out);
    assert_eq!(csv.lines().count(), 1 + 10 / 5 + 1);
    assert!(csv.lines().last().unwrap().starts_with("10,main,1.5,,20,"));
}

#[test]
fn external_oracle_matches_builtin() {
    let dir = tempfile::tempdir().unwrap();
    let ext = dir.path().join("ext.csv");
    let builtin = dir.path().join("builtin.csv");
    let common = [
        "--algo",
        "gfm-plus",
        "--delta",
        "0.1",
        "--eta",
        "0.05",
        "--T",
        "12",
        "--m",
        "4",
        "--b",
        "2",
        "--b-prime",
        "6",
        "--seed",
        "9",
        "--samples",
        "100",
        "--x0",
        "0.5,-1,2",
        "--checkpoint-every",
        "4",
    ];
    let problem = external(L1_SCRIPT);
    let mut a = vec!["run", "--problem", &problem, "--lipschitz", "1.7320508075688772", "--out", ext.to_str().unwrap()];
    a.extend(common);
    let o = gzoo(&a);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut b = vec!["run", "--problem", "scaled-l1 3 1.7320508075688772", "--out", builtin.to_str().unwrap()];
    b.extend(common);
    let o = gzoo(&b);
    assert_eq!(code(&o), 0);
    let (ea, eb) = (read(&ext), read(&builtin));
    assert_eq!(ea.lines().count(), eb.lines().count());
    for (la, lb) in ea.lines().zip(eb.lines()).skip(1) {
        let fa: Vec<&str> = la.split(',').collect();
        let fb: Vec<&str> = lb.split(',').collect();
        assert_eq!(fa[..2], fb[..2]);
        assert_eq!(fa[4], fb[4]);
        for k in [2, 3] {
            if fa[k].is_empty() {
                assert!(fb[k].is_empty());
                continue;
            }
            let (x, y): (f64, f64) = (fa[k].parse().unwrap(), fb[k].parse().unwrap());
            assert!((x - y).abs() <= 1e-9 * (1.0 + y.abs()), "{la} vs {lb}");
        }
    }
}

#[test]
fn dying_oracle_exits_four_with_partial_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    let problem = external("NR > 300 { exit 1 } { print 1; fflush() }");
    let o = gzoo(&[
        "run",
        "--problem",
        &problem,
        "--lipschitz",
        "1",
        "--x0",
        "0,0",
        "--algo",
        "gfm",
        "--delta",
        "0.1",
        "--eta",
        "0.1",
        "--T",
        "1000",
        "--checkpoint-every",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(&out);
    assert!(csv.starts_with("t,phase,f_estimate,v_norm,calls,wall_ns\n"));
    assert!(csv.lines().count() > 1, "{csv}");
}

#[test]
fn malformed_oracle_response_is_reported() {
    let problem = external(r#"{ print "not-a-number"; fflush() }"#);
    let o = gzoo(&[
        "run",
        "--problem",
        &problem,
        "--lipschitz",
        "1",
        "--x0",
        "0",
        "--algo",
        "gfm",
        "--delta",
        "0.1",
        "--eta",
        "0.1",
        "--T",
        "5",
    ]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("not-a-number"));
}

#[test]
fn audit_exit_codes() {
    let o = gzoo(&["audit", "--problem", "probe-linear", "--delta", "0.1", "--samples", "2000"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let report = String::from_utf8(o.stdout).unwrap();
    assert!(report.contains("\"all_pass\": true"));
    let o = gzoo(&["audit", "--problem", "scaled-l1 5", "--lipschitz", "0.1", "--delta", "0.1", "--samples", "2000"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn bench_writes_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.csv");
    let o = gzoo(&[
        "bench",
        "--problem",
        "scaled-l1 3",
        "--x0",
        "1",
        "--delta",
        "0.1",
        "--eta",
        "0.05",
        "--T",
        "60",
        "--m",
        "1",
        "--b",
        "1",
        "--b-prime",
        "1",
        "--n-seeds",
        "3",
        "--checkpoint-every",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = String::from_utf8(o.stdout).unwrap();
    assert!(summary.contains("ratio="), "{summary}");
    let csv = read(&out);
    assert_eq!(csv.lines().count(), 1 + 3 + 1);
}
