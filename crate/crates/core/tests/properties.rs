use gzoo::algorithms::{run_gfm, run_gfm_plus, GfmConfig, GfmPlusConfig};
use gzoo::data::{parse_libsvm_str, to_libsvm, SparseDataset, SparseRow};
use gzoo::oracle::{make_counting, sample_ball, sample_sphere};
use gzoo::problems::probe_linear;
use gzoo::smoothing::{recursive_update, SampleSet};
use gzoo::{plan_gfm_plus, zo_gradient, DenseVector, Error, IndexSample, RandomStream, ScaledL1};
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6..1e6f64, -1.0..1.0f64, Just(0.0), (-300i32..300).prop_map(|e| 1.5 * 10f64.powi(e))]
}

fn dataset() -> impl Strategy<Value = SparseDataset> {
    (1usize..40, 1usize..8, any::<bool>())
        .prop_flat_map(|(d, n, both)| {
            let row = proptest::collection::btree_map(0..d, finite(), 0..=d).prop_map(SparseRow::from_pairs);
            let label = if both { prop_oneof![Just(1.0), Just(-1.0)].boxed() } else { Just(1.0).boxed() };
            (proptest::collection::vec((row, label), n..=n), Just(d))
        })
        .prop_map(|(rows, _)| {
            let (rows, labels): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
            let max = rows.iter().filter_map(|r: &SparseRow| r.indices().last().map(|&i| i as usize + 1)).max();
            SparseDataset::new(rows, labels, max.unwrap_or(0)).unwrap()
        })
}

proptest! {
    #[test]
    fn libsvm_round_trip(ds in dataset()) {
        let text = to_libsvm(&ds);
        let (again, _) = parse_libsvm_str(&text).unwrap();
        prop_assert_eq!(again, ds);
    }

    #[test]
    fn parser_never_panics(text in "[ -~\n\t]{0,200}") {
        match parse_libsvm_str(&text) {
            Ok(_) | Err(Error::Parse(_)) | Err(Error::Parameter(_)) => {}
            Err(other) => prop_assert!(false, "unexpected error kind {other:?}"),
        }
    }

    #[test]
    fn sparse_dot_matches_dense(x in proptest::collection::vec(-10.0..10.0f64, 1..20), y in proptest::collection::vec(-10.0..10.0f64, 20)) {
        let row = SparseRow::from_dense(&x);
        let dense: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        prop_assert!((row.dot(&y) - dense).abs() <= 1e-9 * (1.0 + dense.abs()));
    }

    #[test]
    fn sphere_and_ball_samples(seed in any::<u64>(), d in 1usize..50) {
        let mut rng = RandomStream::from_seed(seed);
        let w = sample_sphere(&mut rng, d);
        prop_assert!((w.norm() - 1.0).abs() < 1e-12);
        prop_assert!(sample_ball(&mut rng, d).norm() <= 1.0 + 1e-12);
    }

    #[test]
    fn linear_estimate_is_projection(seed in any::<u64>(), c in proptest::collection::vec(-5.0..5.0f64, 1..10), delta in 1e-3..10.0f64) {
        let d = c.len();
        let p = probe_linear(DenseVector::from_vec(c.clone()));
        let mut rng = RandomStream::from_seed(seed);
        let x: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
        let w = sample_sphere(&mut rng, d);
        let g = zo_gradient(&p, &x, &w, IndexSample(0), delta).unwrap();
        let expect = w.scaled(d as f64 * w.dot(&DenseVector::from_vec(c)));
        prop_assert!(g.distance(&expect) <= 1e-6 * (1.0 + expect.norm()));
    }

    #[test]
    fn recursive_update_at_same_point_is_identity(seed in any::<u64>(), d in 1usize..8, b in 1usize..6) {
        let p = ScaledL1::new(d, 1.0).unwrap();
        let rng = RandomStream::from_seed(seed);
        let v: DenseVector = (0..d).map(|i| i as f64 - 0.5).collect();
        let x: Vec<f64> = (0..d).map(|i| (i as f64).sin()).collect();
        let set = SampleSet::draw(&p, &rng, b);
        let out = recursive_update(&v, &p, &x, &x, &set, 0.1).unwrap();
        prop_assert_eq!(out, v);
    }

    #[test]
    fn measured_calls_match_cost_model(seed in any::<u64>(), t in 1usize..30, m in 1usize..6, b in 1usize..4, bp in 1usize..6) {
        let p = make_counting(ScaledL1::new(3, 1.0).unwrap());
        let x0 = DenseVector::filled(3, 0.5);
        let rng = RandomStream::from_seed(seed);
        let plus = GfmPlusConfig { eta: 0.01, iterations: t, epoch_length: m, batch: b, epoch_batch: bp, delta: 0.1 };
        let run = run_gfm_plus(&p, &x0, &plus, &rng).unwrap();
        prop_assert_eq!(run.total_oracle_calls, plus.oracle_calls());
        prop_assert_eq!(p.calls(), plus.oracle_calls());
        let gfm = GfmConfig { eta: 0.01, iterations: t, delta: 0.1 };
        prop_assert_eq!(run_gfm(&p, &x0, &gfm, &rng).unwrap().total_oracle_calls, 2 * t as u64);
    }

    #[test]
    fn planner_iterations_grow_as_epsilon_shrinks(d in 1usize..20, eps in 0.05..2.0f64) {
        let a = plan_gfm_plus(d, 1.0, 1.0, 0.1, eps, 1.0).unwrap();
        let b = plan_gfm_plus(d, 1.0, 1.0, 0.1, eps / 2.0, 1.0).unwrap();
        prop_assert!(b.oracle_calls() >= a.oracle_calls());
        prop_assert!(b.epoch_batch >= a.epoch_batch);
    }
}
