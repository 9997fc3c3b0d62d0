use super::*;
use crate::ingest::TestId;
use chrono::{Duration, NaiveDate, NaiveTime};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};

fn ids(n: usize) -> Vec<TestId> {
    let t0 = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap().and_time(NaiveTime::MIN);
    (0..n).map(|i| TestId::from_datetime(t0 + Duration::hours(i as i64))).collect()
}

fn matrix(rows: Vec<Vec<f64>>) -> FeatureMatrix {
    let p = rows[0].len();
    FeatureMatrix::from_rows(ids(rows.len()), (0..p).map(|j| format!("x{j}")).collect(), rows).unwrap()
}

fn params(seed: u64) -> ForestParams {
    ForestParams {
        seed,
        ..ForestParams::default()
    }
}

#[test]
fn learns_a_deterministic_function() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rows: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
    let y: Vec<f64> = rows.iter().map(|r| 3.0 * r[0]).collect();
    let x = matrix(rows);
    let m = train_baseline(&x, &y, &params(7)).unwrap();
    let pred = m.predict_matrix(&x).unwrap();
    assert!(regression_metrics(&y, &pred).unwrap().r2 >= 0.99);
}

#[test]
fn noise_target_does_not_generalize() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let rows: Vec<Vec<f64>> = (0..400).map(|_| vec![rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()]).collect();
    let y: Vec<f64> = (0..400).map(|_| 5.0 + normal.sample(&mut rng)).collect();
    let x = matrix(rows);
    let (tr, te) = chronological_split(&x, 0.8).unwrap();
    let ytr: Vec<f64> = tr.iter().map(|&i| y[i]).collect();
    let yte: Vec<f64> = te.iter().map(|&i| y[i]).collect();
    let m = train_baseline(&x.subset(&tr), &ytr, &params(3)).unwrap();
    let ev = evaluate(&m, &x.subset(&te), &yte, None).unwrap();
    assert!(ev.efficiency.r2 <= 0.1, "r2 = {}", ev.efficiency.r2);
}

#[test]
fn constant_target_is_rejected() {
    let x = matrix((0..60).map(|i| vec![i as f64]).collect());
    let err = train_baseline(&x, &[0.8; 60], &params(0)).unwrap_err();
    assert!(err.to_string().contains("degenerate target"));
    let small = matrix((0..49).map(|i| vec![i as f64]).collect());
    let y: Vec<f64> = (0..49).map(f64::from).collect();
    assert!(train_baseline(&small, &y, &params(0)).is_err());
}

#[test]
fn identical_features_give_a_flat_prediction() {
    // no split is possible, so every tree is a single bootstrap-mean leaf
    let x = matrix(vec![vec![1.0, 2.0]; 60]);
    let y: Vec<f64> = (0..60).map(|i| if i % 2 == 0 { 0.7 } else { 0.9 }).collect();
    let m = train_baseline(&x, &y, &params(5)).unwrap();
    assert!(m.trees.iter().all(|t| t.nodes.len() == 1));
    let p = m.predict_row(&[1.0, 2.0]);
    assert_eq!(p, m.predict_row(&[-50.0, 99.0]));
    assert!((p - 0.8).abs() < 0.02);
}

#[test]
fn model_file_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let rows: Vec<Vec<f64>> = (0..80).map(|_| vec![rng.random::<f64>() * 30.0, rng.random::<f64>()]).collect();
    let y: Vec<f64> = rows.iter().map(|r| (r[0] / 30.0).sqrt() + 0.1 * r[1]).collect();
    let x = matrix(rows);
    let m = train_baseline(&x, &y, &params(11)).unwrap();
    let mut buf = Vec::new();
    m.write_to(&mut buf).unwrap();
    let back = BaselineModel::read_from(buf.as_slice()).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.hash(), m.hash());
    for r in &x.values {
        assert_eq!(back.predict_row(r).to_bits(), m.predict_row(r).to_bits());
    }
    assert_eq!(m.header.params.n_trees, 100);
    assert!(m.trees.iter().all(|t| t.depth() <= 8));
}

#[test]
fn same_seed_same_hash() {
    let rows: Vec<Vec<f64>> = (0..60).map(|i| vec![(i * 13 % 17) as f64, (i % 5) as f64]).collect();
    let y: Vec<f64> = rows.iter().map(|r| r[0] * 0.1 + r[1]).collect();
    let x = matrix(rows);
    let a = train_baseline(&x, &y, &params(9)).unwrap();
    let b = train_baseline(&x, &y, &params(9)).unwrap();
    let c = train_baseline(&x, &y, &params(10)).unwrap();
    assert_eq!(a.hash(), b.hash());
    assert_ne!(a.hash(), c.hash());
}

#[test]
fn metrics_match_brute_force() {
    let truth = [0.9, 0.5, 0.7, 0.2, 1.0];
    let pred = [0.8, 0.6, 0.7, 0.4, 0.7];
    let m = regression_metrics(&truth, &pred).unwrap();
    let mean = 3.3 / 5.0;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean) * (t - mean)).sum();
    // residuals 0.1, -0.1, 0, -0.2, 0.3
    let ss_res = 0.01 + 0.01 + 0.0 + 0.04 + 0.09;
    assert!((m.r2 - (1.0 - ss_res / ss_tot)).abs() < 1e-12);
    assert!((m.mae - 0.7 / 5.0).abs() < 1e-12);
    assert!((m.rmse - (ss_res / 5.0f64).sqrt()).abs() < 1e-12);

    let perfect = regression_metrics(&truth, &truth).unwrap();
    assert_eq!((perfect.r2, perfect.mae, perfect.rmse), (1.0, 0.0, 0.0));
    let flat = regression_metrics(&truth, &[mean; 5]).unwrap();
    assert!(flat.r2.abs() < 1e-12);
    assert!(regression_metrics(&[], &[]).is_err());
}

#[test]
fn mean_regressor_through_the_harness() {
    let x = matrix((0..10).map(|i| vec![i as f64]).collect());
    let y: Vec<f64> = (0..10).map(f64::from).collect();
    let rates = vec![100.0; 10];
    let m = MeanRegressor {
        columns: x.columns.clone(),
        mean: 4.5,
    };
    let ev = evaluate(&m, &x, &y, Some(&rates)).unwrap();
    assert!(ev.efficiency.r2.abs() < 1e-12);
    let mbps = ev.mbps.unwrap();
    assert!((mbps.mae - 100.0 * ev.efficiency.mae).abs() < 1e-9);
    assert!(evaluate(&m, &x, &[], None).is_err());
}

#[test]
fn two_fold_bookkeeping() {
    let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![(i % 10) as f64, (i / 10) as f64]).collect();
    let y: Vec<f64> = rows.iter().map(|r| r[0] * 0.05 + 0.3).collect();
    let x = matrix(rows);
    let p = params(21);
    let out = cross_fit_predictions(&x, &y, 2, &p).unwrap();

    let second: Vec<usize> = (50..100).collect();
    let m1 = train_baseline(
        &x.subset(&second),
        &y[50..],
        &ForestParams {
            seed: derive_seed(21, 1_000_000),
            ..p
        },
    )
    .unwrap();
    for i in 0..50 {
        assert_eq!(out[i], m1.predict_row(&x.values[i]));
    }
    assert_eq!(out, cross_fit_predictions(&x, &y, 2, &p).unwrap());
    assert!(cross_fit_predictions(&x, &y, 11, &p).is_err());
    assert!(cross_fit_predictions(&x, &y, 1, &p).is_err());
}

#[test]
fn cross_fit_does_not_absorb_an_injected_drop() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let rows: Vec<Vec<f64>> = (0..250).map(|_| vec![rng.random::<f64>() * 30.0, rng.random::<f64>()]).collect();
    let clean: Vec<f64> = rows.iter().map(|r| 0.3 + 0.7 * r[0] / 30.0).collect();
    let x = matrix(rows);
    let folds = chronological_folds(&x, 5).unwrap();
    let mut y = clean.clone();
    for &i in &folds[1] {
        y[i] *= 0.7;
    }
    let cross = cross_fit_predictions(&x, &y, 5, &params(2)).unwrap();
    let full = train_baseline(&x, &y, &params(2)).unwrap().predict_matrix(&x).unwrap();
    let mean_rho = |pred: &[f64]| folds[1].iter().map(|&i| y[i] / pred[i]).sum::<f64>() / folds[1].len() as f64;
    let (rc, rf) = (mean_rho(&cross), mean_rho(&full));
    assert!((rc - 0.7).abs() < 0.06, "cross-fit rho {rc}");
    assert!(rf > rc + 0.05, "full fit rho {rf} vs cross {rc}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn predictions_stay_within_training_range(seed in 0u64..1000, n in 50usize..90) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>(), rng.random::<f64>() * 4.0]).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0).collect();
        let x = matrix(rows);
        let hp = ForestParams { n_trees: 10, ..params(seed) };
        let m = train_baseline(&x, &y, &hp).unwrap();
        let (lo, hi) = (m.header.target_min, m.header.target_max);
        for _ in 0..50 {
            let p = m.predict_row(&[rng.random::<f64>() * 3.0 - 1.0, rng.random::<f64>() * 6.0 - 1.0]);
            prop_assert!(p >= lo - 1e-12 && p <= hi + 1e-12);
        }
    }

    #[test]
    fn rmse_dominates_mae(truth in proptest::collection::vec(-5.0f64..5.0, 2..40), seed in 0u64..100) {
        prop_assume!(truth.iter().any(|t| *t != truth[0]));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pred: Vec<f64> = truth.iter().map(|t| t + rng.random::<f64>() - 0.5).collect();
        let m = regression_metrics(&truth, &pred).unwrap();
        prop_assert!(m.rmse + 1e-15 >= m.mae && m.mae >= 0.0);
        let msr = truth.iter().zip(&pred).map(|(t, p)| (t - p) * (t - p)).sum::<f64>() / truth.len() as f64;
        prop_assert!((m.rmse * m.rmse - msr).abs() < 1e-12);
        prop_assert!(m.r2 <= 1.0);
    }
}
