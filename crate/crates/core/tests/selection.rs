mod common;

use common::traces::*;
use cytofam::estimate::salso_select;
use cytofam::selection::*;
use proptest::prelude::*;

#[test]
fn lpml_matches_harmonic_mean_oracle() {
    for b in [1, 2, 5] {
        let (data, t) = toy_trace(b);
        let got = lpml(&t, &data).unwrap();
        let want = oracle_lpml(&data, &t);
        assert!((got - want).abs() < 1e-12, "B={b}: {got} vs {want}");
    }
}

#[test]
fn single_draw_lpml_is_the_loglik() {
    let (data, t) = toy_trace(1);
    let ll: f64 = oracle_cell_loglik(&data, &t, 0).iter().sum();
    assert!((lpml(&t, &data).unwrap() - ll).abs() < 1e-12);
}

#[test]
fn dic_matches_oracle() {
    let (data, t) = toy_trace(2);
    let r = dic(&t, &data).unwrap();
    let (dbar, dmean) = oracle_dic(&data, &t);
    assert!((r.dbar - dbar).abs() < 1e-12);
    assert!((r.d_at_mean - dmean).abs() < 1e-12);
    assert!((r.p_d - (dbar - dmean)).abs() < 1e-12);
    assert!((r.dic - (2.0 * dbar - dmean)).abs() < 1e-12);
}

#[test]
fn single_draw_dic_statistic_is_zero() {
    let (data, t) = toy_trace(1);
    let r = dic(&t, &data).unwrap();
    assert_eq!(r.p_d, 0.0);
    assert_eq!(r.dic, r.d_at_mean);
}

#[test]
fn constant_draws_give_zero_statistic() {
    let (data, mut t) = toy_trace(1);
    let d = t.draws[0].clone();
    t.draws = vec![d.clone(), d.clone(), d];
    let r = dic(&t, &data).unwrap();
    assert!(r.p_d.abs() < 1e-9);
    assert!((r.dic - r.d_at_mean).abs() < 1e-9);
    let (data1, t1) = toy_trace(1);
    assert!((lpml(&t, &data).unwrap() - lpml(&t1, &data1).unwrap()).abs() < 1e-12);
}

#[test]
fn empty_trace_is_an_error() {
    let (data, mut t) = toy_trace(1);
    t.draws.clear();
    assert!(lpml(&t, &data).is_err());
    assert!(dic(&t, &data).is_err());
}

#[test]
fn zero_likelihood_cell_is_reported() {
    let (mut data, t) = toy_trace(2);
    data.samples[0].y[[2, 1]] = 1e200;
    match lpml(&t, &data) {
        Err(cytofam::Error::ZeroLikelihood { sample: 0, cell: 2 }) => {}
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn calibration_counts() {
    let (_, mut t) = toy_trace(2);
    for d in t.draws.iter_mut() {
        d.w[[0, 0]] = 0.995;
        d.w[[0, 1]] = 0.005;
    }
    let c = calibration_metric(&t, 0.01).unwrap();
    assert_eq!(c.per_draw, vec![1, 1]);
    assert_eq!(c.estimate, 1);
    let c = calibration_metric(&t, 0.001).unwrap();
    assert_eq!(c.estimate, 0);
    // three samples, one negligible weight each
    assert_eq!(
        [0.5, 0.495, 0.005, 0.3, 0.695, 0.005, 0.009, 0.6, 0.391]
            .chunks(3)
            .map(|w| count_negligible(w, 0.01))
            .sum::<usize>(),
        3
    );
}

#[test]
fn grid_report_rows_sorted() {
    let (data, t2) = toy_trace(2);
    let mut t3 = t2.clone();
    t3.hyper.k = 1;
    let rows = k_grid_report([&t2, &t3], &data, 0.01).unwrap();
    assert_eq!(rows.iter().map(|r| r.k).collect::<Vec<_>>(), vec![1, 2]);
    let single = k_grid_report([&t2], &data, 0.01).unwrap();
    assert_eq!(single.len(), 1);
    assert!(report_csv(&rows).lines().count() == 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn lpml_invariant_to_draw_order(b in 2usize..7, seed in 0u64..1000) {
        let (data, mut t) = toy_trace(b);
        let base = lpml(&t, &data).unwrap();
        let n = t.draws.len();
        t.draws.rotate_left((seed as usize) % n);
        t.draws.swap(0, n - 1);
        prop_assert!((lpml(&t, &data).unwrap() - base).abs() < 1e-10);
    }

    #[test]
    fn lpml_unchanged_by_duplicating_all_draws(b in 1usize..5) {
        let (data, mut t) = toy_trace(b);
        let base = lpml(&t, &data).unwrap();
        let copy = t.draws.clone();
        t.draws.extend(copy);
        prop_assert!((lpml(&t, &data).unwrap() - base).abs() < 1e-10);
    }

    #[test]
    fn salso_is_the_exhaustive_argmin(b in 1usize..=8, seed in 0u64..10_000) {
        let t = random_trace(b, seed);
        let got: Vec<usize> = salso_select(&t).unwrap().iter().map(|e| e.draw).collect();
        prop_assert_eq!(got, brute_force_salso(&t));
    }
}

#[test]
fn single_draw_estimate_is_that_draw() {
    let t = random_trace(1, 3);
    let e = salso_select(&t).unwrap();
    for (i, est) in e.iter().enumerate() {
        assert_eq!(est.draw, 0);
        assert_eq!(est.z, t.draws[0].z);
        assert_eq!(est.w, t.draws[0].w.row(i).to_vec());
        assert_eq!(est.lambda, t.draws[0].lambda[i]);
        assert_eq!(est.objective, 0.0);
    }
}
