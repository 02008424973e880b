mod common;

use common::{random_chain, random_subset, two_state, two_well};
use metastable::bounds::{end_laws, thermalization_windows, Side};
use metastable::linalg::total_variation;
use metastable::simulate::{
    empirical_exit_law, ks_statistic, run_batch, sample_trajectory, stream,
    thermalization_experiment, ExitReference, SimConfig, StopRule,
};
use metastable::{qsd, restrict, Error};
use proptest::prelude::*;

fn point_mass(n: usize, x: usize) -> Vec<f64> {
    let mut law = vec![0.0; n];
    law[x] = 1.0;
    law
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn two_state_hitting_time_has_mean_one_over_q() {
    let chain = two_state(0.2, 0.3);
    let samples = run_batch(
        &chain,
        &[1.0, 0.0],
        &StopRule::Hit(vec![1]),
        100_000,
        7,
        4,
        SimConfig::default(),
    )
    .unwrap();
    let times: Vec<f64> = samples.iter().map(|s| s.time).collect();
    let (mean, se) = mean_and_se(&times);
    assert!((mean - 5.0).abs() < 3.0 * se, "{mean} ± {se}");
    assert!(samples.iter().all(|s| s.end_state == 1));
}

#[test]
fn starting_inside_the_target_stops_at_once() {
    let chain = random_chain(3, 8);
    let s = sample_trajectory(&chain, 2, &StopRule::Hit(vec![2, 5]), &mut stream(1, 0)).unwrap();
    assert_eq!(s.time, 0.0);
    assert_eq!(s.rings, 0);
    assert_eq!(s.end_state, 2);
}

#[test]
fn fixed_time_paths_add_up() {
    let chain = random_chain(5, 10);
    let cfg = SimConfig {
        record_path: true,
        ..SimConfig::default()
    };
    let samples = run_batch(
        &chain,
        &point_mass(10, 0),
        &StopRule::FixedTime(37.5),
        200,
        3,
        2,
        cfg,
    )
    .unwrap();
    for s in &samples {
        assert_eq!(s.time, 37.5);
        let total: f64 = s.path.iter().map(|p| p.1).sum();
        assert!((total - 37.5).abs() < 1e-9);
        assert_eq!(s.path.last().unwrap().0, s.end_state);
        assert!(s.path.windows(2).all(|w| w[0].0 != w[1].0));
    }
}

#[test]
fn batches_do_not_depend_on_the_worker_count() {
    let chain = random_chain(8, 12);
    let r: Vec<usize> = (0..5).collect();
    let rule = StopRule::Transition { r, lambda: 0.4 };
    let law = vec![1.0 / 12.0; 12];
    let one = run_batch(&chain, &law, &rule, 300, 42, 1, SimConfig::default()).unwrap();
    let many = run_batch(&chain, &law, &rule, 300, 42, 6, SimConfig::default()).unwrap();
    for (a, b) in one.iter().zip(&many) {
        assert_eq!(a.index, b.index);
        assert_eq!(a.time.to_bits(), b.time.to_bits());
        assert_eq!(a.end_state, b.end_state);
        assert_eq!(a.rings, b.rings);
    }
    let other = run_batch(&chain, &law, &rule, 300, 43, 6, SimConfig::default()).unwrap();
    assert!(one.iter().zip(&other).any(|(a, b)| a.time != b.time));
}

#[test]
fn budget_is_enforced() {
    let chain = two_state(0.01, 0.01);
    let cfg = SimConfig {
        budget: 3,
        ..SimConfig::default()
    };
    let err = run_batch(&chain, &[1.0, 0.0], &StopRule::Hit(vec![1]), 50, 1, 1, cfg).unwrap_err();
    assert!(matches!(err, Error::StepBudgetExceeded { budget: 3 }));
}

#[test]
fn bad_inputs_are_rejected() {
    let chain = random_chain(2, 6);
    assert!(run_batch(
        &chain,
        &[1.0],
        &StopRule::Hit(vec![1]),
        5,
        1,
        1,
        SimConfig::default()
    )
    .is_err());
    assert!(sample_trajectory(&chain, 9, &StopRule::Hit(vec![1]), &mut stream(0, 0)).is_err());
    assert!(sample_trajectory(&chain, 0, &StopRule::Hit(vec![17]), &mut stream(0, 0)).is_err());
    let (chain, r) = two_well(8, 2.0);
    let err = empirical_exit_law(
        &chain,
        &r,
        &[0.25; 4],
        ExitReference::exponential(),
        0,
        1,
        1,
    )
    .unwrap_err();
    assert!(matches!(err, Error::InvalidInput(_)));
}

#[test]
fn ks_statistic_examples() {
    let uniform = |t: f64| t.clamp(0.0, 1.0);
    assert!((ks_statistic(&[0.5], uniform) - 0.5).abs() < 1e-15);
    let grid: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
    assert!((ks_statistic(&grid, uniform) - 0.005).abs() < 1e-12);
    // Tied samples against an atom of the same weight.
    let reference = ExitReference {
        atom: 0.25,
        shift: 0.0,
    };
    let mut samples = vec![0.0; 25];
    samples.extend((0..75).map(|i| -(-(i as f64 + 0.5) / 75.0).ln_1p()));
    assert!(ks_statistic(&samples, |t| reference.cdf(t)) < 0.01);
    assert!(ks_statistic(&samples, |t| ExitReference::exponential().cdf(t)) >= 0.25);
}

#[test]
fn exit_law_from_the_qsd_is_exponential() {
    let (chain, r) = two_well(8, 2.0);
    let ctx = restrict(&chain, &r).unwrap();
    let q = qsd(&ctx).unwrap();
    let report = empirical_exit_law(
        &chain,
        &r,
        &q.mu_star,
        ExitReference::exponential(),
        10_000,
        2024,
        4,
    )
    .unwrap();
    assert!(report.ks < 0.02, "KS = {}", report.ks);
    assert!((report.mean - 1.0).abs() < 0.04, "mean = {}", report.mean);
}

#[test]
fn exit_law_from_the_restricted_measure_has_an_atom() {
    let (chain, r) = two_well(8, 2.0);
    let ctx = restrict(&chain, &r).unwrap();
    let side = Side::hard(&ctx).unwrap();
    let reference = ExitReference::from_side(&side, ctx.mu_r()).unwrap();
    assert!(reference.atom > 0.0 && reference.atom < 0.5);
    assert!(reference.shift > 0.0);
    let report = empirical_exit_law(&chain, &r, ctx.mu_r(), reference, 10_000, 99, 4).unwrap();
    assert!(report.ks < 0.03, "KS = {} against {reference:?}", report.ks);
    let plain = ExitReference::exponential().ks(&report.times);
    assert!(plain > report.ks);
}

#[test]
fn transition_end_states_follow_the_exact_law() {
    let (chain, r) = two_well(6, 1.0);
    let ctx = restrict(&chain, &r).unwrap();
    let lambda = 0.5;
    let laws = end_laws(&chain, &ctx, lambda).unwrap();
    let n = 40_000;
    let start = 0;
    let rule = StopRule::Transition {
        r: r.clone(),
        lambda,
    };
    let samples = run_batch(
        &chain,
        &point_mass(6, start),
        &rule,
        n,
        5,
        4,
        SimConfig::default(),
    )
    .unwrap();
    let mut counts = vec![0.0; 6];
    for s in &samples {
        counts[s.end_state] += 1.0 / n as f64;
    }
    for (y, (&f, &p)) in counts.iter().zip(&laws[start]).enumerate() {
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((f - p).abs() <= 3.5 * se + 1e-12, "state {y}: {f} vs {p}");
    }
    assert!(total_variation(&counts, &laws[start]) < 0.02);
}

#[test]
fn thermalization_matches_the_soft_measures() {
    let (chain, r) = two_well(6, 2.0);
    let ctx = restrict(&chain, &r).unwrap();
    let (kappa, lambda, delta) = (0.003, 0.003, 0.2);
    let (rside, cside, env) = thermalization_windows(&ctx, kappa, lambda, delta).unwrap();
    assert!(rside.eps() < 1.0 / 3.0 && cside.eps() < 1.0 / 3.0);
    let law = vec![1.0 / 6.0; 6];
    let tail_grid = [0.5, 1.0, 2.0, 4.0];
    let report = thermalization_experiment(
        &chain, &r, kappa, lambda, delta, &law, 100_000, 11, 8, &tail_grid,
    )
    .unwrap();
    assert!((report.envelope.xi - env.xi).abs() < 1e-15);
    for d in &report.deviations {
        assert!(d.deviation < delta + 3.0 * d.std_error, "{d:?}");
    }
    for p in &report.tail {
        assert!(p.empirical <= p.bound + 3.0 * p.std_error, "{p:?}");
    }
    assert!(report.mean_epochs >= 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn local_times_account_for_the_clock(seed in 0u64..10_000, n in 3usize..15, lambda in 0.05f64..5.0) {
        let chain = random_chain(seed, n);
        let Some(r) = random_subset(&chain, seed) else { return Ok(()); };
        let law = vec![1.0 / n as f64; n];
        let rule = StopRule::Transition { r: r.clone(), lambda };
        let samples = run_batch(&chain, &law, &rule, 50, seed, 2, SimConfig { record_path: true, ..SimConfig::default() }).unwrap();
        for s in &samples {
            let sigma = s.sigma_lambda.unwrap();
            let tau = s.transition_time.unwrap();
            prop_assert_eq!(s.time, sigma + tau);
            prop_assert_eq!(s.local_out, sigma);
            prop_assert!((s.local_in + s.local_out - s.time).abs() <= 1e-12 * s.time.max(1.0));
            prop_assert!(!r.contains(&s.end_state));
            let inside: f64 = s.path.iter().filter(|p| r.contains(&p.0)).map(|p| p.1).sum();
            prop_assert!((inside - s.local_in).abs() <= 1e-9 * s.local_in.max(1.0));
        }
    }
}
