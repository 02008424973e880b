mod common;

use common::{names, random_chain, random_subset, two_state, two_well};
use metastable::chain::mean_hitting_times;
use metastable::linalg::{dense_from_csr, entry, total_variation};
use metastable::spectral::{
    qsd_with, spectral_gap_with, survival, symmetric_eigenvalues, yaglom_distribution, EigenMethod,
};
use metastable::{qsd, restrict, spectral_gap, ReversibleChain};
use proptest::prelude::*;

#[test]
fn two_state_gap_is_q_plus_r() {
    let chain = two_state(0.2, 0.3);
    assert!((spectral_gap(&chain).unwrap() - 0.5).abs() < 1e-14);
}

#[test]
fn complete_graph_gap_is_one() {
    let n = 7;
    let rows = vec![vec![1.0 / n as f64; n]; n];
    let chain = ReversibleChain::from_dense(names(n), &rows, None).unwrap();
    assert!((spectral_gap(&chain).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn singleton_qsd_conventions() {
    let chain = two_state(0.2, 0.3);
    let ctx = restrict(&chain, &[0]).unwrap();
    let q = qsd(&ctx).unwrap();
    assert_eq!(q.mu_star, vec![1.0]);
    assert!((q.phi_star - 0.2).abs() < 1e-15);
    assert_eq!(q.h_star, vec![1.0]);
    assert!(q.gamma_r.is_infinite());
    assert_eq!(q.eps_star, 0.0);
}

#[test]
fn two_point_well_matches_characteristic_polynomial() {
    let rows = [
        vec![0.6, 0.4, 0.0],
        vec![0.2, 0.5, 0.3],
        vec![0.0, 0.45, 0.55],
    ];
    let chain = ReversibleChain::from_dense(names(3), &rows, None).unwrap();
    let ctx = restrict(&chain, &[0, 1]).unwrap();
    let q = qsd(&ctx).unwrap();
    let (a, b, c, d) = (0.6, 0.4, 0.2, 0.5);
    let disc = (((a - d) / 2.0f64).powi(2) + b * c).sqrt();
    let top = (a + d) / 2.0 + disc;
    assert!((q.phi_star - (1.0 - top)).abs() < 1e-10);
    assert!((q.gamma_star - 2.0 * disc).abs() < 1e-10);
    // Left eigenvector (1, (top − a)/c), normalized.
    let v2 = (top - a) / c;
    assert!((q.mu_star[0] - 1.0 / (1.0 + v2)).abs() < 1e-10);
    assert!((q.mu_star[1] - v2 / (1.0 + v2)).abs() < 1e-10);
}

#[test]
fn exit_rate_sandwich_on_random_chains() {
    for seed in 0..30 {
        let chain = random_chain(seed, 4 + seed as usize % 20);
        let Some(r) = random_subset(&chain, seed) else {
            continue;
        };
        let ctx = restrict(&chain, &r).unwrap();
        let q = qsd(&ctx).unwrap();
        let times = mean_hitting_times(&chain, ctx.complement()).unwrap();
        let mean: f64 = r
            .iter()
            .enumerate()
            .map(|(i, &x)| ctx.mu_r()[i] * times[x])
            .sum();
        assert!(q.phi_star <= 1.0 / mean * (1.0 + 1e-10), "seed {seed}");
        assert!(1.0 / mean <= q.phi_r * (1.0 + 1e-10), "seed {seed}");
    }
}

#[test]
fn yaglom_limits() {
    let (chain, r) = two_well(6, 3.0);
    let ctx = restrict(&chain, &r).unwrap();
    let q = qsd(&ctx).unwrap();
    let (law, s) = yaglom_distribution(&ctx, 0, 0.0).unwrap();
    assert_eq!(s, 1.0);
    assert_eq!(law[0], 1.0);
    let t = 40.0 / q.gamma_star;
    let (law, _) = yaglom_distribution(&ctx, 0, t).unwrap();
    assert!(total_variation(&law, &q.mu_star) < 1e-8);
    for t in [0.5, 3.0, 20.0] {
        let s = survival(ctx.killed(), &q.mu_star, t / q.phi_star);
        assert!(
            (s - (-t).exp()).abs() < 1e-10 * (-t).exp().max(1e-3),
            "t = {t}"
        );
    }
}

#[test]
fn yaglom_decay_rate_matches_the_killed_gap() {
    for seed in [3u64, 8, 21] {
        let chain = random_chain(seed, 8);
        let Some(r) = random_subset(&chain, seed) else {
            continue;
        };
        if r.len() < 3 {
            continue;
        }
        let ctx = restrict(&chain, &r).unwrap();
        let q = qsd(&ctx).unwrap();
        // Late enough for the faster modes to have died out.
        let t0 = 8.0 / q.gamma_star;
        let span = 6.0 / q.gamma_star;
        let tv = |t: f64| total_variation(&yaglom_distribution(&ctx, 0, t).unwrap().0, &q.mu_star);
        let rate = (tv(t0).ln() - tv(t0 + span).ln()) / span;
        assert!(
            (rate / q.gamma_star - 1.0).abs() < 0.1,
            "seed {seed}: {rate} vs {}",
            q.gamma_star
        );
    }
}

#[test]
fn iterative_and_dense_eigensolvers_agree() {
    let chain = random_chain(77, 60);
    let r: Vec<usize> = (0..25).collect();
    if let Ok(ctx) = restrict(&chain, &r) {
        let dense = qsd_with(&ctx, EigenMethod::Dense).unwrap();
        let iter = qsd_with(&ctx, EigenMethod::Iterative).unwrap();
        assert!((dense.phi_star / iter.phi_star - 1.0).abs() < 1e-8);
        assert!((dense.gamma_star / iter.gamma_star - 1.0).abs() < 1e-6);
        assert!(total_variation(&dense.mu_star, &iter.mu_star) < 1e-8);
    }
    let g1 = spectral_gap_with(&chain, EigenMethod::Dense).unwrap();
    let g2 = spectral_gap_with(&chain, EigenMethod::Iterative).unwrap();
    assert!((g1 / g2 - 1.0).abs() < 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn qsd_invariants(seed in 0u64..10_000, n in 3usize..30) {
        let chain = random_chain(seed, n);
        let Some(r) = random_subset(&chain, seed) else { return Ok(()); };
        let ctx = restrict(&chain, &r).unwrap();
        let q = qsd(&ctx).unwrap();
        let m = ctx.len();
        prop_assert!(q.phi_star > 0.0 && q.phi_star < 1.0);
        prop_assert!(q.mu_star.iter().all(|&v| v > 0.0));
        prop_assert!((q.mu_star.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for j in 0..m {
            let image: f64 = (0..m).map(|i| q.mu_star[i] * entry(ctx.killed(), i, j)).sum();
            prop_assert!((image - (1.0 - q.phi_star) * q.mu_star[j]).abs() < 1e-10);
        }
        let flux: f64 = q.mu_star.iter().zip(ctx.escape()).map(|(a, e)| a * e).sum();
        prop_assert!((flux - q.phi_star).abs() < 1e-10);
        prop_assert!(q.gamma_star > 0.0);
        // L h* = −φ* h* on R (h* extended by zero) and min h* sits on the border.
        for i in 0..m {
            let ph: f64 = (0..m).map(|j| entry(ctx.killed(), i, j) * q.h_star[j]).sum();
            let lh = ph - q.h_star[i];
            prop_assert!((lh + q.phi_star * q.h_star[i]).abs() < 1e-9 * q.h_star[i].max(1.0));
        }
        let min = q.h_star.iter().copied().fold(f64::INFINITY, f64::min);
        let border_min = ctx.border().iter().map(|&i| q.h_star[i]).fold(f64::INFINITY, f64::min);
        prop_assert!(border_min <= min * (1.0 + 1e-10));
    }

    #[test]
    fn symmetrized_spectrum_matches_the_killed_kernel(seed in 0u64..10_000, n in 3usize..30) {
        let chain = random_chain(seed, n);
        let Some(r) = random_subset(&chain, seed) else { return Ok(()); };
        let ctx = restrict(&chain, &r).unwrap();
        let sym = symmetric_eigenvalues(ctx.killed());
        let schur = dense_from_csr(ctx.killed()).schur();
        let mut general: Vec<f64> = schur.eigenvalues().expect("real spectrum").iter().copied().collect();
        general.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in sym.iter().zip(&general) {
            prop_assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }
}
