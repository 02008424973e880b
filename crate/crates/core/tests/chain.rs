mod common;

use common::{names, random_chain, random_subset, two_state};
use metastable::chain::{
    dirichlet_form, dirichlet_form_restricted, mean_hitting_times, mean_hitting_times_with,
};
use metastable::linalg::{entry, Backend};
use metastable::{restrict, Error, ReversibleChain};
use proptest::prelude::*;

#[test]
fn two_state_stationary_measure() {
    let chain = two_state(0.2, 0.3);
    // mu(a) = r / (q + r)
    assert!((chain.mu()[0] - 0.6).abs() < 1e-14);
    assert!((chain.mu()[1] - 0.4).abs() < 1e-14);
    assert!((chain.conductance(0, 1) - 0.12).abs() < 1e-15);
}

#[test]
fn identity_kernel_is_reducible() {
    let err =
        ReversibleChain::from_dense(names(2), &[vec![1.0, 0.0], vec![0.0, 1.0]], None).unwrap_err();
    assert!(matches!(err, Error::NotIrreducible));
}

#[test]
fn deficient_row_is_rejected() {
    let err =
        ReversibleChain::from_dense(names(2), &[vec![0.7, 0.2], vec![0.3, 0.7]], None).unwrap_err();
    assert!(matches!(err, Error::NonStochastic { row: 0, .. }));
}

#[test]
fn supplied_measure_must_balance() {
    let rows = [vec![0.8, 0.2], vec![0.3, 0.7]];
    let err = ReversibleChain::from_dense(names(2), &rows, Some(vec![0.5, 0.5])).unwrap_err();
    assert!(matches!(err, Error::NotReversible { .. }));
}

#[test]
fn cyclic_chain_is_not_reversible() {
    let rows = [
        vec![0.0, 0.9, 0.1],
        vec![0.1, 0.0, 0.9],
        vec![0.9, 0.1, 0.0],
    ];
    let err = ReversibleChain::from_dense(names(3), &rows, None).unwrap_err();
    assert!(matches!(err, Error::NotReversible { .. }));
}

#[test]
fn restriction_of_a_single_state() {
    let chain = two_state(0.2, 0.3);
    let ctx = restrict(&chain, &[0]).unwrap();
    assert!((ctx.escape()[0] - 0.2).abs() < 1e-15);
    assert!((entry(ctx.reflected(), 0, 0) - 1.0).abs() < 1e-15);
    assert!((entry(ctx.killed(), 0, 0) - 0.8).abs() < 1e-15);
    assert_eq!(ctx.border_states(), vec![0]);
    assert_eq!(ctx.complement(), &[1]);
}

#[test]
fn whole_space_is_not_a_proper_subset() {
    let chain = two_state(0.2, 0.3);
    assert!(restrict(&chain, &[0, 1]).is_err());
    assert!(restrict(&chain, &[]).is_err());
}

fn path3() -> ReversibleChain {
    let rows = [
        vec![0.6, 0.4, 0.0],
        vec![0.2, 0.5, 0.3],
        vec![0.0, 0.45, 0.55],
    ];
    ReversibleChain::from_dense(names(3), &rows, None).unwrap()
}

#[test]
fn border_of_a_path_prefix() {
    let chain = path3();
    let ctx = restrict(&chain, &[0, 1]).unwrap();
    assert_eq!(ctx.border_states(), vec![1]);
}

#[test]
fn disconnected_complement_is_rejected() {
    let chain = path3();
    let err = restrict(&chain, &[1]).unwrap_err();
    assert!(matches!(err, Error::NotIrreducibleRestricted { .. }));
}

#[test]
fn dirichlet_form_examples() {
    let chain = two_state(0.2, 0.3);
    assert_eq!(dirichlet_form(&chain, &[3.0, 3.0]).unwrap(), 0.0);
    assert!((dirichlet_form(&chain, &[1.0, 0.0]).unwrap() - 0.12).abs() < 1e-15);
    let chain = random_chain(11, 12);
    let r = random_subset(&chain, 11).unwrap();
    let indicator: Vec<f64> = (0..chain.len())
        .map(|x| if r.contains(&x) { 1.0 } else { 0.0 })
        .collect();
    let boundary: f64 = r
        .iter()
        .flat_map(|&x| {
            (0..chain.len())
                .filter(|y| !r.contains(y))
                .map(move |y| (x, y))
        })
        .map(|(x, y)| chain.conductance(x, y))
        .sum();
    assert!((dirichlet_form(&chain, &indicator).unwrap() - boundary).abs() < 1e-14);
}

#[test]
fn hitting_time_of_two_states() {
    let chain = two_state(0.2, 0.3);
    let t = mean_hitting_times(&chain, &[1]).unwrap();
    assert!((t[0] - 5.0).abs() < 1e-12);
    assert_eq!(t[1], 0.0);
}

/// `E_x[τ_B] = Σ_k P_x(τ_B > k-th ring)`, each ring taking unit mean time.
fn ring_count_oracle(chain: &ReversibleChain, b: &[usize]) -> Vec<f64> {
    let n = chain.len();
    let mut alive: Vec<f64> = (0..n)
        .map(|x| if b.contains(&x) { 0.0 } else { 1.0 })
        .collect();
    let mut total = alive.clone();
    for _ in 0..2_000_000 {
        let next: Vec<f64> = (0..n)
            .map(|x| {
                if b.contains(&x) {
                    0.0
                } else {
                    chain.neighbors(x).map(|(y, p)| p * alive[y]).sum::<f64>()
                        + chain.p(x, x) * alive[x]
                }
            })
            .collect();
        alive = next;
        let mass: f64 = alive.iter().sum();
        for (t, a) in total.iter_mut().zip(&alive) {
            *t += a;
        }
        if mass < 1e-15 {
            break;
        }
    }
    total
}

#[test]
fn hitting_times_match_ring_counting() {
    for seed in 0..20 {
        let n = 3 + (seed as usize % 4);
        let chain = random_chain(seed, n);
        let b = vec![seed as usize % n];
        let exact = mean_hitting_times(&chain, &b).unwrap();
        let oracle = ring_count_oracle(&chain, &b);
        for (e, o) in exact.iter().zip(&oracle) {
            assert!(
                (e - o).abs() <= 1e-8 * o.max(1.0),
                "seed {seed}: {e} vs {o}"
            );
        }
    }
}

#[test]
fn dense_and_sparse_backends_agree() {
    let chain = random_chain(5, 40);
    let dense = mean_hitting_times_with(&chain, &[0, 1], Backend::Dense).unwrap();
    let sparse = mean_hitting_times_with(&chain, &[0, 1], Backend::Sparse).unwrap();
    for (d, s) in dense.iter().zip(&sparse) {
        assert!((d - s).abs() <= 1e-9 * d.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn chain_invariants(seed in 0u64..10_000, n in 2usize..30) {
        let chain = random_chain(seed, n);
        let total: f64 = chain.mu().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        for x in 0..n {
            let row: f64 = chain.neighbors(x).map(|(_, p)| p).sum::<f64>() + chain.p(x, x);
            prop_assert!((row - 1.0).abs() < 1e-12);
            for y in 0..n {
                prop_assert!(chain.conductance(x, y) == chain.conductance(y, x) || (chain.conductance(x, y) - chain.conductance(y, x)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn restriction_consistency(seed in 0u64..10_000, n in 3usize..20) {
        let chain = random_chain(seed, n);
        let Some(r) = random_subset(&chain, seed) else { return Ok(()); };
        let ctx = restrict(&chain, &r).unwrap();
        let m = ctx.len();
        for i in 0..m {
            let killed: f64 = (0..m).map(|j| entry(ctx.killed(), i, j)).sum();
            let reflected: f64 = (0..m).map(|j| entry(ctx.reflected(), i, j)).sum();
            prop_assert!((killed - (1.0 - ctx.escape()[i])).abs() < 1e-12);
            prop_assert!((reflected - 1.0).abs() < 1e-12);
            for j in 0..m {
                let diff = entry(ctx.reflected(), i, j) - entry(ctx.killed(), i, j);
                if i == j {
                    prop_assert!((diff - ctx.escape()[i]).abs() < 1e-15);
                } else {
                    prop_assert!(diff == 0.0);
                }
                let defect = ctx.mu_r()[i] * entry(ctx.reflected(), i, j) - ctx.mu_r()[j] * entry(ctx.reflected(), j, i);
                prop_assert!(defect.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn restricted_form_is_dominated(seed in 0u64..10_000, n in 3usize..30, fseed in 0u64..1000) {
        let chain = random_chain(seed, n);
        let Some(r) = random_subset(&chain, seed) else { return Ok(()); };
        let ctx = restrict(&chain, &r).unwrap();
        let f: Vec<f64> = (0..ctx.len()).map(|i| (((i as u64 + 1) * 2654435761 + fseed) % 1000) as f64 / 250.0 - 2.0).collect();
        let lhs = dirichlet_form_restricted(&ctx, &f).unwrap();
        let rhs = dirichlet_form(&chain, &ctx.extend_by_zero(&f)).unwrap() / ctx.mass();
        prop_assert!(lhs <= rhs + 1e-12, "{lhs} > {rhs}");
        prop_assert!(lhs >= 0.0);
    }
}
