mod common;

use common::{names, random_chain, random_subset, two_state, two_well};
use metastable::bounds::{
    bounds_report, density_variance, exit_envelopes, exit_rate_bracket, killed_gap, mixing_report,
    partition_relaxation, pointwise_mixing, relaxation_bracket, smallest_atom, stopped_sum_tail,
    thermalization_envelope, transition_rate_bracket, window_product, ReportConfig, Side,
};
use metastable::{restrict, solve_capacity, spectral_gap, Error, Rate, ReversibleChain};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;

#[test]
fn two_state_exit_rate_bracket_in_closed_form() {
    let (q, r) = (0.2, 0.3);
    let chain = two_state(q, r);
    let ctx = restrict(&chain, &[0]).unwrap();
    let side = Side::hard(&ctx).unwrap();
    assert!((side.q.phi_star - q).abs() < 1e-15);
    let mu_a = chain.mu()[0];
    for kappa in [0.01, 0.5, 4.0] {
        let cap = 1.0 / (1.0 / (kappa * mu_a) + 1.0 / 0.12);
        let rec = exit_rate_bracket(&chain, &ctx, &side, kappa).unwrap();
        // A single state has no internal relaxation: γ_R = ∞ and ε* = 0.
        assert!((rec.lower.unwrap() - cap / mu_a).abs() < 1e-14);
        let upper = cap / mu_a / (1.0 - cap / (kappa * mu_a)).powi(2);
        assert!((rec.upper.unwrap() - upper).abs() < 1e-13 * upper);
        assert!(rec.holds && rec.applicable);
    }
}

#[test]
fn singleton_density_variance_is_zero() {
    let chain = random_chain(2, 6);
    let ctx = (0..6).find_map(|x| restrict(&chain, &[x]).ok()).unwrap();
    let side = Side::hard(&ctx).unwrap();
    let rec = density_variance(&side);
    assert_eq!(rec.exact, 0.0);
    assert_eq!(rec.upper, Some(0.0));
    assert!(rec.holds);
}

#[test]
fn large_eps_makes_gap_bounds_inapplicable() {
    let mut found = false;
    for seed in 0..200 {
        let chain = random_chain(seed, 8);
        let Some(r) = random_subset(&chain, seed) else {
            continue;
        };
        let ctx = restrict(&chain, &r).unwrap();
        let side = Side::hard(&ctx).unwrap();
        if side.eps() >= 1.0 / 3.0 {
            let rec = killed_gap(&side);
            assert!(!rec.applicable && rec.holds);
            assert!(matches!(side.window(0.1), Err(Error::Inapplicable(_))));
            assert!(!window_product(&side).applicable);
            found = true;
            break;
        }
    }
    assert!(found);
}

#[test]
fn window_grows_as_delta_shrinks() {
    let (chain, r) = two_well(8, 3.0);
    let ctx = restrict(&chain, &r).unwrap();
    let side = Side::hard(&ctx).unwrap();
    let windows: Vec<f64> = [0.5, 0.3, 0.1, 0.01, 1e-4]
        .iter()
        .map(|&d| side.window(d).unwrap())
        .collect();
    assert!(windows.windows(2).all(|w| w[0] < w[1]));
    assert!(side.window(0.0).is_err() && side.window(1.0).is_err());
}

#[test]
fn window_product_is_reproduced_from_its_factors() {
    let (chain, r) = two_well(8, 3.0);
    let ctx = restrict(&chain, &r).unwrap();
    let side = Side::hard(&ctx).unwrap();
    let rec = window_product(&side);
    assert!(rec.applicable && rec.holds);
    assert_eq!(
        rec.exact,
        side.q.phi_star * side.window(side.eps()).unwrap()
    );
}

#[test]
fn conditioned_law_is_mixed_after_the_window() {
    let (chain, r) = two_well(6, 3.0);
    let ctx = restrict(&chain, &r).unwrap();
    let side = Side::hard(&ctx).unwrap();
    assert!(side.eps() < 1.0 / 3.0);
    for delta in [0.3, 0.1, 0.01] {
        let rec = pointwise_mixing(&side, delta, 1.01).unwrap();
        assert!(rec.holds, "delta = {delta}: {} > {delta}", rec.exact);
    }
}

#[test]
fn quasi_stationary_start_sits_inside_the_envelopes() {
    let (chain, r) = two_well(8, 3.0);
    let ctx = restrict(&chain, &r).unwrap();
    let side = Side::hard(&ctx).unwrap();
    let grid = [0.5, 1.0, 2.0, 5.0];
    for rec in exit_envelopes(&side, &side.q.mu_star.clone(), &grid).unwrap() {
        let t: f64 = rec.label.rsplit('=').next().unwrap().parse().unwrap();
        assert!((rec.exact - (-t).exp()).abs() < 1e-9);
        assert!(rec.holds);
    }
    let mut deep = vec![0.0; side.len()];
    deep[0] = 1.0;
    assert!(exit_envelopes(&side, &deep, &grid)
        .unwrap()
        .iter()
        .all(|r| r.holds));
}

#[test]
fn smallest_atom_of_a_flat_well() {
    let n = 5;
    let rows = vec![vec![1.0 / n as f64; n]; n];
    let chain = ReversibleChain::from_dense(names(n), &rows, None).unwrap();
    let ctx = restrict(&chain, &[0, 1, 2]).unwrap();
    let side = Side::hard(&ctx).unwrap();
    let records = smallest_atom(&ctx, &side);
    let crude = records
        .iter()
        .find(|r| r.name == "smallest-atom-crude")
        .unwrap();
    assert!((crude.exact - 3f64.ln()).abs() < 1e-12);
    assert!(crude.upper.unwrap() >= 12f64.ln());
    assert!(records.iter().all(|r| r.holds));
}

#[test]
fn single_border_atom_bound() {
    let (chain, r) = two_well(10, 2.0);
    let ctx = restrict(&chain, &r).unwrap();
    assert_eq!(ctx.border().len(), 1);
    let side = Side::hard(&ctx).unwrap();
    let records = smallest_atom(&ctx, &side);
    let rec = records
        .iter()
        .find(|r| r.name == "smallest-atom-single-border")
        .unwrap();
    assert!(rec.holds && rec.applicable);
}

#[test]
fn two_blocks_reduce_to_the_relaxation_bracket() {
    let (chain, r) = two_well(10, 2.0);
    let ctx = restrict(&chain, &r).unwrap();
    let comp = ctx.complement().to_vec();
    let gamma = spectral_gap(&chain).unwrap();
    for (kappa, lambda) in [(0.01, 0.02), (0.1, 0.05)] {
        let pair = relaxation_bracket(&chain, &ctx, gamma, kappa, lambda).unwrap();
        let part =
            partition_relaxation(&chain, &[r.clone(), comp.clone()], &[kappa, lambda]).unwrap();
        let (a, b) = (pair.upper.unwrap(), part.upper.unwrap());
        assert!((a - b).abs() < 1e-10 * a, "{a} vs {b}");
        assert!(part.holds);
    }
}

#[test]
fn partitions_of_a_path() {
    let (chain, _) = two_well(9, 2.0);
    let blocks = vec![vec![0, 1, 2], vec![3, 4, 5], vec![6, 7, 8]];
    let rec = partition_relaxation(&chain, &blocks, &[0.05, 0.1, 0.05]).unwrap();
    assert!(rec.holds && rec.applicable);
    let singletons: Vec<Vec<usize>> = (0..9).map(|x| vec![x]).collect();
    let rec = partition_relaxation(&chain, &singletons, &[0.3; 9]).unwrap();
    // Every block gap is infinite, so the brace is exactly one.
    assert_eq!(rec.inputs["block_term"], 0.0);
    assert_eq!(rec.upper.unwrap(), rec.inputs["sum_inverse_phi"]);
    assert!(rec.holds);
    for bad in [
        vec![vec![0, 1, 2, 3]],
        vec![vec![0, 1], vec![1, 2, 3, 4, 5, 6, 7, 8]],
        vec![vec![0], vec![1, 2, 3, 4, 5, 6, 7]],
    ] {
        let kappas = vec![0.1; bad.len()];
        assert!(matches!(
            partition_relaxation(&chain, &bad, &kappas),
            Err(Error::BadPartition(_))
        ));
    }
}

#[test]
fn isoperimetric_limit_of_the_relaxation_bracket() {
    let (chain, r) = two_well(10, 2.0);
    let ctx = restrict(&chain, &r).unwrap();
    let gamma = spectral_gap(&chain).unwrap();
    let cap = solve_capacity(&chain, &r, ctx.complement(), Rate::Infinite, Rate::Infinite).unwrap();
    let isoperimetric = ctx.mass() * (1.0 - ctx.mass()) / cap.value;
    assert!(1.0 / gamma >= isoperimetric);
    let rec = relaxation_bracket(&chain, &ctx, gamma, 1e9, 1e9).unwrap();
    assert!((rec.lower.unwrap() / isoperimetric - 1.0).abs() < 1e-6);
    assert!(rec.holds);
}

#[test]
fn transition_bracket_on_two_wells() {
    let (chain, r) = two_well(8, 4.0);
    let ctx = restrict(&chain, &r).unwrap();
    let mut best = f64::INFINITY;
    for kappa in [1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2] {
        for lambda in [1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2] {
            let rec = transition_rate_bracket(&chain, &ctx, kappa, lambda).unwrap();
            assert!(rec.holds, "{}", rec.label);
            if let Some(t) = rec.tightness() {
                best = best.min(t);
            }
        }
    }
    assert!(best <= 1.5, "best bracket ratio {best}");
}

#[test]
fn heavy_side_has_no_mixing_clause() {
    let (chain, r) = two_well(8, 4.0);
    let heavy: Vec<usize> = (0..8).filter(|x| !r.contains(x)).collect();
    let ctx = restrict(&chain, &heavy).unwrap();
    assert!(ctx.mass() >= 0.5);
    let report = mixing_report(&chain, &ctx, 0.01, 0.01, true).unwrap();
    assert!(report.eps_c < 1.0 / 3.0);
    assert!(report.eta >= 0.5);
    let rec = report
        .records
        .iter()
        .find(|r| r.name == "mixing-time")
        .unwrap();
    assert!(!rec.applicable);
    assert!(report.t_mix.is_none());
    assert!(report.records.iter().all(|r| r.holds));
}

#[test]
fn xi_above_one_is_rejected() {
    let t = 2.2f64.ln();
    assert!(matches!(
        thermalization_envelope(1.0, 1.0, t, 0.0),
        Err(Error::XiTooLarge { .. })
    ));
    assert!(matches!(
        stopped_sum_tail(1.0, t, 1.0),
        Err(Error::XiTooLarge { .. })
    ));
    let env = thermalization_envelope(1e-6, 1e-6, 1.0, 1.0).unwrap();
    assert!(env.xi < 1e-5);
    assert!((env.tail(2.0) / (-2.0f64).exp() - 1.0).abs() < 1e-5);
}

#[test]
fn stopped_sum_tail_against_sampling() {
    let kappa = 2.0;
    let window = 0.2 / kappa;
    let n = 200_000;
    let exp = Exp::new(kappa).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let sums: Vec<f64> = (0..n)
        .map(|_| {
            let mut total = 0.0;
            loop {
                let s: f64 = rng.sample(exp);
                total += s;
                if s > window {
                    break total;
                }
            }
        })
        .collect();
    for t in [0.5, 1.0, 2.0, 3.0] {
        let p = sums.iter().filter(|&&s| s > t / kappa).count() as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        let bound = stopped_sum_tail(kappa, window, t).unwrap();
        assert!(p <= bound + 3.0 * se, "t = {t}: {p} > {bound}");
        assert!((bound - (-t).exp() / (1.0 - (0.2f64.exp() - 1.0))).abs() < 1e-15);
    }
}

#[test]
fn two_well_report_holds() {
    let (chain, r) = two_well(8, 4.0);
    let cfg = ReportConfig {
        kappas: vec![0.001, 0.01],
        lambdas: vec![0.001, 0.01, 0.1],
        ..Default::default()
    };
    let report = bounds_report(&chain, &r, &cfg).unwrap();
    let bad: Vec<String> = report
        .violations()
        .map(|r| format!("{} {}", r.name, r.label))
        .collect();
    assert!(bad.is_empty(), "{bad:?}");
    assert!(report.records.iter().filter(|r| r.applicable).count() > 30);
    assert!(report.t_star.is_some());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn applicable_bounds_hold_on_random_chains(seed in 0u64..10_000, n in 3usize..11) {
        let chain = random_chain(seed, n);
        let Some(r) = random_subset(&chain, seed) else { return Ok(()); };
        let cfg = ReportConfig { kappas: vec![0.01, 0.2], lambdas: vec![0.05, 1.0], ..Default::default() };
        let report = bounds_report(&chain, &r, &cfg).unwrap();
        for rec in &report.records {
            prop_assert!(!rec.violated(), "{} {}: {:?} {} {:?}", rec.name, rec.label, rec.lower, rec.exact, rec.upper);
        }
    }
}
