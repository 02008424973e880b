#![allow(dead_code)]

use metastable::ReversibleChain;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("s{i}")).collect()
}

/// `a ⇄ b` with `p(a,b) = q`, `p(b,a) = r`.
pub fn two_state(q: f64, r: f64) -> ReversibleChain {
    ReversibleChain::from_dense(
        vec!["a".into(), "b".into()],
        &[vec![1.0 - q, q], vec![r, 1.0 - r]],
        None,
    )
    .unwrap()
}

/// Chain built from a stationary vector and symmetric conductances, scaled so
/// that the largest row of off-diagonal mass equals `fill`.
pub fn from_conductances(mu: &[f64], edges: &[(usize, usize, f64)], fill: f64) -> ReversibleChain {
    let n = mu.len();
    let total: f64 = mu.iter().sum();
    let mu: Vec<f64> = mu.iter().map(|m| m / total).collect();
    let mut out = vec![0.0; n];
    for &(x, y, c) in edges {
        out[x] += c / mu[x];
        out[y] += c / mu[y];
    }
    let scale = fill / out.iter().copied().fold(0.0, f64::max);
    let mut rows = vec![vec![0.0; n]; n];
    for &(x, y, c) in edges {
        rows[x][y] += scale * c / mu[x];
        rows[y][x] += scale * c / mu[y];
    }
    for (x, row) in rows.iter_mut().enumerate() {
        let off: f64 = row.iter().sum();
        row[x] = 1.0 - off;
    }
    ReversibleChain::from_dense(names(n), &rows, Some(mu)).unwrap()
}

/// Random reversible chain on `n` states: a random spanning tree plus extra
/// edges, random stationary weights and conductances.
pub fn random_chain(seed: u64, n: usize) -> ReversibleChain {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mu: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let mut edges = Vec::new();
    for y in 1..n {
        let x = rng.gen_range(0..y);
        edges.push((x, y, rng.gen_range(0.01..1.0)));
    }
    let extra = rng.gen_range(0..=n);
    for _ in 0..extra {
        let x = rng.gen_range(0..n);
        let y = rng.gen_range(0..n);
        if x != y {
            edges.push((x.min(y), x.max(y), rng.gen_range(0.01..1.0)));
        }
    }
    let fill = rng.gen_range(0.3..0.95);
    from_conductances(&mu, &edges, fill)
}

/// A random proper subset `R` such that both `R` and its complement are
/// connected; grows `R` from a random seed state along edges.
pub fn random_subset(chain: &ReversibleChain, seed: u64) -> Option<Vec<usize>> {
    let n = chain.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
    for _ in 0..50 {
        let target = rng.gen_range(1..n);
        let mut set = vec![rng.gen_range(0..n)];
        while set.len() < target {
            let frontier: Vec<usize> = set
                .iter()
                .flat_map(|&x| chain.neighbors(x).map(|(y, _)| y).collect::<Vec<_>>())
                .filter(|y| !set.contains(y))
                .collect();
            if frontier.is_empty() {
                break;
            }
            set.push(frontier[rng.gen_range(0..frontier.len())]);
        }
        set.sort_unstable();
        if metastable::restrict(chain, &set).is_ok() {
            return Some(set);
        }
    }
    None
}

/// Metropolis walk on a path of `n` states in the potential `v`, at inverse
/// temperature `beta`, with nearest-neighbour proposal probability ½.
pub fn metropolis_path(v: &[f64], beta: f64) -> ReversibleChain {
    let n = v.len();
    let mut rows = vec![vec![0.0; n]; n];
    for x in 0..n {
        for y in [x.wrapping_sub(1), x + 1] {
            if y < n {
                rows[x][y] = 0.5 * (-beta * (v[y] - v[x]).max(0.0)).exp();
            }
        }
        let off: f64 = rows[x].iter().sum();
        rows[x][x] = 1.0 - off;
    }
    ReversibleChain::from_dense(names(n), &rows, None).unwrap()
}

/// Two-well profile on `n` states: a shallow well on the left, a barrier and
/// a deeper well on the right. Returns the chain and the left well.
pub fn two_well(n: usize, beta: f64) -> (ReversibleChain, Vec<usize>) {
    let barrier = n / 2 - 1;
    let v: Vec<f64> = (0..n)
        .map(|x| {
            let t = x as f64 / (n - 1) as f64;
            // double well with minima near t = 0.15 and t = 0.85, right one deeper
            let s = 2.0 * t - 1.0;
            (s * s - 0.49).powi(2) * 8.0 - 0.3 * s
        })
        .collect();
    let chain = metropolis_path(&v, beta);
    let top = (1..n - 1)
        .max_by(|&a, &b| v[a].total_cmp(&v[b]))
        .unwrap_or(barrier);
    (chain, (0..top).collect())
}
