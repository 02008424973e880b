//! Reversible Markov chains on finite state spaces and their restrictions.
//!
//! A chain jumps at the rings of a rate-one Poisson clock according to the
//! kernel `p`, self-loops included. Its generator is
//!
//! ```text
//! L f(x) = Σ_y p(x,y) (f(y) − f(x))
//! ```
//!
//! and the conductances are `c(x,y) = μ(x) p(x,y)`.

use std::collections::{HashMap, VecDeque};

use nalgebra::{DMatrix, DVector};
use sprs::CsMat;

use crate::linalg::{self, csr_from_triplets, entry, Backend, DENSE_LIMIT};
use crate::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-12;
const MASS_TOL: f64 = 1e-12;
const REVERSIBILITY_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct ReversibleChain {
    states: Vec<String>,
    index: HashMap<String, usize>,
    kernel: CsMat<f64>,
    mu: Vec<f64>,
}

impl ReversibleChain {
    /// Validates a full kernel. When `mu` is omitted the stationary vector is solved for.
    pub fn new(states: Vec<String>, kernel: CsMat<f64>, mu: Option<Vec<f64>>) -> Result<Self> {
        let n = states.len();
        if n == 0 {
            return Err(Error::InvalidInput("empty state space".into()));
        }
        if kernel.shape() != (n, n) {
            return Err(Error::InvalidInput(format!(
                "kernel shape {:?} does not match {n} states",
                kernel.shape()
            )));
        }
        let kernel = if kernel.is_csr() {
            kernel
        } else {
            kernel.to_csr()
        };
        let mut index = HashMap::with_capacity(n);
        for (i, s) in states.iter().enumerate() {
            if index.insert(s.clone(), i).is_some() {
                return Err(Error::InvalidInput(format!("duplicate state id `{s}`")));
            }
        }
        for (x, row) in kernel.outer_iterator().enumerate() {
            let mut sum = 0.0;
            for (_, &p) in row.iter() {
                if !p.is_finite() || p < 0.0 {
                    return Err(Error::InvalidInput(format!("kernel entry {p} in row {x}")));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::NonStochastic { row: x, sum });
            }
        }
        if !strongly_connected(&kernel) {
            return Err(Error::NotIrreducible);
        }
        let mu = match mu {
            Some(mu) => {
                if mu.len() != n {
                    return Err(Error::InvalidInput("mu has the wrong length".into()));
                }
                if mu.iter().any(|&m| !(m > 0.0) || !m.is_finite()) {
                    return Err(Error::InvalidInput("mu must be positive".into()));
                }
                let total: f64 = mu.iter().sum();
                if (total - 1.0).abs() > MASS_TOL {
                    return Err(Error::InvalidInput(format!("mu sums to {total}")));
                }
                mu
            }
            None => stationary(&kernel)?,
        };
        check_detailed_balance(&kernel, &mu)?;
        Ok(ReversibleChain {
            states,
            index,
            kernel,
            mu,
        })
    }

    pub fn from_dense(
        states: Vec<String>,
        rows: &[Vec<f64>],
        mu: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = rows.len();
        let mut triplets = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidInput(format!(
                    "row {i} has length {}",
                    row.len()
                )));
            }
            for (j, &p) in row.iter().enumerate() {
                if p != 0.0 {
                    triplets.push((i, j, p));
                }
            }
        }
        Self::new(states, csr_from_triplets(n, &triplets), mu)
    }

    /// Builds a chain from a list of transitions; mass missing from a row becomes a self-loop.
    pub fn from_edges(
        states: Vec<String>,
        edges: &[(usize, usize, f64)],
        mu: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = states.len();
        // Sorted so that the self-loop mass does not depend on the edge order.
        let mut triplets: Vec<(usize, usize, f64)> = edges.to_vec();
        triplets.sort_by_key(|&(x, y, _)| (x, y));
        let mut out = vec![0.0; n];
        for &(x, y, p) in &triplets {
            if x >= n || y >= n {
                return Err(Error::InvalidInput(format!("edge ({x}, {y}) out of range")));
            }
            out[x] += p;
        }
        for (x, &total) in out.iter().enumerate() {
            if total > 1.0 + ROW_SUM_TOL {
                return Err(Error::NonStochastic { row: x, sum: total });
            }
            let rest = 1.0 - total;
            if rest > 0.0 {
                triplets.push((x, x, rest));
            }
        }
        Self::new(states, csr_from_triplets(n, &triplets), mu)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownState(id.to_string()))
    }

    pub fn kernel(&self) -> &CsMat<f64> {
        &self.kernel
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn p(&self, x: usize, y: usize) -> f64 {
        entry(&self.kernel, x, y)
    }

    pub fn conductance(&self, x: usize, y: usize) -> f64 {
        self.mu[x] * self.p(x, y)
    }

    /// Off-diagonal transitions out of `x`.
    pub fn neighbors(&self, x: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.kernel.indptr().outer_inds_sz(x);
        self.kernel.indices()[range.clone()]
            .iter()
            .zip(&self.kernel.data()[range])
            .filter(move |(&y, _)| y != x)
            .map(|(&y, &p)| (y, p))
    }

    /// Undirected edges `x < y` with their conductance.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for x in 0..self.len() {
            for (y, p) in self.neighbors(x) {
                if x < y {
                    out.push((x, y, self.mu[x] * p));
                }
            }
        }
        out
    }

    pub fn measure(&self, set: &[usize]) -> f64 {
        set.iter().map(|&x| self.mu[x]).sum()
    }

    pub fn indices_of<S: AsRef<str>>(&self, ids: &[S]) -> Result<Vec<usize>> {
        ids.iter().map(|s| self.index_of(s.as_ref())).collect()
    }
}

pub fn build_chain(
    states: Vec<String>,
    kernel: CsMat<f64>,
    mu: Option<Vec<f64>>,
) -> Result<ReversibleChain> {
    ReversibleChain::new(states, kernel, mu)
}

fn strongly_connected(kernel: &CsMat<f64>) -> bool {
    let n = kernel.rows();
    let forward = reach(n, |x| {
        kernel
            .outer_view(x)
            .unwrap()
            .iter()
            .map(|(y, _)| y)
            .collect()
    });
    if forward.iter().any(|&r| !r) {
        return false;
    }
    let t = kernel.transpose_view().to_csr();
    let backward = reach(n, |x| {
        t.outer_view(x).unwrap().iter().map(|(y, _)| y).collect()
    });
    backward.iter().all(|&r| r)
}

fn reach(n: usize, next: impl Fn(usize) -> Vec<usize>) -> Vec<bool> {
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(x) = queue.pop_front() {
        for y in next(x) {
            if !seen[y] {
                seen[y] = true;
                queue.push_back(y);
            }
        }
    }
    seen
}

/// Solves `(pᵀ − I) μ = 0` with the last equation replaced by `Σ μ = 1`.
///
/// Large chains, or dense solves that lose positivity in far tails, fall
/// back to products of kernel ratios along a spanning tree, which is exact
/// for reversible kernels.
fn stationary(kernel: &CsMat<f64>) -> Result<Vec<f64>> {
    let n = kernel.rows();
    if n <= DENSE_LIMIT {
        let mut a = DMatrix::<f64>::zeros(n, n);
        for (x, row) in kernel.outer_iterator().enumerate() {
            for (y, &p) in row.iter() {
                a[(y, x)] += p;
            }
        }
        for i in 0..n {
            a[(i, i)] -= 1.0;
        }
        for j in 0..n {
            a[(n - 1, j)] = 1.0;
        }
        let mut b = DVector::zeros(n);
        b[n - 1] = 1.0;
        if let Some(mu) = a.lu().solve(&b) {
            if mu.iter().all(|&m| m > 0.0 && m.is_finite()) {
                let total: f64 = mu.iter().sum();
                return Ok(mu.iter().map(|m| m / total).collect());
            }
        }
    }
    tree_stationary(kernel)
}

fn tree_stationary(kernel: &CsMat<f64>) -> Result<Vec<f64>> {
    let n = kernel.rows();
    let mut log_mu = vec![f64::NAN; n];
    log_mu[0] = 0.0;
    let mut queue = VecDeque::from([0]);
    while let Some(x) = queue.pop_front() {
        for (y, &p) in kernel.outer_view(x).unwrap().iter() {
            if y == x || p == 0.0 || !log_mu[y].is_nan() {
                continue;
            }
            let back = entry(kernel, y, x);
            if back == 0.0 {
                return Err(Error::NotReversible { x, y, defect: p });
            }
            log_mu[y] = log_mu[x] + p.ln() - back.ln();
            queue.push_back(y);
        }
    }
    let top = log_mu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_mu.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.iter().map(|w| w / total).collect())
}

fn check_detailed_balance(kernel: &CsMat<f64>, mu: &[f64]) -> Result<()> {
    for (x, row) in kernel.outer_iterator().enumerate() {
        for (y, &p) in row.iter() {
            if y <= x {
                continue;
            }
            let defect = (mu[x] * p - mu[y] * entry(kernel, y, x)).abs();
            if defect > REVERSIBILITY_TOL {
                return Err(Error::NotReversible { x, y, defect });
            }
        }
    }
    // Entries present only below the diagonal.
    for (x, row) in kernel.outer_iterator().enumerate() {
        for (y, &p) in row.iter() {
            if y < x && entry(kernel, y, x) == 0.0 && mu[x] * p > REVERSIBILITY_TOL {
                return Err(Error::NotReversible {
                    x,
                    y,
                    defect: mu[x] * p,
                });
            }
        }
    }
    Ok(())
}

/// A nonempty proper subset `R` with its restricted ensemble, escape
/// probabilities, reflected and killed kernels. Local index `i` refers to
/// `members()[i]`.
#[derive(Clone, Debug)]
pub struct Restriction<'a> {
    chain: &'a ReversibleChain,
    members: Vec<usize>,
    local: Vec<Option<usize>>,
    complement: Vec<usize>,
    mass: f64,
    mu_r: Vec<f64>,
    escape: Vec<f64>,
    killed: CsMat<f64>,
    reflected: CsMat<f64>,
    border: Vec<usize>,
}

pub fn restrict<'a>(chain: &'a ReversibleChain, r: &[usize]) -> Result<Restriction<'a>> {
    Restriction::new(chain, r)
}

impl<'a> Restriction<'a> {
    pub fn new(chain: &'a ReversibleChain, r: &[usize]) -> Result<Self> {
        let n = chain.len();
        let mut members: Vec<usize> = r.to_vec();
        members.sort_unstable();
        members.dedup();
        if members.is_empty() || members.len() == n {
            return Err(Error::InvalidInput(
                "R must be a nonempty proper subset".into(),
            ));
        }
        if members.last().copied().unwrap_or(0) >= n {
            return Err(Error::InvalidInput(
                "R contains an out-of-range state".into(),
            ));
        }
        let mut local = vec![None; n];
        for (i, &x) in members.iter().enumerate() {
            local[x] = Some(i);
        }
        let complement: Vec<usize> = (0..n).filter(|x| local[*x].is_none()).collect();
        if !connected_within(chain, &members) {
            return Err(Error::NotIrreducibleRestricted { side: "R" });
        }
        if !connected_within(chain, &complement) {
            return Err(Error::NotIrreducibleRestricted {
                side: "the complement of R",
            });
        }
        let mass = chain.measure(&members);
        let mu_r: Vec<f64> = members.iter().map(|&x| chain.mu[x] / mass).collect();
        let mut escape = vec![0.0; members.len()];
        let mut killed = Vec::new();
        let mut border = Vec::new();
        for (i, &x) in members.iter().enumerate() {
            for (y, &p) in chain.kernel.outer_view(x).unwrap().iter() {
                match local[y] {
                    Some(j) => killed.push((i, j, p)),
                    None => escape[i] += p,
                }
            }
            if escape[i] > 0.0 {
                border.push(i);
            }
        }
        let m = members.len();
        let killed = csr_from_triplets(m, &killed);
        let mut reflected: Vec<(usize, usize, f64)> = killed
            .outer_iterator()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |(j, &p)| (i, j, p)).collect::<Vec<_>>())
            .collect();
        for (i, &e) in escape.iter().enumerate() {
            if e > 0.0 {
                reflected.push((i, i, e));
            }
        }
        let reflected = csr_from_triplets(m, &reflected);
        Ok(Restriction {
            chain,
            members,
            local,
            complement,
            mass,
            mu_r,
            escape,
            killed,
            reflected,
            border,
        })
    }

    pub fn chain(&self) -> &'a ReversibleChain {
        self.chain
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn complement(&self) -> &[usize] {
        &self.complement
    }

    pub fn contains(&self, x: usize) -> bool {
        self.local[x].is_some()
    }

    pub fn local_index(&self, x: usize) -> Option<usize> {
        self.local[x]
    }

    /// `μ(R)`.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// The restricted ensemble `μ_R = μ(· | R)`.
    pub fn mu_r(&self) -> &[f64] {
        &self.mu_r
    }

    /// `e_R(x) = Σ_{y ∉ R} p(x,y)`.
    pub fn escape(&self) -> &[f64] {
        &self.escape
    }

    /// `p*_R = p` on `R × R`.
    pub fn killed(&self) -> &CsMat<f64> {
        &self.killed
    }

    /// `p_R`: the killed kernel with the escape mass folded into the diagonal.
    pub fn reflected(&self) -> &CsMat<f64> {
        &self.reflected
    }

    /// Local indices of the internal border `∂₋R`.
    pub fn border(&self) -> &[usize] {
        &self.border
    }

    pub fn border_states(&self) -> Vec<usize> {
        self.border.iter().map(|&i| self.members[i]).collect()
    }

    /// `φ_R = μ_R(e_R)`.
    pub fn mean_escape(&self) -> f64 {
        self.mu_r.iter().zip(&self.escape).map(|(m, e)| m * e).sum()
    }

    pub fn complement_restriction(&self) -> Result<Restriction<'a>> {
        Restriction::new(self.chain, &self.complement)
    }

    /// Lifts a function on `R` to `X`, extending it by zero.
    pub fn extend_by_zero(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.chain.len()];
        for (i, &x) in self.members.iter().enumerate() {
            out[x] = f[i];
        }
        out
    }
}

/// The reflected kernel of `set` and the normalized restriction of `μ`,
/// requiring only `set` itself to be connected.
pub fn reflected_on(chain: &ReversibleChain, set: &[usize]) -> Result<(CsMat<f64>, Vec<f64>)> {
    let n = chain.len();
    let mut local = vec![None; n];
    for (i, &x) in set.iter().enumerate() {
        if x >= n || local[x].is_some() {
            return Err(Error::InvalidInput(format!(
                "state {x} is out of range or repeated"
            )));
        }
        local[x] = Some(i);
    }
    if set.is_empty() || !connected_within(chain, set) {
        return Err(Error::NotIrreducibleRestricted { side: "R" });
    }
    let mut triplets = Vec::new();
    for (i, &x) in set.iter().enumerate() {
        let mut escape = 0.0;
        for (y, &p) in chain.kernel.outer_view(x).unwrap().iter() {
            match local[y] {
                Some(j) => triplets.push((i, j, p)),
                None => escape += p,
            }
        }
        if escape > 0.0 {
            triplets.push((i, i, escape));
        }
    }
    let mass = chain.measure(set);
    Ok((
        csr_from_triplets(set.len(), &triplets),
        set.iter().map(|&x| chain.mu[x] / mass).collect(),
    ))
}

fn connected_within(chain: &ReversibleChain, set: &[usize]) -> bool {
    if set.len() <= 1 {
        return true;
    }
    let mut inside = vec![false; chain.len()];
    for &x in set {
        inside[x] = true;
    }
    let mut seen = vec![false; chain.len()];
    let mut queue = VecDeque::from([set[0]]);
    seen[set[0]] = true;
    let mut count = 1;
    while let Some(x) = queue.pop_front() {
        for (y, _) in chain.neighbors(x) {
            if inside[y] && !seen[y] {
                seen[y] = true;
                count += 1;
                queue.push_back(y);
            }
        }
    }
    count == set.len()
}

/// `½ Σ c(x,y) (f(x) − f(y))²`.
pub fn dirichlet_form(chain: &ReversibleChain, f: &[f64]) -> Result<f64> {
    if f.len() != chain.len() {
        return Err(Error::InvalidInput(
            "function length does not match the chain".into(),
        ));
    }
    Ok(chain
        .edges()
        .iter()
        .map(|&(x, y, c)| c * (f[x] - f[y]).powi(2))
        .sum())
}

/// Dirichlet form of the reflected chain, `c_R(x,y) = μ_R(x) p_R(x,y)`.
pub fn dirichlet_form_restricted(ctx: &Restriction<'_>, f: &[f64]) -> Result<f64> {
    if f.len() != ctx.len() {
        return Err(Error::InvalidInput(
            "function length does not match R".into(),
        ));
    }
    let mut total = 0.0;
    for (i, row) in ctx.reflected.outer_iterator().enumerate() {
        for (j, &p) in row.iter() {
            if i < j {
                total += ctx.mu_r[i] * p * (f[i] - f[j]).powi(2);
            }
        }
    }
    Ok(total)
}

/// `E_x[τ_B]` for every `x`, zero on `B`.
pub fn mean_hitting_times(chain: &ReversibleChain, b: &[usize]) -> Result<Vec<f64>> {
    mean_hitting_times_with(chain, b, Backend::Auto)
}

pub fn mean_hitting_times_with(
    chain: &ReversibleChain,
    b: &[usize],
    backend: Backend,
) -> Result<Vec<f64>> {
    if b.is_empty() {
        return Err(Error::InvalidInput("target set is empty".into()));
    }
    let mut target = vec![false; chain.len()];
    for &x in b {
        if x >= chain.len() {
            return Err(Error::InvalidInput(
                "target contains an out-of-range state".into(),
            ));
        }
        target[x] = true;
    }
    let free: Vec<usize> = (0..chain.len()).filter(|&x| !target[x]).collect();
    let extra = vec![0.0; free.len()];
    let ones = vec![1.0; free.len()];
    let sol = linalg::solve_shifted(&chain.kernel, &chain.mu, &free, &extra, &[ones], backend)?;
    let mut out = vec![0.0; chain.len()];
    for (k, &x) in free.iter().enumerate() {
        out[x] = sol[0][k];
    }
    Ok(out)
}
