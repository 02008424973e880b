//! (κ,λ)-capacities on the network extended by dangling edges.
//!
//! Every `a ∈ A` receives an edge of conductance `κμ(a)` to a node held at
//! potential 1 and every `b ∈ B` an edge of conductance `λμ(b)` to a node
//! held at potential 0:
//!
//! ```text
//! C_κ^λ(A,B) = min_f D(f) + κ Σ_A μ(a)(f(a) − 1)² + λ Σ_B μ(b) f(b)²
//!            = max_ψ [ D(ψ) + Σ_A (div_a ψ)²/(κμ(a)) + Σ_B (div_b ψ)²/(λμ(b)) ]⁻¹
//! ```
//!
//! An infinite rate pins the potential on its set instead.

use std::collections::HashMap;

use serde::Serialize;

use crate::chain::ReversibleChain;
use crate::linalg::{self, Backend};
use crate::rate::Rate;
use crate::{Error, Result};

const FLOW_TOL: f64 = 1e-10;

/// An antisymmetric edge function plus the currents carried by the dangling edges.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Flow {
    /// `(x, y, ψ(x,y))`; the reverse orientation is implied with the opposite sign.
    pub edges: Vec<(usize, usize, f64)>,
    /// Current entering the network at each `a ∈ A`.
    pub source: Vec<(usize, f64)>,
    /// Current leaving the network at each `b ∈ B`.
    pub sink: Vec<(usize, f64)>,
}

impl Flow {
    /// Net current out of every node through base edges.
    pub fn divergence(&self, n: usize) -> Vec<f64> {
        let mut div = vec![0.0; n];
        for &(x, y, v) in &self.edges {
            div[x] += v;
            div[y] -= v;
        }
        div
    }

    /// Collapses parallel and opposite entries into one value per unordered edge.
    pub fn merged(&self) -> HashMap<(usize, usize), f64> {
        let mut map = HashMap::new();
        for &(x, y, v) in &self.edges {
            let (key, sign) = if x < y { ((x, y), 1.0) } else { ((y, x), -1.0) };
            *map.entry(key).or_insert(0.0) += sign * v;
        }
        map
    }

    /// Unit flow along a path of states.
    pub fn path(states: &[usize]) -> Flow {
        let edges = states.windows(2).map(|w| (w[0], w[1], 1.0)).collect();
        Flow {
            edges,
            source: vec![(states[0], 1.0)],
            sink: vec![(*states.last().unwrap(), 1.0)],
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CapacityResult {
    pub kappa: Rate,
    pub lambda: Rate,
    /// `C_κ^λ(A,B)`.
    pub value: f64,
    /// Equilibrium potential `V_κ^λ`.
    pub potential: Vec<f64>,
    /// Normalized current `c∇V / C`, a unit flow from `Ā` to `B̄`.
    pub flow: Flow,
    /// The Dirichlet functional evaluated at the potential.
    pub dirichlet_energy: f64,
    /// `1 / (dissipated energy of the optimal flow)`.
    pub thomson_energy: f64,
    /// `φ_κ^λ(A,B) = C / (μ(A) μ(B))`.
    pub phi_rate: f64,
}

fn membership(n: usize, set: &[usize], name: &str) -> Result<Vec<bool>> {
    if set.is_empty() {
        return Err(Error::InvalidInput(format!("{name} is empty")));
    }
    let mut mask = vec![false; n];
    for &x in set {
        if x >= n {
            return Err(Error::InvalidInput(format!(
                "{name} contains an out-of-range state"
            )));
        }
        mask[x] = true;
    }
    Ok(mask)
}

fn check_rate(r: Rate, name: &str) -> Result<()> {
    match r {
        Rate::Finite(v) if !(v > 0.0) || !v.is_finite() => Err(Error::InvalidInput(format!(
            "{name} = {v} must be positive"
        ))),
        _ => Ok(()),
    }
}

pub fn solve_capacity(
    chain: &ReversibleChain,
    a: &[usize],
    b: &[usize],
    kappa: Rate,
    lambda: Rate,
) -> Result<CapacityResult> {
    solve_capacity_with(chain, a, b, kappa, lambda, Backend::Auto)
}

pub fn solve_capacity_with(
    chain: &ReversibleChain,
    a: &[usize],
    b: &[usize],
    kappa: Rate,
    lambda: Rate,
    backend: Backend,
) -> Result<CapacityResult> {
    let n = chain.len();
    let in_a = membership(n, a, "A")?;
    let in_b = membership(n, b, "B")?;
    check_rate(kappa, "kappa")?;
    check_rate(lambda, "lambda")?;
    if kappa.is_infinite() && lambda.is_infinite() && (0..n).any(|x| in_a[x] && in_b[x]) {
        return Err(Error::InvalidInput(
            "A and B must be disjoint when both rates are infinite".into(),
        ));
    }
    let mu = chain.mu();
    // Pinned values: V = 1 on A when κ = ∞, V = 0 on B when λ = ∞.
    let pinned = |x: usize| -> Option<f64> {
        if kappa.is_infinite() && in_a[x] {
            Some(1.0)
        } else if lambda.is_infinite() && in_b[x] {
            Some(0.0)
        } else {
            None
        }
    };
    let free: Vec<usize> = (0..n).filter(|&x| pinned(x).is_none()).collect();
    let k = kappa.value().unwrap_or(0.0);
    let l = lambda.value().unwrap_or(0.0);
    let extra: Vec<f64> = free
        .iter()
        .map(|&x| if in_a[x] { k } else { 0.0 } + if in_b[x] { l } else { 0.0 })
        .collect();
    let rhs: Vec<f64> = free
        .iter()
        .map(|&x| {
            let dangling = if in_a[x] { k } else { 0.0 };
            let boundary: f64 = chain
                .neighbors(x)
                .filter_map(|(y, p)| pinned(y).map(|v| p * v))
                .sum();
            dangling + boundary
        })
        .collect();
    let sol = linalg::solve_shifted(chain.kernel(), mu, &free, &extra, &[rhs], backend)?;
    let mut v: Vec<f64> = (0..n).map(|x| pinned(x).unwrap_or(0.0)).collect();
    for (i, &x) in free.iter().enumerate() {
        v[x] = sol[0][i].clamp(0.0, 1.0);
    }

    // Unnormalized currents; the capacity is the total current injected.
    // Dangling currents come from Kirchhoff balance wherever possible: for
    // extreme rates `κμ(1 − V)` is a product of a huge and a tiny number.
    // Node balances reuse the edge currents so that they cancel exactly.
    let currents: Vec<(usize, usize, f64)> = chain
        .edges()
        .into_iter()
        .map(|(x, y, c)| (x, y, c * (v[x] - v[y])))
        .collect();
    let mut net = vec![0.0; n];
    for &(x, y, i) in &currents {
        net[x] += i;
        net[y] -= i;
    }
    let outflow = |x: usize| net[x];
    let source_current = |x: usize| -> f64 {
        if !in_b[x] {
            return outflow(x);
        }
        // Both dangling edges hang off x.
        match kappa {
            Rate::Finite(k) => k * mu[x] * (1.0 - v[x]),
            Rate::Infinite => outflow(x) + lambda.value().map_or(0.0, |l| l * mu[x] * v[x]),
        }
    };
    let sources: Vec<(usize, f64)> = a.iter().map(|&x| (x, source_current(x))).collect();
    let value: f64 = sources.iter().map(|s| s.1).sum();
    if !(value > 0.0) {
        return Err(Error::SingularSystem("capacity is not positive".into()));
    }
    let sinks: Vec<(usize, f64)> = b
        .iter()
        .map(|&x| {
            let inj = if in_a[x] { source_current(x) } else { 0.0 };
            (x, (inj - outflow(x)) / value)
        })
        .collect();
    let edges: Vec<(usize, usize, f64)> = currents
        .iter()
        .map(|&(x, y, i)| (x, y, i / value))
        .filter(|e| e.2 != 0.0)
        .collect();
    let flow = Flow {
        edges,
        source: sources.iter().map(|&(x, s)| (x, s / value)).collect(),
        sink: sinks,
    };
    let dirichlet_energy = dirichlet_upper_bound(chain, a, b, kappa, lambda, &v)?;
    let thomson_energy = thomson_lower_bound(chain, a, b, kappa, lambda, &flow)?;
    let phi_rate = value / (chain.measure(a) * chain.measure(b));
    Ok(CapacityResult {
        kappa,
        lambda,
        value,
        potential: v,
        flow,
        dirichlet_energy,
        thomson_energy,
        phi_rate,
    })
}

/// The Dirichlet functional at `f`, an upper bound on `C_κ^λ(A,B)`.
/// Violating a pinned boundary condition gives `+∞`.
pub fn dirichlet_upper_bound(
    chain: &ReversibleChain,
    a: &[usize],
    b: &[usize],
    kappa: Rate,
    lambda: Rate,
    f: &[f64],
) -> Result<f64> {
    if f.len() != chain.len() {
        return Err(Error::InvalidInput(
            "function length does not match the chain".into(),
        ));
    }
    let mu = chain.mu();
    let mut total = crate::chain::dirichlet_form(chain, f)?;
    for &x in a {
        match kappa {
            Rate::Finite(k) => total += k * mu[x] * (f[x] - 1.0).powi(2),
            Rate::Infinite if f[x] != 1.0 => return Ok(f64::INFINITY),
            Rate::Infinite => {}
        }
    }
    for &x in b {
        match lambda {
            Rate::Finite(l) => total += l * mu[x] * f[x] * f[x],
            Rate::Infinite if f[x] != 0.0 => return Ok(f64::INFINITY),
            Rate::Infinite => {}
        }
    }
    Ok(total)
}

/// Thomson's bound `[D(ψ) + Σ_A s_a²/(κμ(a)) + Σ_B t_b²/(λμ(b))]⁻¹ ≤ C_κ^λ(A,B)`.
pub fn thomson_lower_bound(
    chain: &ReversibleChain,
    a: &[usize],
    b: &[usize],
    kappa: Rate,
    lambda: Rate,
    flow: &Flow,
) -> Result<f64> {
    let n = chain.len();
    let in_a = membership(n, a, "A")?;
    let in_b = membership(n, b, "B")?;
    let mu = chain.mu();
    let mut balance = flow.divergence(n);
    let mut injected = 0.0;
    let mut energy = 0.0;
    for &(x, s) in &flow.source {
        if x >= n || !in_a[x] {
            return Err(Error::FlowOffSupport { from: n, to: x });
        }
        balance[x] -= s;
        injected += s;
        energy += kappa.divide(s * s / mu[x]);
    }
    let mut extracted = 0.0;
    for &(x, t) in &flow.sink {
        if x >= n || !in_b[x] {
            return Err(Error::FlowOffSupport { from: x, to: n });
        }
        balance[x] += t;
        extracted += t;
        energy += lambda.divide(t * t / mu[x]);
    }
    let defect = balance.iter().fold(
        (injected - 1.0).abs().max((extracted - 1.0).abs()),
        |m, d| m.max(d.abs()),
    );
    if defect > FLOW_TOL {
        return Err(Error::NotUnitFlow { defect });
    }
    for ((x, y), v) in flow.merged() {
        if v == 0.0 {
            continue;
        }
        let c = chain.conductance(x, y);
        if x == y || c == 0.0 {
            return Err(Error::FlowOffSupport { from: x, to: y });
        }
        energy += v * v / c;
    }
    Ok(1.0 / energy)
}

/// The harmonic measure on `R` and the identities tying it to exit times.
#[derive(Clone, Debug, Serialize)]
pub struct HarmonicMeasure {
    /// `ν(x) = κμ(x)(1 − V_κ(x)) / C_κ(R, X∖R)` on the states of `R`, in ascending order.
    pub nu: Vec<f64>,
    pub states: Vec<usize>,
    /// `C_κ(R, X∖R)`.
    pub capacity: f64,
    /// `μ(V_κ)`.
    pub mu_v: f64,
    /// `μ_R(V_κ)`.
    pub mu_r_v: f64,
    /// `μ(V_κ) / C_κ`, which equals `E_ν[τ_{X∖R}]`.
    pub mean_exit: f64,
}

pub fn harmonic_measure(
    chain: &ReversibleChain,
    r: &[usize],
    kappa: f64,
) -> Result<HarmonicMeasure> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidInput(
            "kappa must be finite and positive".into(),
        ));
    }
    let mut states = r.to_vec();
    states.sort_unstable();
    states.dedup();
    let comp: Vec<usize> = (0..chain.len())
        .filter(|x| states.binary_search(x).is_err())
        .collect();
    if comp.is_empty() {
        return Err(Error::InvalidInput("R must be a proper subset".into()));
    }
    let cap = solve_capacity(chain, &states, &comp, Rate::Finite(kappa), Rate::Infinite)?;
    let mu = chain.mu();
    // The normalized source currents are `κμ(x)(1 − V_κ(x))/C_κ`, balanced so they sum to one.
    let nu: Vec<f64> = cap.flow.source.iter().map(|s| s.1).collect();
    let mu_v: f64 = states.iter().map(|&x| mu[x] * cap.potential[x]).sum();
    let mass = chain.measure(&states);
    Ok(HarmonicMeasure {
        nu,
        states,
        capacity: cap.value,
        mu_v,
        mu_r_v: mu_v / mass,
        mean_exit: mu_v / cap.value,
    })
}
