//! Heat-bath Glauber dynamics of the Curie–Weiss model and its
//! magnetization chain.
//!
//! With `N` spins, field `h` and inverse temperature `β` the Hamiltonian is
//! `H(σ) = N u(m_N(σ))` with `u(m) = −m²/2 − hm`. The magnetization chain
//! lives on the grid `m_k = −1 + 2k/N`, `k = 0..=N`, where state `k` counts
//! the up spins. Its stationary law is computed with exact log-binomials.

use serde::Serialize;

use crate::chain::mean_hitting_times;
use crate::{Error, Result, ReversibleChain};

/// Largest spin count accepted by [`build_cw_full`].
pub const FULL_LIMIT: usize = 14;

const ROOT_TOL: f64 = 1e-14;
const GREEN_ITERATIONS: usize = 200;
const GREEN_TOL: f64 = 1e-12;

/// `u(m) = −m²/2 − hm`.
pub fn energy(m: f64, h: f64) -> f64 {
    -0.5 * m * m - h * m
}

/// Bernoulli entropy `s(m)` of a magnetization.
pub fn entropy(m: f64) -> f64 {
    let xlogx = |x: f64| if x > 0.0 { x * x.ln() } else { 0.0 };
    -(xlogx((1.0 + m) / 2.0) + xlogx((1.0 - m) / 2.0))
}

/// Parameters of a double-well Curie–Weiss model and its critical magnetizations.
#[derive(Clone, Debug, Serialize)]
pub struct CurieWeissSpec {
    pub n: usize,
    pub beta: f64,
    pub h: f64,
    pub m_minus: f64,
    pub m_zero: f64,
    pub m_plus: f64,
}

impl CurieWeissSpec {
    pub fn new(n: usize, beta: f64, h: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidInput("need at least two spins".into()));
        }
        let (m_minus, m_zero, m_plus) = cw_critical_points(beta, h)?;
        Ok(CurieWeissSpec {
            n,
            beta,
            h,
            m_minus,
            m_zero,
            m_plus,
        })
    }

    /// Free energy `f(m) = u(m) − s(m)/β`.
    pub fn f(&self, m: f64) -> f64 {
        energy(m, self.h) - entropy(m) / self.beta
    }

    pub fn f_prime(&self, m: f64) -> f64 {
        -m - self.h + m.atanh() / self.beta
    }

    pub fn f_second(&self, m: f64) -> f64 {
        -1.0 + 1.0 / (self.beta * (1.0 - m * m))
    }

    /// Finite-size free energy `f_N(m_k) = u(m_k) − ln C(N,k)/(βN)`.
    pub fn f_n(&self, k: usize) -> f64 {
        let lc = log_binomials(self.n);
        energy(self.grid(k), self.h) - lc[k] / (self.beta * self.n as f64)
    }

    /// Barrier `f(m₀) − f(m₋)`.
    pub fn barrier(&self) -> f64 {
        self.f(self.m_zero) - self.f(self.m_minus)
    }

    /// Barrier seen from the stable well, `f(m₀ + 2/N) − f(m₊)`.
    pub fn barrier_prime(&self) -> f64 {
        self.f(self.m_zero + 2.0 / self.n as f64) - self.f(self.m_plus)
    }

    pub fn grid(&self, k: usize) -> f64 {
        -1.0 + 2.0 * k as f64 / self.n as f64
    }

    /// Grid index closest to `m`.
    pub fn nearest(&self, m: f64) -> usize {
        let k = ((m + 1.0) * self.n as f64 / 2.0).round();
        k.clamp(0.0, self.n as f64) as usize
    }

    /// Grid indices of the metastable set `{m ≤ m₀}`.
    pub fn metastable_set(&self) -> Vec<usize> {
        (0..=self.n)
            .filter(|&k| self.grid(k) <= self.m_zero)
            .collect()
    }

    /// Configurations of the full chain whose magnetization is at most `m₀`.
    pub fn metastable_set_full(&self) -> Vec<usize> {
        let top = self.metastable_set().last().copied();
        match top {
            Some(top) => (0..1usize << self.n)
                .filter(|s| s.count_ones() as usize <= top)
                .collect(),
            None => Vec::new(),
        }
    }
}

/// The three solutions `m₋ < m₀ < m₊` of `m = tanh(β(m+h))`.
pub fn cw_critical_points(beta: f64, h: f64) -> Result<(f64, f64, f64)> {
    let no_well = Error::NoDoubleWell { beta, h };
    if !(beta > 1.0) || !(h >= 0.0) || !beta.is_finite() || !h.is_finite() {
        return Err(no_well);
    }
    let g = |m: f64| m - (beta * (m + h)).tanh();
    // g' vanishes where β sech²(β(m+h)) = 1.
    let a = ((beta - 1.0) / beta).sqrt().atanh() / beta;
    let (left, right) = (-h - a, -h + a);
    if !(g(left) > 0.0 && g(right) < 0.0) || left <= -1.0 {
        return Err(no_well);
    }
    let m_minus = bisect(g, -1.0, left);
    let m_zero = bisect(g, left, right);
    let m_plus = bisect(g, right, 1.0);
    for m in [m_minus, m_zero, m_plus] {
        if g(m).abs() > 1e-12 {
            return Err(no_well);
        }
    }
    Ok((m_minus, m_zero, m_plus))
}

fn bisect(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let lo_sign = g(lo) > 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= ROOT_TOL * 0.1 || mid == lo || mid == hi {
            break;
        }
        if (g(mid) > 0.0) == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `ln C(N,k)` for `k = 0..=N`.
pub fn log_binomials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 0..n {
        acc += ((n - k) as f64 / (k + 1) as f64).ln();
        out.push(acc);
    }
    // Symmetrize so that rounding does not break C(N,k) = C(N,N−k).
    for k in 0..=n / 2 {
        let v = 0.5 * (out[k] + out[n - k]);
        out[k] = v;
        out[n - k] = v;
    }
    out
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `ln Z_N` and the log-weights `ln(Z_N μ̄(m_k))` of the magnetization law.
pub fn magnetization_log_weights(n: usize, beta: f64, h: f64) -> (f64, Vec<f64>) {
    let lc = log_binomials(n);
    let nf = n as f64;
    let w: Vec<f64> = (0..=n)
        .map(|k| lc[k] - beta * nf * energy(-1.0 + 2.0 * k as f64 / nf, h))
        .collect();
    (log_sum_exp(&w), w)
}

fn spin_ids(n: usize) -> Vec<String> {
    (0..1usize << n)
        .map(|s| {
            (0..n)
                .map(|i| if s >> i & 1 == 1 { '+' } else { '-' })
                .collect()
        })
        .collect()
}

/// Glauber dynamics on `{−1,1}^N`; bit `i` of a state index is spin `i` up.
pub fn build_cw_full(n: usize, beta: f64, h: f64) -> Result<ReversibleChain> {
    if n > FULL_LIMIT {
        return Err(Error::TooLarge {
            what: "Curie-Weiss spin count",
            size: n,
            limit: FULL_LIMIT,
        });
    }
    if n == 0 {
        return Err(Error::InvalidInput("need at least one spin".into()));
    }
    let nf = n as f64;
    let hamiltonian = |s: usize| nf * energy((2.0 * s.count_ones() as f64 - nf) / nf, h);
    let size = 1usize << n;
    let log_w: Vec<f64> = (0..size).map(|s| -beta * hamiltonian(s)).collect();
    let log_z = log_sum_exp(&log_w);
    let mu: Vec<f64> = log_w.iter().map(|w| (w - log_z).exp()).collect();
    let mut edges = Vec::with_capacity(size * n);
    for s in 0..size {
        let hs = hamiltonian(s);
        for i in 0..n {
            let t = s ^ (1 << i);
            let p = 1.0 / (nf * (1.0 + (beta * (hamiltonian(t) - hs)).exp()));
            edges.push((s, t, p));
        }
    }
    ReversibleChain::from_edges(spin_ids(n), &edges, Some(mu))
}

/// Up-move and down-move probabilities of the magnetization chain at grid index `k`.
pub fn magnetization_rates(n: usize, beta: f64, h: f64, k: usize) -> (f64, f64) {
    let nf = n as f64;
    let m = -1.0 + 2.0 * k as f64 / nf;
    let up_delta = m + h + 1.0 / nf;
    let down_delta = -m - h + 1.0 / nf;
    let up = (1.0 - m) / 2.0 * (1.0 + (beta * up_delta).tanh()) / 2.0;
    let down = (1.0 + m) / 2.0 * (1.0 + (beta * down_delta).tanh()) / 2.0;
    (
        if k == n { 0.0 } else { up },
        if k == 0 { 0.0 } else { down },
    )
}

/// The birth–death chain of the magnetization, state `k` having `k` up spins.
pub fn build_cw_mag(n: usize, beta: f64, h: f64) -> Result<ReversibleChain> {
    if n < 1 {
        return Err(Error::InvalidInput("need at least one spin".into()));
    }
    let (log_z, w) = magnetization_log_weights(n, beta, h);
    let mu: Vec<f64> = w.iter().map(|x| (x - log_z).exp()).collect();
    let mut edges = Vec::with_capacity(2 * n);
    for k in 0..=n {
        let (up, down) = magnetization_rates(n, beta, h, k);
        if k < n {
            edges.push((k, k + 1, up));
        }
        if k > 0 {
            edges.push((k, k - 1, down));
        }
    }
    let ids = (0..=n).map(|k| k.to_string()).collect();
    ReversibleChain::from_edges(ids, &edges, Some(mu))
}

/// Series capacity `C(x,y)` of a birth–death chain between grid indices `x < y`.
pub fn cw_capacity_1d(chain: &ReversibleChain, x: usize, y: usize) -> Result<f64> {
    Ok(1.0 / resistance(chain, x, y)?)
}

fn resistance(chain: &ReversibleChain, x: usize, y: usize) -> Result<f64> {
    if !(x < y && y < chain.len()) {
        return Err(Error::InvalidInput(format!(
            "need x < y < {}, got ({x}, {y})",
            chain.len()
        )));
    }
    let mut total = 0.0;
    for k in x..y {
        let c = chain.conductance(k, k + 1);
        if c <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "no edge between {k} and {}",
                k + 1
            )));
        }
        total += 1.0 / c;
    }
    Ok(total)
}

/// Equilibrium potential `V(m) = P_m(τ_x < τ_y)` of a birth–death chain, `x < y`.
pub fn cw_potential_1d(chain: &ReversibleChain, x: usize, y: usize) -> Result<Vec<f64>> {
    let total = resistance(chain, x, y)?;
    let mut v = vec![0.0; chain.len()];
    for (m, vm) in v.iter_mut().enumerate() {
        *vm = if m <= x {
            1.0
        } else if m >= y {
            0.0
        } else {
            resistance(chain, m, y)? / total
        };
    }
    Ok(v)
}

/// Spectral gap of a birth–death chain on `0..n` by power iteration of its Green operator.
///
/// Functions are carried as increments `d(k) = g(k+1) − g(k)`. For centred
/// `g` the flux through edge `k` is `−(B(k) Σ_{m≤k} A(m)d(m) + A(k) Σ_{m>k} B(m)d(m))`
/// with `A(k) = μ([0,k])` and `B(k) = μ((k,n))`, so the Green operator acts
/// on increments without cancellation and tiny gaps keep full relative accuracy.
pub fn birth_death_gap(chain: &ReversibleChain) -> Result<f64> {
    let n = chain.len();
    if n < 2 {
        return Err(Error::InvalidInput("need at least two states".into()));
    }
    let mu = chain.mu();
    let edges = n - 1;
    let cond: Vec<f64> = (0..edges).map(|k| chain.conductance(k, k + 1)).collect();
    if cond.iter().any(|&c| !(c > 0.0)) {
        return Err(Error::InvalidInput(
            "not a birth-death chain on 0..n".into(),
        ));
    }
    let mut below = vec![0.0; edges];
    let mut acc = 0.0;
    for k in 0..edges {
        acc += mu[k];
        below[k] = acc;
    }
    let mut above = vec![0.0; edges];
    let mut acc = 0.0;
    for k in (0..edges).rev() {
        acc += mu[k + 1];
        above[k] = acc;
    }
    // Minus the flux of the centred function with increments `d`.
    let flux = |d: &[f64]| -> Vec<f64> {
        let mut tail = vec![0.0; edges + 1];
        for k in (0..edges).rev() {
            tail[k] = tail[k + 1] + above[k] * d[k];
        }
        let mut head = 0.0;
        (0..edges)
            .map(|k| {
                head += below[k] * d[k];
                above[k] * head + below[k] * tail[k + 1]
            })
            .collect()
    };
    let mut d = vec![1.0; edges];
    let mut previous = f64::NAN;
    for _ in 0..GREEN_ITERATIONS {
        let s = flux(&d);
        d = s.iter().zip(&cond).map(|(s, c)| s / c).collect();
        let scale = d.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        d.iter_mut().for_each(|x| *x /= scale);
        let energy: f64 = d.iter().zip(&cond).map(|(x, c)| c * x * x).sum();
        let variance: f64 = d.iter().zip(flux(&d)).map(|(x, s)| x * s).sum();
        let gap = energy / variance;
        if (gap - previous).abs() <= GREEN_TOL * gap {
            return Ok(gap);
        }
        previous = gap;
    }
    Err(Error::NoConvergence {
        iterations: GREEN_ITERATIONS,
    })
}

/// Leading-order values of the capacities, metastable mass and mean times.
#[derive(Clone, Debug, Serialize)]
pub struct CwAsymptotics {
    /// `C(m₋,m₀)` across the barrier from the metastable well.
    pub cap_exit: f64,
    /// `C(m₋,m₊)` between the two wells.
    pub cap_wells: f64,
    /// `μ̄(R̄)`.
    pub mu_r: f64,
    /// `E_{μ_R}[τ]` of the exit from `R̄`.
    pub exit_time: f64,
    /// Relaxation time `1/γ`.
    pub relaxation_time: f64,
}

pub fn cw_asymptotics(spec: &CurieWeissSpec) -> CwAsymptotics {
    let (beta, nf) = (spec.beta, spec.n as f64);
    let (log_z, _) = magnetization_log_weights(spec.n, beta, spec.h);
    let (m0, mm) = (spec.m_zero, spec.m_minus);
    let curv0 = spec.f_second(m0).abs();
    let curvm = spec.f_second(mm);
    let saddle = (-beta * nf * spec.f(m0) - log_z).exp();
    let cap_exit = ((1.0 - m0 * m0) * beta * curv0).sqrt() / (std::f64::consts::PI * nf) * saddle;
    let mu_r = (-beta * nf * spec.f(mm) - log_z).exp() / (beta * curvm * (1.0 - mm * mm)).sqrt();
    let exit_time = std::f64::consts::PI * nf * (beta * nf * spec.barrier()).exp()
        / (beta * (curv0 * curvm * (1.0 - m0 * m0) * (1.0 - mm * mm)).sqrt());
    CwAsymptotics {
        cap_exit,
        cap_wells: cap_exit / 2.0,
        mu_r,
        exit_time,
        relaxation_time: 2.0 * exit_time,
    }
}

/// Exact finite-`N` counterparts of [`CwAsymptotics`] on the magnetization chain.
#[derive(Clone, Debug, Serialize)]
pub struct CwExact {
    /// Series capacity from the grid point nearest `m₋` to the top of `R̄ = {m ≤ m₀}`.
    pub cap_exit: f64,
    /// Series capacity between the grid points nearest `m₋` and `m₊`.
    pub cap_wells: f64,
    pub mu_r: f64,
    /// `E_{μ_R}[τ_{X∖R}]` from the hitting-time linear system.
    pub exit_time: f64,
    pub relaxation_time: f64,
}

pub fn cw_exact(spec: &CurieWeissSpec, chain: &ReversibleChain) -> Result<CwExact> {
    if chain.len() != spec.n + 1 {
        return Err(Error::InvalidInput(
            "chain is not the magnetization chain of the spec".into(),
        ));
    }
    let km = spec.nearest(spec.m_minus);
    let kp = spec.nearest(spec.m_plus);
    let r = spec.metastable_set();
    let k0 = *r
        .last()
        .ok_or_else(|| Error::InvalidInput("metastable set is empty".into()))?;
    let outside: Vec<usize> = (r.len()..chain.len()).collect();
    let times = mean_hitting_times(chain, &outside)?;
    let mu = chain.mu();
    let mu_r: f64 = r.iter().map(|&k| mu[k]).sum();
    let exit_time = r.iter().map(|&k| mu[k] * times[k]).sum::<f64>() / mu_r;
    Ok(CwExact {
        cap_exit: cw_capacity_1d(chain, km, k0)?,
        cap_wells: cw_capacity_1d(chain, km, kp)?,
        mu_r,
        exit_time,
        relaxation_time: 1.0 / birth_death_gap(chain)?,
    })
}

/// Exact over leading-order ratios.
#[derive(Clone, Debug, Serialize)]
pub struct CwRatios {
    pub n: usize,
    pub cap_exit: f64,
    pub cap_wells: f64,
    pub mu_r: f64,
    pub exit_time: f64,
    /// Leading-order relaxation time over leading-order exit time.
    pub formula_relax_over_exit: f64,
    /// Exact `1/γ` over exact `E_{μ_R}[τ]`.
    pub exact_relax_over_exit: f64,
}

pub fn cw_ratios(asym: &CwAsymptotics, exact: &CwExact, n: usize) -> CwRatios {
    CwRatios {
        n,
        cap_exit: exact.cap_exit / asym.cap_exit,
        cap_wells: exact.cap_wells / asym.cap_wells,
        mu_r: exact.mu_r / asym.mu_r,
        exit_time: exact.exit_time / asym.exit_time,
        formula_relax_over_exit: asym.relaxation_time / asym.exit_time,
        exact_relax_over_exit: exact.relaxation_time / exact.exit_time,
    }
}
