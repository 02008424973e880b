//! Closed-form metastability bounds, each evaluated next to the exact
//! quantity it controls.
//!
//! Every evaluator returns [`BoundRecord`]s. A record is *applicable* when the
//! hypotheses of the bound hold for the chain at hand, and *holds* when the
//! exact value lies inside the bracket up to a relative slack of `1e-9`.
//! Correction factors are evaluated literally, never replaced by 1.
//!
//! Most evaluators take a [`Side`]: the data of a subset `R` together with a
//! killing rate `λ ∈ [0, ∞]`. With `λ = ∞` this is the quasi-stationary
//! picture of the hard exit from `R`; finite `λ` gives the same statements for
//! soft measures and transition times.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::capacity::solve_capacity;
use crate::chain::{mean_hitting_times, reflected_on, restrict, Restriction, ReversibleChain};
use crate::io::fmt_f64;
use crate::linalg::{self, total_variation, Backend};
use crate::rate::Rate;
use crate::soft::{build_soft_kernel, soft_qsd, SoftKernel, SoftQsd};
use crate::spectral::{self, conditioned_law, spectral_gap, survival, transient};
use crate::{Error, Result};

const SLACK: f64 = 1e-9;

#[derive(Clone, Debug, Serialize)]
pub struct BoundRecord {
    /// Which statement is checked.
    pub name: String,
    /// Free-form qualifier, e.g. the grid point.
    pub label: String,
    pub applicable: bool,
    pub exact: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub holds: bool,
    pub note: String,
    pub inputs: BTreeMap<String, f64>,
}

impl BoundRecord {
    fn new(name: &str, label: impl Into<String>, exact: f64) -> BoundRecord {
        BoundRecord {
            name: name.to_string(),
            label: label.into(),
            applicable: true,
            exact,
            lower: None,
            upper: None,
            holds: true,
            note: String::new(),
            inputs: BTreeMap::new(),
        }
    }

    fn lower(mut self, v: f64) -> Self {
        self.lower = Some(v);
        self
    }

    fn upper(mut self, v: f64) -> Self {
        self.upper = Some(v);
        self
    }

    fn input(mut self, key: &str, v: f64) -> Self {
        self.inputs.insert(key.to_string(), v);
        self
    }

    fn note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }

    fn applicable_if(mut self, cond: bool, why: &str) -> Self {
        if !cond {
            self.applicable = false;
            if self.note.is_empty() {
                self.note = why.to_string();
            }
        }
        self
    }

    /// Sets `holds` from the bracket. Inapplicable records always hold.
    fn settle(mut self) -> Self {
        let ok_low = self.lower.is_none_or(|l| within(l, self.exact));
        let ok_up = self.upper.is_none_or(|u| within(self.exact, u));
        self.holds = !self.applicable || (ok_low && ok_up);
        self
    }

    pub fn violated(&self) -> bool {
        self.applicable && !self.holds
    }

    /// `upper / lower` when both sides are finite and positive.
    pub fn tightness(&self) -> Option<f64> {
        match (self.lower, self.upper) {
            (Some(l), Some(u)) if l > 0.0 && u.is_finite() => Some(u / l),
            _ => None,
        }
    }
}

/// `a ≤ b` up to the relative slack.
fn within(a: f64, b: f64) -> bool {
    if a <= b {
        return true;
    }
    if !a.is_finite() || !b.is_finite() {
        return false;
    }
    // A bound of exactly zero is met by rounding-level values.
    a - b <= SLACK * a.abs().max(b.abs()) || (b == 0.0 && a.abs() <= 64.0 * f64::EPSILON)
}

fn recip(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        1.0 / x
    }
}

/// `ε ln(1/(ε z))`, continuous at `ε = 0`.
///
/// The term comes from optimizing a coupling time `ln(1/(ε z))/γ`, so it is
/// only available when that time is nonnegative, i.e. `ε z ≤ 1`.
fn eps_log(eps: f64, z: f64) -> Option<f64> {
    if eps == 0.0 {
        Some(0.0)
    } else if eps * z <= 1.0 {
        Some(eps * (1.0 / (eps * z)).ln())
    } else {
        None
    }
}

/// The correction `(1 + √(ε/(1−ε))) (1−ε)/(1−3ε)`.
pub fn mixing_brace(eps: f64) -> f64 {
    (1.0 + (eps / (1.0 - eps)).sqrt()) * (1.0 - eps) / (1.0 - 3.0 * eps)
}

/// A subset `R` seen through the killing rate `λ`.
#[derive(Clone, Debug)]
pub struct Side {
    pub rate: Rate,
    pub kernel: SoftKernel,
    pub q: SoftQsd,
    pub mu_r: Vec<f64>,
    /// `ζ_R = min μ_R`.
    pub zeta_r: f64,
    /// `α_{R,λ} = max e_{R,λ}`.
    pub alpha: f64,
    /// `μ(R)`.
    pub mass: f64,
}

impl Side {
    pub fn new(ctx: &Restriction<'_>, rate: Rate) -> Result<Side> {
        let kernel = build_soft_kernel(ctx, rate)?;
        let q = soft_qsd(&kernel, ctx)?;
        Ok(Side {
            rate,
            alpha: kernel.escape.iter().copied().fold(0.0, f64::max),
            zeta_r: ctx.mu_r().iter().copied().fold(f64::INFINITY, f64::min),
            mu_r: ctx.mu_r().to_vec(),
            mass: ctx.mass(),
            kernel,
            q,
        })
    }

    /// The hard-exit picture, `λ = ∞`.
    pub fn hard(ctx: &Restriction<'_>) -> Result<Side> {
        Side::new(ctx, Rate::Infinite)
    }

    pub fn eps(&self) -> f64 {
        self.q.eps_star
    }

    pub fn len(&self) -> usize {
        self.mu_r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu_r.is_empty()
    }

    /// `T*_δ = (1/γ) ln(2/(δ(1−δ)ζ*)) {brace}`.
    pub fn window(&self, delta: f64) -> Result<f64> {
        let eps = self.eps();
        if !(eps < 1.0 / 3.0) {
            return Err(Error::Inapplicable(format!(
                "eps* = {eps} is not below 1/3"
            )));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidInput(format!(
                "delta = {delta} must lie in (0,1)"
            )));
        }
        if self.q.gamma_soft.is_infinite() {
            return Ok(0.0);
        }
        Ok(
            (2.0 / (delta * (1.0 - delta) * self.q.zeta_star)).ln() / self.q.gamma_soft
                * mixing_brace(eps),
        )
    }

    /// `T* = T*_{ε*}`; infinite when `ε* = 0` on a non-trivial set.
    pub fn window_at_eps(&self) -> Result<f64> {
        let eps = self.eps();
        if self.q.gamma_soft.is_infinite() {
            return Ok(0.0);
        }
        if eps == 0.0 {
            return Ok(f64::INFINITY);
        }
        self.window(eps)
    }

    /// `E_x[τ]` for every `x ∈ R`, in local time on `R`.
    pub fn mean_exit_times(&self) -> Result<Vec<f64>> {
        if self.q.phi_star == 0.0 {
            return Ok(vec![f64::INFINITY; self.len()]);
        }
        let n = self.len();
        let all: Vec<usize> = (0..n).collect();
        // The escape goes in as an explicit killing rate on the folded kernel
        // so that the solver never sees it as a row deficit.
        let sol = linalg::solve_shifted(
            &self.kernel.p_soft,
            &self.mu_r,
            &all,
            &self.kernel.escape,
            &[vec![1.0; n]],
            Backend::Auto,
        )?;
        Ok(sol.into_iter().next().unwrap_or_default())
    }
}

fn tag(side: &Side) -> String {
    format!("rate={}", side.rate)
}

/// `Var_{μ_R}(h*) ≤ ε*/(1−ε*)` when `ε* < 1`.
pub fn density_variance(side: &Side) -> BoundRecord {
    let eps = side.eps();
    let var: f64 = side
        .mu_r
        .iter()
        .zip(&side.q.h_star)
        .map(|(m, h)| m * (h - 1.0).powi(2))
        .sum();
    let rec = BoundRecord::new("density-variance", tag(side), var).input("eps", eps);
    if eps < 1.0 {
        rec.upper(eps / (1.0 - eps)).settle()
    } else {
        rec.applicable_if(false, "eps* >= 1").settle()
    }
}

/// `1/γ*_R ≤ (1/γ_R)(1−ε*)/(1−3ε*)` when `ε* < 1/3`.
pub fn killed_gap(side: &Side) -> BoundRecord {
    let eps = side.eps();
    let rec = BoundRecord::new("killed-gap", tag(side), recip(side.q.gamma_star_soft))
        .input("eps", eps)
        .input("gamma", side.q.gamma_soft);
    if eps < 1.0 / 3.0 {
        rec.upper(recip(side.q.gamma_soft) * (1.0 - eps) / (1.0 - 3.0 * eps))
            .settle()
    } else {
        rec.applicable_if(false, "eps* >= 1/3").settle()
    }
}

/// `Δ` and the smallest `k` with `p^k > 0` entrywise, for a kernel with
/// positive diagonal. `None` when no power up to the size is positive.
pub fn diameter_data(kernel: &sprs::CsMat<f64>) -> (f64, Option<usize>) {
    let n = kernel.rows();
    let mut delta: f64 = 0.0;
    let mut adj = vec![Vec::new(); n];
    for (x, row) in kernel.outer_iterator().enumerate() {
        for (y, &p) in row.iter() {
            if p > 0.0 {
                delta = delta.max(-p.ln());
                adj[x].push(y);
            }
        }
    }
    // reach[x] = states reachable from x in exactly k steps (monotone in k with self-loops)
    let mut reach: Vec<Vec<bool>> = (0..n).map(|x| (0..n).map(|y| x == y).collect()).collect();
    for k in 0..=n {
        if reach.iter().all(|r| r.iter().all(|&b| b)) {
            return (delta, Some(k));
        }
        let next: Vec<Vec<bool>> = reach
            .iter()
            .map(|r| {
                let mut out = vec![false; n];
                for (y, &on) in r.iter().enumerate() {
                    if on {
                        for &z in &adj[y] {
                            out[z] = true;
                        }
                    }
                }
                out
            })
            .collect();
        reach = next;
    }
    (delta, None)
}

/// Bounds on the smallest atom `ζ* = min μ_R h*²` of the biased measure.
pub fn smallest_atom(ctx: &Restriction<'_>, side: &Side) -> Vec<BoundRecord> {
    let eps = side.eps();
    let zeta = side.q.zeta_star;
    let exact = (1.0 / zeta).ln();
    let mut out = Vec::new();

    let crude = {
        let log_term = (4.0 * eps / ((1.0 - eps) * side.zeta_r)).ln().max(0.0);
        (4.0 / side.zeta_r).ln()
            + side.alpha * recip(side.q.gamma_soft) * if eps == 0.0 { 0.0 } else { log_term }
    };
    out.push(
        BoundRecord::new("smallest-atom-crude", tag(side), exact)
            .upper(crude)
            .input("zeta_r", side.zeta_r)
            .input("alpha", side.alpha)
            .applicable_if(eps < 1.0, "eps* >= 1")
            .settle(),
    );

    let diag_positive = (0..side.len()).all(|x| linalg::entry(&side.kernel.p_star, x, x) > 0.0);
    let (delta, diam) = diameter_data(&side.kernel.p_soft);
    let min_qsd = side.q.mu_star.iter().copied().fold(f64::INFINITY, f64::min);
    let printed_middle = (1.0 / (side.zeta_r * side.zeta_r)).ln();
    let mut rec = BoundRecord::new("smallest-atom-paths", tag(side), exact)
        .input("delta_r", delta)
        .input("min_mu_star", min_qsd)
        .input("ln_inv_min_mu_r_sq", printed_middle);
    match diam {
        Some(d) => {
            rec = rec
                .upper((1.0 / (min_qsd * min_qsd)).ln().min(2.0 * delta * d as f64))
                .input("d_r", d as f64)
                .input("two_delta_d", 2.0 * delta * d as f64)
                .note("middle term evaluated with the quasi-stationary measure");
        }
        None => rec = rec.applicable_if(false, "no positive power of the kernel"),
    }
    out.push(
        rec.applicable_if(diag_positive, "a state of R has no self-loop")
            .settle(),
    );

    let border = ctx.border();
    if !border.is_empty() && side.rate.is_infinite() {
        let min_h = border
            .iter()
            .map(|&x| side.q.h_star[x])
            .fold(f64::INFINITY, f64::min);
        out.push(
            BoundRecord::new("smallest-atom-border", tag(side), zeta)
                .lower(side.zeta_r * min_h * min_h)
                .input("min_h_border", min_h)
                .settle(),
        );
        if border.len() == 1 {
            let ratio = side.q.phi_star / side.q.phi_soft;
            out.push(
                BoundRecord::new("smallest-atom-single-border", tag(side), zeta)
                    .lower(side.zeta_r * ratio * ratio)
                    .input("phi_ratio", ratio)
                    .settle(),
            );
        }
        let argmin = (0..side.len())
            .min_by(|&a, &b| side.q.h_star[a].total_cmp(&side.q.h_star[b]))
            .unwrap_or(0);
        let min_all = side.q.h_star[argmin];
        out.push(
            BoundRecord::new("density-minimum-on-border", tag(side), min_all)
                .lower(
                    border
                        .iter()
                        .map(|&x| side.q.h_star[x])
                        .fold(f64::INFINITY, f64::min),
                )
                .note("the density attains its minimum on the internal border")
                .settle(),
        );
    }
    out
}

/// The mixing window and its check: for `t > T*_δ`,
/// `|P_x(X(t)=y | τ>t) / μ*(y) − 1| < δ` for all `x, y ∈ R`.
pub fn pointwise_mixing(side: &Side, delta: f64, factor: f64) -> Result<BoundRecord> {
    let t_star = side.window(delta)?;
    let t = factor * t_star;
    let n = side.len();
    let mut worst: f64 = 0.0;
    for x in 0..n {
        let mut start = vec![0.0; n];
        start[x] = 1.0;
        let (law, _) = conditioned_law(&side.kernel.p_star, &start, t)?;
        for (l, m) in law.iter().zip(&side.q.mu_star) {
            worst = worst.max((l / m - 1.0).abs());
        }
    }
    Ok(BoundRecord::new(
        "pointwise-mixing",
        format!("{} delta={}", tag(side), fmt_f64(delta)),
        worst,
    )
    .upper(delta)
    .input("t_star_delta", t_star)
    .input("t", t)
    .settle())
}

/// `φ* T* ≤ ε ln(3/(ε ζ*)) {brace}`.
pub fn window_product(side: &Side) -> BoundRecord {
    let eps = side.eps();
    let rec = BoundRecord::new("window-product", tag(side), f64::NAN);
    if !(eps < 1.0 / 3.0) || eps == 0.0 {
        let mut r = rec.applicable_if(false, "eps* is zero or not below 1/3");
        r.exact = 0.0;
        return r.settle();
    }
    let t_star = side.window(eps).unwrap_or(f64::NAN);
    let mut r = rec
        .upper(eps * (3.0 / (eps * side.q.zeta_star)).ln() * mixing_brace(eps))
        .input("t_star", t_star)
        .input("phi_star", side.q.phi_star);
    r.exact = side.q.phi_star * t_star;
    r.settle()
}

/// `π(ν) = P_ν(τ < T*)`, computed exactly.
pub fn early_exit_probability(side: &Side, nu: &[f64]) -> Result<f64> {
    let t_star = side.window_at_eps()?;
    if t_star.is_infinite() {
        return Ok(0.0);
    }
    Ok(1.0 - survival(&side.kernel.p_star, nu, t_star))
}

/// Envelopes of the exit law: for `t ≥ φ*T*`,
/// `(1−π) e^{−t} e^{φ*T*}(1−ε) ≤ P_ν(τ > t/φ*) ≤ (1−π) e^{−t} e^{φ*T*}(1+ε)`.
pub fn exit_envelopes(side: &Side, nu: &[f64], grid: &[f64]) -> Result<Vec<BoundRecord>> {
    let eps = side.eps();
    let phi = side.q.phi_star;
    if !(eps < 1.0 / 3.0) {
        return Ok(vec![BoundRecord::new("exit-envelope", tag(side), f64::NAN)
            .applicable_if(false, "eps* >= 1/3")
            .settle()]);
    }
    let t_star = side.window_at_eps()?;
    let pi = early_exit_probability(side, nu)?;
    let product = phi * t_star;
    let mut out = Vec::with_capacity(grid.len());
    for &t in grid {
        let exact = survival(&side.kernel.p_star, nu, t / phi);
        let base = (1.0 - pi) * (-t).exp() * product.exp();
        out.push(
            BoundRecord::new(
                "exit-envelope",
                format!("{} t={}", tag(side), fmt_f64(t)),
                exact,
            )
            .lower(base * (1.0 - eps))
            .upper(base * (1.0 + eps))
            .input("pi", pi)
            .input("phi_t_star", product)
            .applicable_if(t >= product, "t below phi* T*")
            .settle(),
        );
    }
    Ok(out)
}

/// `π(μ_R) ≤ ½√(ε/(1−ε)) + φ*T*`.
pub fn restricted_start_early_exit(side: &Side) -> Result<BoundRecord> {
    let eps = side.eps();
    if !(eps < 1.0 / 3.0) {
        return Ok(
            BoundRecord::new("restricted-start-early-exit", tag(side), f64::NAN)
                .applicable_if(false, "eps* >= 1/3")
                .settle(),
        );
    }
    let t_star = side.window_at_eps()?;
    let pi = early_exit_probability(side, &side.mu_r)?;
    let phi_t = if t_star.is_infinite() {
        0.0
    } else {
        side.q.phi_star * t_star
    };
    Ok(
        BoundRecord::new("restricted-start-early-exit", tag(side), pi)
            .upper(0.5 * (eps / (1.0 - eps)).sqrt() + phi_t)
            .input("t_star", t_star)
            .settle(),
    )
}

/// Mean exit time from `ν` against the coupling bound at time `t` and
/// its optimized form `(1/φ*){1 + ε + ε ln(1/(ε ζ_R))}`.
pub fn mean_exit_from(side: &Side, nu: &[f64], label: &str) -> Result<Vec<BoundRecord>> {
    let eps = side.eps();
    let phi = side.q.phi_star;
    let times = side.mean_exit_times()?;
    let exact: f64 = nu.iter().zip(&times).map(|(a, b)| a * b).sum();
    let from_mu_r: f64 = side.mu_r.iter().zip(&times).map(|(a, b)| a * b).sum();
    let gamma = side.q.gamma_soft;
    let t = if gamma.is_infinite() || eps == 0.0 {
        0.0
    } else {
        (1.0 / (eps * side.zeta_r)).ln().max(0.0) / gamma
    };
    let coupling = t + (1.0 + (-gamma * t).exp() / side.zeta_r) * from_mu_r;
    let coupling = if gamma.is_infinite() {
        from_mu_r
    } else {
        coupling
    };
    let lab = format!("{} from={label}", tag(side));
    Ok(vec![
        BoundRecord::new("mean-exit-coupling", lab.clone(), exact)
            .upper(coupling)
            .input("t", t)
            .input("mean_from_mu_r", from_mu_r)
            .settle(),
        match eps_log(eps, side.zeta_r) {
            Some(l) => BoundRecord::new("mean-exit-optimized", lab, exact)
                .upper((1.0 + eps + l) / phi)
                .settle(),
            None => BoundRecord::new("mean-exit-optimized", lab, exact)
                .applicable_if(false, "eps* zeta_R > 1")
                .settle(),
        },
    ])
}

/// `φ*_R ≤ 1/E_{μ_R}[τ] ≤ φ_R`.
pub fn exit_rate_sandwich(side: &Side) -> Result<BoundRecord> {
    let times = side.mean_exit_times()?;
    let mean: f64 = side.mu_r.iter().zip(&times).map(|(a, b)| a * b).sum();
    Ok(
        BoundRecord::new("exit-rate-sandwich", tag(side), 1.0 / mean)
            .lower(side.q.phi_star)
            .upper(side.q.phi_soft)
            .settle(),
    )
}

/// Exit rate from capacities:
/// `(C_κ/μ(R)){1 − ε − κ/γ_R} ≤ φ*_R ≤ (C_κ/μ(R)){1 − C_κ/(κμ(R))}⁻²`.
pub fn exit_rate_bracket(
    chain: &ReversibleChain,
    ctx: &Restriction<'_>,
    side: &Side,
    kappa: f64,
) -> Result<BoundRecord> {
    let cap = solve_capacity(
        chain,
        ctx.members(),
        ctx.complement(),
        Rate::Finite(kappa),
        Rate::Infinite,
    )?;
    let mass = ctx.mass();
    let c = cap.value / mass;
    let eps = side.eps();
    let lower = c * (1.0 - eps - kappa * recip(side.q.gamma_soft));
    let upper = c / (1.0 - cap.value / (kappa * mass)).powi(2);
    Ok(BoundRecord::new(
        "exit-rate-bracket",
        format!("kappa={}", fmt_f64(kappa)),
        side.q.phi_star,
    )
    .lower(lower)
    .upper(upper)
    .input("capacity", cap.value)
    .input("kappa", kappa)
    .settle())
}

/// Inputs shared by the two-sided bounds built on `(κ,λ)`-capacities between
/// `R` and its complement.
#[derive(Clone, Debug, Serialize)]
pub struct CapacityTriple {
    /// `C_κ^λ(R, X∖R)`.
    pub both: f64,
    /// `C_κ(R, X∖R)`, i.e. `λ = ∞`.
    pub kappa_only: f64,
    /// `C^λ(R, X∖R)`, i.e. `κ = ∞`.
    pub lambda_only: f64,
    /// `φ_κ^λ = C_κ^λ / (μ(R) μ(X∖R))`.
    pub phi: f64,
}

pub fn capacity_triple(
    chain: &ReversibleChain,
    ctx: &Restriction<'_>,
    kappa: f64,
    lambda: f64,
) -> Result<CapacityTriple> {
    let (r, c) = (ctx.members(), ctx.complement());
    let both = solve_capacity(chain, r, c, Rate::Finite(kappa), Rate::Finite(lambda))?;
    let kappa_only = solve_capacity(chain, r, c, Rate::Finite(kappa), Rate::Infinite)?.value;
    let lambda_only = solve_capacity(chain, r, c, Rate::Infinite, Rate::Finite(lambda))?.value;
    Ok(CapacityTriple {
        both: both.value,
        kappa_only,
        lambda_only,
        phi: both.phi_rate,
    })
}

/// Relaxation time from capacities:
///
/// ```text
/// 1/γ ≥ (1/φ_κ^λ){1 − C_κ/(κμ(R)) − C^λ/(λμ(X∖R))}²
/// 1/γ ≤ (1/φ_κ^λ){1 + max((κ+φ_κ^λ)/γ_R, (λ+φ_κ^λ)/γ_{X∖R})}
/// ```
///
/// A negative inner brace makes the lower bound vacuous; it is then dropped.
pub fn relaxation_bracket(
    chain: &ReversibleChain,
    ctx: &Restriction<'_>,
    gamma: f64,
    kappa: f64,
    lambda: f64,
) -> Result<BoundRecord> {
    let mass = ctx.mass();
    let t = capacity_triple(chain, ctx, kappa, lambda)?;
    let gamma_r = spectral::kernel_gap(ctx.reflected(), ctx.mu_r(), Default::default())?;
    let cctx = ctx.complement_restriction()?;
    let gamma_c = spectral::kernel_gap(cctx.reflected(), cctx.mu_r(), Default::default())?;
    let inner = 1.0 - t.kappa_only / (kappa * mass) - t.lambda_only / (lambda * (1.0 - mass));
    let upper =
        (1.0 + ((kappa + t.phi) * recip(gamma_r)).max((lambda + t.phi) * recip(gamma_c))) / t.phi;
    let mut rec = BoundRecord::new(
        "relaxation-bracket",
        format!("kappa={} lambda={}", fmt_f64(kappa), fmt_f64(lambda)),
        1.0 / gamma,
    )
    .upper(upper)
    .input("phi_kappa_lambda", t.phi)
    .input("capacity", t.both)
    .input("capacity_kappa", t.kappa_only)
    .input("capacity_lambda", t.lambda_only)
    .input("gamma_r", gamma_r)
    .input("gamma_c", gamma_c)
    .input("inner", inner);
    if inner > 0.0 {
        rec = rec.lower(inner * inner / t.phi);
    } else {
        rec = rec.note("lower bound vacuous");
    }
    Ok(rec.settle())
}

/// The relaxation-time upper bound for a partition into blocks `R_i` with
/// rates `κ_i`, with `φ(i,j) = C_{κ_i}^{κ_j}(R_i,R_j)/(μ(R_i)μ(R_j))`:
///
/// ```text
/// 1/γ ≤ S {1 + max_i (1/γ_i){1 + Σ_{j≠i} κ_i/φ(i,j)} / S},   S = Σ_{i<j} 1/φ(i,j)
/// ```
pub fn partition_relaxation(
    chain: &ReversibleChain,
    blocks: &[Vec<usize>],
    kappas: &[f64],
) -> Result<BoundRecord> {
    let n = chain.len();
    if blocks.len() < 2 || blocks.len() != kappas.len() {
        return Err(Error::BadPartition(
            "need at least two blocks, one rate per block".into(),
        ));
    }
    let mut seen = vec![false; n];
    for b in blocks {
        if b.is_empty() {
            return Err(Error::BadPartition("empty block".into()));
        }
        for &x in b {
            if x >= n || seen[x] {
                return Err(Error::BadPartition(format!(
                    "state {x} is out of range or repeated"
                )));
            }
            seen[x] = true;
        }
    }
    if seen.iter().any(|&s| !s) {
        return Err(Error::BadPartition(
            "blocks do not cover the state space".into(),
        ));
    }
    if kappas.iter().any(|&k| !(k > 0.0) || !k.is_finite()) {
        return Err(Error::BadPartition(
            "rates must be finite and positive".into(),
        ));
    }
    let m = blocks.len();
    let mut gammas = Vec::with_capacity(m);
    for b in blocks {
        let (kernel, m) = reflected_on(chain, b).map_err(|e| Error::BadPartition(e.to_string()))?;
        gammas.push(spectral::kernel_gap(&kernel, &m, Default::default())?);
    }
    let mut inv_phi = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in (i + 1)..m {
            let cap = solve_capacity(
                chain,
                &blocks[i],
                &blocks[j],
                Rate::Finite(kappas[i]),
                Rate::Finite(kappas[j]),
            )?;
            inv_phi[i][j] = 1.0 / cap.phi_rate;
            inv_phi[j][i] = inv_phi[i][j];
        }
    }
    let s: f64 = (0..m)
        .flat_map(|i| ((i + 1)..m).map(move |j| (i, j)))
        .map(|(i, j)| inv_phi[i][j])
        .sum();
    let worst = (0..m)
        .map(|i| {
            recip(gammas[i])
                * (1.0
                    + (0..m)
                        .filter(|&j| j != i)
                        .map(|j| kappas[i] * inv_phi[i][j])
                        .sum::<f64>())
        })
        .fold(0.0, f64::max);
    let gamma = spectral_gap(chain)?;
    Ok(
        BoundRecord::new("partition-relaxation", format!("blocks={m}"), 1.0 / gamma)
            .upper(s * (1.0 + worst / s))
            .input("sum_inverse_phi", s)
            .input("block_term", worst)
            .settle(),
    )
}

/// Transition rate from capacities, with `φ* = φ*_{R,λ}`, `ε = ε*_{R,λ}`:
///
/// ```text
/// φ* ≥ (C_κ^λ/μ(R)) {(1 − μ(R) − 2φ*/λ)/(1 − μ(R))} {1 − max((κ+φ_κ^λ)/γ_R, (λ+φ_κ^λ)/γ_{X∖R})}
/// φ* ≤ (C_κ^λ/μ(R)) {1 + ε + ε ln(1/(ε ζ_R)) + φ*/κ}
/// ```
pub fn transition_rate_bracket(
    chain: &ReversibleChain,
    ctx: &Restriction<'_>,
    kappa: f64,
    lambda: f64,
) -> Result<BoundRecord> {
    let side = Side::new(ctx, Rate::Finite(lambda))?;
    let t = capacity_triple(chain, ctx, kappa, lambda)?;
    let gamma_r = spectral::kernel_gap(ctx.reflected(), ctx.mu_r(), Default::default())?;
    let cctx = ctx.complement_restriction()?;
    let gamma_c = spectral::kernel_gap(cctx.reflected(), cctx.mu_r(), Default::default())?;
    let mass = ctx.mass();
    let phi = side.q.phi_star;
    let eps = side.eps();
    let base = t.both / mass;
    let first = (1.0 - mass - 2.0 * phi / lambda) / (1.0 - mass);
    let second = 1.0 - ((kappa + t.phi) * recip(gamma_r)).max((lambda + t.phi) * recip(gamma_c));
    let mut rec = BoundRecord::new(
        "transition-rate-bracket",
        format!("kappa={} lambda={}", fmt_f64(kappa), fmt_f64(lambda)),
        phi,
    )
    .input("capacity", t.both)
    .input("eps", eps)
    .input("first_brace", first)
    .input("second_brace", second);
    match eps_log(eps, side.zeta_r) {
        Some(l) => rec = rec.upper(base * (1.0 + eps + l + phi / kappa)),
        None => rec = rec.note("upper bound vacuous"),
    }
    // Two negative braces would multiply to a meaningless positive value.
    if first > 0.0 && second > 0.0 {
        rec = rec.lower(base * first * second);
    } else if rec.note.is_empty() {
        rec = rec.note("lower bound vacuous");
    } else {
        rec = rec.note("both bounds vacuous");
    }
    Ok(rec.settle())
}

/// `ν_x`, the law of `X(𝒯)` with `𝒯 = ℓ_{X∖R}⁻¹(σ_λ)`, for every start `x`.
///
/// Killing at rate `λ` while outside `R` and recording where the kill happens:
/// `ν_x(y) = λ 1_{y∉R} [(I − P + λ 1_{X∖R})⁻¹](x,y)`, obtained through
/// reversibility from one solve per start.
pub fn end_laws(
    chain: &ReversibleChain,
    ctx: &Restriction<'_>,
    lambda: f64,
) -> Result<Vec<Vec<f64>>> {
    let n = chain.len();
    let mu = chain.mu();
    let all: Vec<usize> = (0..n).collect();
    let extra: Vec<f64> = (0..n)
        .map(|x| if ctx.contains(x) { 0.0 } else { lambda })
        .collect();
    let rhs: Vec<Vec<f64>> = (0..n)
        .map(|x| {
            let mut b = vec![0.0; n];
            b[x] = 1.0 / mu[x];
            b
        })
        .collect();
    let sols = linalg::solve_shifted(chain.kernel(), mu, &all, &extra, &rhs, Backend::Auto)?;
    Ok(sols
        .into_iter()
        .map(|w| {
            (0..n)
                .map(|y| {
                    if ctx.contains(y) {
                        0.0
                    } else {
                        lambda * mu[y] * w[y]
                    }
                })
                .collect()
        })
        .collect())
}

/// `max_x ‖P_x(X(t) = ·) − μ‖_TV`.
pub fn worst_distance(chain: &ReversibleChain, t: f64) -> f64 {
    let n = chain.len();
    (0..n)
        .map(|x| {
            let mut start = vec![0.0; n];
            start[x] = 1.0;
            total_variation(&transient(chain.kernel(), &start, t), chain.mu())
        })
        .fold(0.0, f64::max)
}

/// Smallest `t` with `max_x ‖P_x(X(t)) − μ‖_TV ≤ threshold`, by bisection
/// on the nonincreasing worst-case distance.
pub fn mixing_time(chain: &ReversibleChain, threshold: f64) -> Result<f64> {
    if worst_distance(chain, 0.0) <= threshold {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    while worst_distance(chain, hi) > threshold {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::NoConvergence { iterations: 40 });
        }
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if worst_distance(chain, mid) > threshold {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-10 * hi {
            break;
        }
    }
    Ok(hi)
}

#[derive(Clone, Debug, Serialize)]
pub struct MixingReport {
    /// `ε*_{X∖R,κ}`.
    pub eps_c: f64,
    /// `T*_{X∖R,κ}`.
    pub t_star_c: f64,
    /// `η = μ(R) + 2(√(ε/(1−ε)) + λT*)`.
    pub eta: f64,
    /// Exact mixing time at threshold `½(η + ½)`, when computed.
    pub t_mix: Option<f64>,
    pub records: Vec<BoundRecord>,
}

/// End laws at the true-escape time and the mixing time.
///
/// The bound on the distance from `ν_x` to the complement is checked against
/// the soft measure `μ*_{X∖R,κ}` of the complement; the distance to
/// `μ_{X∖R}` is reported alongside.
pub fn mixing_report(
    chain: &ReversibleChain,
    ctx: &Restriction<'_>,
    kappa: f64,
    lambda: f64,
    exact_t_mix: bool,
) -> Result<MixingReport> {
    let cctx = ctx.complement_restriction()?;
    let cside = Side::new(&cctx, Rate::Finite(kappa))?;
    let rside = Side::new(ctx, Rate::Finite(lambda))?;
    let eps_c = cside.eps();
    let label = format!("kappa={} lambda={}", fmt_f64(kappa), fmt_f64(lambda));
    let mut records = Vec::new();
    if !(eps_c < 1.0 / 3.0) {
        records.push(
            BoundRecord::new("end-law-complement", label, f64::NAN)
                .applicable_if(false, "eps* of the complement >= 1/3")
                .settle(),
        );
        return Ok(MixingReport {
            eps_c,
            t_star_c: f64::NAN,
            eta: f64::NAN,
            t_mix: None,
            records,
        });
    }
    let t_star_c = cside.window_at_eps()?;
    let mass = ctx.mass();
    let root = (eps_c / (1.0 - eps_c)).sqrt();
    let laws = end_laws(chain, ctx, lambda)?;
    let lift = |local: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; chain.len()];
        for (i, &x) in cctx.members().iter().enumerate() {
            out[x] = local[i];
        }
        out
    };
    let soft_c = lift(&cside.q.mu_star);
    let restricted_c = lift(cctx.mu_r());
    let (mut to_soft, mut to_restricted, mut to_mu) = (0.0f64, 0.0f64, 0.0f64);
    for nu in &laws {
        to_soft = to_soft.max(total_variation(nu, &soft_c));
        to_restricted = to_restricted.max(total_variation(nu, &restricted_c));
        to_mu = to_mu.max(total_variation(nu, chain.mu()));
    }
    let lt = lambda * t_star_c;
    records.push(
        BoundRecord::new("end-law-complement", label.clone(), to_soft)
            .upper(0.5 * eps_c + lt)
            .input("tv_to_restricted_complement", to_restricted)
            .input("t_star_c", t_star_c)
            .note("distance measured to the soft measure of the complement")
            .settle(),
    );
    records.push(
        BoundRecord::new("end-law-equilibrium", label.clone(), to_mu)
            .upper(mass + root + lt)
            .settle(),
    );
    let eta = mass + 2.0 * (root + lt);
    let eps_r = rside.eps();
    let log_term = eps_log(eps_r, rside.zeta_r);
    let mut t_mix = None;
    let mut rec = BoundRecord::new("mixing-time", label, f64::NAN).input("eta", eta);
    if let Some(l) = log_term {
        rec = rec.upper(
            2.0 / (rside.q.phi_star * (0.5 - mass)) * (1.0 + eps_r + l + rside.q.phi_star / lambda),
        );
    }
    if eta < 0.5 {
        if exact_t_mix {
            let t = mixing_time(chain, 0.5 * (eta + 0.5))?;
            t_mix = Some(t);
            rec.exact = t;
        } else {
            rec = rec.applicable_if(false, "exact mixing time not computed");
        }
    } else {
        rec = rec.applicable_if(false, "eta >= 1/2");
    }
    rec = rec.applicable_if(log_term.is_some(), "eps* zeta_R > 1");
    records.push(rec.settle());
    Ok(MixingReport {
        eps_c,
        t_star_c,
        eta,
        t_mix,
        records,
    })
}

/// Inputs of the thermalization tail bound.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Thermalization {
    pub kappa: f64,
    pub lambda: f64,
    /// `T*_{δ,R,λ}`.
    pub window_r: f64,
    /// `T*_{δ,X∖R,κ}`.
    pub window_c: f64,
    /// `ξ = max(e^{κT_R} − 1, e^{λT_C} − 1)`.
    pub xi: f64,
}

impl Thermalization {
    /// `P(τ_δ > t(1/κ + 1/λ)) ≤ e^{−t}/(1 − ξ)`.
    pub fn tail(&self, t: f64) -> f64 {
        (-t).exp() / (1.0 - self.xi)
    }

    /// The time unit `1/κ + 1/λ`.
    pub fn scale(&self) -> f64 {
        1.0 / self.kappa + 1.0 / self.lambda
    }
}

pub fn thermalization_envelope(
    kappa: f64,
    lambda: f64,
    window_r: f64,
    window_c: f64,
) -> Result<Thermalization> {
    let xi = ((kappa * window_r).exp_m1()).max((lambda * window_c).exp_m1());
    if !(xi < 1.0) {
        return Err(Error::XiTooLarge { xi });
    }
    Ok(Thermalization {
        kappa,
        lambda,
        window_r,
        window_c,
        xi,
    })
}

/// Tail bound for `Σ_{i≤N} σ_i` with `σ_i ~ Exp(κ)` i.i.d. and `N` the first
/// index with `σ_i > T`: `P(Σ > t/κ) ≤ e^{−t}/(1 − (e^{κT} − 1))`.
pub fn stopped_sum_tail(kappa: f64, window: f64, t: f64) -> Result<f64> {
    let xi = (kappa * window).exp_m1();
    if !(xi < 1.0) {
        return Err(Error::XiTooLarge { xi });
    }
    Ok((-t).exp() / (1.0 - xi))
}

/// Windows for the thermalization experiment on `R` and its complement.
pub fn thermalization_windows(
    ctx: &Restriction<'_>,
    kappa: f64,
    lambda: f64,
    delta: f64,
) -> Result<(Side, Side, Thermalization)> {
    let rside = Side::new(ctx, Rate::Finite(lambda))?;
    let cctx = ctx.complement_restriction()?;
    let cside = Side::new(&cctx, Rate::Finite(kappa))?;
    let env = thermalization_envelope(kappa, lambda, rside.window(delta)?, cside.window(delta)?)?;
    Ok((rside, cside, env))
}

/// Knobs of a full report.
#[derive(Clone, Debug)]
pub struct ReportConfig {
    pub kappas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub delta: f64,
    /// Grid of rescaled times for the exit-law envelopes.
    pub times: Vec<f64>,
    /// Exact pointwise and mixing-time checks run only up to this many states.
    pub exact_limit: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            kappas: Vec::new(),
            lambdas: Vec::new(),
            delta: 0.1,
            times: vec![0.5, 1.0, 2.0, 4.0],
            exact_limit: 200,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundsReport {
    pub gamma: f64,
    pub qsd: crate::QsdData,
    pub zeta_r: f64,
    pub alpha_r: f64,
    pub delta_r: f64,
    pub d_r: Option<usize>,
    pub t_star_delta: Option<f64>,
    pub t_star: Option<f64>,
    pub pi_mu_r: Option<f64>,
    pub records: Vec<BoundRecord>,
}

impl BoundsReport {
    pub fn violations(&self) -> impl Iterator<Item = &BoundRecord> {
        self.records.iter().filter(|r| r.violated())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per record.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<30} {:<32} {:>24} {:>24} {:>24}  status",
            "bound", "label", "lower", "exact", "upper"
        );
        let show = |v: Option<f64>| v.map_or_else(|| "-".to_string(), fmt_f64);
        for r in &self.records {
            let status = if !r.applicable {
                "n/a"
            } else if r.holds {
                "holds"
            } else {
                "VIOLATED"
            };
            let _ = writeln!(
                out,
                "{:<30} {:<32} {:>24} {:>24} {:>24}  {}",
                r.name,
                r.label,
                show(r.lower),
                fmt_f64(r.exact),
                show(r.upper),
                status
            );
        }
        out
    }
}

/// Evaluates every bound for `R` on the grids of `cfg`.
pub fn bounds_report(
    chain: &ReversibleChain,
    r: &[usize],
    cfg: &ReportConfig,
) -> Result<BoundsReport> {
    let ctx = restrict(chain, r)?;
    let gamma = spectral_gap(chain)?;
    let hard = Side::hard(&ctx)?;
    let small = chain.len() <= cfg.exact_limit;
    let mut records = vec![
        density_variance(&hard),
        killed_gap(&hard),
        exit_rate_sandwich(&hard)?,
    ];
    records.extend(smallest_atom(&ctx, &hard));
    records.push(window_product(&hard));
    let eps = hard.eps();
    let (mut t_star_delta, mut t_star, mut pi_mu_r) = (None, None, None);
    if eps < 1.0 / 3.0 {
        t_star_delta = Some(hard.window(cfg.delta)?);
        t_star = Some(hard.window_at_eps()?);
        pi_mu_r = Some(early_exit_probability(&hard, &hard.mu_r)?);
        if small {
            records.push(pointwise_mixing(&hard, cfg.delta, 1.01)?);
        }
        records.extend(exit_envelopes(&hard, &hard.mu_r, &cfg.times)?);
        let qsd_start = hard.q.mu_star.clone();
        records.extend(exit_envelopes(&hard, &qsd_start, &cfg.times)?);
        records.push(restricted_start_early_exit(&hard)?);
    }
    records.extend(mean_exit_from(&hard, &hard.mu_r, "restricted")?);
    for &kappa in &cfg.kappas {
        records.push(exit_rate_bracket(chain, &ctx, &hard, kappa)?);
    }
    for &kappa in &cfg.kappas {
        for &lambda in &cfg.lambdas {
            records.push(relaxation_bracket(chain, &ctx, gamma, kappa, lambda)?);
            records.push(transition_rate_bracket(chain, &ctx, kappa, lambda)?);
            records.extend(mixing_report(chain, &ctx, kappa, lambda, small)?.records);
        }
    }
    for &lambda in &cfg.lambdas {
        let soft = Side::new(&ctx, Rate::Finite(lambda))?;
        records.push(density_variance(&soft));
        records.push(killed_gap(&soft));
        records.push(window_product(&soft));
        records.extend(smallest_atom(&ctx, &soft));
        records.push(
            BoundRecord::new("soft-ordering", tag(&soft), soft.q.phi_star)
                .upper(hard.q.phi_star)
                .input("gamma_soft", soft.q.gamma_soft)
                .input("gamma_hard", hard.q.gamma_soft)
                .settle(),
        );
        if soft.eps() < 1.0 / 3.0 && soft.eps() > 0.0 {
            if small {
                records.push(pointwise_mixing(&soft, cfg.delta, 1.01)?);
            }
            records.extend(exit_envelopes(&soft, &soft.mu_r, &cfg.times)?);
            records.push(restricted_start_early_exit(&soft)?);
            records.extend(mean_exit_from(&soft, &soft.mu_r, "restricted")?);
        }
    }
    let (delta_r, d_r) = diameter_data(ctx.reflected());
    Ok(BoundsReport {
        gamma,
        zeta_r: hard.zeta_r,
        alpha_r: hard.alpha,
        delta_r,
        d_r,
        t_star_delta,
        t_star,
        pi_mu_r,
        qsd: spectral::qsd(&ctx)?,
        records,
    })
}

/// Mean hitting times of `X∖R` from the states of `R`, indexed like `R`.
pub fn exit_times_full(chain: &ReversibleChain, ctx: &Restriction<'_>) -> Result<Vec<f64>> {
    let u = mean_hitting_times(chain, ctx.complement())?;
    Ok(ctx.members().iter().map(|&x| u[x]).collect())
}
