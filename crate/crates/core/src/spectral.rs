//! Spectral gaps, Perron–Frobenius data of sub-Markovian kernels and exact
//! transient laws.
//!
//! A kernel `K` on a set with reversing weights `m` is symmetrized as
//!
//! ```text
//! S(x,y) = √(K(x,y) K(y,x)),   S(x,x) = K(x,x)
//! ```
//!
//! which equals `diag(√m) K diag(√m)⁻¹` without ever dividing by `m`.
//! Eigenvalues near 1 are read off as Rayleigh quotients of the energy
//!
//! ```text
//! Q(f) = ½ Σ_{x≠y} m(x) K(x,y) (f(x) − f(y))² + Σ_x m(x) e(x) f(x)²
//! ```
//!
//! with `e` the escape mass, so that tiny gaps keep their relative accuracy.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sprs::CsMat;

use crate::chain::{Restriction, ReversibleChain};
use crate::linalg::{csr_from_triplets, dense_from_csr, entry, mat_vec, vec_mat, DENSE_LIMIT};
use crate::{Error, Result};

const POWER_RESIDUAL_TOL: f64 = 1e-10;
const POWER_MAX_ITERATIONS: usize = 5_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum EigenMethod {
    #[default]
    Auto,
    Dense,
    Iterative,
}

impl EigenMethod {
    fn dense(self, n: usize) -> bool {
        match self {
            EigenMethod::Auto => n <= DENSE_LIMIT,
            EigenMethod::Dense => true,
            EigenMethod::Iterative => false,
        }
    }
}

pub fn symmetrize(kernel: &CsMat<f64>) -> CsMat<f64> {
    let mut triplets = Vec::with_capacity(kernel.nnz());
    for (x, row) in kernel.outer_iterator().enumerate() {
        for (y, &p) in row.iter() {
            let v = if x == y {
                p
            } else {
                (p * entry(kernel, y, x)).sqrt()
            };
            if v != 0.0 {
                triplets.push((x, y, v));
            }
        }
    }
    csr_from_triplets(kernel.rows(), &triplets)
}

/// All eigenvalues of the symmetrized kernel, in decreasing order.
pub fn symmetric_eigenvalues(kernel: &CsMat<f64>) -> Vec<f64> {
    let s = dense_from_csr(&symmetrize(kernel));
    let mut ev: Vec<f64> = s.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

fn energy(kernel: &CsMat<f64>, m: &[f64], escape: &[f64], f: &[f64]) -> f64 {
    let mut total = 0.0;
    for (x, row) in kernel.outer_iterator().enumerate() {
        for (y, &p) in row.iter() {
            if x < y {
                total += m[x] * p * (f[x] - f[y]).powi(2);
            }
        }
        total += m[x] * escape[x] * f[x] * f[x];
    }
    total
}

fn weighted_norm2(m: &[f64], f: &[f64]) -> f64 {
    m.iter().zip(f).map(|(w, v)| w * v * v).sum()
}

fn to_function(m: &[f64], v: &[f64]) -> Vec<f64> {
    v.iter().zip(m).map(|(vi, w)| vi / w.sqrt()).collect()
}

/// Eigenvectors of the symmetrized kernel for the `k` largest eigenvalues.
fn top_eigenvectors(
    kernel: &CsMat<f64>,
    k: usize,
    deflate: &[Vec<f64>],
    method: EigenMethod,
) -> Result<Vec<Vec<f64>>> {
    let s = symmetrize(kernel);
    let n = s.rows();
    if method.dense(n) {
        let dense = dense_from_csr(&s);
        let eig = SymmetricEigen::new(dense.clone());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let skip = deflate.len();
        Ok(order
            .iter()
            .skip(skip)
            .take(k)
            .map(|&i| polish(&dense, eig.eigenvectors.column(i).into_owned()))
            .collect())
    } else {
        let mut basis: Vec<Vec<f64>> = deflate.to_vec();
        let mut out = Vec::with_capacity(k);
        for _ in 0..k {
            let v = power_top(&s, &basis)?;
            basis.push(v.clone());
            out.push(v);
        }
        Ok(out)
    }
}

/// Rayleigh-shifted inverse iteration. The QL sweeps can stop with
/// eigenvector residuals near 1e-9; two steps bring them to rounding level.
fn polish(s: &DMatrix<f64>, mut v: DVector<f64>) -> Vec<f64> {
    let n = s.nrows();
    for _ in 0..2 {
        let lambda = v.dot(&(s * &v));
        let shifted = s - DMatrix::<f64>::identity(n, n) * lambda;
        match shifted.lu().solve(&v) {
            Some(w) if w.iter().all(|x| x.is_finite()) && w.norm() > 0.0 => {
                let sign = if w.dot(&v) < 0.0 { -1.0 } else { 1.0 };
                let norm = w.norm();
                v = w * (sign / norm);
            }
            _ => break,
        }
    }
    v.iter().copied().collect()
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= d * y;
            }
        }
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Top eigenvector of `(I + S)/2` on the orthogonal complement of `basis`.
fn power_top(s: &CsMat<f64>, basis: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = s.rows();
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e37_79b9_7f4a_7c15);
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
    orthogonalize(&mut v, basis);
    normalize(&mut v);
    let mut previous = f64::NAN;
    for iteration in 0..POWER_MAX_ITERATIONS {
        let sv = mat_vec(s, &v);
        let mut w: Vec<f64> = v.iter().zip(&sv).map(|(a, b)| 0.5 * (a + b)).collect();
        orthogonalize(&mut w, basis);
        let theta: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        let residual = w
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - theta * b).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual <= POWER_RESIDUAL_TOL && (theta - previous).abs() < 1e-12 {
            return Ok(v);
        }
        previous = theta;
        if normalize(&mut w) == 0.0 {
            return Err(Error::NoConvergence {
                iterations: iteration,
            });
        }
        v = w;
    }
    Err(Error::NoConvergence {
        iterations: POWER_MAX_ITERATIONS,
    })
}

/// Spectral gap of a stochastic kernel reversible with respect to `m`;
/// `+∞` on a single point.
pub fn kernel_gap(kernel: &CsMat<f64>, m: &[f64], method: EigenMethod) -> Result<f64> {
    let n = kernel.rows();
    if n == 1 {
        return Ok(f64::INFINITY);
    }
    let total: f64 = m.iter().sum();
    let mut root: Vec<f64> = m.iter().map(|w| (w / total).sqrt()).collect();
    normalize(&mut root);
    let v = top_eigenvectors(kernel, 1, &[root], method)?.remove(0);
    let f = to_function(m, &v);
    let mean: f64 = m.iter().zip(&f).map(|(w, x)| w * x).sum::<f64>() / total;
    let centred: Vec<f64> = f.iter().map(|x| x - mean).collect();
    let zero = vec![0.0; n];
    Ok(energy(kernel, m, &zero, &centred) / weighted_norm2(m, &centred))
}

/// `γ`, the smallest nonzero eigenvalue of `−L`.
pub fn spectral_gap(chain: &ReversibleChain) -> Result<f64> {
    spectral_gap_with(chain, EigenMethod::Auto)
}

pub fn spectral_gap_with(chain: &ReversibleChain, method: EigenMethod) -> Result<f64> {
    kernel_gap(chain.kernel(), chain.mu(), method)
}

/// Perron–Frobenius data of a sub-Markovian kernel reversible with respect
/// to the probability vector `m`, whose row defects are `escape`.
#[derive(Clone, Debug)]
pub struct PfData {
    /// One minus the top eigenvalue.
    pub phi: f64,
    /// Left eigenvector, normalized to a probability.
    pub mu_star: Vec<f64>,
    /// `mu_star / m`.
    pub h_star: Vec<f64>,
    /// Gap between the first and second eigenvalue, `+∞` on a single point.
    pub gamma_star: f64,
}

pub fn perron_frobenius(
    kernel: &CsMat<f64>,
    m: &[f64],
    escape: &[f64],
    method: EigenMethod,
) -> Result<PfData> {
    let n = kernel.rows();
    if escape.iter().all(|&e| e == 0.0) {
        // No killing: the kernel is stochastic and reversible, so its PF pair is (1, m).
        return Ok(PfData {
            phi: 0.0,
            mu_star: m.to_vec(),
            h_star: vec![1.0; n],
            gamma_star: kernel_gap(kernel, m, method)?,
        });
    }
    if n == 1 {
        return Ok(PfData {
            phi: escape[0],
            mu_star: vec![1.0],
            h_star: vec![1.0],
            gamma_star: f64::INFINITY,
        });
    }
    let vecs = top_eigenvectors(kernel, 2, &[], method)?;
    let mut v1 = vecs[0].clone();
    if v1.iter().sum::<f64>() < 0.0 {
        v1.iter_mut().for_each(|x| *x = -*x);
    }
    let f1 = to_function(m, &v1);
    let f2 = to_function(m, &vecs[1]);
    let phi = energy(kernel, m, escape, &f1) / weighted_norm2(m, &f1);
    let second = energy(kernel, m, escape, &f2) / weighted_norm2(m, &f2);
    let raw: Vec<f64> = v1
        .iter()
        .zip(m)
        .map(|(v, w)| (v * w.sqrt()).abs())
        .collect();
    let total: f64 = raw.iter().sum();
    let mu_star: Vec<f64> = raw.iter().map(|x| x / total).collect();
    let h_star = mu_star.iter().zip(m).map(|(a, b)| a / b).collect();
    Ok(PfData {
        phi,
        mu_star,
        h_star,
        gamma_star: second - phi,
    })
}

/// Quasi-stationary data of a subset.
#[derive(Clone, Debug, serde::Serialize)]
pub struct QsdData {
    /// `φ*_R`, the escape rate from the quasi-stationary measure.
    pub phi_star: f64,
    pub mu_star: Vec<f64>,
    /// `h*_R = μ*_R / μ_R`.
    pub h_star: Vec<f64>,
    /// Gap between the first two eigenvalues of `p*_R`.
    pub gamma_star: f64,
    /// Spectral gap of the reflected chain, `+∞` for a singleton.
    pub gamma_r: f64,
    /// `ε*_R = φ*_R / γ_R`.
    pub eps_star: f64,
    /// `φ_R = μ_R(e_R)`.
    pub phi_r: f64,
    /// `ζ*_R = min μ_R h*²`.
    pub zeta_star: f64,
}

pub fn qsd(ctx: &Restriction<'_>) -> Result<QsdData> {
    qsd_with(ctx, EigenMethod::Auto)
}

pub fn qsd_with(ctx: &Restriction<'_>, method: EigenMethod) -> Result<QsdData> {
    let pf = perron_frobenius(ctx.killed(), ctx.mu_r(), ctx.escape(), method)?;
    let gamma_r = kernel_gap(ctx.reflected(), ctx.mu_r(), method)?;
    Ok(assemble(pf, gamma_r, ctx.mu_r(), ctx.mean_escape()))
}

pub(crate) fn assemble(pf: PfData, gamma_r: f64, mu_r: &[f64], phi_r: f64) -> QsdData {
    let eps_star = if gamma_r.is_infinite() {
        0.0
    } else {
        pf.phi / gamma_r
    };
    let zeta_star = mu_r
        .iter()
        .zip(&pf.h_star)
        .map(|(m, h)| m * h * h)
        .fold(f64::INFINITY, f64::min);
    QsdData {
        phi_star: pf.phi,
        mu_star: pf.mu_star,
        h_star: pf.h_star,
        gamma_star: pf.gamma_star,
        gamma_r,
        eps_star,
        phi_r,
        zeta_star,
    }
}

/// `start · e^{t(K − I)}` by uniformization,
///
/// ```text
/// e^{t(K−I)} = Σ_k e^{−t} t^k / k! · K^k
/// ```
///
/// truncated after `max(20, ⌈t + 12√t⌉)` terms. Poisson weights are formed
/// in log space so that large `t` does not underflow `e^{−t}`.
pub fn transient(kernel: &CsMat<f64>, start: &[f64], t: f64) -> Vec<f64> {
    let (u, log_scale) = transient_scaled(kernel, start, t);
    let scale = log_scale.exp();
    u.iter().map(|x| x * scale).collect()
}

/// `transient` as `(u, s)` with the law equal to `u·e^s`, so that conditioned
/// laws survive even when the survival probability underflows.
fn transient_scaled(kernel: &CsMat<f64>, start: &[f64], t: f64) -> (Vec<f64>, f64) {
    if t <= 0.0 {
        return (start.to_vec(), 0.0);
    }
    let terms = 20usize.max((t + 12.0 * t.sqrt()).ceil() as usize);
    let mut power = start.to_vec();
    // power_k = K^k start / e^{log_norm}
    let mut log_norm = 0.0;
    let mut log_weight = -t;
    let mut out = power.clone();
    let mut out_log = log_weight;
    let log_t = t.ln();
    for k in 1..=terms {
        power = vec_mat(&power, kernel);
        let norm: f64 = power.iter().map(|x| x.abs()).sum();
        if !(norm > 0.0) {
            break;
        }
        power.iter_mut().for_each(|x| *x /= norm);
        log_norm += norm.ln();
        log_weight += log_t - (k as f64).ln();
        let c = log_weight + log_norm;
        if c > out_log {
            let shrink = (out_log - c).exp();
            out.iter_mut().for_each(|o| *o *= shrink);
            out_log = c;
        }
        let w = (c - out_log).exp();
        if w > 0.0 {
            for (o, p) in out.iter_mut().zip(&power) {
                *o += w * p;
            }
        }
    }
    (out, out_log)
}

/// Law at time `t` conditioned on survival, and the survival probability
/// (which may underflow to zero while the law stays accurate).
pub fn conditioned_law(kernel: &CsMat<f64>, start: &[f64], t: f64) -> Result<(Vec<f64>, f64)> {
    let (u, log_scale) = transient_scaled(kernel, start, t);
    let mass: f64 = u.iter().sum();
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::SurvivalUnderflow { survival: mass });
    }
    Ok((u.iter().map(|x| x / mass).collect(), mass * log_scale.exp()))
}

/// `P_x(X(t) = · | τ > t)` on `R` and `P_x(τ > t)`, for the local index `x`.
pub fn yaglom_distribution(ctx: &Restriction<'_>, x: usize, t: f64) -> Result<(Vec<f64>, f64)> {
    if x >= ctx.len() {
        return Err(Error::InvalidInput("starting point is not in R".into()));
    }
    let mut start = vec![0.0; ctx.len()];
    start[x] = 1.0;
    conditioned_law(ctx.killed(), &start, t)
}

/// `P_ν(τ > t)` for the killed kernel of `ctx` and a law `ν` on `R`.
pub fn survival(kernel: &CsMat<f64>, nu: &[f64], t: f64) -> f64 {
    transient(kernel, nu, t).iter().sum()
}
