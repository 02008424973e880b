//! Soft measures: quasi-stationary measures of the trace on `R` of the chain
//! killed at rate `λ` while outside `R`.
//!
//! From `x ∈ R` the excursion outside `R` returns before an independent
//! `Exp(λ)` timer, measured in local time outside `R`, runs out. With
//! `C = X ∖ R`, each ring spent in `C` beats the timer with probability
//! `1/(1+λ)`, so the excursion-return operator and the killing probability are
//!
//! ```text
//! K_λ = ((1+λ) I − P_CC)⁻¹ P_CR,      g_λ = ((1+λ) I − P_CC)⁻¹ λ 1
//! p*_{R,λ} = P_RR + P_RC K_λ,         e_{R,λ} = P_RC g_λ
//! ```
//!
//! `λ = 0` gives the trace chain (no killing), `λ = ∞` the killed kernel.

use rayon::prelude::*;
use serde::Serialize;
use sprs::CsMat;

use crate::chain::Restriction;
use crate::linalg::{self, csr_from_triplets, total_variation, Backend};
use crate::rate::Rate;
use crate::spectral::{self, EigenMethod};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct SoftKernel {
    pub lambda: Rate,
    /// `p*_{R,λ}` on local indices of `R`.
    pub p_star: CsMat<f64>,
    /// `e_{R,λ}`.
    pub escape: Vec<f64>,
    /// `p_{R,λ}`: `p*_{R,λ}` with the escape folded into the diagonal.
    pub p_soft: CsMat<f64>,
}

impl SoftKernel {
    /// `c_{R,λ}(x,y) = μ_R(x) p_{R,λ}(x,y)`.
    pub fn conductance(&self, mu_r: &[f64], x: usize, y: usize) -> f64 {
        mu_r[x] * linalg::entry(&self.p_soft, x, y)
    }

    /// `φ_{R,λ} = μ_R(e_{R,λ})`.
    pub fn mean_escape(&self, mu_r: &[f64]) -> f64 {
        mu_r.iter().zip(&self.escape).map(|(m, e)| m * e).sum()
    }
}

pub fn build_soft_kernel(ctx: &Restriction<'_>, lambda: Rate) -> Result<SoftKernel> {
    let lam = match lambda {
        Rate::Infinite => {
            return Ok(SoftKernel {
                lambda,
                p_star: ctx.killed().clone(),
                escape: ctx.escape().to_vec(),
                p_soft: ctx.reflected().clone(),
            })
        }
        Rate::Finite(l) if l >= 0.0 && l.is_finite() => l,
        Rate::Finite(l) => {
            return Err(Error::InvalidInput(format!(
                "lambda = {l} must be nonnegative"
            )))
        }
    };
    let chain = ctx.chain();
    let comp = ctx.complement();
    // Only states of R adjacent to C receive excursion mass.
    let targets: Vec<usize> = (0..ctx.len())
        .filter(|&j| {
            chain
                .neighbors(ctx.members()[j])
                .any(|(z, _)| !ctx.contains(z))
        })
        .collect();
    let mut rhs: Vec<Vec<f64>> = targets
        .iter()
        .map(|&j| comp.iter().map(|&z| chain.p(z, ctx.members()[j])).collect())
        .collect();
    rhs.push(vec![lam; comp.len()]);
    let extra = vec![lam; comp.len()];
    let sol = linalg::solve_shifted(
        chain.kernel(),
        chain.mu(),
        comp,
        &extra,
        &rhs,
        Backend::Auto,
    )?;
    let kill = &sol[targets.len()];

    let mut triplets = Vec::new();
    let mut escape = vec![0.0; ctx.len()];
    for (i, row) in ctx.killed().outer_iterator().enumerate() {
        for (j, &p) in row.iter() {
            triplets.push((i, j, p));
        }
    }
    for &i in ctx.border() {
        let x = ctx.members()[i];
        let out: Vec<(usize, f64)> = comp
            .iter()
            .enumerate()
            .map(|(k, &z)| (k, chain.p(x, z)))
            .filter(|(_, p)| *p > 0.0)
            .collect();
        for (col, &j) in targets.iter().enumerate() {
            let mass: f64 = out.iter().map(|&(k, p)| p * sol[col][k]).sum();
            if mass != 0.0 {
                triplets.push((i, j, mass));
            }
        }
        if lam > 0.0 {
            escape[i] = out.iter().map(|&(k, p)| p * kill[k]).sum();
        }
    }
    let p_star = csr_from_triplets(ctx.len(), &triplets);
    for (i, &e) in escape.iter().enumerate() {
        if e > 0.0 {
            triplets.push((i, i, e));
        }
    }
    let p_soft = csr_from_triplets(ctx.len(), &triplets);
    Ok(SoftKernel {
        lambda,
        p_star,
        escape,
        p_soft,
    })
}

/// Perron–Frobenius data of a soft kernel.
#[derive(Clone, Debug, Serialize)]
pub struct SoftQsd {
    pub lambda: Rate,
    /// `φ*_{R,λ}`.
    pub phi_star: f64,
    /// `μ*_{R,λ}`.
    pub mu_star: Vec<f64>,
    pub h_star: Vec<f64>,
    /// `γ_{R,λ}`, the gap of `p_{R,λ}`.
    pub gamma_soft: f64,
    /// `γ*_{R,λ}`.
    pub gamma_star_soft: f64,
    /// `ε*_{R,λ} = φ*_{R,λ} / γ_{R,λ}`.
    pub eps_star: f64,
    /// `ζ*_{R,λ} = min μ_R h*²`.
    pub zeta_star: f64,
    /// `φ_{R,λ} = μ_R(e_{R,λ})`.
    pub phi_soft: f64,
}

pub fn soft_qsd(sk: &SoftKernel, ctx: &Restriction<'_>) -> Result<SoftQsd> {
    soft_qsd_with(sk, ctx, EigenMethod::Auto)
}

pub fn soft_qsd_with(
    sk: &SoftKernel,
    ctx: &Restriction<'_>,
    method: EigenMethod,
) -> Result<SoftQsd> {
    let mu_r = ctx.mu_r();
    let pf = spectral::perron_frobenius(&sk.p_star, mu_r, &sk.escape, method)?;
    let gamma = spectral::kernel_gap(&sk.p_soft, mu_r, method)?;
    let q = spectral::assemble(pf, gamma, mu_r, sk.mean_escape(mu_r));
    Ok(SoftQsd {
        lambda: sk.lambda,
        phi_star: q.phi_star,
        mu_star: q.mu_star,
        h_star: q.h_star,
        gamma_soft: q.gamma_r,
        gamma_star_soft: q.gamma_star,
        eps_star: q.eps_star,
        zeta_star: q.zeta_star,
        phi_soft: q.phi_r,
    })
}

/// Convenience: soft kernel and its quasi-stationary data in one call.
pub fn soft_measure(ctx: &Restriction<'_>, lambda: Rate) -> Result<SoftQsd> {
    soft_qsd(&build_soft_kernel(ctx, lambda)?, ctx)
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub qsd: SoftQsd,
    /// TV distance from `μ*_{R,λ}` to `μ_R`.
    pub tv_to_mu_r: f64,
    /// TV distance from `μ*_{R,λ}` to `μ*_R`.
    pub tv_to_qsd: f64,
    /// TV distance to the previous grid point (continuity report).
    pub tv_step: f64,
}

const SWEEP_SLACK: f64 = 1e-12;

/// Soft measures over an ascending `λ` grid, with the monotonicity in `λ`
/// of `φ*`, `ε*`, `φ_{R,λ}` (nondecreasing) and `γ_{R,λ}` (nonincreasing) certified.
pub fn lambda_sweep(ctx: &Restriction<'_>, grid: &[Rate]) -> Result<Vec<SweepRow>> {
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidInput(
            "lambda grid must be strictly ascending".into(),
        ));
    }
    if grid
        .iter()
        .any(|r| matches!(r, Rate::Finite(v) if *v < 0.0))
    {
        return Err(Error::InvalidInput(
            "lambda grid must be nonnegative".into(),
        ));
    }
    let hard = spectral::qsd(ctx)?;
    let points: Vec<SoftQsd> = grid
        .par_iter()
        .map(|&l| soft_measure(ctx, l))
        .collect::<Result<_>>()?;
    let mut rows: Vec<SweepRow> = Vec::with_capacity(points.len());
    for (k, q) in points.into_iter().enumerate() {
        let tv_step = if k == 0 {
            0.0
        } else {
            total_variation(&rows[k - 1].qsd.mu_star, &q.mu_star)
        };
        rows.push(SweepRow {
            tv_to_mu_r: total_variation(&q.mu_star, ctx.mu_r()),
            tv_to_qsd: total_variation(&q.mu_star, &hard.mu_star),
            tv_step,
            qsd: q,
        });
    }
    for w in rows.windows(2) {
        let (a, b) = (&w[0].qsd, &w[1].qsd);
        let lambda = b.lambda.as_f64();
        let grows = |x: f64, y: f64| y >= x - SWEEP_SLACK * x.abs().max(y.abs()) - 1e-300;
        if !grows(a.phi_star, b.phi_star) {
            return Err(Error::MonotonicityViolation {
                quantity: "phi*",
                lambda,
            });
        }
        if !grows(a.eps_star, b.eps_star) {
            return Err(Error::MonotonicityViolation {
                quantity: "eps*",
                lambda,
            });
        }
        if !grows(a.phi_soft, b.phi_soft) {
            return Err(Error::MonotonicityViolation {
                quantity: "phi_R,lambda",
                lambda,
            });
        }
        if !(a.gamma_soft == b.gamma_soft || grows(b.gamma_soft, a.gamma_soft)) {
            return Err(Error::MonotonicityViolation {
                quantity: "gamma_R,lambda",
                lambda,
            });
        }
    }
    Ok(rows)
}
