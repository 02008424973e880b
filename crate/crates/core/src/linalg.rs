//! Linear solves and small matrix helpers shared by the chain algorithms.
//!
//! Every system solved here has the shape
//!
//! ```text
//! (I − P_UU + diag(extra)) v = b
//! ```
//!
//! for a kernel `P` reversible with respect to `m` and an index set `U`.
//! Systems up to [`DENSE_LIMIT`] unknowns use dense elimination of this
//! generator form with exactly tracked killing rates, which stays accurate
//! even when `m` spans hundreds of orders of magnitude. Larger systems are symmetrized by `diag(√m)` and
//! handed to a sparse LDLᵀ factorization.

use nalgebra::DMatrix;
use sprs::{CsMat, TriMat};
use sprs_ldl::Ldl;

use crate::{Error, Result};

/// Above this many unknowns the sparse backend is used.
pub const DENSE_LIMIT: usize = 2000;

const RESIDUAL_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Backend {
    #[default]
    Auto,
    Dense,
    Sparse,
}

impl Backend {
    pub fn resolve(self, n: usize) -> Backend {
        match self {
            Backend::Auto if n <= DENSE_LIMIT => Backend::Dense,
            Backend::Auto => Backend::Sparse,
            other => other,
        }
    }
}

/// Builds a CSR matrix from triplets, summing duplicates.
pub fn csr_from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> CsMat<f64> {
    let mut tri = TriMat::new((n, n));
    for &(i, j, v) in triplets {
        tri.add_triplet(i, j, v);
    }
    tri.to_csr()
}

pub fn dense_from_csr(m: &CsMat<f64>) -> DMatrix<f64> {
    let (r, c) = m.shape();
    let mut d = DMatrix::zeros(r, c);
    for (i, row) in m.outer_iterator().enumerate() {
        for (j, &v) in row.iter() {
            d[(i, j)] += v;
        }
    }
    d
}

pub fn csr_from_dense(d: &DMatrix<f64>) -> CsMat<f64> {
    let mut triplets = Vec::new();
    for i in 0..d.nrows() {
        for j in 0..d.ncols() {
            let v = d[(i, j)];
            if v != 0.0 {
                triplets.push((i, j, v));
            }
        }
    }
    csr_from_triplets(d.nrows(), &triplets)
}

/// Entry `(i, j)` of a CSR matrix, zero when not stored.
pub fn entry(m: &CsMat<f64>, i: usize, j: usize) -> f64 {
    m.get(i, j).copied().unwrap_or(0.0)
}

/// Row vector times matrix: `(vᵀ M)_j = Σ_i v_i M_ij`.
pub fn vec_mat(v: &[f64], m: &CsMat<f64>) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for (i, row) in m.outer_iterator().enumerate() {
        let vi = v[i];
        if vi == 0.0 {
            continue;
        }
        for (j, &p) in row.iter() {
            out[j] += vi * p;
        }
    }
    out
}

/// Matrix times column vector.
pub fn mat_vec(m: &CsMat<f64>, v: &[f64]) -> Vec<f64> {
    m.outer_iterator()
        .map(|row| row.iter().map(|(j, &p)| p * v[j]).sum())
        .collect()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |a, &x| a.max(x.abs()))
}

/// Total variation distance `½ Σ |a − b|`.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// The shifted generator restricted to an index set, in generator form.
struct ShiftedSystem<'a> {
    kernel: &'a CsMat<f64>,
    unknowns: &'a [usize],
    local: Vec<Option<usize>>,
    extra: &'a [f64],
}

impl<'a> ShiftedSystem<'a> {
    fn new(kernel: &'a CsMat<f64>, unknowns: &'a [usize], extra: &'a [f64]) -> Self {
        let mut local = vec![None; kernel.rows()];
        for (k, &x) in unknowns.iter().enumerate() {
            local[x] = Some(k);
        }
        ShiftedSystem {
            kernel,
            unknowns,
            local,
            extra,
        }
    }

    fn diagonal(&self, k: usize) -> f64 {
        let x = self.unknowns[k];
        1.0 - entry(self.kernel, x, x) + self.extra[k]
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for (k, &x) in self.unknowns.iter().enumerate() {
            let mut acc = self.diagonal(k) * v[k];
            for (y, &p) in self.kernel.outer_view(x).unwrap().iter() {
                if y != x {
                    if let Some(l) = self.local[y] {
                        acc -= p * v[l];
                    }
                }
            }
            out[k] = acc;
        }
        out
    }

    fn norm_inf(&self) -> f64 {
        (0..self.unknowns.len())
            .map(|k| {
                let x = self.unknowns[k];
                let off: f64 = self
                    .kernel
                    .outer_view(x)
                    .unwrap()
                    .iter()
                    .filter(|(y, _)| *y != x && self.local[*y].is_some())
                    .map(|(_, p)| p.abs())
                    .sum();
                self.diagonal(k).abs() + off
            })
            .fold(0.0, f64::max)
    }

    /// Off-diagonal magnitudes `p(x,y)` inside `U` (zero diagonal) and the
    /// row slacks `extra + Σ_{y∉U} p(x,y)`.
    fn dense_split(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let n = self.unknowns.len();
        let mut off = vec![vec![0.0; n]; n];
        let mut slack = self.extra.to_vec();
        for (k, &x) in self.unknowns.iter().enumerate() {
            for (y, &p) in self.kernel.outer_view(x).unwrap().iter() {
                if y == x {
                    continue;
                }
                match self.local[y] {
                    Some(l) => off[k][l] += p,
                    None => slack[k] += p,
                }
            }
        }
        (off, slack)
    }

    /// `diag(√m) A diag(√m)⁻¹`, whose off-diagonal entries are `−√(p(x,y)p(y,x))`.
    fn symmetrized(&self) -> CsMat<f64> {
        let mut triplets = Vec::new();
        for (k, &x) in self.unknowns.iter().enumerate() {
            triplets.push((k, k, self.diagonal(k)));
            for (y, &p) in self.kernel.outer_view(x).unwrap().iter() {
                if y != x {
                    if let Some(l) = self.local[y] {
                        let back = entry(self.kernel, y, x);
                        triplets.push((k, l, -(p * back).sqrt()));
                    }
                }
            }
        }
        csr_from_triplets(self.unknowns.len(), &triplets)
    }
}

/// Solves `(I − P_UU + diag(extra)) v = b` for every right-hand side `b`.
///
/// `kernel` is indexed globally, `unknowns` lists the rows of `U`, `extra`
/// and each `b` are indexed like `unknowns`. `weights` is the reversing
/// measure of `kernel` (global indexing), only used by the sparse backend.
pub fn solve_shifted(
    kernel: &CsMat<f64>,
    weights: &[f64],
    unknowns: &[usize],
    extra: &[f64],
    rhs: &[Vec<f64>],
    backend: Backend,
) -> Result<Vec<Vec<f64>>> {
    let n = unknowns.len();
    if extra.len() != n || rhs.iter().any(|b| b.len() != n) {
        return Err(Error::InvalidInput("shifted system shape mismatch".into()));
    }
    if n == 0 {
        return Ok(rhs.iter().map(|_| Vec::new()).collect());
    }
    let system = ShiftedSystem::new(kernel, unknowns, extra);
    let mut solutions = match backend.resolve(n) {
        Backend::Dense => dense_solve(&system, rhs)?,
        _ => sparse_solve(&system, weights, rhs)?,
    };
    let a_norm = system.norm_inf();
    for (v, b) in solutions.iter_mut().zip(rhs) {
        let mut ok = false;
        for _ in 0..3 {
            let r: Vec<f64> = system
                .apply(v)
                .iter()
                .zip(b)
                .map(|(av, bv)| bv - av)
                .collect();
            let scale = norm_inf(b).max(a_norm * norm_inf(v));
            if norm_inf(&r) <= RESIDUAL_TOL * scale {
                ok = true;
                break;
            }
            let correction = match backend.resolve(n) {
                Backend::Dense => dense_solve(&system, std::slice::from_ref(&r))?,
                _ => sparse_solve(&system, weights, std::slice::from_ref(&r))?,
            };
            for (vi, ci) in v.iter_mut().zip(&correction[0]) {
                *vi += ci;
            }
        }
        if !ok {
            return Err(Error::SingularSystem(
                "residual above tolerance after refinement".into(),
            ));
        }
    }
    Ok(solutions)
}

/// Gaussian elimination in the order of `unknowns`, carrying each row's
/// slack (diagonal minus off-diagonal mass) instead of its diagonal.
///
/// The slack is the killing rate `extra + Σ_{y∉U} p(x,y)`; it is updated by
/// additions only, so pivots never suffer cancellation and nonnegative
/// right-hand sides give solutions with full componentwise accuracy.
fn dense_solve(system: &ShiftedSystem<'_>, rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = system.unknowns.len();
    let (mut off, mut slack) = system.dense_split();
    let mut b: Vec<Vec<f64>> = (0..n).map(|i| rhs.iter().map(|r| r[i]).collect()).collect();
    let mut pivots = vec![0.0; n];
    for k in 0..n {
        let pivot = slack[k] + off[k][k + 1..].iter().sum::<f64>();
        if !(pivot > 0.0) || !pivot.is_finite() {
            return Err(Error::SingularSystem(format!(
                "nonpositive pivot at unknown {k}"
            )));
        }
        pivots[k] = pivot;
        for i in k + 1..n {
            let a_ik = off[i][k];
            if a_ik == 0.0 {
                continue;
            }
            let l = a_ik / pivot;
            off[i][k] = 0.0;
            let (upper, lower) = off.split_at_mut(i);
            let (row_k, row_i) = (&upper[k], &mut lower[0]);
            for j in k + 1..n {
                if j != i && row_k[j] != 0.0 {
                    row_i[j] += l * row_k[j];
                }
            }
            slack[i] += l * slack[k];
            let (head, tail) = b.split_at_mut(i);
            for (bi, bk) in tail[0].iter_mut().zip(&head[k]) {
                *bi += l * bk;
            }
        }
    }
    let mut x = vec![vec![0.0; n]; rhs.len()];
    for k in (0..n).rev() {
        for (col, xs) in x.iter_mut().enumerate() {
            let mut acc = b[k][col];
            for (a_kj, x_j) in off[k][k + 1..].iter().zip(&xs[k + 1..]) {
                if *a_kj != 0.0 {
                    acc += a_kj * x_j;
                }
            }
            xs[k] = acc / pivots[k];
        }
    }
    Ok(x)
}

fn sparse_solve(
    system: &ShiftedSystem<'_>,
    weights: &[f64],
    rhs: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let s = system.symmetrized();
    let ldl = Ldl::new()
        .fill_in_reduction(sprs::FillInReduction::ReverseCuthillMcKee)
        .numeric(s.view())
        .map_err(|e| Error::SingularSystem(format!("sparse LDL failed: {e}")))?;
    let root: Vec<f64> = system.unknowns.iter().map(|&x| weights[x].sqrt()).collect();
    Ok(rhs
        .iter()
        .map(|b| {
            let scaled: Vec<f64> = b.iter().zip(&root).map(|(bi, r)| bi * r).collect();
            let w: Vec<f64> = ldl.solve(&scaled);
            w.iter().zip(&root).map(|(wi, r)| wi / r).collect()
        })
        .collect())
}
