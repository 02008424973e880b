//! The wasp graph: a cubic thorax with a cubic abdomen and four square wings
//! glued at its corners, walked with rate `α` per edge.
//!
//! Gluing convention: the abdomen origin is the thorax corner `(l_t,l_t,l_t)`;
//! wing `i` has its origin at the thorax corner `(0, y_i, z_i)` with
//! `(y_i, z_i)` running over `{0,l_t}²`. Glued corners belong to the thorax.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::Serialize;

use crate::capacity::Flow;
use crate::{Error, Result, ReversibleChain};

/// Where a vertex of the wasp graph sits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Part {
    Thorax,
    Abdomen,
    Wing(u8),
}

#[derive(Clone, Debug, Serialize)]
pub struct WaspSpec {
    pub r_a: f64,
    pub r_t: f64,
    pub r_w: f64,
    pub n: usize,
    pub alpha: f64,
    pub l_a: usize,
    pub l_t: usize,
    pub l_w: usize,
    /// `R_t`, the full thorax cube.
    pub thorax: Vec<usize>,
    /// `R_a`, the abdomen without its glued origin.
    pub abdomen: Vec<usize>,
    /// `R_1..R_4`, each wing without its glued origin; empty when `l_w = 0`.
    pub wings: [Vec<usize>; 4],
    /// Part and local coordinates of every vertex (wings use the first two).
    pub coords: Vec<(Part, [usize; 3])>,
}

impl WaspSpec {
    /// `R = R_t ∪ R_1 ∪ … ∪ R_4`.
    pub fn front(&self) -> Vec<usize> {
        let mut r = self.thorax.clone();
        for w in &self.wings {
            r.extend_from_slice(w);
        }
        r.sort_unstable();
        r
    }

    /// `X_b = R_t ∪ R_a`.
    pub fn body(&self) -> Vec<usize> {
        let mut b = self.thorax.clone();
        b.extend_from_slice(&self.abdomen);
        b.sort_unstable();
        b
    }

    pub fn thorax_index(&self, x: [usize; 3]) -> usize {
        let s = self.l_t + 1;
        x[0] + s * (x[1] + s * x[2])
    }
}

/// Wing attachment corners on the thorax.
pub fn wing_corners(l_t: usize) -> [[usize; 3]; 4] {
    [[0, 0, 0], [0, l_t, 0], [0, 0, l_t], [0, l_t, l_t]]
}

pub fn build_wasp(
    r_a: f64,
    r_t: f64,
    r_w: f64,
    n: usize,
    alpha: f64,
) -> Result<(ReversibleChain, WaspSpec)> {
    if n < 2 {
        return Err(Error::BadGeometry(format!("scale n = {n} is below 2")));
    }
    if !(alpha > 0.0 && alpha <= 1.0 / 6.0) {
        return Err(Error::BadGeometry(format!(
            "alpha = {alpha} must lie in (0, 1/6]"
        )));
    }
    for (name, r) in [("r_a", r_a), ("r_t", r_t), ("r_w", r_w)] {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(Error::BadGeometry(format!(
                "{name} = {r} must be a nonnegative real"
            )));
        }
    }
    let floor = |r: f64| (n as f64 * r).floor() as usize;
    let (l_a, l_t, l_w) = (floor(r_a), floor(r_t), floor(r_w));
    if l_t == 0 || l_a == 0 {
        return Err(Error::BadGeometry(
            "thorax and abdomen need a positive side".into(),
        ));
    }

    let mut coords: Vec<(Part, [usize; 3])> = Vec::new();
    let mut lookup: HashMap<(Part, [usize; 3]), usize> = HashMap::new();
    let mut add = |part: Part, x: [usize; 3], coords: &mut Vec<(Part, [usize; 3])>| {
        lookup.insert((part, x), coords.len());
        coords.push((part, x));
    };
    for z in 0..=l_t {
        for y in 0..=l_t {
            for x in 0..=l_t {
                add(Part::Thorax, [x, y, z], &mut coords);
            }
        }
    }
    for z in 0..=l_a {
        for y in 0..=l_a {
            for x in 0..=l_a {
                if [x, y, z] != [0, 0, 0] {
                    add(Part::Abdomen, [x, y, z], &mut coords);
                }
            }
        }
    }
    if l_w > 0 {
        for w in 0..4u8 {
            for v in 0..=l_w {
                for u in 0..=l_w {
                    if [u, v] != [0, 0] {
                        add(Part::Wing(w), [u, v, 0], &mut coords);
                    }
                }
            }
        }
    }
    // Resolve glued corners to thorax vertices.
    let corners = wing_corners(l_t);
    let resolve = |part: Part, x: [usize; 3]| -> usize {
        match part {
            Part::Abdomen if x == [0, 0, 0] => lookup[&(Part::Thorax, [l_t, l_t, l_t])],
            Part::Wing(w) if x == [0, 0, 0] => lookup[&(Part::Thorax, corners[w as usize])],
            _ => lookup[&(part, x)],
        }
    };

    let mut edges = Vec::new();
    let push_cube = |part: Part, side: usize, dims: usize, edges: &mut Vec<(usize, usize, f64)>| {
        let top = [side, side, if dims == 3 { side } else { 0 }];
        for z in 0..=top[2] {
            for y in 0..=top[1] {
                for x in 0..=top[0] {
                    let here = [x, y, z];
                    for axis in 0..dims {
                        if here[axis] < side {
                            let mut next = here;
                            next[axis] += 1;
                            let (a, b) = (resolve(part, here), resolve(part, next));
                            edges.push((a, b, alpha));
                            edges.push((b, a, alpha));
                        }
                    }
                }
            }
        }
    };
    push_cube(Part::Thorax, l_t, 3, &mut edges);
    push_cube(Part::Abdomen, l_a, 3, &mut edges);
    if l_w > 0 {
        for w in 0..4u8 {
            push_cube(Part::Wing(w), l_w, 2, &mut edges);
        }
    }

    let mut degree = vec![0usize; coords.len()];
    for &(a, _, _) in &edges {
        degree[a] += 1;
    }
    if let Some(x) = degree.iter().position(|&d| d as f64 * alpha > 1.0 + 1e-12) {
        return Err(Error::BadGeometry(format!(
            "vertex {x} has degree {} too large for alpha",
            degree[x]
        )));
    }

    let ids: Vec<String> = coords
        .iter()
        .map(|(part, x)| match part {
            Part::Thorax => format!("t:{},{},{}", x[0], x[1], x[2]),
            Part::Abdomen => format!("a:{},{},{}", x[0], x[1], x[2]),
            Part::Wing(w) => format!("w{}:{},{}", w + 1, x[0], x[1]),
        })
        .collect();
    let size = coords.len();
    let mu = vec![1.0 / size as f64; size];
    let chain = ReversibleChain::from_edges(ids, &edges, Some(mu))?;

    let pick = |f: &dyn Fn(Part) -> bool| -> Vec<usize> {
        coords
            .iter()
            .enumerate()
            .filter(|(_, (p, _))| f(*p))
            .map(|(i, _)| i)
            .collect()
    };
    let wings = [0u8, 1, 2, 3].map(|w| pick(&|p| p == Part::Wing(w)));
    let spec = WaspSpec {
        r_a,
        r_t,
        r_w,
        n,
        alpha,
        l_a,
        l_t,
        l_w,
        thorax: pick(&|p| p == Part::Thorax),
        abdomen: pick(&|p| p == Part::Abdomen),
        wings,
        coords,
    };
    Ok((chain, spec))
}

/// Nearest-neighbour walk on `{0..l}^d` with rate `α` per edge; vertex
/// `(x_0, …, x_{d−1})` has index `Σ x_i (l+1)^i`.
pub fn cube_walk(d: usize, l: usize, alpha: f64) -> Result<ReversibleChain> {
    if d == 0 || l == 0 {
        return Err(Error::BadGeometry("cube walk needs d ≥ 1 and l ≥ 1".into()));
    }
    if !(alpha > 0.0 && alpha * 2.0 * d as f64 <= 1.0 + 1e-12) {
        return Err(Error::BadGeometry(format!(
            "alpha = {alpha} too large for dimension {d}"
        )));
    }
    let s = l + 1;
    let size = s.pow(d as u32);
    let mut edges = Vec::new();
    for x in 0..size {
        let mut stride = 1;
        for _ in 0..d {
            if (x / stride) % s < l {
                edges.push((x, x + stride, alpha));
                edges.push((x + stride, x, alpha));
            }
            stride *= s;
        }
    }
    let ids = (0..size).map(|x| x.to_string()).collect();
    ReversibleChain::from_edges(ids, &edges, Some(vec![1.0 / size as f64; size]))
}

/// Upper bound `d l (l+1) e / (2α)` on the relaxation time of [`cube_walk`].
pub fn cube_relaxation_bound(d: usize, l: usize, alpha: f64) -> f64 {
    d as f64 * l as f64 * (l as f64 + 1.0) * std::f64::consts::E / (2.0 * alpha)
}

/// Lattice path from the origin to the lower corner of the unit cell that
/// contains `q`, through the cells crossed by the segment `[0, q]`.
fn segment_path(q: &[f64]) -> Vec<Vec<usize>> {
    let d = q.len();
    let target: Vec<usize> = q.iter().map(|x| x.floor() as usize).collect();
    let mut cur = vec![0usize; d];
    let mut next_cross: Vec<f64> = q
        .iter()
        .map(|x| if *x > 0.0 { 1.0 / x } else { f64::INFINITY })
        .collect();
    let mut path = vec![cur.clone()];
    while cur != target {
        let axis = (0..d)
            .filter(|&i| cur[i] < target[i])
            .min_by(|&i, &j| next_cross[i].total_cmp(&next_cross[j]))
            .expect("an axis is still below target");
        cur[axis] += 1;
        next_cross[axis] += 1.0 / q[axis];
        path.push(cur.clone());
    }
    path
}

/// Mean of `n_paths` random radial path flows on `{0..side}^dim`.
///
/// Each path follows the cells crossed by the segment from the origin to a
/// point drawn uniformly in the positive part of the ball of radius
/// `side + 1`. The flow leaves the origin and is absorbed at the path ends;
/// indices follow [`cube_walk`].
pub fn radial_flow<R: Rng + ?Sized>(
    dim: usize,
    side: usize,
    rng: &mut R,
    n_paths: usize,
) -> Result<Flow> {
    if n_paths == 0 || side == 0 || !(dim == 2 || dim == 3) {
        return Err(Error::InvalidInput(
            "radial flow needs dim in {2,3}, side ≥ 1, n_paths ≥ 1".into(),
        ));
    }
    let s = side + 1;
    let radius = s as f64;
    let index = |x: &[usize]| x.iter().rev().fold(0, |acc, &c| acc * s + c);
    let mut edges: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut ends: BTreeMap<usize, f64> = BTreeMap::new();
    let weight = 1.0 / n_paths as f64;
    let mut q = vec![0.0; dim];
    for _ in 0..n_paths {
        loop {
            q.iter_mut().for_each(|x| *x = rng.gen::<f64>() * radius);
            if q.iter().map(|x| x * x).sum::<f64>() < radius * radius {
                break;
            }
        }
        let path = segment_path(&q);
        for w in path.windows(2) {
            *edges.entry((index(&w[0]), index(&w[1]))).or_insert(0.0) += weight;
        }
        *ends.entry(index(path.last().unwrap())).or_insert(0.0) += weight;
    }
    Ok(Flow {
        edges: edges.into_iter().map(|((x, y), v)| (x, y, v)).collect(),
        source: vec![(0, 1.0)],
        sink: ends.into_iter().collect(),
    })
}

/// Three-dimensional [`radial_flow`].
pub fn wasp_radial_flow<R: Rng + ?Sized>(side: usize, rng: &mut R, n_paths: usize) -> Result<Flow> {
    radial_flow(3, side, rng, n_paths)
}

/// Unit flow on the body `X_b` from the thorax to the abdomen: the radial
/// flow of the thorax, rooted at the abdomen junction and reversed, then one
/// edge into the abdomen.
pub fn thorax_to_abdomen_flow<R: Rng + ?Sized>(
    spec: &WaspSpec,
    rng: &mut R,
    n_paths: usize,
) -> Result<Flow> {
    let l = spec.l_t;
    let radial = radial_flow(3, l, rng, n_paths)?;
    let s = l + 1;
    // Reflect so the radial origin sits at the junction corner (l,l,l).
    let to_wasp = |i: usize| spec.thorax_index([l - i % s, l - (i / s) % s, l - i / (s * s)]);
    let junction = spec.thorax_index([l, l, l]);
    let target = spec
        .coords
        .iter()
        .position(|(p, x)| *p == Part::Abdomen && *x == [1, 0, 0])
        .ok_or_else(|| Error::BadGeometry("abdomen has no neighbour of the junction".into()))?;
    let mut edges: Vec<(usize, usize, f64)> = radial
        .edges
        .iter()
        .map(|&(x, y, v)| (to_wasp(y), to_wasp(x), v))
        .collect();
    edges.push((junction, target, 1.0));
    Ok(Flow {
        edges,
        source: radial.sink.iter().map(|&(x, v)| (to_wasp(x), v)).collect(),
        sink: vec![(target, 1.0)],
    })
}

/// Budget `2161 (1+l_t)³/α + 6/(κπ)` for `μ(R_t)/C_κ(R_t, R_a)`.
pub fn thorax_budget(l_t: usize, alpha: f64, kappa: f64) -> f64 {
    2161.0 * (1.0 + l_t as f64).powi(3) / alpha + 6.0 / (kappa * std::f64::consts::PI)
}

/// Budget `(1+l)²/α · (1 + 26(1 + ln l)) + 4/(κπ)` for a wing of side `l`.
pub fn wing_budget(l: usize, alpha: f64, kappa: f64) -> f64 {
    let lf = l as f64;
    (1.0 + lf).powi(2) / alpha * (1.0 + 26.0 * (1.0 + lf.ln()))
        + 4.0 / (kappa * std::f64::consts::PI)
}

/// Test function `V(x) = ln(1 + ‖x‖∞)/(1 + ln l)` on a wing square `{0..l}²`,
/// vanishing at the glued origin.
#[derive(Clone, Debug, Serialize)]
pub struct LogPotential {
    pub side: usize,
    /// Values indexed like [`cube_walk`] with `d = 2`.
    pub values: Vec<f64>,
}

pub fn wasp_log_potential(side: usize) -> Result<LogPotential> {
    if side < 2 {
        return Err(Error::InvalidInput("wing side must be at least 2".into()));
    }
    let s = side + 1;
    let scale = 1.0 + (side as f64).ln();
    let values = (0..s * s)
        .map(|i| (1.0 + (i % s).max(i / s) as f64).ln() / scale)
        .collect();
    Ok(LogPotential { side, values })
}

impl LogPotential {
    /// Dirichlet form of `V` for the rate-`α` walk under the uniform law on the square.
    pub fn dirichlet_form(&self, alpha: f64) -> f64 {
        let s = self.side + 1;
        let m = 1.0 / (s * s) as f64;
        let mut total = 0.0;
        for i in 0..s * s {
            let (u, v) = (i % s, i / s);
            if u < self.side {
                total += m * alpha * (self.values[i + 1] - self.values[i]).powi(2);
            }
            if v < self.side {
                total += m * alpha * (self.values[i + s] - self.values[i]).powi(2);
            }
        }
        total
    }

    /// `μ₁(V²)` under the uniform law on the square.
    pub fn mean_square(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() / self.values.len() as f64
    }

    /// Variational upper bound `D(V)/μ(V²)` on the wing's exit rate.
    pub fn exit_rate_bound(&self, alpha: f64) -> f64 {
        self.dirichlet_form(alpha) / self.mean_square()
    }

    /// Closed-form bound `2α/((1 + ln l)(1+l)²)` on the Dirichlet form.
    pub fn dirichlet_budget(&self, alpha: f64) -> f64 {
        let lf = self.side as f64;
        2.0 * alpha / ((1.0 + lf.ln()) * (1.0 + lf).powi(2))
    }

    /// Closed-form bound `6α/((1+l)²(1 + ln l))`, valid for `l ≥ 20`.
    pub fn exit_rate_budget(&self, alpha: f64) -> f64 {
        3.0 * self.dirichlet_budget(alpha)
    }
}
