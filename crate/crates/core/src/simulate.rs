//! Continuous-time Monte Carlo with a rate-1 Poisson clock.
//!
//! Trajectory `i` of a batch seeded with `s` draws from
//! `ChaCha8Rng::seed_from_u64(s)` switched to stream `i`, so batches are
//! reproducible whatever the number of workers. Holding times are `Exp(1)`;
//! a ring that picks the self-loop only extends the current holding time.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{early_exit_probability, thermalization_windows, Side, Thermalization};
use crate::chain::{restrict, ReversibleChain};
use crate::rate::Rate;
use crate::spectral::qsd;
use crate::{Error, Result};

pub const DEFAULT_BUDGET: u64 = 1_000_000_000;

/// When to stop a trajectory.
#[derive(Clone, Debug)]
pub enum StopRule {
    /// First entrance in `B` (zero when starting in `B`).
    Hit(Vec<usize>),
    /// `𝒯 = ℓ_{X∖R}⁻¹(σ_λ)`: the time spent outside `R` reaches an
    /// independent `Exp(λ)` timer.
    Transition {
        r: Vec<usize>,
        lambda: f64,
    },
    /// `τ_δ`: epochs end at `ℓ_R⁻¹(σ_κ) ∧ ℓ_{X∖R}⁻¹(σ_λ)` with fresh timers,
    /// and the first epoch that ends in `R` after more than `window_r` local
    /// time in `R` (or outside `R` after more than `window_c` there) stops it.
    Thermalize {
        r: Vec<usize>,
        kappa: f64,
        lambda: f64,
        window_r: f64,
        window_c: f64,
    },
    FixedTime(f64),
    /// Whether `ℓ_A⁻¹(σ_κ) < ℓ_B⁻¹(σ_λ)`; an infinite rate means a zero timer.
    Race {
        a: Vec<usize>,
        b: Vec<usize>,
        kappa: Rate,
        lambda: Rate,
    },
}

#[derive(Clone, Copy, Debug)]
pub struct SimConfig {
    pub budget: u64,
    pub record_path: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            budget: DEFAULT_BUDGET,
            record_path: false,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct TrajectorySample {
    pub seed: u64,
    pub index: u64,
    /// `(state, holding time)` pairs, when recorded.
    pub path: Vec<(usize, f64)>,
    /// Global time at the stop.
    pub time: f64,
    pub end_state: usize,
    /// Local time in `R` (or `A` for a race) at the stop.
    pub local_in: f64,
    /// Local time outside `R` (or in `B` for a race) at the stop.
    pub local_out: f64,
    pub sigma_kappa: Option<f64>,
    pub sigma_lambda: Option<f64>,
    /// `τ_{X∖R,λ} = ℓ_R(𝒯)`.
    pub transition_time: Option<f64>,
    /// Index `i₀` of the stopping epoch.
    pub epochs: Option<u64>,
    pub race_won: Option<bool>,
    pub rings: u64,
}

/// Precomputed jump tables for one chain.
pub struct Sampler<'a> {
    chain: &'a ReversibleChain,
    targets: Vec<Vec<usize>>,
    cumulative: Vec<Vec<f64>>,
}

fn mask(n: usize, set: &[usize]) -> Result<Vec<bool>> {
    let mut m = vec![false; n];
    for &x in set {
        if x >= n {
            return Err(Error::InvalidInput(format!("state {x} out of range")));
        }
        m[x] = true;
    }
    Ok(m)
}

fn draw_timer(rate: f64, rng: &mut ChaCha8Rng) -> f64 {
    if rate == 0.0 {
        f64::INFINITY
    } else {
        let e: f64 = rng.sample(Exp1);
        e / rate
    }
}

impl<'a> Sampler<'a> {
    pub fn new(chain: &'a ReversibleChain) -> Sampler<'a> {
        let kernel = chain.kernel();
        let mut targets = Vec::with_capacity(chain.len());
        let mut cumulative = Vec::with_capacity(chain.len());
        for row in kernel.outer_iterator() {
            let mut t = Vec::with_capacity(row.nnz());
            let mut c = Vec::with_capacity(row.nnz());
            let mut acc = 0.0;
            for (y, &p) in row.iter() {
                if p > 0.0 {
                    acc += p;
                    t.push(y);
                    c.push(acc);
                }
            }
            targets.push(t);
            cumulative.push(c);
        }
        Sampler {
            chain,
            targets,
            cumulative,
        }
    }

    pub fn chain(&self) -> &ReversibleChain {
        self.chain
    }

    fn step(&self, x: usize, rng: &mut ChaCha8Rng) -> usize {
        let c = &self.cumulative[x];
        let u = rng.gen::<f64>() * c[c.len() - 1];
        let k = c.partition_point(|&v| v <= u).min(c.len() - 1);
        self.targets[x][k]
    }

    /// Runs one trajectory from `start`.
    pub fn run(
        &self,
        start: usize,
        rule: &StopRule,
        rng: &mut ChaCha8Rng,
        cfg: SimConfig,
    ) -> Result<TrajectorySample> {
        let n = self.chain.len();
        if start >= n {
            return Err(Error::InvalidInput(format!(
                "start state {start} out of range"
            )));
        }
        let mut s = TrajectorySample {
            end_state: start,
            ..Default::default()
        };
        let mut x = start;
        let push = |s: &mut TrajectorySample, x: usize, h: f64| {
            if cfg.record_path {
                match s.path.last_mut() {
                    Some(last) if last.0 == x => last.1 += h,
                    _ => s.path.push((x, h)),
                }
            }
        };
        match rule {
            StopRule::Hit(b) => {
                let in_b = mask(n, b)?;
                while !in_b[x] {
                    self.tick(&mut s, cfg)?;
                    let h: f64 = rng.sample(Exp1);
                    push(&mut s, x, h);
                    s.time += h;
                    x = self.step(x, rng);
                }
            }
            StopRule::FixedTime(t_end) => loop {
                let h: f64 = rng.sample(Exp1);
                if s.time + h >= *t_end {
                    let rest = t_end - s.time;
                    push(&mut s, x, rest);
                    s.time = *t_end;
                    break;
                }
                self.tick(&mut s, cfg)?;
                push(&mut s, x, h);
                s.time += h;
                x = self.step(x, rng);
            },
            StopRule::Transition { r, lambda } => {
                let in_r = mask(n, r)?;
                let sigma = draw_timer(*lambda, rng);
                s.sigma_lambda = Some(sigma);
                let (mut l_in, mut l_out) = (0.0, 0.0);
                loop {
                    let h: f64 = rng.sample(Exp1);
                    if in_r[x] {
                        l_in += h;
                    } else if l_out + h >= sigma {
                        push(&mut s, x, sigma - l_out);
                        l_out = sigma;
                        break;
                    } else {
                        l_out += h;
                    }
                    self.tick(&mut s, cfg)?;
                    push(&mut s, x, h);
                    x = self.step(x, rng);
                }
                s.local_in = l_in;
                s.local_out = l_out;
                s.transition_time = Some(l_in);
                s.time = sigma + l_in;
            }
            StopRule::Thermalize {
                r,
                kappa,
                lambda,
                window_r,
                window_c,
            } => {
                let in_r = mask(n, r)?;
                let (mut l_in, mut l_out) = (0.0, 0.0);
                let mut epochs = 0u64;
                'outer: loop {
                    epochs += 1;
                    let sk = draw_timer(*kappa, rng);
                    let sl = draw_timer(*lambda, rng);
                    s.sigma_kappa = Some(sk);
                    s.sigma_lambda = Some(sl);
                    let (mut a_in, mut a_out) = (0.0, 0.0);
                    loop {
                        let h: f64 = rng.sample(Exp1);
                        if in_r[x] && a_in + h >= sk {
                            push(&mut s, x, sk - a_in);
                            l_in += sk - a_in;
                            if sk > *window_r {
                                break 'outer;
                            }
                            continue 'outer;
                        }
                        if !in_r[x] && a_out + h >= sl {
                            push(&mut s, x, sl - a_out);
                            l_out += sl - a_out;
                            if sl > *window_c {
                                break 'outer;
                            }
                            continue 'outer;
                        }
                        if in_r[x] {
                            a_in += h;
                            l_in += h;
                        } else {
                            a_out += h;
                            l_out += h;
                        }
                        self.tick(&mut s, cfg)?;
                        push(&mut s, x, h);
                        x = self.step(x, rng);
                    }
                }
                s.epochs = Some(epochs);
                s.local_in = l_in;
                s.local_out = l_out;
                s.time = l_in + l_out;
            }
            StopRule::Race {
                a,
                b,
                kappa,
                lambda,
            } => {
                let in_a = mask(n, a)?;
                let in_b = mask(n, b)?;
                let timer = |r: &Rate, rng: &mut ChaCha8Rng| match r {
                    Rate::Infinite => 0.0,
                    Rate::Finite(v) => draw_timer(*v, rng),
                };
                let sk = timer(kappa, rng);
                let sl = timer(lambda, rng);
                s.sigma_kappa = Some(sk);
                s.sigma_lambda = Some(sl);
                let (mut la, mut lb) = (0.0, 0.0);
                loop {
                    let h: f64 = rng.sample(Exp1);
                    let fire_a = if in_a[x] { sk - la } else { f64::INFINITY };
                    let fire_b = if in_b[x] { sl - lb } else { f64::INFINITY };
                    let first = fire_a.min(fire_b);
                    if first <= h {
                        push(&mut s, x, first);
                        s.time += first;
                        s.race_won = Some(fire_a < fire_b);
                        if in_a[x] {
                            la += first;
                        }
                        if in_b[x] {
                            lb += first;
                        }
                        break;
                    }
                    if in_a[x] {
                        la += h;
                    }
                    if in_b[x] {
                        lb += h;
                    }
                    self.tick(&mut s, cfg)?;
                    push(&mut s, x, h);
                    s.time += h;
                    x = self.step(x, rng);
                }
                s.local_in = la;
                s.local_out = lb;
            }
        }
        s.end_state = x;
        Ok(s)
    }

    fn tick(&self, s: &mut TrajectorySample, cfg: SimConfig) -> Result<()> {
        s.rings += 1;
        if s.rings > cfg.budget {
            return Err(Error::StepBudgetExceeded { budget: cfg.budget });
        }
        Ok(())
    }
}

/// The random stream of trajectory `index` in a batch seeded with `seed`.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn sample_trajectory(
    chain: &ReversibleChain,
    start: usize,
    rule: &StopRule,
    rng: &mut ChaCha8Rng,
) -> Result<TrajectorySample> {
    Sampler::new(chain).run(start, rule, rng, SimConfig::default())
}

/// Runs `n` independent trajectories whose starts are drawn from `start_law`
/// (a probability vector over all states). Results come back in index order.
pub fn run_batch(
    chain: &ReversibleChain,
    start_law: &[f64],
    rule: &StopRule,
    n: usize,
    seed: u64,
    workers: usize,
    cfg: SimConfig,
) -> Result<Vec<TrajectorySample>> {
    if start_law.len() != chain.len() {
        return Err(Error::InvalidInput(
            "start law length does not match the chain".into(),
        ));
    }
    let law = WeightedIndex::new(start_law)
        .map_err(|e| Error::InvalidInput(format!("start law: {e}")))?;
    let sampler = Sampler::new(chain);
    let job = |i: usize| -> Result<TrajectorySample> {
        let mut rng = stream(seed, i as u64);
        let start = law.sample(&mut rng);
        let mut s = sampler.run(start, rule, &mut rng, cfg)?;
        s.seed = seed;
        s.index = i as u64;
        Ok(s)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidInput(format!("worker pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(job).collect())
}

/// Kolmogorov–Smirnov distance between the empirical law of `samples` and
/// `cdf`. Ties are grouped and both one-sided limits are compared, so `cdf`
/// may have atoms.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut worst = 0.0f64;
    let mut i = 0;
    while i < sorted.len() {
        let x = sorted[i];
        let j = sorted[i..].partition_point(|&v| v <= x) + i;
        let below = (i as f64 / n - cdf(x.next_down())).abs();
        let at = (j as f64 / n - cdf(x)).abs();
        worst = worst.max(below).max(at);
        i = j;
    }
    worst
}

/// Reference law for rescaled exit times: `φ*τ` shifted down by `shift` and
/// clipped at zero is compared to `atom·δ₀ + (1 − atom)·Exp(1)`.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct ExitReference {
    pub atom: f64,
    pub shift: f64,
}

impl ExitReference {
    /// A pure unit exponential, the exact law from `μ*_R`.
    pub fn exponential() -> Self {
        ExitReference::default()
    }

    /// Early exits before `T*` form the atom; the exponential part starts at
    /// `φ*T*`. Falls back to a pure exponential when `ε* ≥ 1/3`.
    pub fn from_side(side: &Side, nu: &[f64]) -> Result<Self> {
        if !(side.eps() < 1.0 / 3.0) {
            return Ok(ExitReference::exponential());
        }
        let t_star = side.window_at_eps()?;
        if t_star.is_infinite() {
            return Ok(ExitReference::exponential());
        }
        Ok(ExitReference {
            atom: early_exit_probability(side, nu)?,
            shift: side.q.phi_star * t_star,
        })
    }

    pub fn cdf(&self, t: f64) -> f64 {
        if t < 0.0 {
            0.0
        } else {
            self.atom + (1.0 - self.atom) * -(-t).exp_m1()
        }
    }

    /// KS distance of rescaled times to the reference law.
    pub fn ks(&self, scaled: &[f64]) -> f64 {
        let shifted: Vec<f64> = scaled.iter().map(|&t| (t - self.shift).max(0.0)).collect();
        ks_statistic(&shifted, |t| self.cdf(t))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExitLawReport {
    pub samples: usize,
    pub phi_star: f64,
    pub reference: ExitReference,
    pub ks: f64,
    /// Mean of `φ*τ`.
    pub mean: f64,
    /// Rescaled exit times `φ*τ`.
    pub times: Vec<f64>,
}

/// Exit times from `R` started from `nu` (a law on `R`, indexed like `R`),
/// rescaled by `φ*_R` and compared to `reference`.
pub fn empirical_exit_law(
    chain: &ReversibleChain,
    r: &[usize],
    nu: &[f64],
    reference: ExitReference,
    n: usize,
    seed: u64,
    workers: usize,
) -> Result<ExitLawReport> {
    if n == 0 {
        return Err(Error::InvalidInput(
            "at least one sample is required".into(),
        ));
    }
    let ctx = restrict(chain, r)?;
    if nu.len() != ctx.len() {
        return Err(Error::InvalidInput("starting law must live on R".into()));
    }
    let phi = qsd(&ctx)?.phi_star;
    let start: Vec<f64> = ctx.extend_by_zero(nu);
    let rule = StopRule::Hit(ctx.complement().to_vec());
    let samples = run_batch(chain, &start, &rule, n, seed, workers, SimConfig::default())?;
    let times: Vec<f64> = samples.iter().map(|s| phi * s.time).collect();
    let ks = reference.ks(&times);
    let mean = times.iter().sum::<f64>() / n as f64;
    Ok(ExitLawReport {
        samples: n,
        phi_star: phi,
        reference,
        ks,
        mean,
        times,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct StateDeviation {
    pub state: usize,
    pub inside: bool,
    pub frequency: f64,
    pub target: f64,
    /// `|frequency / target − 1|`.
    pub deviation: f64,
    /// Standard error of the deviation.
    pub std_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TailPoint {
    /// Time in units of `1/κ + 1/λ`.
    pub t: f64,
    pub empirical: f64,
    pub std_error: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ThermalizationReport {
    pub samples: usize,
    pub envelope: Thermalization,
    pub inside_fraction: f64,
    pub deviations: Vec<StateDeviation>,
    pub tail: Vec<TailPoint>,
    pub mean_epochs: f64,
}

impl ThermalizationReport {
    /// Largest `deviation − 3·std_error` over all states.
    pub fn worst_excess(&self) -> f64 {
        self.deviations
            .iter()
            .map(|d| d.deviation - 3.0 * d.std_error)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// End-state frequencies at `τ_δ`, conditioned on the side, against the soft
/// measures `μ*_{R,λ}` and `μ*_{X∖R,κ}`, and the tail of `τ_δ`.
#[allow(clippy::too_many_arguments)]
pub fn thermalization_experiment(
    chain: &ReversibleChain,
    r: &[usize],
    kappa: f64,
    lambda: f64,
    delta: f64,
    start_law: &[f64],
    n: usize,
    seed: u64,
    workers: usize,
    tail_grid: &[f64],
) -> Result<ThermalizationReport> {
    if n == 0 {
        return Err(Error::InvalidInput(
            "at least one sample is required".into(),
        ));
    }
    let ctx = restrict(chain, r)?;
    let (rside, cside, env) = thermalization_windows(&ctx, kappa, lambda, delta)?;
    if !(rside.eps() < 1.0 / 3.0 && cside.eps() < 1.0 / 3.0) {
        return Err(Error::Inapplicable("soft eps* not below 1/3".into()));
    }
    let rule = StopRule::Thermalize {
        r: ctx.members().to_vec(),
        kappa,
        lambda,
        window_r: env.window_r,
        window_c: env.window_c,
    };
    let samples = run_batch(
        chain,
        start_law,
        &rule,
        n,
        seed,
        workers,
        SimConfig::default(),
    )?;
    let mut counts = vec![0usize; chain.len()];
    for s in &samples {
        counts[s.end_state] += 1;
    }
    let n_in: usize = ctx.members().iter().map(|&x| counts[x]).sum();
    let n_out = n - n_in;
    let mut deviations = Vec::new();
    let cctx = ctx.complement_restriction()?;
    for (members, target, total, inside) in [
        (ctx.members(), &rside.q.mu_star, n_in, true),
        (cctx.members(), &cside.q.mu_star, n_out, false),
    ] {
        if total == 0 {
            continue;
        }
        for (i, &x) in members.iter().enumerate() {
            let f = counts[x] as f64 / total as f64;
            let se = (f * (1.0 - f) / total as f64).sqrt() / target[i];
            deviations.push(StateDeviation {
                state: x,
                inside,
                frequency: f,
                target: target[i],
                deviation: (f / target[i] - 1.0).abs(),
                std_error: se,
            });
        }
    }
    let scale = env.scale();
    let tail = tail_grid
        .iter()
        .map(|&t| {
            let p = samples.iter().filter(|s| s.time > t * scale).count() as f64 / n as f64;
            TailPoint {
                t,
                empirical: p,
                std_error: (p * (1.0 - p) / n as f64).sqrt(),
                bound: env.tail(t),
            }
        })
        .collect();
    let mean_epochs = samples
        .iter()
        .map(|s| s.epochs.unwrap_or(0) as f64)
        .sum::<f64>()
        / n as f64;
    Ok(ThermalizationReport {
        samples: n,
        envelope: env,
        inside_fraction: n_in as f64 / n as f64,
        deviations,
        tail,
        mean_epochs,
    })
}
