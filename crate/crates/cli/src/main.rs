//! `metastable`: command-line front end to the metastability library.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use metastable::bounds::{self, transition_rate_bracket, ReportConfig, Side};
use metastable::capacity::thomson_lower_bound;
use metastable::io::{chain_to_json, read_chain};
use metastable::models::curie_weiss::{
    build_cw_full, build_cw_mag, cw_asymptotics, cw_exact, cw_ratios, CurieWeissSpec,
};
use metastable::models::wasp::{build_wasp, thorax_budget, wing_budget};
use metastable::simulate::{
    run_batch, thermalization_experiment, ExitReference, SimConfig, StopRule, TrajectorySample,
};
use metastable::soft::lambda_sweep;
use metastable::{qsd, restrict, solve_capacity, spectral_gap, Rate, Restriction, ReversibleChain};

use output::{Cell, Format, Sink, Table};

#[derive(Parser, Debug)]
#[command(
    name = "metastable",
    version,
    about = "Exact metastability quantities, bounds and Monte Carlo checks for reversible chains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct ChainArgs {
    /// Chain file (JSON with states, edges, optional mu and R).
    #[arg(long)]
    input: PathBuf,
    /// Comma-separated state ids of R; defaults to the file's R.
    #[arg(long = "R", value_delimiter = ',')]
    r: Option<Vec<String>>,
}

#[derive(Args, Debug)]
struct OutArgs {
    /// Directory for the output tables; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

impl OutArgs {
    fn sink(&self) -> Sink {
        Sink {
            out: self.out.clone(),
            format: self.format,
        }
    }
}

#[derive(Args, Debug)]
struct GridArgs {
    /// Rate on R; repeatable, `inf` allowed.
    #[arg(long = "kappa", value_delimiter = ',')]
    kappa: Vec<f64>,
    /// Rate outside R; repeatable, `inf` allowed.
    #[arg(long = "lambda", value_delimiter = ',')]
    lambda: Vec<f64>,
}

#[derive(Args, Debug)]
struct SimArgs {
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    /// Mandatory for every simulation.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; all cores by default.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StartLaw {
    /// The quasi-stationary measure of R.
    Qsd,
    /// The restricted ensemble mu(. | R).
    Restricted,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check that a chain file describes an irreducible reversible chain.
    Validate {
        #[command(flatten)]
        chain: ChainArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Quasi-stationary measure and spectral data of R.
    Qsd {
        #[command(flatten)]
        chain: ChainArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Soft measures of R along a lambda grid.
    SoftSweep {
        #[command(flatten)]
        chain: ChainArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// (kappa, lambda)-capacities between R and its complement.
    Capacity {
        #[command(flatten)]
        chain: ChainArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Every bound for R, checked against exact values; exits 4 on a violation.
    BoundsReport {
        #[command(flatten)]
        chain: ChainArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Monte Carlo exit times from R against the exponential law.
    SimulateExit {
        #[command(flatten)]
        chain: ChainArgs,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, value_enum, default_value = "qsd")]
        start: StartLaw,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Monte Carlo transition times out of R with a single lambda.
    SimulateTransition {
        #[command(flatten)]
        chain: ChainArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, value_enum, default_value = "qsd")]
        start: StartLaw,
        #[command(flatten)]
        out: OutArgs,
    },
    /// End-state frequencies and tail of the thermalization time.
    Thermalize {
        #[command(flatten)]
        chain: ChainArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, value_enum, default_value = "restricted")]
        start: StartLaw,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Curie-Weiss Glauber dynamics: dump the chain and compare with asymptotics.
    ModelCw {
        #[arg(long = "N")]
        n: usize,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        h: f64,
        /// Chain on all 2^N spin configurations.
        #[arg(long, conflicts_with = "mag")]
        full: bool,
        /// Chain on the N+1 magnetization values (the default).
        #[arg(long)]
        mag: bool,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Random walk on the wasp graph: dump the chain and the geometric budgets.
    ModelWasp {
        #[arg(long)]
        ra: f64,
        #[arg(long)]
        rt: f64,
        #[arg(long)]
        rw: f64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        alpha: f64,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
    Violations(usize),
}

impl From<metastable::Error> for Failure {
    fn from(e: metastable::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Violations(n)) => {
            eprintln!("{n} applicable bound(s) violated");
            ExitCode::from(4)
        }
    }
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Validate { chain, out } => validate(&chain, &out),
        Command::Qsd { chain, out } => {
            let (c, r) = load(&chain)?;
            out.sink().emit(&qsd_tables(&c, &r)?)?;
            Ok(())
        }
        Command::SoftSweep { chain, grid, out } => soft_sweep(&chain, &grid, &out),
        Command::Capacity { chain, grid, out } => capacity(&chain, &grid, &out),
        Command::BoundsReport {
            chain,
            grid,
            delta,
            out,
        } => bounds_report(&chain, &grid, delta, &out),
        Command::SimulateExit {
            chain,
            sim,
            start,
            out,
        } => simulate_exit(&chain, &sim, start, &out),
        Command::SimulateTransition {
            chain,
            grid,
            sim,
            start,
            out,
        } => simulate_transition(&chain, &grid, &sim, start, &out),
        Command::Thermalize {
            chain,
            grid,
            delta,
            sim,
            start,
            out,
        } => thermalize(&chain, &grid, delta, &sim, start, &out),
        Command::ModelCw {
            n,
            beta,
            h,
            full,
            mag: _,
            out,
        } => model_cw(n, beta, h, full, &out),
        Command::ModelWasp {
            ra,
            rt,
            rw,
            n,
            alpha,
            out,
        } => model_wasp(ra, rt, rw, n, alpha, &out),
    }
}

fn load_chain(
    args: &ChainArgs,
) -> std::result::Result<(ReversibleChain, Option<Vec<usize>>), Failure> {
    let (chain, file_r) = read_chain(&args.input)?;
    let r = match &args.r {
        Some(ids) => Some(chain.indices_of(ids)?),
        None => file_r,
    };
    Ok((chain, r))
}

fn load(args: &ChainArgs) -> std::result::Result<(ReversibleChain, Vec<usize>), Failure> {
    let (chain, r) = load_chain(args)?;
    let r = r.ok_or_else(|| {
        Failure::Usage("no set R: pass --R or include R in the chain file".into())
    })?;
    Ok((chain, r))
}

/// Rates must be positive and strictly increasing.
fn check_grid(name: &str, grid: &[f64]) -> Outcome {
    if grid.iter().any(|v| !(*v > 0.0)) {
        return Err(Failure::Usage(format!("--{name} values must be positive")));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Failure::Usage(format!(
            "--{name} values must be strictly increasing"
        )));
    }
    Ok(())
}

fn single(name: &str, grid: &[f64]) -> std::result::Result<f64, Failure> {
    check_grid(name, grid)?;
    match grid {
        [v] => Ok(*v),
        _ => Err(Failure::Usage(format!("exactly one --{name} is required"))),
    }
}

fn finite_only(name: &str, grid: &[f64]) -> Outcome {
    if grid.iter().any(|v| v.is_infinite()) {
        return Err(Failure::Usage(format!("--{name} must be finite here")));
    }
    Ok(())
}

fn rate(v: f64) -> std::result::Result<Rate, Failure> {
    if v.is_infinite() {
        Ok(Rate::Infinite)
    } else {
        Ok(Rate::finite(v)?)
    }
}

fn seed_of(sim: &SimArgs) -> std::result::Result<u64, Failure> {
    sim.seed
        .ok_or_else(|| Failure::Usage("--seed is mandatory for simulations".into()))
}

fn workers_of(sim: &SimArgs) -> usize {
    sim.workers
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn start_vector(ctx: &Restriction<'_>, start: StartLaw) -> std::result::Result<Vec<f64>, Failure> {
    Ok(match start {
        StartLaw::Qsd => ctx.extend_by_zero(&qsd(ctx)?.mu_star),
        StartLaw::Restricted => ctx.extend_by_zero(ctx.mu_r()),
    })
}

fn validate(args: &ChainArgs, out: &OutArgs) -> Outcome {
    let (chain, r) = load_chain(args)?;
    let gamma = spectral_gap(&chain)?;
    let mut pairs = vec![
        ("states", Cell::from(chain.len())),
        ("edges", Cell::from(chain.edges().len())),
        ("totalMass", Cell::from(chain.mu().iter().sum::<f64>())),
        ("spectralGap", Cell::from(gamma)),
        ("relaxationTime", Cell::from(1.0 / gamma)),
    ];
    if let Some(r) = r {
        let ctx = restrict(&chain, &r)?;
        pairs.push(("rSize", Cell::from(r.len())));
        pairs.push(("rMass", Cell::from(ctx.mass())));
    }
    out.sink().emit(&[Table::key_values("validate", pairs)])?;
    Ok(())
}

fn qsd_tables(chain: &ReversibleChain, r: &[usize]) -> std::result::Result<Vec<Table>, Failure> {
    let ctx = restrict(chain, r)?;
    let q = qsd(&ctx)?;
    let summary = Table::key_values(
        "qsd",
        vec![
            ("phiStar", q.phi_star.into()),
            ("gammaStar", q.gamma_star.into()),
            ("gammaR", q.gamma_r.into()),
            ("epsStar", q.eps_star.into()),
            ("phiR", q.phi_r.into()),
            ("zetaStar", q.zeta_star.into()),
            ("meanExitTime", (1.0 / q.phi_star).into()),
        ],
    );
    let mut measure = Table::new("qsdMeasure", &["state", "muR", "muStar", "hStar"]);
    for (i, &x) in ctx.members().iter().enumerate() {
        measure.push(vec![
            chain.states()[x].as_str().into(),
            ctx.mu_r()[i].into(),
            q.mu_star[i].into(),
            q.h_star[i].into(),
        ]);
    }
    Ok(vec![summary, measure])
}

fn soft_sweep(args: &ChainArgs, grid: &GridArgs, out: &OutArgs) -> Outcome {
    check_grid("lambda", &grid.lambda)?;
    if grid.lambda.is_empty() {
        return Err(Failure::Usage(
            "soft-sweep needs at least one --lambda".into(),
        ));
    }
    let (chain, r) = load(args)?;
    let ctx = restrict(&chain, &r)?;
    let rates = grid
        .lambda
        .iter()
        .map(|&v| rate(v))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let rows = lambda_sweep(&ctx, &rates)?;
    let mut table = Table::new(
        "softSweep",
        &[
            "lambda",
            "phiStar",
            "gammaSoft",
            "gammaStarSoft",
            "epsStar",
            "zetaStar",
            "phiSoft",
            "tvToMuR",
            "tvToQsd",
            "tvStep",
        ],
    );
    for row in rows {
        let q = &row.qsd;
        table.push(vec![
            q.lambda.as_f64().into(),
            q.phi_star.into(),
            q.gamma_soft.into(),
            q.gamma_star_soft.into(),
            q.eps_star.into(),
            q.zeta_star.into(),
            q.phi_soft.into(),
            row.tv_to_mu_r.into(),
            row.tv_to_qsd.into(),
            row.tv_step.into(),
        ]);
    }
    out.sink().emit(&[table])?;
    Ok(())
}

fn capacity(args: &ChainArgs, grid: &GridArgs, out: &OutArgs) -> Outcome {
    check_grid("kappa", &grid.kappa)?;
    check_grid("lambda", &grid.lambda)?;
    let kappas = if grid.kappa.is_empty() {
        vec![f64::INFINITY]
    } else {
        grid.kappa.clone()
    };
    let lambdas = if grid.lambda.is_empty() {
        vec![f64::INFINITY]
    } else {
        grid.lambda.clone()
    };
    let (chain, r) = load(args)?;
    let ctx = restrict(&chain, &r)?;
    let (a, b) = (ctx.members(), ctx.complement());
    let mut table = Table::new(
        "capacity",
        &[
            "kappa",
            "lambda",
            "capacity",
            "phiRate",
            "dirichletEnergy",
            "thomsonEnergy",
            "thomsonLower",
        ],
    );
    for &k in &kappas {
        for &l in &lambdas {
            let (kr, lr) = (rate(k)?, rate(l)?);
            let res = solve_capacity(&chain, a, b, kr, lr)?;
            let lower = thomson_lower_bound(&chain, a, b, kr, lr, &res.flow)?;
            table.push(vec![
                k.into(),
                l.into(),
                res.value.into(),
                res.phi_rate.into(),
                res.dirichlet_energy.into(),
                res.thomson_energy.into(),
                lower.into(),
            ]);
        }
    }
    out.sink().emit(&[table])?;
    Ok(())
}

fn bounds_report(args: &ChainArgs, grid: &GridArgs, delta: f64, out: &OutArgs) -> Outcome {
    check_grid("kappa", &grid.kappa)?;
    check_grid("lambda", &grid.lambda)?;
    finite_only("kappa", &grid.kappa)?;
    finite_only("lambda", &grid.lambda)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Failure::Usage("--delta must lie in (0, 1)".into()));
    }
    let (chain, r) = load(args)?;
    let cfg = ReportConfig {
        kappas: grid.kappa.clone(),
        lambdas: grid.lambda.clone(),
        delta,
        ..ReportConfig::default()
    };
    let report = bounds::bounds_report(&chain, &r, &cfg)?;
    let mut table = Table::new(
        "bounds",
        &[
            "name",
            "label",
            "applicable",
            "lower",
            "exact",
            "upper",
            "status",
            "tightness",
            "note",
        ],
    );
    for rec in &report.records {
        let status = if !rec.applicable {
            "n/a"
        } else if rec.holds {
            "holds"
        } else {
            "VIOLATED"
        };
        table.push(vec![
            rec.name.as_str().into(),
            rec.label.as_str().into(),
            rec.applicable.into(),
            rec.lower.into(),
            rec.exact.into(),
            rec.upper.into(),
            status.into(),
            rec.tightness().into(),
            rec.note.as_str().into(),
        ]);
    }
    let violations = report.violations().count();
    let summary = Table::key_values(
        "boundsSummary",
        vec![
            ("gamma", report.gamma.into()),
            ("phiStar", report.qsd.phi_star.into()),
            ("gammaR", report.qsd.gamma_r.into()),
            ("epsStar", report.qsd.eps_star.into()),
            ("zetaR", report.zeta_r.into()),
            ("alphaR", report.alpha_r.into()),
            ("deltaR", report.delta_r.into()),
            ("dR", report.d_r.map_or(Cell::Empty, Cell::from)),
            ("tStarDelta", report.t_star_delta.into()),
            ("tStar", report.t_star.into()),
            ("piMuR", report.pi_mu_r.into()),
            ("records", report.records.len().into()),
            ("violations", violations.into()),
        ],
    );
    out.sink().emit(&[summary, table])?;
    if violations > 0 {
        return Err(Failure::Violations(violations));
    }
    Ok(())
}

/// One row per trajectory; `scale` turns the stopping time into `T`.
fn sample_table(chain: &ReversibleChain, samples: &[TrajectorySample], scale: f64) -> Table {
    let mut table = Table::new(
        "samples",
        &["seed", "tau", "T", "transitionTime", "endState"],
    );
    for s in samples {
        table.push(vec![
            s.seed.into(),
            s.time.into(),
            (s.time * scale).into(),
            s.transition_time.into(),
            chain.states()[s.end_state].as_str().into(),
        ]);
    }
    table
}

fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    values.sum::<f64>() / n as f64
}

fn simulate_exit(args: &ChainArgs, sim: &SimArgs, start: StartLaw, out: &OutArgs) -> Outcome {
    let seed = seed_of(sim)?;
    if sim.samples == 0 {
        return Err(Failure::Usage("--samples must be positive".into()));
    }
    let (chain, r) = load(args)?;
    let ctx = restrict(&chain, &r)?;
    let side = Side::hard(&ctx)?;
    let phi = side.q.phi_star;
    let law = start_vector(&ctx, start)?;
    let reference = match start {
        StartLaw::Qsd => ExitReference::exponential(),
        StartLaw::Restricted => ExitReference::from_side(&side, ctx.mu_r())?,
    };
    let rule = StopRule::Hit(ctx.complement().to_vec());
    let samples = run_batch(
        &chain,
        &law,
        &rule,
        sim.samples,
        seed,
        workers_of(sim),
        SimConfig::default(),
    )?;
    let scaled: Vec<f64> = samples.iter().map(|s| phi * s.time).collect();
    let ks = reference.ks(&scaled);
    let summary = Table::key_values(
        "exitSummary",
        vec![
            ("samples", sim.samples.into()),
            ("seed", seed.into()),
            ("phiStar", phi.into()),
            ("atom", reference.atom.into()),
            ("shift", reference.shift.into()),
            ("ks", ks.into()),
            (
                "ksCritical1pct",
                (1.628 / (sim.samples as f64).sqrt()).into(),
            ),
            (
                "meanScaledTime",
                mean(scaled.iter().copied(), sim.samples).into(),
            ),
        ],
    );
    out.sink()
        .emit(&[summary, sample_table(&chain, &samples, phi)])?;
    Ok(())
}

fn simulate_transition(
    args: &ChainArgs,
    grid: &GridArgs,
    sim: &SimArgs,
    start: StartLaw,
    out: &OutArgs,
) -> Outcome {
    let seed = seed_of(sim)?;
    let lambda = single("lambda", &grid.lambda)?;
    finite_only("lambda", &grid.lambda)?;
    if sim.samples == 0 {
        return Err(Failure::Usage("--samples must be positive".into()));
    }
    let (chain, r) = load(args)?;
    let ctx = restrict(&chain, &r)?;
    let phi = qsd(&ctx)?.phi_star;
    let law = start_vector(&ctx, start)?;
    let rule = StopRule::Transition {
        r: ctx.members().to_vec(),
        lambda,
    };
    let samples = run_batch(
        &chain,
        &law,
        &rule,
        sim.samples,
        seed,
        workers_of(sim),
        SimConfig::default(),
    )?;
    let mut pairs = vec![
        ("samples", sim.samples.into()),
        ("seed", seed.into()),
        ("lambda", lambda.into()),
        ("phiStar", phi.into()),
        (
            "meanTime",
            mean(samples.iter().map(|s| s.time), sim.samples).into(),
        ),
        (
            "meanTransitionTime",
            mean(
                samples.iter().filter_map(|s| s.transition_time),
                sim.samples,
            )
            .into(),
        ),
    ];
    if let [kappa] = grid.kappa[..] {
        check_grid("kappa", &grid.kappa)?;
        let rec = transition_rate_bracket(&chain, &ctx, kappa, lambda)?;
        pairs.push(("kappa", kappa.into()));
        pairs.push(("rateLower", rec.lower.into()));
        pairs.push(("rateExact", rec.exact.into()));
        pairs.push(("rateUpper", rec.upper.into()));
    }
    let summary = Table::key_values("transitionSummary", pairs);
    out.sink()
        .emit(&[summary, sample_table(&chain, &samples, phi)])?;
    Ok(())
}

fn thermalize(
    args: &ChainArgs,
    grid: &GridArgs,
    delta: f64,
    sim: &SimArgs,
    start: StartLaw,
    out: &OutArgs,
) -> Outcome {
    let seed = seed_of(sim)?;
    let kappa = single("kappa", &grid.kappa)?;
    let lambda = single("lambda", &grid.lambda)?;
    finite_only("kappa", &grid.kappa)?;
    finite_only("lambda", &grid.lambda)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Failure::Usage("--delta must lie in (0, 1)".into()));
    }
    if sim.samples == 0 {
        return Err(Failure::Usage("--samples must be positive".into()));
    }
    let (chain, r) = load(args)?;
    let ctx = restrict(&chain, &r)?;
    let law = start_vector(&ctx, start)?;
    let tail_grid = [0.5, 1.0, 2.0, 4.0, 8.0];
    let report = thermalization_experiment(
        &chain,
        &r,
        kappa,
        lambda,
        delta,
        &law,
        sim.samples,
        seed,
        workers_of(sim),
        &tail_grid,
    )?;
    let env = &report.envelope;
    let summary = Table::key_values(
        "thermalizeSummary",
        vec![
            ("samples", sim.samples.into()),
            ("seed", seed.into()),
            ("kappa", kappa.into()),
            ("lambda", lambda.into()),
            ("delta", delta.into()),
            ("windowR", env.window_r.into()),
            ("windowC", env.window_c.into()),
            ("xi", env.xi.into()),
            ("insideFraction", report.inside_fraction.into()),
            ("meanEpochs", report.mean_epochs.into()),
            ("worstExcess", report.worst_excess().into()),
        ],
    );
    let mut deviations = Table::new(
        "endStates",
        &[
            "state",
            "inside",
            "frequency",
            "target",
            "deviation",
            "stdError",
        ],
    );
    for d in &report.deviations {
        deviations.push(vec![
            chain.states()[d.state].as_str().into(),
            d.inside.into(),
            d.frequency.into(),
            d.target.into(),
            d.deviation.into(),
            d.std_error.into(),
        ]);
    }
    let mut tail = Table::new("tail", &["t", "empirical", "stdError", "bound"]);
    for p in &report.tail {
        tail.push(vec![
            p.t.into(),
            p.empirical.into(),
            p.std_error.into(),
            p.bound.into(),
        ]);
    }
    out.sink().emit(&[summary, deviations, tail])?;
    Ok(())
}

fn model_cw(n: usize, beta: f64, h: f64, full: bool, out: &OutArgs) -> Outcome {
    let spec = CurieWeissSpec::new(n, beta, h)?;
    let asym = cw_asymptotics(&spec);
    let mag = build_cw_mag(n, beta, h)?;
    let exact = cw_exact(&spec, &mag)?;
    let ratios = cw_ratios(&asym, &exact, n);
    let (chain, r) = if full {
        (build_cw_full(n, beta, h)?, spec.metastable_set_full())
    } else {
        (mag, spec.metastable_set())
    };
    let summary = Table::key_values(
        "cwSummary",
        vec![
            ("N", n.into()),
            ("beta", beta.into()),
            ("h", h.into()),
            ("mMinus", spec.m_minus.into()),
            ("mZero", spec.m_zero.into()),
            ("mPlus", spec.m_plus.into()),
            ("barrier", spec.barrier().into()),
            ("barrierPrime", spec.barrier_prime().into()),
        ],
    );
    let mut comparison = Table::new("cwComparison", &["quantity", "formula", "exact", "ratio"]);
    let rows = [
        ("capExit", asym.cap_exit, exact.cap_exit, ratios.cap_exit),
        (
            "capWells",
            asym.cap_wells,
            exact.cap_wells,
            ratios.cap_wells,
        ),
        ("muR", asym.mu_r, exact.mu_r, ratios.mu_r),
        (
            "exitTime",
            asym.exit_time,
            exact.exit_time,
            ratios.exit_time,
        ),
        (
            "relaxationTime",
            asym.relaxation_time,
            exact.relaxation_time,
            exact.relaxation_time / asym.relaxation_time,
        ),
        (
            "relaxOverExit",
            ratios.formula_relax_over_exit,
            ratios.exact_relax_over_exit,
            ratios.exact_relax_over_exit / ratios.formula_relax_over_exit,
        ),
    ];
    for (name, f, e, q) in rows {
        comparison.push(vec![name.into(), f.into(), e.into(), q.into()]);
    }
    let mut tables = vec![summary, comparison];
    tables.extend(qsd_tables(&chain, &r)?);
    let sink = out.sink();
    sink.emit_document("chain.json", &chain_to_json(&chain, Some(&r))?)?;
    sink.emit(&tables)?;
    Ok(())
}

fn model_wasp(ra: f64, rt: f64, rw: f64, n: usize, alpha: f64, out: &OutArgs) -> Outcome {
    let (chain, spec) = build_wasp(ra, rt, rw, n, alpha)?;
    let r = spec.front();
    let ctx = restrict(&chain, &r)?;
    let q = qsd(&ctx)?;
    let summary = Table::key_values(
        "waspSummary",
        vec![
            ("states", chain.len().into()),
            ("lA", spec.l_a.into()),
            ("lT", spec.l_t.into()),
            ("lW", spec.l_w.into()),
            ("alpha", alpha.into()),
            ("thoraxStates", spec.thorax.len().into()),
            ("abdomenStates", spec.abdomen.len().into()),
            ("phiStarFront", q.phi_star.into()),
            (
                "thoraxBudgetKappaPhi",
                thorax_budget(spec.l_t, alpha, q.phi_star).into(),
            ),
            (
                "wingBudgetKappaPhi",
                wing_budget(spec.l_w.max(2), alpha, q.phi_star).into(),
            ),
        ],
    );
    let sink = out.sink();
    sink.emit_document("chain.json", &chain_to_json(&chain, Some(&r))?)?;
    sink.emit(&[summary])?;
    Ok(())
}
