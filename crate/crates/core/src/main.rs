//! `zsd`: solve, simulate and certify zero-sum matrix games.
//!
//! JSON goes to stdout, human-readable tables to stderr. Exit codes: 0 success,
//! 1 usage or input error, 2 non-convergence (t_max hit or estimate discarded).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use zsd::dynamics::{self, Algorithm, DynamicsConfig, RunResult, StopReason, StoppingRule};
use zsd::equilibrium::{self, EquilibriumResult, SUPPORT_ENUM_MAX};
use zsd::experiments::{self, BatchSpec};
use zsd::game::{epsilon_of, expected_payoff, PayoffMatrix, StrategyProfile};
use zsd::metrics;
use zsd::spectral;
use zsd::Error;

#[derive(Parser)]
#[command(name = "zsd", version, about = "Learning dynamics for two-player zero-sum matrix games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a Nash equilibrium and print it as JSON.
    Solve(SolveArgs),
    /// Run one learning dynamic and print a summary as JSON.
    Run(RunArgs),
    /// Run a batch sweep described by a config file and write its CSV.
    Batch(BatchArgs),
    /// Certify local contraction of FLBR-MWU at the equilibrium.
    Jacobian(JacobianArgs),
    /// Run one learning dynamic and dump per-coordinate trajectories.
    Traj(TrajArgs),
}

#[derive(Args)]
struct GameArgs {
    /// Payoff matrix file: `n m` header, then n rows of m entries in (0, 1].
    #[arg(long, value_name = "PATH", conflicts_with = "random", required_unless_present = "random")]
    matrix: Option<PathBuf>,
    /// Use a seeded random N x N game instead of a matrix file.
    #[arg(long, value_name = "N")]
    random: Option<usize>,
    /// Seed of the random game and of the run.
    #[arg(long, value_name = "U64", default_value_t = 0)]
    seed: u64,
    /// Suppress the human-readable output on stderr.
    #[arg(long)]
    quiet: bool,
}

impl GameArgs {
    fn load(&self) -> zsd::Result<PayoffMatrix> {
        match (&self.matrix, self.random) {
            (Some(path), _) => PayoffMatrix::read(path),
            (None, Some(0)) => Err(Error::Input("--random needs N >= 1".into())),
            (None, Some(n)) => Ok(experiments::random_game(n, n, self.seed)),
            (None, None) => Err(Error::Input("one of --matrix or --random is required".into())),
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    game: GameArgs,
    /// Use the exact solver (closed form for 2x2, support enumeration up to 5x5).
    #[arg(long)]
    oracle: bool,
    /// Estimator learning rate.
    #[arg(long, value_name = "F", default_value_t = equilibrium::DEFAULT_ESTIMATOR_ETA)]
    eta: f64,
    /// Estimator IBR rate.
    #[arg(long, value_name = "F", default_value_t = equilibrium::DEFAULT_ESTIMATOR_XI)]
    xi: f64,
    /// Estimator step budget.
    #[arg(long, value_name = "U64", default_value_t = equilibrium::DEFAULT_ESTIMATOR_TMAX)]
    tmax: u64,
}

#[derive(Args)]
struct DynamicsArgs {
    #[command(flatten)]
    game: GameArgs,
    /// Update rule.
    #[arg(long, value_name = "mwu|omwu|omd|flbr", default_value = "flbr")]
    algo: Algorithm,
    /// Learning rate, in (0, 1).
    #[arg(long, value_name = "F", default_value_t = 0.1)]
    eta: f64,
    /// IBR rate for flbr (default 100). OMD requires xi = eta; MWU and OMWU ignore it.
    #[arg(long, value_name = "F")]
    xi: Option<f64>,
    /// Step budget.
    #[arg(long, value_name = "U64", default_value_t = 1_000_000)]
    tmax: u64,
    /// criterion_kl:TOL, kl_to_ref:TOL, eps_nash:TOL, l1_to_ref:TOL or tmax_only.
    #[arg(long, value_name = "RULE", default_value = "eps_nash:1e-6")]
    stop: StoppingRule,
    /// Steps between trajectory records.
    #[arg(long, value_name = "N", default_value_t = 100)]
    record_every: u64,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    dynamics: DynamicsArgs,
    /// Also write the metrics trajectory CSV to this file.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrajArgs {
    #[command(flatten)]
    dynamics: DynamicsArgs,
    /// Directory receiving coords.csv and metrics.csv.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Args)]
struct BatchArgs {
    /// Batch config: flat `key = value` lines, lists comma-separated.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory; the CSV is named after the config file.
    #[arg(long, value_name = "PATH", default_value = ".")]
    out: PathBuf,
    /// Worker threads (default: ZSD_THREADS, else all logical cores).
    #[arg(long, value_name = "N", env = "ZSD_THREADS")]
    threads: Option<usize>,
    /// Suppress the human-readable table on stderr.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct JacobianArgs {
    #[command(flatten)]
    game: GameArgs,
    /// Learning rate, in (0, 1).
    #[arg(long, value_name = "F", default_value_t = 0.05)]
    eta: f64,
    /// IBR rate.
    #[arg(long, value_name = "F", default_value_t = 10.0)]
    xi: f64,
}

/// Failure carrying its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if matches!(e, Error::Discarded { .. }) { 2 } else { 1 };
        Failure { code, message: e.to_string() }
    }
}

type CmdResult = std::result::Result<u8, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let outcome = match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Run(a) => cmd_run(a),
        Command::Batch(a) => cmd_batch(a),
        Command::Jacobian(a) => cmd_jacobian(a),
        Command::Traj(a) => cmd_traj(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

/// Exact solver when the game is small enough, estimator otherwise.
fn reference_equilibrium(game: &PayoffMatrix) -> zsd::Result<EquilibriumResult> {
    if game.rows() <= SUPPORT_ENUM_MAX && game.cols() <= SUPPORT_ENUM_MAX {
        equilibrium::solve_oracle(game)
    } else {
        equilibrium::estimate_nash_default(game)
    }
}

fn cmd_solve(a: &SolveArgs) -> CmdResult {
    let game = a.game.load()?;
    let ne = if a.oracle {
        equilibrium::solve_oracle(&game)?
    } else {
        equilibrium::estimate_nash(&game, a.eta, a.xi, equilibrium::DEFAULT_ESTIMATOR_TOL, a.tmax)?
    };
    println!("{}", ne.to_json());
    if !a.game.quiet {
        eprintln!("method  {}", ne.method);
        eprintln!("value   {:.12}", ne.value);
        eprintln!("eps     {:e}", ne.certificate_eps);
        if let Some(s) = ne.steps_used {
            eprintln!("steps   {s}");
        }
        print_profile(&ne.profile);
    }
    Ok(0)
}

#[derive(Serialize)]
struct RunSummary<'a> {
    algorithm: &'static str,
    eta: f64,
    xi: Option<f64>,
    stop: String,
    steps: u64,
    stop_reason: String,
    x: &'a [f64],
    y: &'a [f64],
    value: f64,
    eps_nash: f64,
}

fn dynamics_config(a: &DynamicsArgs) -> zsd::Result<DynamicsConfig> {
    let xi = match a.algo {
        Algorithm::Flbr => a.xi.unwrap_or(100.0),
        Algorithm::Omd => a.xi.unwrap_or(a.eta),
        Algorithm::Mwu | Algorithm::Omwu => a.xi.unwrap_or(0.0),
    };
    Ok(DynamicsConfig::new(a.algo, a.eta, xi)?
        .with_t_max(a.tmax)
        .with_record_every(a.record_every)
        .with_seed(a.game.seed))
}

/// Validated config, game and (when the stopping rule needs one) reference.
fn prepare(a: &DynamicsArgs) -> zsd::Result<(PayoffMatrix, DynamicsConfig, Option<EquilibriumResult>)> {
    let cfg = dynamics_config(a)?;
    let game = a.game.load()?;
    let reference = if a.stop.needs_reference() { Some(reference_equilibrium(&game)?) } else { None };
    Ok((game, cfg, reference))
}

fn report_run(res: &RunResult, game: &PayoffMatrix, cfg: &DynamicsConfig, stop: StoppingRule, quiet: bool) -> CmdResult {
    let p = res.profile();
    let summary = RunSummary {
        algorithm: cfg.algorithm.name(),
        eta: cfg.eta,
        xi: cfg.algorithm.has_intermediate().then(|| cfg.effective_xi()),
        stop: stop.to_string(),
        steps: res.steps,
        stop_reason: res.stop_reason.to_string(),
        x: p.x.probabilities(),
        y: p.y.probabilities(),
        value: expected_payoff(game, &p.x, &p.y)?,
        eps_nash: epsilon_of(game, p)?,
    };
    println!("{}", serde_json::to_string(&summary).expect("finite floats serialize"));
    if !quiet {
        eprintln!("algorithm  {}", summary.algorithm);
        eprintln!("steps      {}", summary.steps);
        eprintln!("stopped    {}", summary.stop_reason);
        eprintln!("value      {:.12}", summary.value);
        eprintln!("eps_nash   {:e}", summary.eps_nash);
        print_profile(p);
    }
    match res.stop_reason {
        StopReason::Criterion => Ok(0),
        StopReason::TMax => Ok(2),
        StopReason::NumericsError => Err(Failure {
            code: 1,
            message: res.numerics_error.clone().unwrap_or_else(|| "numerical failure".into()),
        }),
    }
}

fn cmd_run(a: &RunArgs) -> CmdResult {
    let d = &a.dynamics;
    let (game, cfg, reference) = prepare(d)?;
    let reference = reference.as_ref().map(|r| &r.profile);
    let res = dynamics::run(&game, &cfg, d.stop, reference)?;
    if let Some(path) = &a.out {
        write_metrics(path, &res)?;
    }
    report_run(&res, &game, &cfg, d.stop, d.game.quiet)
}

fn write_metrics(path: &Path, res: &RunResult) -> zsd::Result<()> {
    let io = |e| Error::Io { path: path.to_path_buf(), source: e };
    let mut buf = Vec::new();
    metrics::write_trajectory_csv(&res.records, &mut buf).map_err(io)?;
    std::fs::write(path, buf).map_err(io)
}

fn cmd_traj(a: &TrajArgs) -> CmdResult {
    let d = &a.dynamics;
    let (game, cfg, reference) = prepare(d)?;
    let reference = reference.as_ref().map(|r| &r.profile);
    let start = StrategyProfile::uniform(game.rows(), game.cols());
    let res = experiments::trajectory_dump(&game, &cfg, d.stop, reference, start, &a.out)?;
    report_run(&res, &game, &cfg, d.stop, d.game.quiet)
}

fn cmd_batch(a: &BatchArgs) -> CmdResult {
    let spec = BatchSpec::read(&a.config)?;
    if a.threads == Some(0) {
        return Err(Error::Config("--threads must be at least 1".into()).into());
    }
    let results = experiments::run_batch(&spec, a.threads)?;
    let stem = a
        .config
        .file_stem()
        .ok_or_else(|| Error::Input(format!("config path {} has no file name", a.config.display())))?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::Io { path: a.out.clone(), source: e })?;
    let path = a.out.join(stem).with_extension("csv");
    std::fs::write(&path, experiments::batch_csv(&results)).map_err(|e| Error::Io { path: path.clone(), source: e })?;
    if !a.quiet {
        eprintln!("{:>4} {:>6} {:>8} {:>8} {:>12} {:>12} {:>8}", "n", "algo", "eta", "xi", "mean", "median", "tmax%");
        for r in &results {
            let xi = r.cell.xi.map(|x| x.to_string()).unwrap_or_else(|| "-".into());
            eprintln!(
                "{:>4} {:>6} {:>8} {:>8} {:>12.1} {:>12.1} {:>8.1}",
                r.cell.n,
                r.cell.algorithm.name(),
                r.cell.eta,
                xi,
                r.stats.mean,
                r.stats.median,
                100.0 * r.stats.tmax_hit_rate
            );
        }
        eprintln!("wrote {}", path.display());
    }
    Ok(0)
}

fn cmd_jacobian(a: &JacobianArgs) -> CmdResult {
    let game = a.game.load()?;
    // Reject bad rates before paying for the equilibrium.
    DynamicsConfig::flbr(a.eta, a.xi)?;
    let ne = reference_equilibrium(&game)?;
    let report = spectral::certify_contraction(&game, &ne, a.eta, a.xi)?;
    println!("{}", report.to_json());
    if !a.game.quiet {
        eprintln!("spectral radius          {:.12}", report.spectral_radius);
        eprintln!("support spectral radius  {:.12}", report.support_spectral_radius);
        eprintln!("contraction              {}", report.is_contraction);
        eprintln!("D^xx diagonal < 0        {}", report.dxx_diag_negative);
        eprintln!("D^yy diagonal < 0        {}", report.dyy_diag_negative);
        match &report.pnorm_certificate {
            Some(c) => eprintln!("p-norm certificate       p={} bound {:.6}", c.p, c.bound),
            None => eprintln!("p-norm certificate       none"),
        }
    }
    Ok(0)
}

fn print_profile(p: &StrategyProfile) {
    let fmt = |v: &[f64]| v.iter().map(|q| format!("{q:.6}")).collect::<Vec<_>>().join(" ");
    eprintln!("x       {}", fmt(p.x.probabilities()));
    eprintln!("y       {}", fmt(p.y.probabilities()));
}
