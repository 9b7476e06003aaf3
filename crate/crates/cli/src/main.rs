//! `regqn` command line: solve a single problem, run the benchmark matrix,
//! or reduce a result table to performance profiles.
//!
//! Exit codes: 0 when all requested runs completed (converged or not),
//! 1 on configuration errors, 2 on internal errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use regqn::bench::{
    self, mean_accepted_ratio, parse_algo_list, parse_problem_list, perf_profile, Algo,
};
use regqn::driver::{self, SearchKind};
use regqn::memory::Scheme;
use regqn::problems::ProblemSpec;
use regqn::{RunReport, SolverConfig, StepClass};

#[derive(Parser)]
#[command(name = "regqn", version, about = "Limited-memory quasi-Newton solvers and benchmarks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one algorithm on one problem and print a run summary
    Solve(SolveArgs),
    /// Benchmark matrix and profile tools
    #[command(subcommand)]
    Bench(BenchCmd),
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Run an algorithm x problem matrix and write a results CSV
    Run(RunArgs),
    /// Turn a results CSV into performance-profile curves
    Profile(ProfileArgs),
}

#[derive(Args)]
struct SolverOpts {
    /// Pair-memory capacity
    #[arg(long, default_value_t = 5)]
    memory: usize,
    /// Nonmonotone window length (0 = monotone)
    #[arg(long, default_value_t = 0)]
    nonmonotone: usize,
    /// Gradient infinity-norm stopping tolerance
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 100_000)]
    max_iters: u64,
}

#[derive(Args)]
struct SolveArgs {
    /// One of: regLBFGS, regLBFGSsec, regLSR1, regLPSB, armijoLBFGS, wolfeLBFGS
    #[arg(long)]
    algo: String,
    /// Problem token `name[:n[:cond]]`
    #[arg(long)]
    problem: String,
    /// Default dimension when the token does not carry one
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Write a per-iteration trace CSV here
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverOpts,
}

#[derive(Args)]
struct RunArgs {
    /// Comma-separated algorithm list, or `all`
    #[arg(long)]
    algos: String,
    /// Comma-separated problem tokens, or `all`
    #[arg(long)]
    problems: String,
    /// Default dimension for tokens without one
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[command(flatten)]
    solver: SolverOpts,
    /// Recorded for reproducibility; the suite itself is deterministic
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (1 = sequential, 0 = one per core)
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Results CSV path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ProfileArgs {
    /// Results CSV produced by `bench run`
    #[arg(long = "in")]
    input: PathBuf,
    /// Profile CSV path
    #[arg(long)]
    out: PathBuf,
    /// Drop problems on which every algorithm failed
    #[arg(long)]
    drop_all_fail: bool,
}

enum AppError {
    Config(String),
    Internal(String),
}

impl From<bench::BenchError> for AppError {
    fn from(e: bench::BenchError) -> Self {
        AppError::Config(e.to_string())
    }
}

impl From<regqn::problems::ProblemError> for AppError {
    fn from(e: regqn::problems::ProblemError) -> Self {
        AppError::Config(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(AppError::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), AppError> {
    match cli.cmd {
        Cmd::Solve(args) => solve(args),
        Cmd::Bench(BenchCmd::Run(args)) => bench_run(args),
        Cmd::Bench(BenchCmd::Profile(args)) => bench_profile(args),
    }
}

fn apply_opts(cfg: &mut SolverConfig, opts: &SolverOpts) -> Result<(), AppError> {
    cfg.m = opts.memory;
    cfg.nonmonotone_m = opts.nonmonotone;
    cfg.tol_g = opts.tol;
    cfg.max_iters = opts.max_iters;
    cfg.validate().map_err(|e| AppError::Config(e.to_string()))
}

fn write_file(path: &Path, text: &str) -> Result<(), AppError> {
    std::fs::write(path, text)
        .map_err(|e| AppError::Internal(format!("writing {}: {e}", path.display())))
}

fn solve(args: SolveArgs) -> Result<(), AppError> {
    let algo = Algo::from_str(&args.algo)?;
    let spec = ProblemSpec::parse(&args.problem, args.n)?;
    let problem = spec.build()?;
    let mut cfg = SolverConfig::default();
    apply_opts(&mut cfg, &args.solver)?;
    cfg.trace = args.trace.is_some();

    let started = Instant::now();
    let report = match algo {
        Algo::RegLbfgs => run_scheme(&problem, &cfg, Scheme::Bfgs),
        Algo::RegLbfgsSec => run_scheme(&problem, &cfg, Scheme::BfgsSecant),
        Algo::RegLsr1 => run_scheme(&problem, &cfg, Scheme::Sr1),
        Algo::RegLpsb => run_scheme(&problem, &cfg, Scheme::Psb),
        Algo::ArmijoLbfgs => driver::run_linesearch_lbfgs(&problem, &cfg, SearchKind::Armijo),
        Algo::WolfeLbfgs => driver::run_linesearch_lbfgs(&problem, &cfg, SearchKind::Wolfe),
    };
    let wall_ms = started.elapsed().as_secs_f64() * 1e3;

    println!("algo           {algo}");
    println!("problem        {} (n = {})", spec.label(), problem.dim());
    println!("status         {}", report.status);
    println!("iters          {}", report.iters);
    println!("fevals         {} (seed search {})", report.fevals, report.seed_fevals);
    println!("gevals         {}", report.gevals);
    println!("accepted       {} ({:.3})", report.accepted_steps, report.accepted_ratio);
    println!("final f        {:.16e}", report.final_f);
    println!("final |g|_inf  {:.3e}", report.final_g_inf);
    println!("wall time      {wall_ms:.1} ms");

    if let Some(path) = args.trace {
        write_file(&path, &trace_csv(&report))?;
        println!("trace written  {}", path.display());
    }
    Ok(())
}

fn run_scheme(problem: &regqn::problems::Problem, cfg: &SolverConfig, scheme: Scheme) -> RunReport {
    let cfg = SolverConfig { scheme, ..cfg.clone() };
    driver::run_regularized(problem, &cfg)
}

fn trace_csv(report: &RunReport) -> String {
    use std::fmt::Write as _;
    let mut out = String::from("k,f,g_inf,mu_or_t,rho,class,mults\n");
    for r in report.trace.as_deref().unwrap_or(&[]) {
        let class = match r.class {
            StepClass::Unsuccessful => "U",
            StepClass::Successful => "S",
            StepClass::HighlySuccessful => "H",
        };
        let rho = r.rho.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{},{},{},{}", r.k, r.f, r.g_inf, r.mu_or_t, rho, class, r.mults);
    }
    out
}

fn bench_run(args: RunArgs) -> Result<(), AppError> {
    let algos = parse_algo_list(&args.algos)?;
    let specs = parse_problem_list(&args.problems, args.n)?;
    let mut cfg = SolverConfig::default();
    apply_opts(&mut cfg, &args.solver)?;

    let parallel = args.jobs != 1;
    if args.jobs > 1 {
        // Applied lazily when the worker pool first spins up.
        std::env::set_var("RAYON_NUM_THREADS", args.jobs.to_string());
    }
    let rows = bench::run_suite(&algos, &specs, &cfg, parallel)?;
    write_file(&args.out, &bench::write_results_csv(&rows))?;

    let converged = rows.iter().filter(|r| r.status == regqn::RunStatus::Converged).count();
    println!(
        "{} runs ({} converged) -> {}  [seed {}]",
        rows.len(),
        converged,
        args.out.display(),
        args.seed,
    );
    println!("mean accepted ratio per algorithm:");
    for (algo, mean) in mean_accepted_ratio(&rows) {
        println!("  {algo:<12} {mean:.3}");
    }
    Ok(())
}

fn bench_profile(args: ProfileArgs) -> Result<(), AppError> {
    let text = std::fs::read_to_string(&args.input)
        .map_err(|e| AppError::Config(format!("reading {}: {e}", args.input.display())))?;
    let rows = bench::parse_results_csv(&text)?;
    let curves = perf_profile(&rows, args.drop_all_fail)?;
    write_file(&args.out, &bench::write_profile_csv(&curves))?;
    println!(
        "{} curves over {} rows -> {}",
        curves.len(),
        rows.len(),
        args.out.display(),
    );
    Ok(())
}
