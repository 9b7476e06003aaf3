//! Benchmark harness: runs an algorithm-by-problem matrix, serializes the
//! result table as CSV, and reduces tables to performance profiles and
//! acceptance-ratio summaries.
//!
//! Profiles follow the cost-ratio construction: on each problem the cost of
//! an algorithm is its function-evaluation count divided by the best count
//! among algorithms that converged there; failures cost infinity. A curve
//! point (tau, rho) says the algorithm was within factor tau of the best on
//! fraction rho of the problems. Wall time is recorded but never compared.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use thiserror::Error;

use crate::driver::{self, RunStatus, SearchKind, SolverConfig};
use crate::memory::Scheme;
use crate::problems::{Problem, ProblemError, ProblemSpec};

pub const RESULTS_HEADER: &str =
    "problem,n,algo,status,fevals,gevals,iters,accepted_ratio,final_g_inf,final_f,wall_ms";
pub const PROFILE_HEADER: &str = "algo,tau,rho";

/// The six benchmarked algorithms: four regularized schemes and two
/// line-search baselines. Enum order is the canonical report order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algo {
    RegLbfgs,
    RegLbfgsSec,
    RegLsr1,
    RegLpsb,
    ArmijoLbfgs,
    WolfeLbfgs,
}

pub const ALL_ALGOS: [Algo; 6] = [
    Algo::RegLbfgs,
    Algo::RegLbfgsSec,
    Algo::RegLsr1,
    Algo::RegLpsb,
    Algo::ArmijoLbfgs,
    Algo::WolfeLbfgs,
];

impl Algo {
    pub fn as_str(self) -> &'static str {
        match self {
            Algo::RegLbfgs => "regLBFGS",
            Algo::RegLbfgsSec => "regLBFGSsec",
            Algo::RegLsr1 => "regLSR1",
            Algo::RegLpsb => "regLPSB",
            Algo::ArmijoLbfgs => "armijoLBFGS",
            Algo::WolfeLbfgs => "wolfeLBFGS",
        }
    }
}

impl std::fmt::Display for Algo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Algo {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, BenchError> {
        ALL_ALGOS
            .iter()
            .copied()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| BenchError::UnknownAlgo(s.to_string()))
    }
}

/// Splits a comma-separated algorithm list; `all` selects every algorithm.
pub fn parse_algo_list(s: &str) -> Result<Vec<Algo>, BenchError> {
    if s.trim() == "all" {
        return Ok(ALL_ALGOS.to_vec());
    }
    let algos: Vec<Algo> = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(Algo::from_str)
        .collect::<Result<_, _>>()?;
    if algos.is_empty() {
        return Err(BenchError::EmptySelection("algorithms"));
    }
    Ok(algos)
}

/// Splits a comma-separated problem token list (`name[:n[:cond]]`); `all`
/// selects the whole suite at the default dimension.
pub fn parse_problem_list(s: &str, default_n: usize) -> Result<Vec<ProblemSpec>, BenchError> {
    if s.trim() == "all" {
        return crate::problems::SUITE_NAMES
            .iter()
            .map(|name| ProblemSpec::parse(name, default_n).map_err(BenchError::from))
            .collect();
    }
    let specs: Vec<ProblemSpec> = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| ProblemSpec::parse(t, default_n).map_err(BenchError::from))
        .collect::<Result<_, _>>()?;
    if specs.is_empty() {
        return Err(BenchError::EmptySelection("problems"));
    }
    Ok(specs)
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("unknown algorithm '{0}'")]
    UnknownAlgo(String),
    #[error("no {0} selected")]
    EmptySelection(&'static str),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("duplicate entry for {algo} on {problem}:{n}")]
    DuplicateRow { problem: String, n: usize, algo: String },
    #[error("malformed CSV at line {line}: {msg}")]
    Csv { line: usize, msg: String },
}

/// One benchmark run. `accepted_ratio` is the fraction of accepted steps
/// per iteration for the regularized algorithms and per trial evaluation
/// for the line-search baselines.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub problem: String,
    pub n: usize,
    pub algo: Algo,
    pub status: RunStatus,
    pub fevals: u64,
    pub gevals: u64,
    pub iters: u64,
    pub accepted_ratio: f64,
    pub final_g_inf: f64,
    pub final_f: f64,
    pub wall_ms: f64,
}

fn with_scheme(cfg: &SolverConfig, scheme: Scheme) -> SolverConfig {
    SolverConfig { scheme, ..cfg.clone() }
}

/// Runs one algorithm on one problem and collapses the report into a row.
pub fn run_one(algo: Algo, problem: &Problem, cfg: &SolverConfig) -> ResultRow {
    let started = Instant::now();
    let report = match algo {
        Algo::RegLbfgs => driver::run_regularized(problem, &with_scheme(cfg, Scheme::Bfgs)),
        Algo::RegLbfgsSec => {
            driver::run_regularized(problem, &with_scheme(cfg, Scheme::BfgsSecant))
        }
        Algo::RegLsr1 => driver::run_regularized(problem, &with_scheme(cfg, Scheme::Sr1)),
        Algo::RegLpsb => driver::run_regularized(problem, &with_scheme(cfg, Scheme::Psb)),
        Algo::ArmijoLbfgs => driver::run_linesearch_lbfgs(problem, cfg, SearchKind::Armijo),
        Algo::WolfeLbfgs => driver::run_linesearch_lbfgs(problem, cfg, SearchKind::Wolfe),
    };
    let wall_ms = started.elapsed().as_secs_f64() * 1e3;
    ResultRow {
        problem: problem.name().to_string(),
        n: problem.dim(),
        algo,
        status: report.status,
        fevals: report.fevals,
        gevals: report.gevals,
        iters: report.iters,
        accepted_ratio: report.accepted_ratio,
        final_g_inf: report.final_g_inf,
        final_f: report.final_f,
        wall_ms,
    }
}

/// Runs every algorithm on every problem, one private problem instance per
/// run, and returns the rows sorted by (problem, n, algorithm). With the
/// `parallel` feature enabled and `parallel == true` the runs are spread
/// across worker threads; results are identical either way apart from wall
/// time. All runs are deterministic.
pub fn run_suite(
    algos: &[Algo],
    specs: &[ProblemSpec],
    cfg: &SolverConfig,
    parallel: bool,
) -> Result<Vec<ResultRow>, BenchError> {
    if algos.is_empty() {
        return Err(BenchError::EmptySelection("algorithms"));
    }
    if specs.is_empty() {
        return Err(BenchError::EmptySelection("problems"));
    }
    let mut seen = BTreeSet::new();
    for a in algos {
        if !seen.insert(*a) {
            return Err(BenchError::DuplicateRow {
                problem: "*".into(),
                n: 0,
                algo: a.as_str().into(),
            });
        }
    }
    let mut seen = BTreeSet::new();
    for s in specs {
        if !seen.insert((s.label(), s.n)) {
            return Err(BenchError::DuplicateRow {
                problem: s.label(),
                n: s.n,
                algo: "*".into(),
            });
        }
        // Fail fast on uninstantiable problems before burning solver time.
        s.build()?;
    }

    let jobs: Vec<(Algo, &ProblemSpec)> = algos
        .iter()
        .flat_map(|a| specs.iter().map(move |s| (*a, s)))
        .collect();
    let run_job = |&(algo, spec): &(Algo, &ProblemSpec)| -> Result<ResultRow, BenchError> {
        let problem = spec.build()?;
        let mut row = run_one(algo, &problem, cfg);
        row.problem = spec.label();
        Ok(row)
    };

    #[cfg(feature = "parallel")]
    let mut rows: Vec<ResultRow> = if parallel {
        use rayon::prelude::*;
        jobs.par_iter().map(run_job).collect::<Result<_, _>>()?
    } else {
        jobs.iter().map(run_job).collect::<Result<_, _>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let mut rows: Vec<ResultRow> = {
        let _ = parallel;
        jobs.iter().map(run_job).collect::<Result<_, _>>()?
    };

    rows.sort_by(|a, b| {
        (&a.problem, a.n, a.algo).cmp(&(&b.problem, b.n, b.algo))
    });
    Ok(rows)
}

pub fn write_results_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.problem,
            r.n,
            r.algo,
            r.status,
            r.fevals,
            r.gevals,
            r.iters,
            r.accepted_ratio,
            r.final_g_inf,
            r.final_f,
            r.wall_ms,
        );
    }
    out
}

fn csv_err(line: usize, msg: impl Into<String>) -> BenchError {
    BenchError::Csv { line, msg: msg.into() }
}

pub fn parse_results_csv(text: &str) -> Result<Vec<ResultRow>, BenchError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == RESULTS_HEADER => {}
        _ => return Err(csv_err(1, "missing or wrong header")),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 11 {
            return Err(csv_err(lineno, format!("expected 11 fields, got {}", f.len())));
        }
        let int = |s: &str, what: &str| {
            s.parse::<u64>().map_err(|_| csv_err(lineno, format!("bad {what} '{s}'")))
        };
        let real = |s: &str, what: &str| {
            s.parse::<f64>().map_err(|_| csv_err(lineno, format!("bad {what} '{s}'")))
        };
        rows.push(ResultRow {
            problem: f[0].to_string(),
            n: f[1]
                .parse::<usize>()
                .map_err(|_| csv_err(lineno, format!("bad n '{}'", f[1])))?,
            algo: f[2].parse::<Algo>().map_err(|_| csv_err(lineno, format!("bad algo '{}'", f[2])))?,
            status: RunStatus::parse(f[3])
                .ok_or_else(|| csv_err(lineno, format!("bad status '{}'", f[3])))?,
            fevals: int(f[4], "fevals")?,
            gevals: int(f[5], "gevals")?,
            iters: int(f[6], "iters")?,
            accepted_ratio: real(f[7], "accepted_ratio")?,
            final_g_inf: real(f[8], "final_g_inf")?,
            final_f: real(f[9], "final_f")?,
            wall_ms: real(f[10], "wall_ms")?,
        });
    }
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProfilePoint {
    pub tau: f64,
    pub rho: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProfileCurve {
    pub algo: Algo,
    pub points: Vec<ProfilePoint>,
}

/// Computes performance-profile curves from a result table.
///
/// Rows are grouped by (problem, n). Within a group the best cost is the
/// smallest feval count among converged rows; each algorithm's ratio is its
/// cost over the best, infinity when it failed or is missing. Curves are
/// sampled at every finite ratio, at tau = 1, and, when any failure exists,
/// at a cap of twice the largest finite ratio so the terminal plateau is
/// visible. Problems where every algorithm fails contribute zero to every
/// curve unless `drop_all_fail` removes them from the denominator.
pub fn perf_profile(
    rows: &[ResultRow],
    drop_all_fail: bool,
) -> Result<Vec<ProfileCurve>, BenchError> {
    let mut groups: BTreeMap<(String, usize), BTreeMap<Algo, &ResultRow>> = BTreeMap::new();
    for r in rows {
        let prev = groups
            .entry((r.problem.clone(), r.n))
            .or_default()
            .insert(r.algo, r);
        if prev.is_some() {
            return Err(BenchError::DuplicateRow {
                problem: r.problem.clone(),
                n: r.n,
                algo: r.algo.as_str().into(),
            });
        }
    }
    let algos: BTreeSet<Algo> = rows.iter().map(|r| r.algo).collect();

    // ratios[a] lists one cost ratio per retained problem group.
    let mut ratios: BTreeMap<Algo, Vec<f64>> = algos.iter().map(|a| (*a, Vec::new())).collect();
    for group in groups.values() {
        let best = group
            .values()
            .filter(|r| r.status == RunStatus::Converged)
            .map(|r| r.fevals)
            .min();
        let best = match best {
            Some(b) => b as f64,
            None if drop_all_fail => continue,
            None => f64::INFINITY,
        };
        for a in &algos {
            let ratio = match group.get(a) {
                Some(r) if r.status == RunStatus::Converged => r.fevals as f64 / best,
                _ => f64::INFINITY,
            };
            ratios.get_mut(a).unwrap().push(ratio);
        }
    }

    let n_problems = ratios.values().next().map_or(0, Vec::len);
    let mut taus: Vec<f64> = ratios
        .values()
        .flatten()
        .copied()
        .filter(|r| r.is_finite())
        .collect();
    taus.push(1.0);
    let any_failure = ratios.values().flatten().any(|r| !r.is_finite());
    if any_failure {
        if let Some(max_finite) = taus.iter().copied().fold(None, |m: Option<f64>, t| {
            Some(m.map_or(t, |m| m.max(t)))
        }) {
            taus.push(2.0 * max_finite);
        }
    }
    taus.sort_by(|a, b| a.partial_cmp(b).unwrap());
    taus.dedup();

    let curves = algos
        .iter()
        .map(|a| {
            let rs = &ratios[a];
            let points = taus
                .iter()
                .map(|&tau| {
                    let hit = rs.iter().filter(|&&r| r <= tau).count();
                    let rho = if n_problems > 0 { hit as f64 / n_problems as f64 } else { 0.0 };
                    ProfilePoint { tau, rho }
                })
                .collect();
            ProfileCurve { algo: *a, points }
        })
        .collect();
    Ok(curves)
}

pub fn write_profile_csv(curves: &[ProfileCurve]) -> String {
    let mut out = String::from(PROFILE_HEADER);
    out.push('\n');
    for c in curves {
        for p in &c.points {
            let _ = writeln!(out, "{},{},{}", c.algo, p.tau, p.rho);
        }
    }
    out
}

/// Mean accepted_ratio per algorithm over all rows, in report order.
pub fn mean_accepted_ratio(rows: &[ResultRow]) -> Vec<(Algo, f64)> {
    let mut acc: BTreeMap<Algo, (f64, u64)> = BTreeMap::new();
    for r in rows {
        let e = acc.entry(r.algo).or_insert((0.0, 0));
        e.0 += r.accepted_ratio;
        e.1 += 1;
    }
    acc.into_iter().map(|(a, (sum, cnt))| (a, sum / cnt as f64)).collect()
}
