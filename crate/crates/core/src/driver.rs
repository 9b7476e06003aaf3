//! Outer loops: the regularized quasi-Newton method and the line-search
//! baselines it is benchmarked against.
//!
//! The regularized loop replaces a line search with a shift parameter mu:
//! each iteration solves `(B + mu I) d = -g` through a compact engine,
//! gates the step on a predicted-decrease test, and compares predicted
//! against achieved reduction to move mu. Rejected steps cost one function
//! evaluation at most (none when the gate fails) and never touch the
//! iterate. Acceptance bookkeeping is arranged so each iteration does only
//! O(mn) length-n work; norms of the current gradient come from caches.

use std::collections::VecDeque;

use thiserror::Error;

use crate::compact::{self, StepResult};
use crate::densecore::norm_inf;
use crate::linesearch::{self, LineSearchError};
use crate::memory::{MemoryState, PrevSolve, Scheme};
use crate::problems::Problem;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepClass {
    Unsuccessful,
    Successful,
    HighlySuccessful,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    Converged,
    MaxIters,
    MuOverflow,
    LineSearchFail,
    NumericalError,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Converged => "Converged",
            RunStatus::MaxIters => "MaxIters",
            RunStatus::MuOverflow => "MuOverflow",
            RunStatus::LineSearchFail => "LineSearchFail",
            RunStatus::NumericalError => "NumericalError",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "Converged" => RunStatus::Converged,
            "MaxIters" => RunStatus::MaxIters,
            "MuOverflow" => RunStatus::MuOverflow,
            "LineSearchFail" => RunStatus::LineSearchFail,
            "NumericalError" => RunStatus::NumericalError,
            _ => return None,
        })
    }
}

impl std::fmt::Display for RunStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Parameters of the outer loops. Defaults follow the evaluation protocol:
/// unit initial shift, millionth-scale gate and acceptance constants,
/// halving/quadrupling shift moves, and an infinity-norm gradient stop.
#[derive(Clone, Debug)]
pub struct SolverConfig {
    /// Pair-memory capacity.
    pub m: usize,
    /// Initial regularization shift.
    pub mu0: f64,
    /// Predicted-decrease gate constant.
    pub p_min: f64,
    /// Lower acceptance threshold on ared/pred (also the Armijo constant).
    pub c1: f64,
    /// Upper band edge on ared/pred (also the Wolfe curvature constant).
    pub c2: f64,
    /// Shift decrease factor on highly successful steps.
    pub sigma1: f64,
    /// Shift increase factor on unsuccessful steps.
    pub sigma2: f64,
    /// Shift floor.
    pub mu_min: f64,
    /// Shift ceiling; crossing it aborts the run.
    pub mu_max: f64,
    /// Cautious-update threshold for pair storage.
    pub eps_cautious: f64,
    /// Stop when the gradient infinity norm drops below this.
    pub tol_g: f64,
    pub max_iters: u64,
    /// Window length for the nonmonotone reference; 0 is monotone.
    pub nonmonotone_m: usize,
    pub scheme: Scheme,
    /// Smallest line-search step for the baselines.
    pub t_min: f64,
    /// Record per-iteration data in the report.
    pub trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            m: 5,
            mu0: 1.0,
            p_min: 1e-4,
            c1: 1e-4,
            c2: 0.9,
            sigma1: 0.5,
            sigma2: 4.0,
            mu_min: 1e-4,
            mu_max: 1e15,
            eps_cautious: 1e-8,
            tol_g: 1e-4,
            max_iters: 100_000,
            nonmonotone_m: 0,
            scheme: Scheme::Bfgs,
            t_min: 1e-15,
            trace: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: &str| Err(ConfigError::Invalid(msg.into()));
        if self.m < 1 {
            return bad("memory must hold at least one pair");
        }
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return bad("need 0 < c1 < c2 < 1");
        }
        if !(0.0 < self.sigma1 && self.sigma1 < 1.0 && self.sigma2 > 1.0) {
            return bad("need 0 < sigma1 < 1 < sigma2");
        }
        if !(self.p_min > 0.0 && self.p_min < 1.0) {
            return bad("p_min must lie in (0, 1)");
        }
        if !(self.mu_min > 0.0 && self.mu0 >= self.mu_min && self.mu0 <= self.mu_max) {
            return bad("need mu_min > 0 and mu0 in [mu_min, mu_max]");
        }
        if !(self.tol_g > 0.0) {
            return bad("tol_g must be positive");
        }
        if !(self.t_min > 0.0) {
            return bad("t_min must be positive");
        }
        Ok(())
    }
}

/// One recorded iteration: objective, gradient norm, the shift (or step
/// size for baselines) used, the achieved/predicted ratio when the trial
/// was evaluated, the classification, and the length-n multiplication
/// count this iteration incurred.
#[derive(Clone, Debug)]
pub struct IterRecord {
    pub k: u64,
    pub f: f64,
    pub g_inf: f64,
    pub mu_or_t: f64,
    pub rho: Option<f64>,
    pub class: StepClass,
    pub mults: u64,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub status: RunStatus,
    pub iters: u64,
    pub fevals: u64,
    pub gevals: u64,
    /// Trial evaluations spent inside the opening line search.
    pub seed_fevals: u64,
    pub accepted_steps: u64,
    /// Fraction of accepted steps per iteration for the regularized loops;
    /// fraction of accepted trial evaluations for the line-search loops.
    pub accepted_ratio: f64,
    pub final_f: f64,
    pub final_g_inf: f64,
    pub final_x: Vec<f64>,
    pub trace: Option<Vec<IterRecord>>,
}

/// Classifies a trial step and moves the shift. The gate is checked first:
/// when pred fails to clear `p_min ||g|| ||d||` (or is NaN) the step is
/// unsuccessful without consulting ared. Otherwise the ratio ared/pred is
/// banded by c1 and c2.
pub fn classify_and_update_mu(
    pred: f64,
    ared: f64,
    d_norm: f64,
    g_norm: f64,
    mu: f64,
    cfg: &SolverConfig,
) -> (StepClass, f64) {
    if !(pred > cfg.p_min * g_norm * d_norm) {
        return (StepClass::Unsuccessful, cfg.sigma2 * mu);
    }
    let rho = ared / pred;
    if !(rho > cfg.c1) {
        (StepClass::Unsuccessful, cfg.sigma2 * mu)
    } else if rho <= cfg.c2 {
        (StepClass::Successful, mu)
    } else {
        (StepClass::HighlySuccessful, (cfg.sigma1 * mu).max(cfg.mu_min))
    }
}

/// Reference value for the acceptance test: the current objective during
/// the first `m` iterations or in monotone mode, the window maximum after.
/// `history` holds iterate values newest-last, repeated across rejections.
pub fn nonmonotone_ref(history: &[f64], k: u64, m: usize) -> f64 {
    let current = *history.last().expect("history holds at least the current value");
    if m == 0 || k < m as u64 {
        return current;
    }
    let start = history.len().saturating_sub(m);
    history[start..].iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn engine_step(scheme: Scheme, mem: &MemoryState, g: &[f64], mu: f64) -> StepResult {
    match scheme {
        Scheme::Bfgs => compact::bfgs_step(mem, g, mu),
        Scheme::Sr1 => compact::sr1_step(mem, g, mu),
        Scheme::Psb => compact::psb_step(mem, g, mu),
        Scheme::BfgsSecant => compact::secant_two_loop_step(mem, g, mu),
    }
}

struct HistoryWindow {
    values: VecDeque<f64>,
    cap: usize,
}

impl HistoryWindow {
    fn new(cap: usize, first: f64) -> Self {
        let mut values = VecDeque::with_capacity(cap + 1);
        values.push_back(first);
        HistoryWindow { values, cap }
    }

    fn push(&mut self, v: f64) {
        self.values.push_back(v);
        while self.values.len() > self.cap {
            self.values.pop_front();
        }
    }

    fn as_slice(&mut self) -> &[f64] {
        self.values.make_contiguous()
    }
}

fn finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Runs the regularized method with the scheme chosen in `cfg`.
///
/// Flow: evaluate at x0; take one strong-Wolfe step along the normalized
/// negative gradient to obtain the first pair; then iterate shift-solve,
/// gate, trial evaluation, classification. Unsolvable or gated steps are
/// rejected without evaluating f. Problem counters are reset on entry so
/// the report's counts equal the problem's.
pub fn run_regularized(problem: &Problem, cfg: &SolverConfig) -> RunReport {
    cfg.validate().expect("invalid solver configuration");
    let n = problem.dim();
    problem.reset_counters();
    let mut trace: Option<Vec<IterRecord>> = cfg.trace.then(Vec::new);

    let mut x = problem.x0();
    let f0 = problem.eval_f(&x);
    let g0 = problem.eval_g(&x);
    let mut g_inf = norm_inf(&g0);

    let finish = |status: RunStatus,
                  iters: u64,
                  seed_fevals: u64,
                  accepted: u64,
                  f: f64,
                  g_inf: f64,
                  x: Vec<f64>,
                  trace: Option<Vec<IterRecord>>| {
        RunReport {
            status,
            iters,
            fevals: problem.fevals(),
            gevals: problem.gevals(),
            seed_fevals,
            accepted_steps: accepted,
            accepted_ratio: if iters > 0 { accepted as f64 / iters as f64 } else { 1.0 },
            final_f: f,
            final_g_inf: g_inf,
            final_x: x,
            trace,
        }
    };

    if !f0.is_finite() || !finite(&g0) {
        return finish(RunStatus::NumericalError, 0, 0, 0, f0, g_inf, x, trace);
    }
    if g_inf < cfg.tol_g {
        return finish(RunStatus::Converged, 0, 0, 0, f0, g_inf, x, trace);
    }

    // Opening pair from one line search along the normalized steepest
    // descent direction.
    let seed = match linesearch::initial_seed_search(
        problem, &x, f0, &g0, cfg.c1, cfg.c2, cfg.t_min,
    ) {
        Ok(s) => s,
        Err(_) => {
            return finish(RunStatus::LineSearchFail, 0, 0, 0, f0, g_inf, x, trace);
        }
    };
    let seed_fevals = seed.fevals;
    if !seed.f1.is_finite() || !finite(&seed.g1) {
        return finish(RunStatus::NumericalError, 0, seed_fevals, 0, seed.f1, g_inf, x, trace);
    }

    let mut mem = MemoryState::new(n, cfg.m);
    mem.set_cautious_eps(cfg.eps_cautious);
    mem.register_gradient(&g0);
    mem.push_pair(&seed.s0, &seed.y0, &seed.g1, None, cfg.scheme);

    x = seed.x1;
    let mut f_cur = seed.f1;
    let mut g = seed.g1;
    g_inf = norm_inf(&g);

    let mut history = HistoryWindow::new(cfg.nonmonotone_m.max(1), f_cur);
    let mut mu = cfg.mu0;
    let mut iters: u64 = 0;
    let mut accepted: u64 = 0;

    loop {
        if g_inf < cfg.tol_g {
            return finish(RunStatus::Converged, iters, seed_fevals, accepted, f_cur, g_inf, x, trace);
        }
        if iters >= cfg.max_iters {
            return finish(RunStatus::MaxIters, iters, seed_fevals, accepted, f_cur, g_inf, x, trace);
        }
        if mu > cfg.mu_max {
            return finish(RunStatus::MuOverflow, iters, seed_fevals, accepted, f_cur, g_inf, x, trace);
        }

        let k = iters;
        let mults_before = mem.mults();
        let mu_used = mu;
        let st = engine_step(cfg.scheme, &mem, &g, mu);
        // Euclidean gradient norm for the gate, off the cache.
        let g_norm2 = mem.gg().sqrt();

        let gate_ok = st.solvable && st.pred > cfg.p_min * g_norm2 * st.d_norm;
        let mut rho = None;
        let class;
        if !gate_ok {
            // Rejected before any evaluation; the shift grows.
            class = StepClass::Unsuccessful;
            mu = cfg.sigma2 * mu;
        } else {
            let mut trial = x.clone();
            crate::densecore::axpy(1.0, &st.d, &mut trial);
            let f_trial = problem.eval_f(&trial);
            let f_ref = nonmonotone_ref(history.as_slice(), k, cfg.nonmonotone_m);
            let ared = f_ref - f_trial;
            let (cls, mu_next) =
                classify_and_update_mu(st.pred, ared, st.d_norm, g_norm2, mu, cfg);
            rho = Some(ared / st.pred);
            class = cls;
            mu = mu_next;
            if cls != StepClass::Unsuccessful {
                if !f_trial.is_finite() {
                    return finish(
                        RunStatus::NumericalError,
                        iters + 1,
                        seed_fevals,
                        accepted,
                        f_trial,
                        g_inf,
                        trial,
                        trace,
                    );
                }
                let g_new = problem.eval_g(&trial);
                if !finite(&g_new) {
                    return finish(
                        RunStatus::NumericalError,
                        iters + 1,
                        seed_fevals,
                        accepted,
                        f_trial,
                        g_inf,
                        trial,
                        trace,
                    );
                }
                let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
                let prev = PrevSolve {
                    p: st.p.clone(),
                    gamma_hat: st.gamma_hat,
                    scheme: cfg.scheme,
                };
                mem.push_pair(&st.d, &y, &g_new, Some(&prev), cfg.scheme);
                accepted += 1;
                x = trial;
                f_cur = f_trial;
                g = g_new;
                g_inf = norm_inf(&g);
            }
        }
        iters += 1;
        history.push(f_cur);
        if let Some(t) = trace.as_mut() {
            t.push(IterRecord {
                k,
                f: f_cur,
                g_inf,
                mu_or_t: mu_used,
                rho,
                class,
                mults: mem.mults() - mults_before,
            });
        }
    }
}

/// Which line search drives the baseline loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SearchKind {
    Armijo,
    Wolfe,
}

/// Standard limited-memory BFGS with a line search: two-loop direction at
/// zero shift, Armijo or strong-Wolfe step, cautious pair storage. The
/// nonmonotone window replaces the Armijo reference value when enabled.
pub fn run_linesearch_lbfgs(
    problem: &Problem,
    cfg: &SolverConfig,
    search: SearchKind,
) -> RunReport {
    cfg.validate().expect("invalid solver configuration");
    let n = problem.dim();
    problem.reset_counters();
    let mut trace: Option<Vec<IterRecord>> = cfg.trace.then(Vec::new);

    let mut x = problem.x0();
    let mut f_cur = problem.eval_f(&x);
    let mut g = problem.eval_g(&x);
    let mut g_inf = norm_inf(&g);

    let finish = |status: RunStatus,
                  iters: u64,
                  accepted: u64,
                  f: f64,
                  g_inf: f64,
                  x: Vec<f64>,
                  trace: Option<Vec<IterRecord>>| {
        let fevals = problem.fevals();
        // Trial-based acceptance: accepted trials over all post-x0 trials.
        let trials = fevals.saturating_sub(1);
        RunReport {
            status,
            iters,
            fevals,
            gevals: problem.gevals(),
            seed_fevals: 0,
            accepted_steps: accepted,
            accepted_ratio: if trials > 0 { accepted as f64 / trials as f64 } else { 1.0 },
            final_f: f,
            final_g_inf: g_inf,
            final_x: x,
            trace,
        }
    };

    if !f_cur.is_finite() || !finite(&g) {
        return finish(RunStatus::NumericalError, 0, 0, f_cur, g_inf, x, trace);
    }

    let mut mem = MemoryState::new(n, cfg.m);
    mem.set_cautious_eps(cfg.eps_cautious);
    mem.register_gradient(&g);
    let mut history = HistoryWindow::new(cfg.nonmonotone_m.max(1), f_cur);
    let mut iters: u64 = 0;
    let mut accepted: u64 = 0;

    loop {
        if g_inf < cfg.tol_g {
            return finish(RunStatus::Converged, iters, accepted, f_cur, g_inf, x, trace);
        }
        if iters >= cfg.max_iters {
            return finish(RunStatus::MaxIters, iters, accepted, f_cur, g_inf, x, trace);
        }

        let k = iters;
        let mults_before = mem.mults();
        let st = compact::secant_two_loop_step(&mem, &g, 0.0);
        let f_ref = nonmonotone_ref(history.as_slice(), k, cfg.nonmonotone_m);

        let outcome = match search {
            SearchKind::Armijo => linesearch::armijo_backtrack(
                problem, &x, &st.d, f_ref, st.g_dot_d, cfg.c1, cfg.t_min,
            ),
            SearchKind::Wolfe => linesearch::more_thuente(
                problem, &x, &st.d, f_ref, st.g_dot_d, cfg.c1, cfg.c2, cfg.t_min,
            ),
        };
        let outcome = match outcome {
            Ok(o) if o.converged => o,
            Ok(_) | Err(LineSearchError::NotDescent(_)) => {
                return finish(RunStatus::LineSearchFail, iters, accepted, f_cur, g_inf, x, trace);
            }
            Err(LineSearchError::SearchFailed) => {
                return finish(RunStatus::LineSearchFail, iters, accepted, f_cur, g_inf, x, trace);
            }
        };

        let mut x_new = x.clone();
        crate::densecore::axpy(outcome.t, &st.d, &mut x_new);
        let g_new = match outcome.g_new {
            Some(gn) => gn,
            None => problem.eval_g(&x_new),
        };
        if !outcome.f_new.is_finite() || !finite(&g_new) {
            return finish(RunStatus::NumericalError, iters + 1, accepted, outcome.f_new, g_inf, x_new, trace);
        }

        let s: Vec<f64> = st.d.iter().map(|v| v * outcome.t).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        mem.push_pair(&s, &y, &g_new, None, Scheme::BfgsSecant);

        iters += 1;
        accepted += 1;
        x = x_new;
        f_cur = outcome.f_new;
        g = g_new;
        g_inf = norm_inf(&g);
        history.push(f_cur);
        if let Some(t) = trace.as_mut() {
            t.push(IterRecord {
                k,
                f: f_cur,
                g_inf,
                mu_or_t: outcome.t,
                rho: None,
                class: StepClass::Successful,
                mults: mem.mults() - mults_before,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems;

    #[test]
    fn classification_bands() {
        let cfg = SolverConfig::default();
        // Exact model: highly successful, shift halves.
        let (c, mu) = classify_and_update_mu(1.5, 1.5, 1.0, 2.0, 1.0, &cfg);
        assert_eq!(c, StepClass::HighlySuccessful);
        assert_eq!(mu, 0.5);
        // Middling ratio: successful, shift unchanged.
        let (c, mu) = classify_and_update_mu(1.0, 0.5, 1.0, 2.0, 1.0, &cfg);
        assert_eq!(c, StepClass::Successful);
        assert_eq!(mu, 1.0);
        // Gate failure: unsuccessful, shift quadruples, ared never used.
        let (c, mu) = classify_and_update_mu(1e-9, f64::NAN, 1.0, 1.0, 1.0, &cfg);
        assert_eq!(c, StepClass::Unsuccessful);
        assert_eq!(mu, 4.0);
    }

    #[test]
    fn shift_floor_holds_on_decrease() {
        let cfg = SolverConfig::default();
        let (c, mu) = classify_and_update_mu(1.0, 1.0, 1.0, 1.0, cfg.mu_min, &cfg);
        assert_eq!(c, StepClass::HighlySuccessful);
        assert_eq!(mu, cfg.mu_min, "shift must not drop below the floor");
    }

    #[test]
    fn nan_ared_is_unsuccessful() {
        let cfg = SolverConfig::default();
        let (c, mu) = classify_and_update_mu(1.0, f64::NAN, 1.0, 1.0, 1.0, &cfg);
        assert_eq!(c, StepClass::Unsuccessful);
        assert_eq!(mu, 4.0);
    }

    #[test]
    fn reference_value_windows() {
        // Early iterations use the current value even in nonmonotone mode.
        assert_eq!(nonmonotone_ref(&[5.0, 4.0, 3.0, 2.0], 3, 8), 2.0);
        // Window max afterwards.
        assert_eq!(nonmonotone_ref(&[2.0, 7.0, 4.0], 10, 3), 7.0);
        // Monotone mode ignores the window entirely.
        assert_eq!(nonmonotone_ref(&[2.0, 7.0, 4.0], 10, 0), 4.0);
    }

    #[test]
    fn config_validation_rejects_bad_bands() {
        let mut cfg = SolverConfig::default();
        cfg.c1 = 0.95;
        assert!(cfg.validate().is_err());
        let mut cfg = SolverConfig::default();
        cfg.sigma2 = 0.5;
        assert!(cfg.validate().is_err());
        let mut cfg = SolverConfig::default();
        cfg.mu0 = 1e-6;
        assert!(cfg.validate().is_err(), "mu0 below mu_min");
        assert!(SolverConfig::default().validate().is_ok());
    }

    #[test]
    fn quadratic_converges_quickly() {
        let p = problems::by_name("quadratic", 10, Some(10.0)).unwrap();
        let cfg = SolverConfig::default();
        let rep = run_regularized(&p, &cfg);
        assert_eq!(rep.status, RunStatus::Converged);
        assert!(rep.final_g_inf < cfg.tol_g);
        assert!(rep.fevals <= 200, "fevals = {}", rep.fevals);
        assert_eq!(rep.fevals, p.fevals());
    }

    #[test]
    fn monotone_mode_decreases_strictly() {
        let p = problems::by_name("extrosenbrock", 10, None).unwrap();
        let mut cfg = SolverConfig::default();
        cfg.trace = true;
        let rep = run_regularized(&p, &cfg);
        assert_eq!(rep.status, RunStatus::Converged);
        let trace = rep.trace.as_ref().unwrap();
        let mut last = f64::INFINITY;
        for r in trace {
            if r.class != StepClass::Unsuccessful {
                assert!(r.f < last, "accepted objective failed to decrease");
                last = r.f;
            }
        }
        assert!(rep.accepted_steps > 0);
    }

    #[test]
    fn feval_accounting_matches_gate_structure() {
        let p = problems::by_name("broydentri", 50, None).unwrap();
        let mut cfg = SolverConfig::default();
        cfg.trace = true;
        let rep = run_regularized(&p, &cfg);
        assert_eq!(rep.status, RunStatus::Converged);
        let trace = rep.trace.as_ref().unwrap();
        // Iterations that evaluated f are exactly those with a recorded
        // ratio; the rest were gated out before evaluation.
        let evaluated = trace.iter().filter(|r| r.rho.is_some()).count() as u64;
        assert_eq!(rep.fevals, 1 + rep.seed_fevals + evaluated);
        assert_eq!(rep.iters, trace.len() as u64);
    }

    #[test]
    fn plateau_rejections_overflow_shift_at_25() {
        // Objective flat ahead of the iterate with a gradient that never
        // matches: every trial has ared = 0, so every step is rejected and
        // the shift quadruples until it crosses the ceiling.
        let p = problems::custom(
            "plateau",
            vec![0.0, 0.0],
            |x| if x[0] < 0.5 { 1.0 + (1.0 - x[0]) * (1.0 - x[0]) } else { 1.0 },
            |x| {
                if x[0] < 0.5 {
                    vec![-2.0, 0.0]
                } else {
                    vec![-0.5, 0.0]
                }
            },
        );
        let mut cfg = SolverConfig::default();
        cfg.trace = true;
        let rep = run_regularized(&p, &cfg);
        assert_eq!(rep.status, RunStatus::MuOverflow);
        assert_eq!(rep.iters, 25, "4^25 is the first power above 1e15");
        assert_eq!(rep.accepted_steps, 0);
        let trace = rep.trace.unwrap();
        assert!(trace.iter().all(|r| r.class == StepClass::Unsuccessful));
        // Every rejection here evaluated the trial point once.
        assert_eq!(rep.fevals, 1 + rep.seed_fevals + 25);
    }

    #[test]
    fn wolfe_baseline_solves_quadratic() {
        let p = problems::by_name("quadratic", 10, None).unwrap();
        let cfg = SolverConfig::default();
        let rep = run_linesearch_lbfgs(&p, &cfg, SearchKind::Wolfe);
        assert_eq!(rep.status, RunStatus::Converged);
        assert!(rep.fevals <= 150, "fevals = {}", rep.fevals);
    }

    #[test]
    fn armijo_baseline_solves_rosenbrock() {
        let p = problems::by_name("extrosenbrock", 100, None).unwrap();
        let cfg = SolverConfig::default();
        let rep = run_linesearch_lbfgs(&p, &cfg, SearchKind::Armijo);
        assert_eq!(rep.status, RunStatus::Converged);
        assert!(rep.fevals <= 100_000);
        assert!(rep.accepted_ratio <= 1.0 && rep.accepted_ratio > 0.0);
    }

    #[test]
    fn inconsistent_gradient_fails_line_search() {
        // The reported gradient promises descent along +e1 but f increases:
        // backtracking exhausts and the run ends LineSearchFail.
        let p = problems::custom("liar", vec![0.0], |x| x[0], |_| vec![-1.0]);
        let cfg = SolverConfig::default();
        let rep = run_linesearch_lbfgs(&p, &cfg, SearchKind::Armijo);
        assert_eq!(rep.status, RunStatus::LineSearchFail);
    }

    #[test]
    fn converged_at_start_costs_one_evaluation() {
        let p = problems::custom("flat", vec![0.0, 0.0], |_| 0.0, |_| vec![0.0, 0.0]);
        let cfg = SolverConfig::default();
        let rep = run_regularized(&p, &cfg);
        assert_eq!(rep.status, RunStatus::Converged);
        assert_eq!(rep.iters, 0);
        assert_eq!(rep.fevals, 1);
        assert_eq!(rep.gevals, 1);
    }

    #[test]
    fn all_schemes_solve_small_rosenbrock() {
        for scheme in [Scheme::Bfgs, Scheme::BfgsSecant, Scheme::Sr1, Scheme::Psb] {
            let p = problems::by_name("extrosenbrock", 20, None).unwrap();
            let cfg = SolverConfig { scheme, ..SolverConfig::default() };
            let rep = run_regularized(&p, &cfg);
            assert_eq!(rep.status, RunStatus::Converged, "{scheme:?} failed");
            assert!(rep.final_g_inf < cfg.tol_g);
        }
    }

    #[test]
    fn nonmonotone_window_still_converges() {
        let p = problems::by_name("extrosenbrock", 100, None).unwrap();
        let cfg = SolverConfig { nonmonotone_m: 8, ..SolverConfig::default() };
        let rep = run_regularized(&p, &cfg);
        assert_eq!(rep.status, RunStatus::Converged);
        assert!(rep.final_g_inf < cfg.tol_g);
    }
}
