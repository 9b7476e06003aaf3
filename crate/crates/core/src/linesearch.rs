//! Line searches for the baseline drivers and the shared seed step.
//!
//! Two searches are provided: plain Armijo backtracking by halving, and a
//! strong-Wolfe search using the classical bracketing scheme with cubic and
//! quadratic interpolation and a modified-function first stage. Both accept
//! an explicit reference value so nonmonotone acceptance plugs in unchanged.

use thiserror::Error;

use crate::densecore::{axpy, dot, norm2};
use crate::problems::Problem;

/// Steps shrink no further than this.
pub const T_MIN: f64 = 1e-15;
/// Steps grow no further than this.
pub const T_MAX: f64 = 1e15;
/// Trial evaluation cap for the strong-Wolfe search.
pub const MAX_TRIALS: u64 = 50;
/// Relative bracket width below which the Wolfe search gives up.
const XTOL: f64 = 1e-12;
/// Bracket expansion factor while the minimum is not yet bracketed.
const XTRAPF: f64 = 2.0;

#[derive(Debug, Error, PartialEq)]
pub enum LineSearchError {
    #[error("not a descent direction: g^T d = {0}")]
    NotDescent(f64),
    #[error("line search failed to find an acceptable step")]
    SearchFailed,
}

/// Outcome of a search. `f_new` and `g_new` are meaningful only when
/// `converged`; `fevals` counts trial objective evaluations.
#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub t: f64,
    pub f_new: f64,
    pub g_new: Option<Vec<f64>>,
    pub fevals: u64,
    pub converged: bool,
}

fn point_along(x: &[f64], d: &[f64], t: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    axpy(t, d, &mut p);
    p
}

/// Backtracking by halving from t = 1 until
/// `f(x + t d) <= f_ref + c1 t g_dot_d`. Trials with nonfinite objective
/// keep halving. Gives up (converged = false) once t drops below `t_min`.
pub fn armijo_backtrack(
    problem: &Problem,
    x: &[f64],
    d: &[f64],
    f_ref: f64,
    g_dot_d: f64,
    c1: f64,
    t_min: f64,
) -> Result<SearchOutcome, LineSearchError> {
    if g_dot_d >= 0.0 {
        return Err(LineSearchError::NotDescent(g_dot_d));
    }
    let mut t = 1.0;
    let mut fevals = 0;
    let mut f = f64::NAN;
    while t >= t_min {
        let xt = point_along(x, d, t);
        f = problem.eval_f(&xt);
        fevals += 1;
        if f.is_finite() && f <= f_ref + c1 * t * g_dot_d {
            return Ok(SearchOutcome { t, f_new: f, g_new: None, fevals, converged: true });
        }
        t *= 0.5;
    }
    Ok(SearchOutcome { t, f_new: f, g_new: None, fevals, converged: false })
}

/// Bracket endpoint state for the strong-Wolfe search.
struct EndPoints {
    stx: f64,
    fx: f64,
    dx: f64,
    sty: f64,
    fy: f64,
    dy: f64,
    brackt: bool,
}

/// One safeguarded interpolation step: picks a new trial from the current
/// bracket (or extrapolates when none exists) and updates the endpoints.
/// Returns false when the inputs admit no progress.
#[allow(clippy::too_many_arguments)]
fn interp_trial(e: &mut EndPoints, stp: &mut f64, fp: f64, dp: f64, stmin: f64, stmax: f64) -> bool {
    let sgnd = dp * e.dx.signum();
    let stpf;
    let bound;

    if fp > e.fx {
        // Higher value: the minimum is between stx and stp.
        bound = true;
        let theta = 3.0 * (e.fx - fp) / (*stp - e.stx) + e.dx + dp;
        let s = theta.abs().max(e.dx.abs()).max(dp.abs());
        let mut gamma = s * ((theta / s).powi(2) - (e.dx / s) * (dp / s)).max(0.0).sqrt();
        if *stp < e.stx {
            gamma = -gamma;
        }
        let p = (gamma - e.dx) + theta;
        let q = ((gamma - e.dx) + gamma) + dp;
        let r = p / q;
        let stpc = e.stx + r * (*stp - e.stx);
        let stpq =
            e.stx + ((e.dx / ((e.fx - fp) / (*stp - e.stx) + e.dx)) / 2.0) * (*stp - e.stx);
        stpf = if (stpc - e.stx).abs() < (stpq - e.stx).abs() {
            stpc
        } else {
            stpc + (stpq - stpc) / 2.0
        };
        e.brackt = true;
    } else if sgnd < 0.0 {
        // Derivative changed sign: minimum bracketed between stp and stx.
        bound = false;
        let theta = 3.0 * (e.fx - fp) / (*stp - e.stx) + e.dx + dp;
        let s = theta.abs().max(e.dx.abs()).max(dp.abs());
        let mut gamma = s * ((theta / s).powi(2) - (e.dx / s) * (dp / s)).max(0.0).sqrt();
        if *stp > e.stx {
            gamma = -gamma;
        }
        let p = (gamma - dp) + theta;
        let q = ((gamma - dp) + gamma) + e.dx;
        let r = p / q;
        let stpc = *stp + r * (e.stx - *stp);
        let stpq = *stp + (dp / (dp - e.dx)) * (e.stx - *stp);
        stpf = if (stpc - *stp).abs() > (stpq - *stp).abs() { stpc } else { stpq };
        e.brackt = true;
    } else if dp.abs() < e.dx.abs() {
        // Same sign, smaller magnitude: cubic may have no minimizer ahead.
        bound = true;
        let theta = 3.0 * (e.fx - fp) / (*stp - e.stx) + e.dx + dp;
        let s = theta.abs().max(e.dx.abs()).max(dp.abs());
        let gamma_sq = (theta / s).powi(2) - (e.dx / s) * (dp / s);
        let mut gamma = s * gamma_sq.max(0.0).sqrt();
        if *stp > e.stx {
            gamma = -gamma;
        }
        let p = (gamma - dp) + theta;
        let q = (gamma + (e.dx - dp)) + gamma;
        let r = p / q;
        let stpc = if r < 0.0 && gamma != 0.0 {
            *stp + r * (e.stx - *stp)
        } else if *stp > e.stx {
            stmax
        } else {
            stmin
        };
        let stpq = *stp + (dp / (dp - e.dx)) * (e.stx - *stp);
        stpf = if e.brackt {
            if (*stp - stpc).abs() < (*stp - stpq).abs() {
                stpc
            } else {
                stpq
            }
        } else if (*stp - stpc).abs() > (*stp - stpq).abs() {
            stpc
        } else {
            stpq
        };
    } else {
        // Same sign, growing magnitude.
        bound = false;
        if e.brackt {
            let theta = 3.0 * (fp - e.fy) / (e.sty - *stp) + e.dy + dp;
            let s = theta.abs().max(e.dy.abs()).max(dp.abs());
            let mut gamma = s * ((theta / s).powi(2) - (e.dy / s) * (dp / s)).max(0.0).sqrt();
            if *stp > e.sty {
                gamma = -gamma;
            }
            let p = (gamma - dp) + theta;
            let q = ((gamma - dp) + gamma) + e.dy;
            let r = p / q;
            stpf = *stp + r * (e.sty - *stp);
        } else if *stp > e.stx {
            stpf = stmax;
        } else {
            stpf = stmin;
        }
    }

    // Shift the interval.
    if fp > e.fx {
        e.sty = *stp;
        e.fy = fp;
        e.dy = dp;
    } else {
        if sgnd < 0.0 {
            e.sty = e.stx;
            e.fy = e.fx;
            e.dy = e.dx;
        }
        e.stx = *stp;
        e.fx = fp;
        e.dx = dp;
    }

    let mut new_stp = stpf.clamp(stmin, stmax);
    if e.brackt && bound {
        let mid = e.stx + 0.66 * (e.sty - e.stx);
        new_stp = if e.sty > e.stx { new_stp.min(mid) } else { new_stp.max(mid) };
    }
    *stp = new_stp;
    new_stp.is_finite()
}

/// Strong-Wolfe search: finds t with
/// `f(x + t d) <= f_ref + c1 t g_dot_d` and `|g(x + t d)^T d| <= -c2 g_dot_d`.
/// Evaluates function and gradient together at every trial; the gradient at
/// the accepted point is returned for reuse. Not converged when the step
/// pins at the bounds, the bracket collapses, or the trial cap is reached.
pub fn more_thuente(
    problem: &Problem,
    x: &[f64],
    d: &[f64],
    f_ref: f64,
    g_dot_d: f64,
    c1: f64,
    c2: f64,
    t_min: f64,
) -> Result<SearchOutcome, LineSearchError> {
    if g_dot_d >= 0.0 {
        return Err(LineSearchError::NotDescent(g_dot_d));
    }
    let finit = f_ref;
    let dginit = g_dot_d;
    let dgtest = c1 * dginit;
    let mut width = T_MAX - t_min;
    let mut width1 = width / 0.5;

    let mut e = EndPoints {
        stx: 0.0,
        fx: finit,
        dx: dginit,
        sty: 0.0,
        fy: finit,
        dy: dginit,
        brackt: false,
    };
    let mut stage1 = true;
    let mut stp: f64 = 1.0;
    let mut fevals: u64 = 0;
    let mut healthy = true;

    loop {
        let (stmin, stmax) = if e.brackt {
            (e.stx.min(e.sty), e.stx.max(e.sty))
        } else {
            (e.stx, stp + XTRAPF * (stp - e.stx))
        };
        stp = stp.clamp(t_min, T_MAX);
        // Fall back to the best point when no further progress is possible.
        if (e.brackt && (stp <= stmin || stp >= stmax))
            || fevals >= MAX_TRIALS - 1
            || !healthy
            || (e.brackt && stmax - stmin <= XTOL * stmax)
        {
            stp = e.stx;
        }
        if stp <= 0.0 {
            stp = t_min;
        }

        let xt = point_along(x, d, stp);
        let (f, grad) = problem.eval_fg(&xt);
        fevals += 1;
        let dg = dot(&grad, d);

        if !f.is_finite() || !dg.is_finite() {
            // No usable model at this trial: retreat halfway to the best
            // point and try again within the evaluation budget.
            let fallback = e.stx + 0.5 * (stp - e.stx);
            if fevals >= MAX_TRIALS || fallback <= t_min || fallback == stp {
                return Ok(SearchOutcome {
                    t: stp,
                    f_new: f,
                    g_new: Some(grad),
                    fevals,
                    converged: false,
                });
            }
            stp = fallback;
            continue;
        }

        let ftest1 = finit + stp * dgtest;
        let wolfe = f <= ftest1 && dg.abs() <= -c2 * dginit;
        let exhausted = (e.brackt && (stp <= stmin || stp >= stmax))
            || !healthy
            || (stp == T_MAX && f <= ftest1 && dg <= dgtest)
            || (stp <= t_min && (f > ftest1 || dg >= dgtest))
            || fevals >= MAX_TRIALS
            || (e.brackt && stmax - stmin <= XTOL * stmax);
        if wolfe || exhausted {
            return Ok(SearchOutcome {
                t: stp,
                f_new: f,
                g_new: Some(grad),
                fevals,
                converged: wolfe,
            });
        }

        if stage1 && f <= ftest1 && dg >= c1.min(c2) * dginit {
            stage1 = false;
        }

        if stage1 && f <= e.fx && f > ftest1 {
            // First stage works on the Armijo-slack-shifted function so the
            // bracket homes in on a point of sufficient decrease.
            let fm = f - stp * dgtest;
            let fxm = e.fx - e.stx * dgtest;
            let fym = e.fy - e.sty * dgtest;
            let dgm = dg - dgtest;
            let dgxm = e.dx - dgtest;
            let dgym = e.dy - dgtest;
            let mut em = EndPoints {
                stx: e.stx,
                fx: fxm,
                dx: dgxm,
                sty: e.sty,
                fy: fym,
                dy: dgym,
                brackt: e.brackt,
            };
            healthy = interp_trial(&mut em, &mut stp, fm, dgm, stmin, stmax);
            e.stx = em.stx;
            e.sty = em.sty;
            e.brackt = em.brackt;
            e.fx = em.fx + em.stx * dgtest;
            e.fy = em.fy + em.sty * dgtest;
            e.dx = em.dx + dgtest;
            e.dy = em.dy + dgtest;
        } else {
            healthy = interp_trial(&mut e, &mut stp, f, dg, stmin, stmax);
        }

        if e.brackt {
            // Force the bracket to shrink at a linear rate.
            if (e.sty - e.stx).abs() >= 0.66 * width1 {
                stp = e.stx + 0.5 * (e.sty - e.stx);
            }
            width1 = width;
            width = (e.sty - e.stx).abs();
        }
    }
}

/// Result of the opening search along the normalized negative gradient.
#[derive(Clone, Debug)]
pub struct SeedResult {
    pub x1: Vec<f64>,
    pub f1: f64,
    pub g1: Vec<f64>,
    pub s0: Vec<f64>,
    pub y0: Vec<f64>,
    pub fevals: u64,
}

/// Runs the strong-Wolfe search from `x0` along `-g0 / ||g0||` to produce
/// the first curvature pair. The curvature condition makes `y0^T s0 > 0`,
/// so the pair passes the cautious rule.
pub fn initial_seed_search(
    problem: &Problem,
    x0: &[f64],
    f0: f64,
    g0: &[f64],
    c1: f64,
    c2: f64,
    t_min: f64,
) -> Result<SeedResult, LineSearchError> {
    let gnorm = norm2(g0);
    assert!(gnorm > 0.0, "seed search requires a nonzero gradient");
    let d: Vec<f64> = g0.iter().map(|v| -v / gnorm).collect();
    let out = more_thuente(problem, x0, &d, f0, -gnorm, c1, c2, t_min)?;
    if !out.converged {
        return Err(LineSearchError::SearchFailed);
    }
    let x1 = point_along(x0, &d, out.t);
    let g1 = out.g_new.expect("strong-Wolfe search returns the gradient");
    let s0: Vec<f64> = d.iter().map(|v| v * out.t).collect();
    let y0: Vec<f64> = g1.iter().zip(g0).map(|(a, b)| a - b).collect();
    Ok(SeedResult { x1, f1: out.f_new, g1, s0, y0, fevals: out.fevals })
}
