//! Step engines built on compact quasi-Newton representations.
//!
//! Every engine solves the shifted system `(B + mu I) d = -g` without ever
//! forming `B`. With `B = gamma I + A Q^-1 A^T` the shift only moves the
//! scalar part, `gh = gamma + mu`, and the Sherman-Morrison-Woodbury
//! identity reduces the solve to a small symmetric system in the pair space:
//!
//! ```text
//!   (Q + A^T A / gh) p = A^T g,      d = A p / gh^2 - g / gh.
//! ```
//!
//! `A^T A` and `A^T g` come from the memory caches, so the only length-n
//! work per step is one product with the stored columns plus one vector
//! update. Step quality scalars (`g^T d`, `||d||`, the model decrease) are
//! likewise evaluated from the cached small quantities, never from `d`.

use crate::densecore::{self, DenseError, Mat};
use crate::memory::{MemoryState, Scheme};

/// Inner pivots smaller than this, relative to the running pivot scale, are
/// skipped in the SR1 solve rather than inverted.
pub const SR1_SKIP_TOL: f64 = 1e-8;

/// A computed trial step together with the scalars the acceptance logic
/// needs, all obtained without length-n reductions.
#[derive(Clone, Debug)]
pub struct StepResult {
    /// The trial step `d`.
    pub d: Vec<f64>,
    /// Inner-system solution, layout fixed by the scheme; empty when the
    /// step did not come from an inner solve.
    pub p: Vec<f64>,
    /// Model decrease `(mu/2)||d||^2 - (1/2) g^T d` predicted for this step.
    pub pred: f64,
    pub g_dot_d: f64,
    pub d_norm: f64,
    /// Indices of pairs the SR1 solve screened out.
    pub skipped: Vec<usize>,
    /// False when the inner system was numerically singular; `d` is empty
    /// then and the iteration must be treated as unsuccessful.
    pub solvable: bool,
    /// The shifted scalar `gamma + mu` the step was computed with.
    pub gamma_hat: f64,
}

impl StepResult {
    fn unsolvable(gamma_hat: f64) -> Self {
        StepResult {
            d: Vec::new(),
            p: Vec::new(),
            pred: 0.0,
            g_dot_d: 0.0,
            d_norm: 0.0,
            skipped: Vec::new(),
            solvable: false,
            gamma_hat,
        }
    }
}

/// Model decrease `(mu/2)||d||^2 - (1/2) g^T d` evaluated directly from the
/// vectors. The engines compute the same quantity from cached scalars; this
/// form serves callers holding explicit vectors.
pub fn model_decrease(g: &[f64], d: &[f64], mu: f64) -> f64 {
    let dd = densecore::dot(d, d);
    let gd = densecore::dot(g, d);
    0.5 * mu * dd - 0.5 * gd
}

fn scalars_from_cache(
    gg: f64,
    rhs_dot_p: f64,
    p_ata_p: f64,
    gh: f64,
    mu: f64,
) -> (f64, f64, f64) {
    let g_dot_d = -gg / gh + rhs_dot_p / (gh * gh);
    let d_norm2 =
        (gg / (gh * gh) - 2.0 * rhs_dot_p / (gh * gh * gh) + p_ata_p / (gh * gh * gh * gh))
            .max(0.0);
    let pred = 0.5 * mu * d_norm2 - 0.5 * g_dot_d;
    (g_dot_d, d_norm2.sqrt(), pred)
}

/// Steepest-descent style step `d = -g / (gamma + mu)`, used before any
/// pair is stored and when every SR1 pair is screened out.
pub fn fallback_step(mem: &MemoryState, g: &[f64], mu: f64) -> StepResult {
    let gh = mem.gamma() + mu;
    mem.count_mults(g.len() as u64);
    let d = densecore::scaled(-1.0 / gh, g);
    let gg = mem.gg();
    let (g_dot_d, d_norm, pred) = scalars_from_cache(gg, 0.0, 0.0, gh, mu);
    StepResult {
        d,
        p: Vec::new(),
        pred,
        g_dot_d,
        d_norm,
        skipped: Vec::new(),
        solvable: true,
        gamma_hat: gh,
    }
}

/// Middle matrix for the compact BFGS form: with `A = [S, Y]`,
/// `Q = [[-S^T S / gamma, -L / gamma], [-L^T / gamma, D]]` where `L` is the
/// strictly lower triangle and `D` the diagonal of `S^T Y`.
pub(crate) fn bfgs_middle(mem: &MemoryState) -> Mat {
    let c = mem.cols();
    let ginv = 1.0 / mem.gamma();
    let mut q = Mat::zeros(2 * c, 2 * c);
    for i in 0..c {
        for j in 0..c {
            q.set(i, j, -ginv * mem.gram_ss().get(i, j));
        }
        for j in 0..i {
            let l = mem.gram_sy().get(i, j);
            q.set(i, c + j, -ginv * l);
            q.set(c + j, i, -ginv * l);
        }
        q.set(c + i, c + i, mem.gram_sy().get(i, i));
    }
    q
}

/// Middle matrix for the compact SR1 form: with `A = Y - gamma S`,
/// `Q = D + L + L^T - gamma S^T S`, lower triangle of `S^T Y` symmetrized.
pub(crate) fn sr1_middle(mem: &MemoryState) -> Mat {
    let c = mem.cols();
    let g0 = mem.gamma();
    let mut q = Mat::zeros(c, c);
    for i in 0..c {
        for j in 0..=i {
            let v = mem.gram_sy().get(i, j) - g0 * mem.gram_ss().get(i, j);
            q.set_sym(i, j, v);
        }
    }
    q
}

/// Middle matrix for the compact PSB form: with `A = [S, Y]`,
/// `Q = [[0, U], [U^T, D_sy + gamma D_ss + L_sy + L_sy^T]]` where `U` is the
/// upper triangle of `S^T S` including the diagonal.
pub(crate) fn psb_middle(mem: &MemoryState) -> Mat {
    let c = mem.cols();
    let g0 = mem.gamma();
    let mut q = Mat::zeros(2 * c, 2 * c);
    for i in 0..c {
        for j in i..c {
            let u = mem.gram_ss().get(i, j);
            q.set(i, c + j, u);
            q.set(c + j, i, u);
        }
        for j in 0..i {
            let l = mem.gram_sy().get(i, j);
            q.set(c + i, c + j, l);
            q.set(c + j, c + i, l);
        }
        q.set(c + i, c + i, mem.gram_sy().get(i, i) + g0 * mem.gram_ss().get(i, i));
    }
    q
}

fn smw_step(mem: &MemoryState, g: &[f64], mu: f64, scheme: Scheme, q: Mat) -> StepResult {
    let gh = mem.gamma() + mu;
    let (ata, rhs) = mem
        .assemble_a_blocks(scheme)
        .expect("smw_step requires stored pairs");
    let order = q.rows();
    let mut m = q;
    for i in 0..order {
        for j in 0..order {
            m.add_to(i, j, ata.get(i, j) / gh);
        }
    }

    let (p, skipped) = if scheme == Scheme::Sr1 {
        match densecore::sym_solve_skipping(&m, &rhs, SR1_SKIP_TOL) {
            Ok((p, skipped)) => (p, skipped),
            Err(DenseError::AllSkipped) => {
                let mut out = fallback_step(mem, g, mu);
                out.skipped = (0..mem.cols()).collect();
                return out;
            }
            Err(_) => return StepResult::unsolvable(gh),
        }
    } else {
        match densecore::sym_solve(&m, &rhs) {
            Ok(p) => (p, Vec::new()),
            Err(_) => return StepResult::unsolvable(gh),
        }
    };

    // d = A (p / gh^2) - g / gh; the scaling folds into the small vector.
    let pt: Vec<f64> = p.iter().map(|v| v / (gh * gh)).collect();
    let mut d = vec![0.0; g.len()];
    mem.gemv_add(scheme, &pt, &mut d);
    mem.count_mults(g.len() as u64);
    densecore::axpy(-1.0 / gh, g, &mut d);

    let rhs_dot_p = densecore::dot(&rhs, &p);
    let p_ata_p = ata.quad_form(&p);
    let (g_dot_d, d_norm, pred) = scalars_from_cache(mem.gg(), rhs_dot_p, p_ata_p, gh, mu);
    StepResult { d, p, pred, g_dot_d, d_norm, skipped, solvable: true, gamma_hat: gh }
}

/// Regularized step under the compact BFGS representation.
pub fn bfgs_step(mem: &MemoryState, g: &[f64], mu: f64) -> StepResult {
    if mem.cols() == 0 {
        return fallback_step(mem, g, mu);
    }
    smw_step(mem, g, mu, Scheme::Bfgs, bfgs_middle(mem))
}

/// Regularized step under the compact SR1 representation. Pairs whose inner
/// pivot is negligible are skipped rather than inverted; if every pair is
/// skipped the scaled-gradient fallback is returned.
pub fn sr1_step(mem: &MemoryState, g: &[f64], mu: f64) -> StepResult {
    if mem.cols() == 0 {
        return fallback_step(mem, g, mu);
    }
    smw_step(mem, g, mu, Scheme::Sr1, sr1_middle(mem))
}

/// Regularized step under the compact PSB representation.
pub fn psb_step(mem: &MemoryState, g: &[f64], mu: f64) -> StepResult {
    if mem.cols() == 0 {
        return fallback_step(mem, g, mu);
    }
    smw_step(mem, g, mu, Scheme::Psb, psb_middle(mem))
}

/// Two-loop recursion on regularization-shifted pairs `(s_i, y_i + mu s_i)`
/// with initial matrix `(gamma + mu)^-1 I`: an approximation to
/// `(B + mu I)^-1 (-g)` that stays in inverse form. The shift folds into
/// the recursion as a second multiple of `s_i`; curvatures come from the
/// cached Gram diagonals.
pub fn secant_two_loop_step(mem: &MemoryState, g: &[f64], mu: f64) -> StepResult {
    let c = mem.cols();
    if c == 0 {
        return fallback_step(mem, g, mu);
    }
    let gh = mem.gamma() + mu;
    let n = g.len();

    let rho: Vec<f64> = (0..c)
        .map(|i| 1.0 / (mem.gram_sy().get(i, i) + mu * mem.gram_ss().get(i, i)))
        .collect();

    let mut q = g.to_vec();
    let mut alpha = vec![0.0; c];
    // Newest to oldest.
    for i in (0..c).rev() {
        mem.count_mults(3 * n as u64);
        let a = rho[i] * densecore::dot(mem.s_col(i), &q);
        alpha[i] = a;
        densecore::axpy(-a, mem.y_col(i), &mut q);
        densecore::axpy(-a * mu, mem.s_col(i), &mut q);
    }
    mem.count_mults(n as u64);
    let mut r = densecore::scaled(1.0 / gh, &q);
    // Oldest to newest.
    for i in 0..c {
        mem.count_mults(3 * n as u64);
        let b = rho[i] * (densecore::dot(mem.y_col(i), &r) + mu * densecore::dot(mem.s_col(i), &r));
        densecore::axpy(alpha[i] - b, mem.s_col(i), &mut r);
    }
    for v in r.iter_mut() {
        *v = -*v;
    }

    mem.count_mults(2 * n as u64);
    let g_dot_d = densecore::dot(g, &r);
    let d_norm2 = densecore::dot(&r, &r);
    let pred = 0.5 * mu * d_norm2 - 0.5 * g_dot_d;
    StepResult {
        d: r,
        p: Vec::new(),
        pred,
        g_dot_d,
        d_norm: d_norm2.sqrt(),
        skipped: Vec::new(),
        solvable: true,
        gamma_hat: gh,
    }
}
