//! Dense reference implementations for validating the compact engines.
//!
//! Everything here is deliberately slow and explicit: quasi-Newton matrices
//! are built by the textbook rank-one and rank-two recursions, compact
//! representations are materialized column by column, and spectra come from
//! a plain Jacobi sweep. Test-only; nothing in the solver path calls this.

use crate::compact;
use crate::densecore::{dot, sym_solve, Mat};
use crate::memory::{MemoryState, Scheme};

/// One dense BFGS update of `b` with the pair `(s, y)`.
pub fn dense_bfgs_update(b: &Mat, s: &[f64], y: &[f64]) -> Mat {
    let n = s.len();
    let bs = b.matvec(s);
    let sbs = dot(s, &bs);
    let sy = dot(s, y);
    let mut out = b.clone();
    for i in 0..n {
        for j in 0..n {
            out.add_to(i, j, -bs[i] * bs[j] / sbs + y[i] * y[j] / sy);
        }
    }
    out
}

/// One dense SR1 update; the pair is skipped when the denominator is
/// negligible against `||y - Bs|| ||s||`.
pub fn dense_sr1_update(b: &Mat, s: &[f64], y: &[f64]) -> Mat {
    let n = s.len();
    let bs = b.matvec(s);
    let r: Vec<f64> = y.iter().zip(&bs).map(|(yi, bi)| yi - bi).collect();
    let denom = dot(&r, s);
    let scale = dot(&r, &r).sqrt() * dot(s, s).sqrt();
    if denom.abs() <= 1e-13 * scale.max(1e-300) {
        return b.clone();
    }
    let mut out = b.clone();
    for i in 0..n {
        for j in 0..n {
            out.add_to(i, j, r[i] * r[j] / denom);
        }
    }
    out
}

/// One dense PSB update of `b` with the pair `(s, y)`.
pub fn dense_psb_update(b: &Mat, s: &[f64], y: &[f64]) -> Mat {
    let n = s.len();
    let bs = b.matvec(s);
    let r: Vec<f64> = y.iter().zip(&bs).map(|(yi, bi)| yi - bi).collect();
    let ss = dot(s, s);
    let rs = dot(&r, s);
    // Scalar weight applied to the symmetric product, keeping the update
    // exactly symmetric in floating point.
    let w = rs / (ss * ss);
    let mut out = b.clone();
    for i in 0..n {
        for j in 0..n {
            out.add_to(
                i,
                j,
                (r[i] * s[j] + s[i] * r[j]) / ss - w * (s[i] * s[j]),
            );
        }
    }
    out
}

/// Final scaling parameter after replaying the cautious rule over `pairs`.
pub fn replay_gamma(pairs: &[(Vec<f64>, Vec<f64>)], eps: f64) -> f64 {
    let mut gamma = 1.0;
    for (s, y) in pairs {
        let ss = dot(s, s);
        let sy = dot(s, y);
        if ss > 0.0 && sy >= eps * ss {
            gamma = dot(y, y) / sy;
        }
    }
    gamma
}

/// Dense matrix obtained by starting from `gamma I` and applying the
/// scheme's update for each pair in order.
pub fn dense_from_pairs_scaled(
    scheme: Scheme,
    n: usize,
    pairs: &[(Vec<f64>, Vec<f64>)],
    gamma: f64,
    _eps: f64,
) -> Mat {
    let mut b = Mat::identity(n);
    for i in 0..n {
        b.set(i, i, gamma);
    }
    for (s, y) in pairs {
        b = match scheme {
            Scheme::Bfgs | Scheme::BfgsSecant => dense_bfgs_update(&b, s, y),
            Scheme::Sr1 => dense_sr1_update(&b, s, y),
            Scheme::Psb => dense_psb_update(&b, s, y),
        };
    }
    b
}

/// As `dense_from_pairs_scaled` with the scaling replayed from the pairs.
pub fn dense_from_pairs(
    scheme: Scheme,
    n: usize,
    pairs: &[(Vec<f64>, Vec<f64>)],
    eps: f64,
) -> Mat {
    let gamma = replay_gamma(pairs, eps);
    dense_from_pairs_scaled(scheme, n, pairs, gamma, eps)
}

/// Materializes `B = gamma I + A Q^-1 A^T` from the compact pieces held in
/// memory, solving the middle system once per coordinate direction.
pub fn materialize(mem: &MemoryState, scheme: Scheme) -> Mat {
    let n = mem.dim();
    let c = mem.cols();
    let gamma = mem.gamma();
    let mut b = Mat::identity(n);
    for i in 0..n {
        b.set(i, i, gamma);
    }
    if c == 0 {
        return b;
    }
    let q = match scheme {
        Scheme::Bfgs | Scheme::BfgsSecant => compact::bfgs_middle(mem),
        Scheme::Sr1 => compact::sr1_middle(mem),
        Scheme::Psb => compact::psb_middle(mem),
    };
    // Dense A, one column per stored direction.
    let order = q.rows();
    let mut a_cols: Vec<Vec<f64>> = Vec::with_capacity(order);
    match scheme {
        Scheme::Bfgs | Scheme::BfgsSecant | Scheme::Psb => {
            for i in 0..c {
                a_cols.push(mem.s_col(i).to_vec());
            }
            for i in 0..c {
                a_cols.push(mem.y_col(i).to_vec());
            }
        }
        Scheme::Sr1 => {
            for i in 0..c {
                let col: Vec<f64> = mem
                    .y_col(i)
                    .iter()
                    .zip(mem.s_col(i))
                    .map(|(y, s)| y - gamma * s)
                    .collect();
                a_cols.push(col);
            }
        }
    }
    for j in 0..n {
        // z = Q^-1 (A^T e_j)
        let rhs: Vec<f64> = a_cols.iter().map(|col| col[j]).collect();
        let z = sym_solve(&q, &rhs).expect("middle matrix must be invertible");
        for i in 0..n {
            let mut v = 0.0;
            for (k, col) in a_cols.iter().enumerate() {
                v += col[i] * z[k];
            }
            b.add_to(i, j, v);
        }
    }
    b
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(m: &Mat) -> Vec<f64> {
    let n = m.rows();
    let mut a = m.clone();
    let norm = a.frobenius().max(1e-300);
    for _ in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..i {
                off += a.get(i, j) * a.get(i, j);
            }
        }
        if (2.0 * off).sqrt() <= 1e-13 * norm {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let cth = 1.0 / (t * t + 1.0).sqrt();
                let sth = t * cth;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, cth * akp - sth * akq);
                    a.set(k, q, sth * akp + cth * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, cth * apk - sth * aqk);
                    a.set(q, k, sth * apk + cth * aqk);
                }
            }
        }
    }
    (0..n).map(|i| a.get(i, i)).collect()
}

/// Spectral condition number, infinite when the smallest magnitude
/// eigenvalue vanishes.
pub fn cond_2(m: &Mat) -> f64 {
    let ev = jacobi_eigenvalues(m);
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for v in ev {
        lo = lo.min(v.abs());
        hi = hi.max(v.abs());
    }
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Whether every eigenvalue is strictly positive.
pub fn is_positive_definite(m: &Mat) -> bool {
    jacobi_eigenvalues(m).iter().all(|&v| v > 0.0)
}
