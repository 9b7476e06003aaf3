//! Dense kernels for small symmetric systems and length-n vectors.
//!
//! The inner linear systems of the compact step engines are symmetric,
//! frequently indefinite, and tiny (order at most twice the memory), so the
//! factorizations here favor robustness over blocking: `sym_solve` uses an
//! LDL^T factorization with 1x1/2x2 pivoting, and `sym_solve_skipping` is an
//! unpivoted natural-order variant that drops near-singular pivots instead of
//! failing, which is how SR1 updates are screened on the fly.

use thiserror::Error;

/// Relative pivot tolerance: a factorization is declared singular when a
/// pivot magnitude falls below `PIVOT_REL_TOL` times the largest diagonal
/// magnitude of the input.
pub const PIVOT_REL_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum DenseError {
    #[error("matrix is numerically singular at elimination step {step}")]
    SingularMatrix { step: usize },
    #[error("all pivots were skipped")]
    AllSkipped,
    #[error("dimension mismatch: matrix order {order}, vector length {len}")]
    DimensionMismatch { order: usize, len: usize },
}

/// Dense row-major matrix. Used for Gram blocks and for the small inner
/// systems; nothing here is sized by the problem dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(order: usize) -> Self {
        let mut m = Mat::zeros(order, order);
        for i in 0..order {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut m = Mat::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c, "ragged rows");
            m.data[i * c..(i + 1) * c].copy_from_slice(row);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] += v;
    }

    /// Writes `v` to both (i, j) and (j, i).
    #[inline]
    pub fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.set(i, j, v);
        self.set(j, i, v);
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// `self * v` for a small matrix; not instrumented.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols, "matvec dimension mismatch");
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            out[i] = dot(row, v);
        }
        out
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.add_to(i, j, a * other.get(k, j));
                }
            }
        }
        out
    }

    /// Quadratic form `v^T self v`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        dot(&self.matvec(v), v)
    }

    pub fn max_abs_diff(&self, other: &Mat) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        for i in 0..self.rows {
            for j in 0..i {
                if (self.get(i, j) - self.get(j, i)).abs() > tol {
                    return false;
                }
            }
        }
        true
    }
}

/// Symmetric dense matrix of small order, stored full.
pub type SymMatrix = Mat;

// ---------------------------------------------------------------------------
// Length-n vector kernels. These run over problem-sized data; callers that
// track multiplication counts tally the lengths at the call site.
// ---------------------------------------------------------------------------

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `y += alpha * x`.
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn scaled(alpha: f64, x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| alpha * v).collect()
}

/// `a - b` elementwise.
#[inline]
pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `a + b` elementwise.
#[inline]
pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

// ---------------------------------------------------------------------------
// Pivoted LDL^T
// ---------------------------------------------------------------------------

enum Pivot {
    One(f64),
    // Symmetric 2x2 block [[a, b], [b, c]].
    Two(f64, f64, f64),
}

/// Solves `m x = rhs` for symmetric `m`, which may be indefinite.
///
/// The system is first equilibrated: row/column `i` is scaled by
/// `1 / sqrt(max_j |m[i][j]|)`, which bounds every entry of the scaled matrix
/// by 1 while its largest entry is exactly 1. Without this, a middle matrix
/// mixing pair scales across many orders of magnitude (tiny accepted steps
/// stored next to unit-size ones) is flagged singular even though it is
/// invertible.
///
/// The scaled system is factored as `P m P^T = L D L^T` with 1x1/2x2 diagonal
/// pivoting, choosing at each step the largest remaining diagonal entry when
/// it dominates the largest remaining off-diagonal entry and a 2x2 block
/// otherwise. Returns `SingularMatrix` when the remaining submatrix falls
/// below [`PIVOT_REL_TOL`] (relative to the unit-size largest entry of the
/// equilibrated matrix).
pub fn sym_solve(m: &SymMatrix, rhs: &[f64]) -> Result<Vec<f64>, DenseError> {
    let s = m.rows();
    assert_eq!(m.cols(), s, "sym_solve requires a square matrix");
    if rhs.len() != s {
        return Err(DenseError::DimensionMismatch { order: s, len: rhs.len() });
    }
    if s == 0 {
        return Ok(Vec::new());
    }
    debug_assert!(m.is_symmetric(0.0), "sym_solve requires exact symmetry");

    // 0.6404: standard growth-balancing constant (1 + sqrt(17)) / 8.
    let alpha = (1.0 + 17.0_f64.sqrt()) / 8.0;

    // Equilibrate: d[i] = 1/sqrt(row max). A zero row keeps d[i] = 1 and is
    // caught as singular below. By symmetry the row max of column j bounds
    // |m[i][j]| too, so every scaled entry is at most 1.
    let d: Vec<f64> = (0..s)
        .map(|i| {
            let r = (0..s).map(|j| m.get(i, j).abs()).fold(0.0, f64::max);
            if r > 0.0 { 1.0 / r.sqrt() } else { 1.0 }
        })
        .collect();
    let thresh = PIVOT_REL_TOL;

    let mut w = m.clone();
    for i in 0..s {
        for j in 0..=i {
            w.set_sym(i, j, d[i] * d[j] * m.get(i, j));
        }
    }
    let mut perm: Vec<usize> = (0..s).collect();
    let mut pivots: Vec<Pivot> = Vec::with_capacity(s);
    // Positions of the pivot blocks in elimination order.
    let mut starts: Vec<usize> = Vec::with_capacity(s);

    let mut k = 0;
    while k < s {
        // Scan the trailing submatrix for the dominant diagonal and
        // off-diagonal magnitudes.
        let mut dmax = 0.0;
        let mut didx = k;
        for i in k..s {
            let v = w.get(i, i).abs();
            if v > dmax {
                dmax = v;
                didx = i;
            }
        }
        let mut omax = 0.0;
        let mut oi = k;
        let mut oj = k;
        for i in k..s {
            for j in k..i {
                let v = w.get(i, j).abs();
                if v > omax {
                    omax = v;
                    oi = i;
                    oj = j;
                }
            }
        }
        if dmax.max(omax) <= thresh {
            return Err(DenseError::SingularMatrix { step: k });
        }

        if dmax >= alpha * omax {
            if dmax <= thresh {
                return Err(DenseError::SingularMatrix { step: k });
            }
            swap_sym(&mut w, &mut perm, k, didx);
            let d = w.get(k, k);
            for i in k + 1..s {
                let l = w.get(i, k) / d;
                for j in k + 1..=i {
                    let v = w.get(i, j) - l * w.get(k, j);
                    w.set_sym(i, j, v);
                }
                w.set(i, k, l);
            }
            pivots.push(Pivot::One(d));
            starts.push(k);
            k += 1;
        } else {
            // Bring the dominant off-diagonal pair into rows k, k+1; the scan
            // guarantees oi > oj >= k, so the pair survives both swaps.
            swap_sym(&mut w, &mut perm, k, oj);
            swap_sym(&mut w, &mut perm, k + 1, oi);
            let a = w.get(k, k);
            let b = w.get(k + 1, k);
            let c = w.get(k + 1, k + 1);
            let det = a * c - b * b;
            if det.abs() <= thresh * thresh {
                return Err(DenseError::SingularMatrix { step: k });
            }
            for i in k + 2..s {
                let u = w.get(i, k);
                let v = w.get(i, k + 1);
                let l1 = (c * u - b * v) / det;
                let l2 = (a * v - b * u) / det;
                for j in k + 2..=i {
                    let upd = w.get(i, j) - l1 * w.get(k, j) - l2 * w.get(k + 1, j);
                    w.set_sym(i, j, upd);
                }
                w.set(i, k, l1);
                w.set(i, k + 1, l2);
            }
            pivots.push(Pivot::Two(a, b, c));
            starts.push(k);
            k += 2;
        }
    }

    // Permute the scaled rhs, then L z = b, D y = z, L^T u = y, un-permute,
    // and undo the equilibration.
    let mut z: Vec<f64> = (0..s).map(|i| d[perm[i]] * rhs[perm[i]]).collect();
    for (piv, &at) in pivots.iter().zip(&starts) {
        match piv {
            Pivot::One(_) => {
                for i in at + 1..s {
                    z[i] -= w.get(i, at) * z[at];
                }
            }
            Pivot::Two(..) => {
                for i in at + 2..s {
                    z[i] -= w.get(i, at) * z[at] + w.get(i, at + 1) * z[at + 1];
                }
            }
        }
    }
    for (piv, &at) in pivots.iter().zip(&starts) {
        match piv {
            Pivot::One(d) => z[at] /= d,
            Pivot::Two(a, b, c) => {
                let det = a * c - b * b;
                let (r0, r1) = (z[at], z[at + 1]);
                z[at] = (c * r0 - b * r1) / det;
                z[at + 1] = (a * r1 - b * r0) / det;
            }
        }
    }
    for (piv, &at) in pivots.iter().zip(&starts).rev() {
        match piv {
            Pivot::One(_) => {
                let mut acc = z[at];
                for i in at + 1..s {
                    acc -= w.get(i, at) * z[i];
                }
                z[at] = acc;
            }
            Pivot::Two(..) => {
                let (mut a0, mut a1) = (z[at], z[at + 1]);
                for i in at + 2..s {
                    a0 -= w.get(i, at) * z[i];
                    a1 -= w.get(i, at + 1) * z[i];
                }
                z[at] = a0;
                z[at + 1] = a1;
            }
        }
    }
    let mut x = vec![0.0; s];
    for i in 0..s {
        x[perm[i]] = d[perm[i]] * z[i];
    }
    Ok(x)
}

fn swap_sym(w: &mut Mat, perm: &mut [usize], a: usize, b: usize) {
    if a == b {
        return;
    }
    let s = w.rows();
    for j in 0..s {
        let (va, vb) = (w.get(a, j), w.get(b, j));
        w.set(a, j, vb);
        w.set(b, j, va);
    }
    for i in 0..s {
        let (va, vb) = (w.get(i, a), w.get(i, b));
        w.set(i, a, vb);
        w.set(i, b, va);
    }
    perm.swap(a, b);
}

/// Solves `m x = rhs` with an unpivoted natural-order LDL^T, skipping any
/// index whose pivot magnitude falls below `tol * max(1, running scale)`,
/// where the running scale is the largest accepted pivot magnitude so far.
///
/// Skipped indices are excluded from the factorization entirely: the returned
/// solution has zeros embedded at their positions and the second element
/// lists them in increasing order. Returns `AllSkipped` when nothing remains.
pub fn sym_solve_skipping(
    m: &SymMatrix,
    rhs: &[f64],
    tol: f64,
) -> Result<(Vec<f64>, Vec<usize>), DenseError> {
    let s = m.rows();
    assert_eq!(m.cols(), s, "sym_solve_skipping requires a square matrix");
    if rhs.len() != s {
        return Err(DenseError::DimensionMismatch { order: s, len: rhs.len() });
    }
    if s == 0 {
        return Ok((Vec::new(), Vec::new()));
    }

    let mut w = m.clone();
    let mut active = vec![true; s];
    let mut skipped = Vec::new();
    let mut pivots = vec![0.0; s];
    let mut run_scale = 0.0_f64;

    for k in 0..s {
        let d = w.get(k, k);
        if d == 0.0 || d.abs() < tol * run_scale.max(1.0) {
            active[k] = false;
            skipped.push(k);
            continue;
        }
        run_scale = run_scale.max(d.abs());
        pivots[k] = d;
        for i in k + 1..s {
            let l = w.get(i, k) / d;
            for j in k + 1..=i {
                let v = w.get(i, j) - l * w.get(k, j);
                w.set_sym(i, j, v);
            }
            w.set(i, k, l);
        }
    }
    if skipped.len() == s {
        return Err(DenseError::AllSkipped);
    }

    let mut z = rhs.to_vec();
    for k in 0..s {
        if !active[k] {
            continue;
        }
        for i in k + 1..s {
            z[i] -= w.get(i, k) * z[k];
        }
    }
    for k in 0..s {
        if active[k] {
            z[k] /= pivots[k];
        } else {
            z[k] = 0.0;
        }
    }
    for k in (0..s).rev() {
        if !active[k] {
            continue;
        }
        let mut acc = z[k];
        for i in k + 1..s {
            acc -= w.get(i, k) * z[i];
        }
        z[k] = acc;
    }
    Ok((z, skipped))
}
