//! Limited-memory pair storage with incrementally maintained Gram caches.
//!
//! The step engines never touch problem-sized data except through the stored
//! columns `S`, `Y` and the current gradient. Everything else they need, the
//! Gram blocks `S^T S`, `S^T Y`, `Y^T Y` and the products `S^T g`, `Y^T g`,
//! `g^T g`, is cached here and updated blockwise when a pair is pushed: one
//! column and one row change per block, so an accepted push costs a single
//! matrix-vector product against the stored columns (for the new gradient
//! products) plus three length-n dot products for the new pair's scalars.
//! The `S^T s`/`Y^T s` column needed for the update is recovered from cached
//! quantities whenever the step came from the regularized solve, instead of
//! being recomputed against the columns.

use std::cell::{Cell, RefCell};
use std::collections::VecDeque;

use thiserror::Error;

use crate::densecore::{dot, Mat, SymMatrix};

/// Pairs with `s^T y < CAUTIOUS_EPS * ||s||^2` fail the cautious test.
pub const CAUTIOUS_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    /// Compact BFGS; cautious pairs only.
    Bfgs,
    /// Two-loop BFGS on regularization-shifted pairs; cautious pairs only.
    BfgsSecant,
    /// Compact SR1; stores every pair, screens at solve time.
    Sr1,
    /// Compact PSB; stores every pair.
    Psb,
}

impl Scheme {
    /// Whether pairs failing the cautious test are rejected outright
    /// (true) or stored with the scaling parameter frozen (false).
    pub fn rejects_noncautious(self) -> bool {
        matches!(self, Scheme::Bfgs | Scheme::BfgsSecant)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MemoryError {
    #[error("no pairs stored")]
    EmptyMemory,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// The inner solution a step engine produced, handed back on push so the
/// `S^T s`/`Y^T s` column can be reconstructed from cached quantities.
#[derive(Clone, Debug)]
pub struct PrevSolve {
    /// Solution of the small inner system.
    pub p: Vec<f64>,
    /// The shifted scaling `gamma + mu` the step was computed with.
    pub gamma_hat: f64,
    /// Scheme the inner system belonged to; fixes the meaning of `p`.
    pub scheme: Scheme,
}

struct Sr1Cache {
    /// Columns of `Y - gamma * S`.
    cols: Vec<Vec<f64>>,
    gamma: f64,
    len: usize,
}

pub struct MemoryState {
    n: usize,
    m_max: usize,
    s_cols: VecDeque<Vec<f64>>,
    y_cols: VecDeque<Vec<f64>>,
    /// `S^T S`, `S^T Y`, `Y^T Y` over the stored columns, oldest first.
    gram_ss: Mat,
    gram_sy: Mat,
    gram_yy: Mat,
    /// `S^T g` and `Y^T g` for the most recently registered gradient.
    sg: Vec<f64>,
    yg: Vec<f64>,
    /// `g^T g` for the same gradient.
    gg: f64,
    gamma: f64,
    cautious_eps: f64,
    sr1: RefCell<Option<Sr1Cache>>,
    /// Multiplications performed inside length-n kernels on behalf of this
    /// store and the engines driving it.
    tally: Cell<u64>,
}

impl MemoryState {
    pub fn new(n: usize, m_max: usize) -> Self {
        assert!(m_max >= 1, "memory must hold at least one pair");
        MemoryState {
            n,
            m_max,
            s_cols: VecDeque::with_capacity(m_max),
            y_cols: VecDeque::with_capacity(m_max),
            gram_ss: Mat::zeros(0, 0),
            gram_sy: Mat::zeros(0, 0),
            gram_yy: Mat::zeros(0, 0),
            sg: Vec::new(),
            yg: Vec::new(),
            gg: 0.0,
            gamma: 1.0,
            cautious_eps: CAUTIOUS_EPS,
            sr1: RefCell::new(None),
            tally: Cell::new(0),
        }
    }

    /// Overrides the cautious-update threshold (default [`CAUTIOUS_EPS`]).
    pub fn set_cautious_eps(&mut self, eps: f64) {
        self.cautious_eps = eps;
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn m_max(&self) -> usize {
        self.m_max
    }

    pub fn cols(&self) -> usize {
        self.s_cols.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn gg(&self) -> f64 {
        self.gg
    }

    pub fn sg(&self) -> &[f64] {
        &self.sg
    }

    pub fn yg(&self) -> &[f64] {
        &self.yg
    }

    pub fn gram_ss(&self) -> &Mat {
        &self.gram_ss
    }

    pub fn gram_sy(&self) -> &Mat {
        &self.gram_sy
    }

    pub fn gram_yy(&self) -> &Mat {
        &self.gram_yy
    }

    pub fn s_col(&self, i: usize) -> &[f64] {
        &self.s_cols[i]
    }

    pub fn y_col(&self, i: usize) -> &[f64] {
        &self.y_cols[i]
    }

    /// Multiplication count accumulated in length-n kernels.
    pub fn mults(&self) -> u64 {
        self.tally.get()
    }

    pub fn reset_mults(&self) {
        self.tally.set(0);
    }

    pub(crate) fn count_mults(&self, n: u64) {
        self.tally.set(self.tally.get() + n);
    }

    /// Registers the gradient at the current iterate, recomputing the cached
    /// products directly. Used at the start of a run; pushes keep the caches
    /// current afterwards.
    pub fn register_gradient(&mut self, g: &[f64]) {
        assert_eq!(g.len(), self.n);
        let c = self.cols();
        self.count_mults((2 * c * self.n + self.n) as u64);
        self.sg = (0..c).map(|i| dot(&self.s_cols[i], g)).collect();
        self.yg = (0..c).map(|i| dot(&self.y_cols[i], g)).collect();
        self.gg = dot(g, g);
    }

    /// Stores the pair `(s, y)` (or rejects it under the cautious rule) and
    /// brings every cache up to date against `g_new`, the gradient at the
    /// accepted point. Returns whether the pair was stored.
    ///
    /// Requires the secant structure `y = g_new - g_prev`, where `g_prev` is
    /// the gradient most recently registered here: the `S^T y`/`Y^T y` column
    /// is reconstructed as `A^T g_new - A^T g_prev` from cached products, and
    /// that identity is what keeps the push linear in n.
    ///
    /// `prev` carries the inner solution that generated `s`; with it the
    /// update performs exactly one product against the stored columns (the
    /// new gradient products) plus the three new-pair dot products. Without
    /// it the `S^T s`/`Y^T s` column is computed directly.
    pub fn push_pair(
        &mut self,
        s: &[f64],
        y: &[f64],
        g_new: &[f64],
        prev: Option<&PrevSolve>,
        mode: Scheme,
    ) -> bool {
        assert_eq!(s.len(), self.n, "s has wrong dimension");
        assert_eq!(y.len(), self.n, "y has wrong dimension");
        assert_eq!(g_new.len(), self.n, "gradient has wrong dimension");

        self.count_mults(3 * self.n as u64);
        let ss = dot(s, s);
        let sy = dot(s, y);
        let yy = dot(y, y);
        let cautious = sy >= self.cautious_eps * ss && ss > 0.0;

        if (mode.rejects_noncautious() && !cautious) || ss == 0.0 {
            // Store untouched; only the gradient products move.
            self.register_gradient(g_new);
            return false;
        }

        let c = self.cols();
        // v = [S^T s; Y^T s] against the columns currently stored.
        let v: Vec<f64> = match prev {
            Some(ps) if !ps.p.is_empty() => self.s_column_from_cache(ps),
            _ => {
                self.count_mults((2 * c * self.n) as u64);
                let mut v: Vec<f64> = (0..c).map(|i| dot(&self.s_cols[i], s)).collect();
                v.extend((0..c).map(|i| dot(&self.y_cols[i], s)));
                v
            }
        };

        let drop = c == self.m_max;
        let off = usize::from(drop);
        let nc = c - off + 1;
        let old_sg = std::mem::take(&mut self.sg);
        let old_yg = std::mem::take(&mut self.yg);

        if drop {
            self.s_cols.pop_front();
            self.y_cols.pop_front();
        }
        self.s_cols.push_back(s.to_vec());
        self.y_cols.push_back(y.to_vec());

        // w = [S^T g_new; Y^T g_new] over the shifted columns: the one
        // length-n matrix-vector product of the push.
        self.count_mults((2 * nc * self.n) as u64);
        let w_s: Vec<f64> = (0..nc).map(|i| dot(&self.s_cols[i], g_new)).collect();
        let w_y: Vec<f64> = (0..nc).map(|i| dot(&self.y_cols[i], g_new)).collect();

        // Blockwise shift: interior blocks move up-left, the new column comes
        // from v (dots with s) and from w minus the old gradient products
        // (dots with y = g_new - g_old).
        let mut new_ss = Mat::zeros(nc, nc);
        let mut new_sy = Mat::zeros(nc, nc);
        let mut new_yy = Mat::zeros(nc, nc);
        for i in 0..nc - 1 {
            for j in 0..nc - 1 {
                new_ss.set(i, j, self.gram_ss.get(i + off, j + off));
                new_sy.set(i, j, self.gram_sy.get(i + off, j + off));
                new_yy.set(i, j, self.gram_yy.get(i + off, j + off));
            }
        }
        for i in 0..nc - 1 {
            new_ss.set_sym(i, nc - 1, v[i + off]);
            new_yy.set_sym(i, nc - 1, w_y[i] - old_yg[i + off]);
            new_sy.set(i, nc - 1, w_s[i] - old_sg[i + off]);
            new_sy.set(nc - 1, i, v[c + i + off]);
        }
        new_ss.set(nc - 1, nc - 1, ss);
        new_sy.set(nc - 1, nc - 1, sy);
        new_yy.set(nc - 1, nc - 1, yy);
        self.gram_ss = new_ss;
        self.gram_sy = new_sy;
        self.gram_yy = new_yy;

        // g_new^T g_new = g^T g + 2 y^T g_new - y^T y, all in hand.
        self.gg += 2.0 * w_y[nc - 1] - yy;
        self.sg = w_s;
        self.yg = w_y;

        if cautious {
            self.gamma = yy / sy;
        }
        if mode == Scheme::Sr1 {
            self.rebuild_sr1_cache();
        } else {
            *self.sr1.borrow_mut() = None;
        }
        true
    }

    /// `[S^T s; Y^T s]` recovered from cached blocks:
    /// `s = -g/gh + A p / gh^2` implies `A^T s = -(A^T g)/gh + (A^T A) p / gh^2`.
    fn s_column_from_cache(&self, prev: &PrevSolve) -> Vec<f64> {
        let c = self.cols();
        let gh = prev.gamma_hat;
        let (a, b) = (-1.0 / gh, 1.0 / (gh * gh));
        match prev.scheme {
            Scheme::Bfgs | Scheme::Psb | Scheme::BfgsSecant => {
                assert_eq!(prev.p.len(), 2 * c, "inner solution has wrong size");
                let (ps, py) = prev.p.split_at(c);
                let mut v = vec![0.0; 2 * c];
                for i in 0..c {
                    let mut acc_s = 0.0;
                    let mut acc_y = 0.0;
                    for j in 0..c {
                        acc_s += self.gram_ss.get(i, j) * ps[j] + self.gram_sy.get(i, j) * py[j];
                        acc_y += self.gram_sy.get(j, i) * ps[j] + self.gram_yy.get(i, j) * py[j];
                    }
                    v[i] = a * self.sg[i] + b * acc_s;
                    v[c + i] = a * self.yg[i] + b * acc_y;
                }
                v
            }
            Scheme::Sr1 => {
                // p lives against A = Y - gamma S; S^T A and Y^T A come from
                // the Gram blocks.
                assert_eq!(prev.p.len(), c, "inner solution has wrong size");
                let g0 = self.gamma;
                let mut v = vec![0.0; 2 * c];
                for i in 0..c {
                    let mut acc_s = 0.0;
                    let mut acc_y = 0.0;
                    for j in 0..c {
                        acc_s +=
                            (self.gram_sy.get(i, j) - g0 * self.gram_ss.get(i, j)) * prev.p[j];
                        acc_y +=
                            (self.gram_yy.get(i, j) - g0 * self.gram_sy.get(j, i)) * prev.p[j];
                    }
                    v[i] = a * self.sg[i] + b * acc_s;
                    v[c + i] = a * self.yg[i] + b * acc_y;
                }
                v
            }
        }
    }

    fn rebuild_sr1_cache(&self) {
        let c = self.cols();
        self.count_mults((c * self.n) as u64);
        let cols: Vec<Vec<f64>> = (0..c)
            .map(|i| {
                self.y_cols[i]
                    .iter()
                    .zip(&self.s_cols[i])
                    .map(|(y, s)| y - self.gamma * s)
                    .collect()
            })
            .collect();
        *self.sr1.borrow_mut() = Some(Sr1Cache { cols, gamma: self.gamma, len: c });
    }

    /// Runs `f` over the columns of `A = Y - gamma S`, materialized lazily
    /// and reused until the store changes.
    pub(crate) fn with_sr1_cols<R>(&self, f: impl FnOnce(&[Vec<f64>]) -> R) -> R {
        {
            let cache = self.sr1.borrow();
            if let Some(c) = cache.as_ref() {
                if c.gamma == self.gamma && c.len == self.cols() {
                    return f(&c.cols);
                }
            }
        }
        self.rebuild_sr1_cache();
        let cache = self.sr1.borrow();
        f(&cache.as_ref().expect("cache was just rebuilt").cols)
    }

    /// `A^T A` and `A^T g` for the requested scheme, assembled from caches.
    ///
    /// For BFGS and PSB, `A = [S, Y]` and the result is the 2c-order block
    /// Gram matrix. For SR1, `A = Y - gamma S` and both pieces collapse to
    /// c-order combinations of the cached blocks.
    pub fn assemble_a_blocks(
        &self,
        scheme: Scheme,
    ) -> Result<(SymMatrix, Vec<f64>), MemoryError> {
        let c = self.cols();
        if c == 0 {
            return Err(MemoryError::EmptyMemory);
        }
        match scheme {
            Scheme::Bfgs | Scheme::BfgsSecant | Scheme::Psb => {
                let mut ata = Mat::zeros(2 * c, 2 * c);
                for i in 0..c {
                    for j in 0..c {
                        ata.set(i, j, self.gram_ss.get(i, j));
                        ata.set(i, c + j, self.gram_sy.get(i, j));
                        ata.set(c + i, j, self.gram_sy.get(j, i));
                        ata.set(c + i, c + j, self.gram_yy.get(i, j));
                    }
                }
                let mut atg = self.sg.clone();
                atg.extend_from_slice(&self.yg);
                Ok((ata, atg))
            }
            Scheme::Sr1 => {
                let g0 = self.gamma;
                let mut ata = Mat::zeros(c, c);
                for i in 0..c {
                    for j in 0..c {
                        let v = self.gram_yy.get(i, j)
                            - g0 * (self.gram_sy.get(i, j) + self.gram_sy.get(j, i))
                            + g0 * g0 * self.gram_ss.get(i, j);
                        ata.set(i, j, v);
                    }
                }
                let atg: Vec<f64> =
                    (0..c).map(|i| self.yg[i] - g0 * self.sg[i]).collect();
                Ok((ata, atg))
            }
        }
    }

    /// `x += A q` where the coefficient layout matches the scheme's `A`.
    /// Tallied against the length-n budget.
    pub(crate) fn gemv_add(&self, scheme: Scheme, q: &[f64], x: &mut [f64]) {
        let c = self.cols();
        match scheme {
            Scheme::Bfgs | Scheme::BfgsSecant | Scheme::Psb => {
                assert_eq!(q.len(), 2 * c);
                self.count_mults((2 * c * self.n) as u64);
                for i in 0..c {
                    crate::densecore::axpy(q[i], &self.s_cols[i], x);
                    crate::densecore::axpy(q[c + i], &self.y_cols[i], x);
                }
            }
            Scheme::Sr1 => {
                assert_eq!(q.len(), c);
                self.count_mults((c * self.n) as u64);
                self.with_sr1_cols(|cols| {
                    for (qi, col) in q.iter().zip(cols) {
                        crate::densecore::axpy(*qi, col, x);
                    }
                });
            }
        }
    }

    /// Recomputes every cached quantity from the raw columns; test support.
    #[cfg(any(test, feature = "oracle"))]
    pub fn recompute_caches(&self, g: &[f64]) -> (Mat, Mat, Mat, Vec<f64>, Vec<f64>, f64) {
        let c = self.cols();
        let mut ss = Mat::zeros(c, c);
        let mut sy = Mat::zeros(c, c);
        let mut yy = Mat::zeros(c, c);
        for i in 0..c {
            for j in 0..c {
                ss.set(i, j, dot(&self.s_cols[i], &self.s_cols[j]));
                sy.set(i, j, dot(&self.s_cols[i], &self.y_cols[j]));
                yy.set(i, j, dot(&self.y_cols[i], &self.y_cols[j]));
            }
        }
        let sg = (0..c).map(|i| dot(&self.s_cols[i], g)).collect();
        let yg = (0..c).map(|i| dot(&self.y_cols[i], g)).collect();
        (ss, sy, yy, sg, yg, dot(g, g))
    }
}
