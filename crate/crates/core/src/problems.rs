//! Scalable unconstrained test problems with evaluation counters.
//!
//! Every problem is smooth, bounded below, defined for arbitrary (or mildly
//! constrained) dimension, and ships its standard starting point. Function
//! and gradient evaluations bump separate counters so that solver reports can
//! account for every evaluation, including those spent inside line searches.

use std::cell::Cell;
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ProblemError {
    #[error("unknown problem '{0}'")]
    UnknownProblem(String),
    #[error("problem '{name}' does not admit dimension {n}: {why}")]
    InvalidDimension { name: String, n: usize, why: String },
    #[error("malformed problem token '{0}', expected name[:n[:cond]]")]
    BadToken(String),
}

type EvalFn = Box<dyn Fn(&[f64]) -> f64 + Send>;
type GradFn = Box<dyn Fn(&[f64]) -> Vec<f64> + Send>;

enum Kind {
    ExtendedRosenbrock,
    ChainedRosenbrock,
    BroydenTridiagonal,
    ExtendedPowellSingular,
    Trigonometric,
    Raydan1,
    /// Separable quadratic `0.5 * sum c_i x_i^2` with coefficients spread
    /// linearly from 1 to `cond`.
    ConvexQuadratic { cond: f64 },
    Custom { f: EvalFn, g: GradFn },
}

pub struct Problem {
    name: String,
    n: usize,
    x0: Vec<f64>,
    kind: Kind,
    fevals: Cell<u64>,
    gevals: Cell<u64>,
}

impl Problem {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn x0(&self) -> Vec<f64> {
        self.x0.clone()
    }

    pub fn fevals(&self) -> u64 {
        self.fevals.get()
    }

    pub fn gevals(&self) -> u64 {
        self.gevals.get()
    }

    pub fn reset_counters(&self) {
        self.fevals.set(0);
        self.gevals.set(0);
    }

    /// Objective value only; counts one function evaluation.
    pub fn eval_f(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.n, "point has wrong dimension");
        self.fevals.set(self.fevals.get() + 1);
        self.f_raw(x)
    }

    /// Gradient only; counts one gradient evaluation.
    pub fn eval_g(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n, "point has wrong dimension");
        self.gevals.set(self.gevals.get() + 1);
        self.g_raw(x)
    }

    /// Objective and gradient together; counts one of each.
    pub fn eval_fg(&self, x: &[f64]) -> (f64, Vec<f64>) {
        (self.eval_f(x), self.eval_g(x))
    }

    fn f_raw(&self, x: &[f64]) -> f64 {
        match &self.kind {
            Kind::ExtendedRosenbrock => {
                let mut f = 0.0;
                for p in 0..self.n / 2 {
                    let (a, b) = (x[2 * p], x[2 * p + 1]);
                    let t = b - a * a;
                    f += 100.0 * t * t + (1.0 - a) * (1.0 - a);
                }
                f
            }
            Kind::ChainedRosenbrock => {
                let mut f = 0.0;
                for i in 0..self.n - 1 {
                    let t = x[i + 1] - x[i] * x[i];
                    f += 100.0 * t * t + (1.0 - x[i]) * (1.0 - x[i]);
                }
                f
            }
            Kind::BroydenTridiagonal => {
                let mut f = 0.0;
                for i in 0..self.n {
                    let r = broyden_residual(x, i);
                    f += r * r;
                }
                f
            }
            Kind::ExtendedPowellSingular => {
                let mut f = 0.0;
                for q in 0..self.n / 4 {
                    let (a, b, c, d) =
                        (x[4 * q], x[4 * q + 1], x[4 * q + 2], x[4 * q + 3]);
                    let t1 = a + 10.0 * b;
                    let t2 = c - d;
                    let t3 = b - 2.0 * c;
                    let t4 = a - d;
                    f += t1 * t1 + 5.0 * t2 * t2 + t3.powi(4) + 10.0 * t4.powi(4);
                }
                f
            }
            Kind::Trigonometric => {
                let cos_sum: f64 = x.iter().map(|v| v.cos()).sum();
                let mut f = 0.0;
                for (i, &xi) in x.iter().enumerate() {
                    let r = trig_residual(self.n, cos_sum, i, xi);
                    f += r * r;
                }
                f
            }
            Kind::Raydan1 => x
                .iter()
                .enumerate()
                .map(|(i, &v)| (i + 1) as f64 / 10.0 * (v.exp() - v))
                .sum(),
            Kind::ConvexQuadratic { cond } => {
                let mut f = 0.0;
                for (i, &v) in x.iter().enumerate() {
                    f += 0.5 * quad_coeff(self.n, *cond, i) * v * v;
                }
                f
            }
            Kind::Custom { f, .. } => f(x),
        }
    }

    fn g_raw(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            Kind::ExtendedRosenbrock => {
                let mut g = vec![0.0; self.n];
                for p in 0..self.n / 2 {
                    let (a, b) = (x[2 * p], x[2 * p + 1]);
                    let t = b - a * a;
                    g[2 * p] = -400.0 * a * t - 2.0 * (1.0 - a);
                    g[2 * p + 1] = 200.0 * t;
                }
                g
            }
            Kind::ChainedRosenbrock => {
                let mut g = vec![0.0; self.n];
                for i in 0..self.n - 1 {
                    let t = x[i + 1] - x[i] * x[i];
                    g[i] += -400.0 * x[i] * t - 2.0 * (1.0 - x[i]);
                    g[i + 1] += 200.0 * t;
                }
                g
            }
            Kind::BroydenTridiagonal => {
                let mut g = vec![0.0; self.n];
                for i in 0..self.n {
                    let r = broyden_residual(x, i);
                    g[i] += 2.0 * r * (3.0 - 4.0 * x[i]);
                    if i > 0 {
                        g[i - 1] += -2.0 * r;
                    }
                    if i + 1 < self.n {
                        g[i + 1] += -4.0 * r;
                    }
                }
                g
            }
            Kind::ExtendedPowellSingular => {
                let mut g = vec![0.0; self.n];
                for q in 0..self.n / 4 {
                    let (ia, ib, ic, id) = (4 * q, 4 * q + 1, 4 * q + 2, 4 * q + 3);
                    let (a, b, c, d) = (x[ia], x[ib], x[ic], x[id]);
                    let t1 = a + 10.0 * b;
                    let t2 = c - d;
                    let t3 = b - 2.0 * c;
                    let t4 = a - d;
                    g[ia] = 2.0 * t1 + 40.0 * t4.powi(3);
                    g[ib] = 20.0 * t1 + 4.0 * t3.powi(3);
                    g[ic] = 10.0 * t2 - 8.0 * t3.powi(3);
                    g[id] = -10.0 * t2 - 40.0 * t4.powi(3);
                }
                g
            }
            Kind::Trigonometric => {
                let cos_sum: f64 = x.iter().map(|v| v.cos()).sum();
                let mut rsum = 0.0;
                let mut res = vec![0.0; self.n];
                for (i, &xi) in x.iter().enumerate() {
                    res[i] = trig_residual(self.n, cos_sum, i, xi);
                    rsum += res[i];
                }
                let mut g = vec![0.0; self.n];
                for (j, &xj) in x.iter().enumerate() {
                    let scale = (j + 1) as f64;
                    g[j] = 2.0
                        * (rsum * xj.sin()
                            + res[j] * (scale * xj.sin() - xj.cos()));
                }
                g
            }
            Kind::Raydan1 => x
                .iter()
                .enumerate()
                .map(|(i, &v)| (i + 1) as f64 / 10.0 * (v.exp() - 1.0))
                .collect(),
            Kind::ConvexQuadratic { cond } => x
                .iter()
                .enumerate()
                .map(|(i, &v)| quad_coeff(self.n, *cond, i) * v)
                .collect(),
            Kind::Custom { g, .. } => g(x),
        }
    }
}

fn broyden_residual(x: &[f64], i: usize) -> f64 {
    let n = x.len();
    let left = if i > 0 { x[i - 1] } else { 0.0 };
    let right = if i + 1 < n { x[i + 1] } else { 0.0 };
    (3.0 - 2.0 * x[i]) * x[i] - left - 2.0 * right + 1.0
}

fn trig_residual(n: usize, cos_sum: f64, i: usize, xi: f64) -> f64 {
    n as f64 - cos_sum + (i + 1) as f64 * (1.0 - xi.cos()) - xi.sin()
}

fn quad_coeff(n: usize, cond: f64, i: usize) -> f64 {
    if n == 1 {
        1.0
    } else {
        1.0 + (cond - 1.0) * i as f64 / (n - 1) as f64
    }
}

fn repeat_pattern(pattern: &[f64], n: usize) -> Vec<f64> {
    (0..n).map(|i| pattern[i % pattern.len()]).collect()
}

fn build(name: &str, n: usize, x0: Vec<f64>, kind: Kind) -> Problem {
    Problem {
        name: name.to_string(),
        n,
        x0,
        kind,
        fevals: Cell::new(0),
        gevals: Cell::new(0),
    }
}

pub fn extended_rosenbrock(n: usize) -> Result<Problem, ProblemError> {
    require(n >= 2 && n % 2 == 0, "extrosenbrock", n, "n must be even and >= 2")?;
    Ok(build(
        "extrosenbrock",
        n,
        repeat_pattern(&[-1.2, 1.0], n),
        Kind::ExtendedRosenbrock,
    ))
}

pub fn chained_rosenbrock(n: usize) -> Result<Problem, ProblemError> {
    require(n >= 2, "chainedrosenbrock", n, "n must be >= 2")?;
    Ok(build(
        "chainedrosenbrock",
        n,
        repeat_pattern(&[-1.2, 1.0], n),
        Kind::ChainedRosenbrock,
    ))
}

pub fn broyden_tridiagonal(n: usize) -> Result<Problem, ProblemError> {
    require(n >= 2, "broydentri", n, "n must be >= 2")?;
    Ok(build("broydentri", n, vec![-1.0; n], Kind::BroydenTridiagonal))
}

pub fn extended_powell_singular(n: usize) -> Result<Problem, ProblemError> {
    require(n >= 4 && n % 4 == 0, "powellsingular", n, "n must be a positive multiple of 4")?;
    Ok(build(
        "powellsingular",
        n,
        repeat_pattern(&[3.0, -1.0, 0.0, 1.0], n),
        Kind::ExtendedPowellSingular,
    ))
}

pub fn trigonometric(n: usize) -> Result<Problem, ProblemError> {
    require(n >= 1, "trigonometric", n, "n must be >= 1")?;
    Ok(build("trigonometric", n, vec![1.0 / n as f64; n], Kind::Trigonometric))
}

pub fn raydan1(n: usize) -> Result<Problem, ProblemError> {
    require(n >= 1, "raydan1", n, "n must be >= 1")?;
    Ok(build("raydan1", n, vec![1.0; n], Kind::Raydan1))
}

pub fn convex_quadratic(n: usize, cond: f64) -> Result<Problem, ProblemError> {
    require(n >= 1, "quadratic", n, "n must be >= 1")?;
    if !(cond >= 1.0) {
        return Err(ProblemError::InvalidDimension {
            name: "quadratic".into(),
            n,
            why: format!("condition number must be >= 1, got {cond}"),
        });
    }
    Ok(build("quadratic", n, vec![1.0; n], Kind::ConvexQuadratic { cond }))
}

/// Problem defined by caller-supplied closures; used for adversarial and
/// micro tests where a fixed analytic family is too rigid.
pub fn custom(
    name: &str,
    x0: Vec<f64>,
    f: impl Fn(&[f64]) -> f64 + Send + 'static,
    g: impl Fn(&[f64]) -> Vec<f64> + Send + 'static,
) -> Problem {
    let n = x0.len();
    build(name, n, x0, Kind::Custom { f: Box::new(f), g: Box::new(g) })
}

fn require(ok: bool, name: &str, n: usize, why: &str) -> Result<(), ProblemError> {
    if ok {
        Ok(())
    } else {
        Err(ProblemError::InvalidDimension { name: name.into(), n, why: why.into() })
    }
}

/// Names accepted by [`by_name`], in canonical suite order.
pub const SUITE_NAMES: [&str; 7] = [
    "extrosenbrock",
    "chainedrosenbrock",
    "broydentri",
    "powellsingular",
    "trigonometric",
    "raydan1",
    "quadratic",
];

/// Constructs a suite problem by name. The quadratic takes an optional
/// condition number (defaults to `n`).
pub fn by_name(name: &str, n: usize, cond: Option<f64>) -> Result<Problem, ProblemError> {
    match name {
        "extrosenbrock" => extended_rosenbrock(n),
        "chainedrosenbrock" => chained_rosenbrock(n),
        "broydentri" => broyden_tridiagonal(n),
        "powellsingular" => extended_powell_singular(n),
        "trigonometric" => trigonometric(n),
        "raydan1" => raydan1(n),
        "quadratic" => convex_quadratic(n, cond.unwrap_or(n as f64)),
        other => Err(ProblemError::UnknownProblem(other.to_string())),
    }
}

/// All seven suite problems at dimension `n` (must be a multiple of 4).
pub fn suite(n: usize) -> Result<Vec<Problem>, ProblemError> {
    SUITE_NAMES.iter().map(|name| by_name(name, n, None)).collect()
}

/// Parsed form of a CLI problem token `name[:n[:cond]]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    pub name: String,
    pub n: usize,
    pub cond: Option<f64>,
}

impl ProblemSpec {
    pub fn parse(token: &str, default_n: usize) -> Result<Self, ProblemError> {
        let mut parts = token.split(':');
        let name = parts.next().unwrap_or("").trim().to_string();
        if name.is_empty() {
            return Err(ProblemError::BadToken(token.to_string()));
        }
        let n = match parts.next() {
            None => default_n,
            Some(t) => t
                .trim()
                .parse::<usize>()
                .map_err(|_| ProblemError::BadToken(token.to_string()))?,
        };
        let cond = match parts.next() {
            None => None,
            Some(t) => Some(
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| ProblemError::BadToken(token.to_string()))?,
            ),
        };
        if parts.next().is_some() {
            return Err(ProblemError::BadToken(token.to_string()));
        }
        if !SUITE_NAMES.contains(&name.as_str()) {
            return Err(ProblemError::UnknownProblem(name));
        }
        Ok(ProblemSpec { name, n, cond })
    }

    pub fn build(&self) -> Result<Problem, ProblemError> {
        by_name(&self.name, self.n, self.cond)
    }

    pub fn label(&self) -> String {
        let mut s = self.name.clone();
        if let Some(c) = self.cond {
            let _ = write!(s, ":cond{c}");
        }
        s
    }
}

/// Maximum relative disagreement between the analytic gradient and a central
/// finite difference with stencil width `h`, over all coordinates. The
/// denominator is `max(1, |g_i|)` so flat coordinates are judged absolutely.
pub fn grad_check(problem: &Problem, x: &[f64], h: f64) -> f64 {
    let g = problem.eval_g(x);
    let mut worst = 0.0_f64;
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let orig = xp[i];
        xp[i] = orig + h;
        let fp = problem.eval_f(&xp);
        xp[i] = orig - h;
        let fm = problem.eval_f(&xp);
        xp[i] = orig;
        let fd = (fp - fm) / (2.0 * h);
        let rel = (g[i] - fd).abs() / g[i].abs().max(1.0);
        worst = worst.max(rel);
    }
    worst
}
