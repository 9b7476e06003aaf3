//! Limited-memory quasi-Newton optimization with adaptive regularization.
//!
//! The solver family implemented here replaces the line search of classical
//! L-BFGS with a regularization parameter: each iteration solves
//! `(B + mu I) d = -g` for a trial step, compares the actual objective
//! decrease against the decrease predicted by the quadratic model, and adapts
//! `mu` based on the ratio. The limited-memory matrix `B` is never formed;
//! steps are computed through compact representations (BFGS, SR1, PSB) whose
//! inner systems have the size of the memory, not the problem.
//!
//! Modules:
//! - [`densecore`]: small symmetric factorizations and length-n vector kernels
//! - [`problems`]: scalable unconstrained test problems with evaluation counters
//! - [`memory`]: pair storage with incrementally maintained Gram caches
//! - [`compact`]: step engines built on compact representations
//! - [`linesearch`]: Armijo and strong-Wolfe searches used by the baselines
//! - [`driver`]: the regularized outer loop and line-search L-BFGS baselines
//! - [`bench`]: suite runner, performance profiles, and CSV interchange

pub mod bench;
pub mod compact;
pub mod densecore;
pub mod driver;
pub mod linesearch;
pub mod memory;
pub mod problems;

#[cfg(any(test, feature = "oracle"))]
pub mod oracle;

pub use driver::{RunReport, RunStatus, SolverConfig, StepClass};
pub use memory::{MemoryState, Scheme};
