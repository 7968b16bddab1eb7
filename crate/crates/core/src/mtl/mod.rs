//! Regularized multi-task least squares.
//!
//! All four solvers minimize `Σ_v ½‖Y_v − X_v·W_v‖_F² + Φ(W)` where `W` stacks
//! the per-task blocks `W_v` (`d1 × d2` each) side by side, so task `v` owns
//! columns `v·d2 .. (v+1)·d2`.

mod fista;
mod io;
mod scaling;
mod solvers;

pub use fista::FistaReport;
pub use io::{load_model, read_model, save_model, write_model};
pub use scaling::{fit, Scaling};
pub use solvers::{
    default_tau, solve, solve_least_l21, solve_least_lasso, solve_least_sparse_trace, solve_least_trace,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{nuclear_norm, Matrix};

/// Training data of one task: `x` is `N_v × d1`, `y` is `N_v × d2`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskDataset {
    pub task_id: usize,
    pub x: Matrix,
    pub y: Matrix,
}

impl TaskDataset {
    pub fn new(task_id: usize, x: Matrix, y: Matrix) -> Result<Self> {
        if x.rows() != y.rows() {
            return Err(Error::DimensionMismatch {
                op: "TaskDataset::new",
                left: x.shape(),
                right: y.shape(),
            });
        }
        Ok(Self { task_id, x, y })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }
}

/// Shared `(d1, d2)` of a task list.
pub(crate) fn task_dims(tasks: &[TaskDataset]) -> Result<(usize, usize)> {
    let first = tasks.first().ok_or_else(|| invalid("tasks", "at least one task is required"))?;
    let dims = (first.x.cols(), first.y.cols());
    for t in tasks {
        if t.x.rows() != t.y.rows() {
            return Err(Error::DimensionMismatch {
                op: "task rows",
                left: t.x.shape(),
                right: t.y.shape(),
            });
        }
        if (t.x.cols(), t.y.cols()) != dims {
            return Err(Error::DimensionMismatch {
                op: "task dims",
                left: dims,
                right: (t.x.cols(), t.y.cols()),
            });
        }
    }
    Ok(dims)
}

/// The four multi-task penalties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Penalty {
    /// `ρ1‖W‖_*`
    LeastTrace,
    /// `ρ_L2‖W‖_F² + ρ1‖W‖_{2,1}` (rows)
    LeastL21,
    /// `ρ_L2‖W‖_F² + ρ1‖W‖_1`
    LeastLasso,
    /// `γ‖P‖_1` with `W = P + Q`, `‖Q‖_* ≤ τ`
    LeastSparseTrace,
}

impl Penalty {
    pub const ALL: [Penalty; 4] = [
        Penalty::LeastTrace,
        Penalty::LeastL21,
        Penalty::LeastLasso,
        Penalty::LeastSparseTrace,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Penalty::LeastTrace => "LeastTrace",
            Penalty::LeastL21 => "LeastL21",
            Penalty::LeastLasso => "LeastLasso",
            Penalty::LeastSparseTrace => "LeastSparseTrace",
        }
    }
}

impl Default for Penalty {
    fn default() -> Self {
        Penalty::LeastSparseTrace
    }
}

impl fmt::Display for Penalty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Penalty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Penalty::ALL
            .into_iter()
            .find(|p| p.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid("penalty", format!("unknown penalty {s:?}")))
    }
}

/// Hyperparameters shared by the solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOpts {
    pub rho1: f64,
    pub rho_l2: f64,
    pub gamma: f64,
    /// Trace-ball radius; `None` selects [`default_tau`].
    pub tau: Option<f64>,
    pub max_iter: usize,
    pub tol: f64,
    /// Initial step size `1/L₀` for the backtracking line search.
    pub step_init: f64,
}

impl Default for SolverOpts {
    fn default() -> Self {
        Self {
            rho1: 0.1,
            rho_l2: 0.0,
            gamma: 0.1,
            tau: None,
            max_iter: 5000,
            tol: 1e-6,
            step_init: 1.0,
        }
    }
}

impl SolverOpts {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("rho1", self.rho1), ("rho_l2", self.rho_l2), ("gamma", self.gamma)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(invalid(name, format!("must be finite and nonnegative, got {v}")));
            }
        }
        if let Some(tau) = self.tau {
            if !(tau >= 0.0) || !tau.is_finite() {
                return Err(invalid("tau", format!("must be finite and nonnegative, got {tau}")));
            }
        }
        if !(self.tol > 0.0) {
            return Err(invalid("tol", "must be positive"));
        }
        if self.max_iter == 0 {
            return Err(invalid("max_iter", "must be at least 1"));
        }
        if !(self.step_init > 0.0) || !self.step_init.is_finite() {
            return Err(invalid("step_init", "must be positive"));
        }
        Ok(())
    }
}

/// Fitted multi-task regressor.
#[derive(Debug, Clone, PartialEq)]
pub struct MtlModel {
    pub penalty: Penalty,
    /// `d1 × (V·d2)`
    pub w: Matrix,
    pub d2: usize,
    /// Sparse component `P` for [`Penalty::LeastSparseTrace`]; `Q = W − P`.
    pub sparse_part: Option<Matrix>,
    /// Objective value at every accepted iterate, starting from `W = 0`.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Per-task standardization applied before the solve, if any.
    pub scaling: Option<Scaling>,
}

impl MtlModel {
    pub fn d1(&self) -> usize {
        self.w.rows()
    }

    pub fn n_tasks(&self) -> usize {
        if self.d2 == 0 {
            0
        } else {
            self.w.cols() / self.d2
        }
    }

    /// Block `W_v`.
    pub fn task_weights(&self, task: usize) -> Result<Matrix> {
        if task >= self.n_tasks() {
            return Err(Error::UnknownTask {
                task,
                tasks: self.n_tasks(),
            });
        }
        Ok(self.w.columns(task * self.d2, (task + 1) * self.d2))
    }

    pub fn final_objective(&self) -> f64 {
        *self.trace.last().unwrap_or(&f64::NAN)
    }
}

/// Result of [`solve_least_sparse_trace`].
#[derive(Debug, Clone, PartialEq)]
pub struct SparseTraceModel {
    pub p: Matrix,
    pub q: Matrix,
    pub w: Matrix,
    pub d2: usize,
    pub trace: Vec<f64>,
    /// `‖Q‖_*` at every accepted iterate.
    pub q_nuclear_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl From<SparseTraceModel> for MtlModel {
    fn from(m: SparseTraceModel) -> Self {
        MtlModel {
            penalty: Penalty::LeastSparseTrace,
            w: m.w,
            d2: m.d2,
            sparse_part: Some(m.p),
            trace: m.trace,
            iterations: m.iterations,
            converged: m.converged,
            scaling: None,
        }
    }
}

/// `Σ_v ½‖Y_v − X_v·W_v‖_F²`, evaluated from explicit residuals.
pub fn loss(tasks: &[TaskDataset], w: &Matrix) -> Result<f64> {
    let (d1, d2) = task_dims(tasks)?;
    if w.shape() != (d1, tasks.len() * d2) {
        return Err(Error::DimensionMismatch {
            op: "loss",
            left: w.shape(),
            right: (d1, tasks.len() * d2),
        });
    }
    let mut total = 0.0;
    for (v, t) in tasks.iter().enumerate() {
        let wv = w.columns(v * d2, (v + 1) * d2);
        let r = t.y.sub(&t.x.matmul(&wv)?)?;
        total += 0.5 * r.frobenius_norm_sq();
    }
    Ok(total)
}

/// Penalty term `Φ` alone. For the sparse/low-rank split `p` is the sparse
/// component (defaults to `w` itself when absent).
pub fn penalty_value(penalty: Penalty, w: &Matrix, p: Option<&Matrix>, opts: &SolverOpts) -> Result<f64> {
    Ok(match penalty {
        Penalty::LeastTrace => opts.rho1 * nuclear_norm(w)?,
        Penalty::LeastL21 => opts.rho_l2 * w.frobenius_norm_sq() + opts.rho1 * w.l21_rows(),
        Penalty::LeastLasso => opts.rho_l2 * w.frobenius_norm_sq() + opts.rho1 * w.l1_norm(),
        Penalty::LeastSparseTrace => opts.gamma * p.unwrap_or(w).l1_norm(),
    })
}

/// Full objective of `model` on `tasks` (raw, unscaled data).
pub fn objective(tasks: &[TaskDataset], model: &MtlModel, opts: &SolverOpts) -> Result<f64> {
    Ok(loss(tasks, &model.w)? + penalty_value(model.penalty, &model.w, model.sparse_part.as_ref(), opts)?)
}

/// `x · W_v`, undoing any stored standardization.
pub fn predict(model: &MtlModel, x: &Matrix, task: usize) -> Result<Matrix> {
    let wv = model.task_weights(task)?;
    if x.cols() != model.d1() {
        return Err(Error::DimensionMismatch {
            op: "predict",
            left: x.shape(),
            right: wv.shape(),
        });
    }
    match &model.scaling {
        None => x.matmul(&wv),
        Some(s) => {
            let xs = s.transform_x(task, x)?;
            let ys = xs.matmul(&wv)?;
            s.inverse_y(task, &ys)
        }
    }
}
