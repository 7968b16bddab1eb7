use super::fista::{self, Composite, FistaOpts};
use super::{task_dims, MtlModel, Penalty, SolverOpts, SparseTraceModel, TaskDataset};
use crate::error::Result;
use crate::linalg::{nuclear_norm, solve_spd, Matrix};
use crate::prox::{l21_shrink, project_trace_ball, soft_threshold, svt, ShrinkAxis};

/// Per-task quadratic data term. Tasks with more samples than features are
/// evaluated through their Gram matrices.
struct TaskTerm<'a> {
    data: &'a TaskDataset,
    gram: Option<(Matrix, Matrix, f64)>,
}

/// `Σ_v ½‖Y_v − X_v·W_v‖² + ridge·‖W‖_F²`
struct LeastSquares<'a> {
    terms: Vec<TaskTerm<'a>>,
    d2: usize,
    ridge: f64,
}

impl<'a> LeastSquares<'a> {
    fn new(tasks: &'a [TaskDataset], ridge: f64) -> Result<Self> {
        let (d1, d2) = task_dims(tasks)?;
        let terms = tasks
            .iter()
            .map(|t| {
                let gram = if t.len() > d1 {
                    Some((t.x.t_matmul(&t.x)?, t.x.t_matmul(&t.y)?, 0.5 * t.y.frobenius_norm_sq()))
                } else {
                    None
                };
                Ok(TaskTerm { data: t, gram })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { terms, d2, ridge })
    }

    fn block(&self, w: &Matrix, v: usize) -> Matrix {
        w.columns(v * self.d2, (v + 1) * self.d2)
    }

    fn value(&self, w: &Matrix) -> Result<f64> {
        let mut total = self.ridge * w.frobenius_norm_sq();
        for (v, term) in self.terms.iter().enumerate() {
            let wv = self.block(w, v);
            total += match &term.gram {
                Some((g, b, c)) => 0.5 * wv.dot(&g.matmul(&wv)?)? - wv.dot(b)? + c,
                None => 0.5 * term.data.y.sub(&term.data.x.matmul(&wv)?)?.frobenius_norm_sq(),
            };
        }
        Ok(total)
    }

    fn value_grad(&self, w: &Matrix) -> Result<(f64, Matrix)> {
        let mut total = self.ridge * w.frobenius_norm_sq();
        let mut grad = w.scale(2.0 * self.ridge);
        for (v, term) in self.terms.iter().enumerate() {
            let wv = self.block(w, v);
            let gv = match &term.gram {
                Some((g, b, c)) => {
                    let gw = g.matmul(&wv)?;
                    total += 0.5 * wv.dot(&gw)? - wv.dot(b)? + c;
                    gw.sub(b)?
                }
                None => {
                    let r = term.data.x.matmul(&wv)?.sub(&term.data.y)?;
                    total += 0.5 * r.frobenius_norm_sq();
                    term.data.x.t_matmul(&r)?
                }
            };
            let mut block = self.block(&grad, v);
            block.axpy(1.0, &gv)?;
            grad.set_columns(v * self.d2, &block);
        }
        Ok((total, grad))
    }
}

struct TraceProblem<'a> {
    ls: LeastSquares<'a>,
    rho1: f64,
}

impl Composite for TraceProblem<'_> {
    fn smooth(&self, x: &Matrix) -> Result<f64> {
        self.ls.value(x)
    }
    fn smooth_grad(&self, x: &Matrix) -> Result<(f64, Matrix)> {
        self.ls.value_grad(x)
    }
    fn prox(&self, v: &Matrix, step: f64) -> Result<Matrix> {
        svt(v, self.rho1 * step)
    }
    fn nonsmooth(&self, x: &Matrix) -> Result<f64> {
        if self.rho1 == 0.0 {
            return Ok(0.0);
        }
        Ok(self.rho1 * nuclear_norm(x)?)
    }
}

struct L21Problem<'a> {
    ls: LeastSquares<'a>,
    rho1: f64,
}

impl Composite for L21Problem<'_> {
    fn smooth(&self, x: &Matrix) -> Result<f64> {
        self.ls.value(x)
    }
    fn smooth_grad(&self, x: &Matrix) -> Result<(f64, Matrix)> {
        self.ls.value_grad(x)
    }
    fn prox(&self, v: &Matrix, step: f64) -> Result<Matrix> {
        l21_shrink(v, self.rho1 * step, ShrinkAxis::Rows)
    }
    fn nonsmooth(&self, x: &Matrix) -> Result<f64> {
        Ok(self.rho1 * x.l21_rows())
    }
}

struct LassoProblem<'a> {
    ls: LeastSquares<'a>,
    rho1: f64,
}

impl Composite for LassoProblem<'_> {
    fn smooth(&self, x: &Matrix) -> Result<f64> {
        self.ls.value(x)
    }
    fn smooth_grad(&self, x: &Matrix) -> Result<(f64, Matrix)> {
        self.ls.value_grad(x)
    }
    fn prox(&self, v: &Matrix, step: f64) -> Result<Matrix> {
        soft_threshold(v, self.rho1 * step)
    }
    fn nonsmooth(&self, x: &Matrix) -> Result<f64> {
        Ok(self.rho1 * x.l1_norm())
    }
}

/// Variable is `[P | Q]` side by side; the data term sees `P + Q`.
struct SparseTraceProblem<'a> {
    ls: LeastSquares<'a>,
    gamma: f64,
    tau: f64,
    width: usize,
}

impl SparseTraceProblem<'_> {
    fn split(&self, x: &Matrix) -> (Matrix, Matrix) {
        (x.columns(0, self.width), x.columns(self.width, 2 * self.width))
    }

    fn join(&self, p: &Matrix, q: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(p.rows(), 2 * self.width);
        out.set_columns(0, p);
        out.set_columns(self.width, q);
        out
    }
}

impl Composite for SparseTraceProblem<'_> {
    fn smooth(&self, x: &Matrix) -> Result<f64> {
        let (p, q) = self.split(x);
        self.ls.value(&p.add(&q)?)
    }
    fn smooth_grad(&self, x: &Matrix) -> Result<(f64, Matrix)> {
        let (p, q) = self.split(x);
        let (f, g) = self.ls.value_grad(&p.add(&q)?)?;
        Ok((f, self.join(&g, &g)))
    }
    fn prox(&self, v: &Matrix, step: f64) -> Result<Matrix> {
        let (p, q) = self.split(v);
        let p = soft_threshold(&p, self.gamma * step)?;
        let q = project_trace_ball(&q, self.tau)?;
        Ok(self.join(&p, &q))
    }
    fn nonsmooth(&self, x: &Matrix) -> Result<f64> {
        Ok(self.gamma * x.columns(0, self.width).l1_norm())
    }
}

fn fista_opts(opts: &SolverOpts) -> FistaOpts {
    FistaOpts {
        max_iter: opts.max_iter,
        tol: opts.tol,
        step_init: opts.step_init,
    }
}

fn model_from(penalty: Penalty, d2: usize, report: fista::FistaReport) -> MtlModel {
    MtlModel {
        penalty,
        w: report.x,
        d2,
        sparse_part: None,
        trace: report.trace,
        iterations: report.iterations,
        converged: report.converged,
        scaling: None,
    }
}

/// Trace-norm regularized least squares: `loss + ρ1‖W‖_*`.
pub fn solve_least_trace(tasks: &[TaskDataset], opts: &SolverOpts) -> Result<MtlModel> {
    opts.validate()?;
    let (d1, d2) = task_dims(tasks)?;
    let problem = TraceProblem {
        ls: LeastSquares::new(tasks, 0.0)?,
        rho1: opts.rho1,
    };
    let x0 = Matrix::zeros(d1, tasks.len() * d2);
    let report = fista::run(&problem, x0, &fista_opts(opts), |_| Ok(()))?;
    Ok(model_from(Penalty::LeastTrace, d2, report))
}

/// Joint feature selection: `loss + ρ_L2‖W‖_F² + ρ1‖W‖_{2,1}` over rows.
pub fn solve_least_l21(tasks: &[TaskDataset], opts: &SolverOpts) -> Result<MtlModel> {
    opts.validate()?;
    let (d1, d2) = task_dims(tasks)?;
    let problem = L21Problem {
        ls: LeastSquares::new(tasks, opts.rho_l2)?,
        rho1: opts.rho1,
    };
    let x0 = Matrix::zeros(d1, tasks.len() * d2);
    let report = fista::run(&problem, x0, &fista_opts(opts), |_| Ok(()))?;
    Ok(model_from(Penalty::LeastL21, d2, report))
}

/// Elementwise sparsity: `loss + ρ_L2‖W‖_F² + ρ1‖W‖_1`.
pub fn solve_least_lasso(tasks: &[TaskDataset], opts: &SolverOpts) -> Result<MtlModel> {
    opts.validate()?;
    let (d1, d2) = task_dims(tasks)?;
    let problem = LassoProblem {
        ls: LeastSquares::new(tasks, opts.rho_l2)?,
        rho1: opts.rho1,
    };
    let x0 = Matrix::zeros(d1, tasks.len() * d2);
    let report = fista::run(&problem, x0, &fista_opts(opts), |_| Ok(()))?;
    Ok(model_from(Penalty::LeastLasso, d2, report))
}

/// Incoherent sparse plus low-rank: `loss(P + Q) + γ‖P‖_1` subject to
/// `‖Q‖_* ≤ τ`, solved jointly over `(P, Q)` with exact projection of `Q`.
pub fn solve_least_sparse_trace(tasks: &[TaskDataset], opts: &SolverOpts) -> Result<SparseTraceModel> {
    opts.validate()?;
    let (d1, d2) = task_dims(tasks)?;
    let tau = match opts.tau {
        Some(t) => t,
        None => default_tau(tasks)?,
    };
    let width = tasks.len() * d2;
    let problem = SparseTraceProblem {
        ls: LeastSquares::new(tasks, 0.0)?,
        gamma: opts.gamma,
        tau,
        width,
    };
    let mut q_nuclear_trace = Vec::new();
    let x0 = Matrix::zeros(d1, 2 * width);
    let report = fista::run(&problem, x0, &fista_opts(opts), |x| {
        q_nuclear_trace.push(nuclear_norm(&x.columns(width, 2 * width))?);
        Ok(())
    })?;
    let (p, q) = problem.split(&report.x);
    let w = p.add(&q)?;
    Ok(SparseTraceModel {
        p,
        q,
        w,
        d2,
        trace: report.trace,
        q_nuclear_trace,
        iterations: report.iterations,
        converged: report.converged,
    })
}

/// Dispatches on `penalty`.
pub fn solve(tasks: &[TaskDataset], penalty: Penalty, opts: &SolverOpts) -> Result<MtlModel> {
    match penalty {
        Penalty::LeastTrace => solve_least_trace(tasks, opts),
        Penalty::LeastL21 => solve_least_l21(tasks, opts),
        Penalty::LeastLasso => solve_least_lasso(tasks, opts),
        Penalty::LeastSparseTrace => solve_least_sparse_trace(tasks, opts).map(MtlModel::from),
    }
}

/// Half the nuclear norm of the per-task ridge solution
/// `W_v = (X_vᵀX_v + δI)⁻¹X_vᵀY_v` with `δ = 10⁻³·tr(X_vᵀX_v)/d1`.
pub fn default_tau(tasks: &[TaskDataset]) -> Result<f64> {
    let (d1, d2) = task_dims(tasks)?;
    let mut w = Matrix::zeros(d1, tasks.len() * d2);
    for (v, t) in tasks.iter().enumerate() {
        let mut g = t.x.t_matmul(&t.x)?;
        let trace: f64 = (0..d1).map(|i| g[(i, i)]).sum();
        let delta = (1e-3 * trace / d1.max(1) as f64).max(1e-12);
        for i in 0..d1 {
            g[(i, i)] += delta;
        }
        let wv = solve_spd(&g, &t.x.t_matmul(&t.y)?)?;
        w.set_columns(v * d2, &wv);
    }
    Ok(0.5 * nuclear_norm(&w)?)
}
