//! FISTA with backtracking and restart-on-increase.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// `F(x) = f(x) + g(x)` with `f` smooth and `g` prox-friendly.
pub(crate) trait Composite {
    fn smooth(&self, x: &Matrix) -> Result<f64>;
    fn smooth_grad(&self, x: &Matrix) -> Result<(f64, Matrix)>;
    fn prox(&self, v: &Matrix, step: f64) -> Result<Matrix>;
    fn nonsmooth(&self, x: &Matrix) -> Result<f64>;
}

#[derive(Debug, Clone)]
pub struct FistaReport {
    pub x: Matrix,
    /// `F` at the start point and at every accepted iterate.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub(crate) struct FistaOpts {
    pub max_iter: usize,
    pub tol: f64,
    pub step_init: f64,
}

/// Runs FISTA from `x0`. `observe` sees every accepted iterate.
pub(crate) fn run<P: Composite>(
    problem: &P,
    x0: Matrix,
    opts: &FistaOpts,
    mut observe: impl FnMut(&Matrix) -> Result<()>,
) -> Result<FistaReport> {
    let mut x = x0;
    let mut f_x = problem.smooth(&x)? + problem.nonsmooth(&x)?;
    let mut trace = vec![f_x];
    observe(&x)?;

    let mut y = x.clone();
    let mut y_is_x = true;
    let mut t = 1.0f64;
    let mut lipschitz = 1.0 / opts.step_init;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        let (f_y, grad) = problem.smooth_grad(&y)?;
        if !grad.is_finite() || !f_y.is_finite() {
            return Err(Error::NonFiniteGradient { iteration: iterations });
        }

        let (z, f_z) = loop {
            let z = problem.prox(&y.add_scaled(&grad, -1.0 / lipschitz)?, 1.0 / lipschitz)?;
            let diff = z.sub(&y)?;
            let f_z = problem.smooth(&z)?;
            let model = f_y + grad.dot(&diff)? + 0.5 * lipschitz * diff.frobenius_norm_sq();
            if f_z <= model + 1e-14 * f_y.abs().max(1.0) {
                break (z, f_z);
            }
            lipschitz *= 2.0;
            if !lipschitz.is_finite() {
                return Err(Error::NonFiniteGradient { iteration: iterations });
            }
        };
        let obj_z = f_z + problem.nonsmooth(&z)?;

        if obj_z > f_x {
            if y_is_x {
                // a plain proximal step from x cannot improve: stalled at rounding level
                converged = true;
                break;
            }
            y = x.clone();
            y_is_x = true;
            t = 1.0;
            continue;
        }

        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        let step = z.sub(&x)?;
        y = z.add_scaled(&step, momentum)?;
        y_is_x = momentum == 0.0;
        t = t_next;

        let decrease = f_x - obj_z;
        x = z;
        f_x = obj_z;
        trace.push(f_x);
        observe(&x)?;

        if decrease <= opts.tol * trace[trace.len() - 2].abs().max(1.0) {
            converged = true;
            break;
        }
    }

    Ok(FistaReport {
        x,
        trace,
        iterations,
        converged,
    })
}
