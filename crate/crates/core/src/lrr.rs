//! Low-rank representation by inexact ALM, and the manifold regularization
//! transform of layer activations built on it.
//!
//! Solves `min ‖Z‖_* + λ‖E‖_{2,1}  s.t.  X = A·Z + E` through the split
//! `Z = J`, alternating `J → Z → E → (Y1, Y2) → μ` per iteration.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{format_g17, nuclear_norm, thin_svd, write_csv, Cholesky, Matrix};
use crate::prox::{l21_shrink, svt, ShrinkAxis};

/// `X` (`D × N`, samples as columns), dictionary `A` (`D × M`), weight `λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LrrProblem {
    pub x: Matrix,
    pub a: Matrix,
    pub lambda: f64,
}

impl LrrProblem {
    pub fn new(x: Matrix, a: Matrix, lambda: f64) -> Result<Self> {
        if x.rows() != a.rows() {
            return Err(Error::DimensionMismatch {
                op: "LrrProblem::new",
                left: x.shape(),
                right: a.shape(),
            });
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(invalid("lambda", format!("must be positive, got {lambda}")));
        }
        Ok(Self { x, a, lambda })
    }

    /// Self-expressive problem with `A = X`.
    pub fn self_expressive(x: Matrix, lambda: f64) -> Result<Self> {
        let a = x.clone();
        Self::new(x, a, lambda)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LrrOpts {
    pub mu0: f64,
    pub rho: f64,
    pub mu_max: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Grouping of the corruption term; columns are per-sample corruption.
    pub error_axis: ShrinkAxis,
}

impl Default for LrrOpts {
    fn default() -> Self {
        Self {
            mu0: 0.5,
            rho: 1.1,
            mu_max: 1e6,
            tol: 1e-6,
            max_iter: 500,
            error_axis: ShrinkAxis::Columns,
        }
    }
}

impl LrrOpts {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu0 > 0.0) {
            return Err(invalid("mu0", "must be positive"));
        }
        if !(self.rho > 1.0) {
            return Err(invalid("rho", "must exceed 1"));
        }
        if !(self.mu_max >= self.mu0) {
            return Err(invalid("mu_max", "must be at least mu0"));
        }
        if !(self.tol > 0.0) {
            return Err(invalid("tol", "must be positive"));
        }
        if self.max_iter == 0 {
            return Err(invalid("max_iter", "must be at least 1"));
        }
        Ok(())
    }
}

/// ALM iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct LrrState {
    pub z: Matrix,
    pub e: Matrix,
    pub j: Matrix,
    pub y1: Matrix,
    pub y2: Matrix,
    pub mu: f64,
    pub iter: usize,
}

impl LrrState {
    /// All-zero start with penalty `mu`.
    pub fn zeros(problem: &LrrProblem, mu: f64) -> Self {
        let (d, n) = problem.x.shape();
        let m = problem.a.cols();
        Self {
            z: Matrix::zeros(m, n),
            e: Matrix::zeros(d, n),
            j: Matrix::zeros(m, n),
            y1: Matrix::zeros(d, n),
            y2: Matrix::zeros(m, n),
            mu,
            iter: 0,
        }
    }
}

/// One row of the convergence history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrrTraceEntry {
    pub iter: usize,
    /// `μ` used during this iteration.
    pub mu: f64,
    /// `‖X − AZ − E‖_∞`
    pub residual_data: f64,
    /// `‖Z − J‖_∞`
    pub residual_split: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LrrResult {
    pub z_star: Matrix,
    pub e_star: Matrix,
    /// `(‖X − AZ − E‖_∞, ‖Z − J‖_∞)` at the last iterate.
    pub primal_residuals: (f64, f64),
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<LrrTraceEntry>,
    pub state: LrrState,
}

/// Augmented Lagrangian with the nuclear norm carried by `J`.
pub fn lagrangian(problem: &LrrProblem, state: &LrrState, axis: ShrinkAxis) -> Result<f64> {
    let r1 = problem.x.sub(&problem.a.matmul(&state.z)?)?.sub(&state.e)?;
    let r2 = state.z.sub(&state.j)?;
    let group = match axis {
        ShrinkAxis::Columns => state.e.l21_cols(),
        ShrinkAxis::Rows => state.e.l21_rows(),
    };
    Ok(nuclear_norm(&state.j)?
        + problem.lambda * group
        + state.y1.dot(&r1)?
        + state.y2.dot(&r2)?
        + 0.5 * state.mu * (r1.frobenius_norm_sq() + r2.frobenius_norm_sq()))
}

/// Inexact ALM from the all-zero start. Hitting `max_iter` is reported through
/// `converged = false`, not as an error.
pub fn solve_lrr(problem: &LrrProblem, opts: &LrrOpts) -> Result<LrrResult> {
    opts.validate()?;
    let LrrProblem { x, a, lambda } = problem;
    let m = a.cols();

    let mut normal = a.t_matmul(a)?;
    for i in 0..m {
        normal[(i, i)] += 1.0;
    }
    let chol = Cholesky::factor(&normal)?;
    let atx = a.t_matmul(x)?;

    let mut st = LrrState::zeros(problem, opts.mu0);
    let mut history = Vec::new();
    let mut converged = false;
    let mut residuals = (f64::INFINITY, f64::INFINITY);

    while st.iter < opts.max_iter {
        st.iter += 1;
        let mu = st.mu;
        let inv_mu = 1.0 / mu;

        st.j = svt(&st.z.add_scaled(&st.y2, inv_mu)?, inv_mu)?;

        // (I + AᵀA) Z = Aᵀ(X − E) + J + (AᵀY1 − Y2)/μ
        let mut rhs = atx.sub(&a.t_matmul(&st.e)?)?;
        rhs.axpy(1.0, &st.j)?;
        rhs.axpy(inv_mu, &a.t_matmul(&st.y1)?)?;
        rhs.axpy(-inv_mu, &st.y2)?;
        st.z = chol.solve(&rhs)?;

        let az = a.matmul(&st.z)?;
        let x_minus_az = x.sub(&az)?;
        st.e = l21_shrink(&x_minus_az.add_scaled(&st.y1, inv_mu)?, lambda * inv_mu, opts.error_axis)?;

        let r1 = x_minus_az.sub(&st.e)?;
        let r2 = st.z.sub(&st.j)?;
        st.y1.axpy(mu, &r1)?;
        st.y2.axpy(mu, &r2)?;
        residuals = (r1.max_abs(), r2.max_abs());
        history.push(LrrTraceEntry {
            iter: st.iter,
            mu,
            residual_data: residuals.0,
            residual_split: residuals.1,
        });
        if !residuals.0.is_finite() || !residuals.1.is_finite() {
            return Err(Error::NonFinite("LRR iterate"));
        }
        if residuals.0 < opts.tol && residuals.1 < opts.tol {
            converged = true;
            break;
        }
        st.mu = (opts.rho * mu).min(opts.mu_max);
    }

    Ok(LrrResult {
        z_star: st.z.clone(),
        e_star: st.e.clone(),
        primal_residuals: residuals,
        iterations: st.iter,
        converged,
        history,
        state: st,
    })
}

/// `(|Z| + |Zᵀ|) / 2` for a square representation matrix.
pub fn lrr_affinity(z: &Matrix) -> Result<Matrix> {
    if z.rows() != z.cols() {
        return Err(Error::DimensionMismatch {
            op: "lrr_affinity",
            left: z.shape(),
            right: (z.cols(), z.rows()),
        });
    }
    Ok(Matrix::from_fn(z.rows(), z.cols(), |i, j| 0.5 * (z[(i, j)].abs() + z[(j, i)].abs())))
}

/// Manifold regularization of a layer output with default ALM settings.
pub fn mrcl_transform(features: &Matrix, lambda: f64) -> Result<Matrix> {
    mrcl_transform_with(features, lambda, &LrrOpts::default())
}

/// Manifold regularization of a layer output.
///
/// `features` is `N × d` (one sample per row). The samples are represented
/// over themselves (`A = X` with `X = featuresᵀ`) and the returned matrix is
/// `(A·Z*)ᵀ`: the low-rank, corruption-free part of the activations.
///
/// The solve runs in an orthonormal basis `Q` of the row space of `X`
/// (dictionary `X·Q`), which has the same optimum and is much smaller when the
/// activations are rank deficient. If the ALM does not converge the input is
/// returned unchanged and a warning is logged.
pub fn mrcl_transform_with(features: &Matrix, lambda: f64, opts: &LrrOpts) -> Result<Matrix> {
    let n = features.rows();
    if n < 2 {
        return Err(invalid("features", format!("need at least 2 samples, got {n}")));
    }
    let x = features.transpose();
    let svd = thin_svd(&x)?;
    let s_max = svd.s.first().copied().unwrap_or(0.0);
    if s_max == 0.0 {
        return Ok(features.clone());
    }
    let rank = svd.s.iter().filter(|&&s| s > 1e-12 * s_max).count();
    // B = X·Q = U_r·diag(s_r)
    let mut basis = Matrix::zeros(x.rows(), rank);
    for i in 0..x.rows() {
        for k in 0..rank {
            basis[(i, k)] = svd.u[(i, k)] * svd.s[k];
        }
    }
    let problem = LrrProblem::new(x, basis, lambda)?;
    let result = solve_lrr(&problem, opts)?;
    if !result.converged {
        log::warn!(
            "manifold regularization: ALM stopped after {} iterations with residuals {:?}; passing features through",
            result.iterations,
            result.primal_residuals
        );
        return Ok(features.clone());
    }
    Ok(problem.a.matmul(&result.z_star)?.transpose())
}

/// Writes `z_star.csv`, `e_star.csv` and `residuals.csv` into `dir`.
pub fn write_diagnostics(result: &LrrResult, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_csv(&result.z_star, BufWriter::new(File::create(dir.join("z_star.csv"))?))?;
    write_csv(&result.e_star, BufWriter::new(File::create(dir.join("e_star.csv"))?))?;
    let mut w = BufWriter::new(File::create(dir.join("residuals.csv"))?);
    writeln!(w, "iter,mu,residual_data,residual_split")?;
    for h in &result.history {
        writeln!(
            w,
            "{},{},{},{}",
            h.iter,
            format_g17(h.mu),
            format_g17(h.residual_data),
            format_g17(h.residual_split)
        )?;
    }
    w.flush()?;
    Ok(())
}
