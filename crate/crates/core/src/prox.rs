//! Proximal operators and projections.
//!
//! Every operator here is the exact minimizer of `½‖Y − M‖² + g(Y)` for its
//! penalty `g` (or the Euclidean projection for the trace-ball constraint).

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{thin_svd, Matrix};

/// Grouping direction for [`l21_shrink`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShrinkAxis {
    Rows,
    Columns,
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(invalid("tau", format!("must be finite and nonnegative, got {tau}")));
    }
    Ok(())
}

#[inline]
fn shrink_scalar(x: f64, tau: f64) -> f64 {
    x.signum() * (x.abs() - tau).max(0.0)
}

/// Entrywise `sign(x)·max(|x| − tau, 0)`.
pub fn soft_threshold(m: &Matrix, tau: f64) -> Result<Matrix> {
    check_tau(tau)?;
    Ok(m.map(|x| shrink_scalar(x, tau)))
}

/// Group shrinkage: each row (or column) `g` becomes `g·max(0, 1 − tau/‖g‖)`.
pub fn l21_shrink(m: &Matrix, tau: f64, axis: ShrinkAxis) -> Result<Matrix> {
    check_tau(tau)?;
    let mut out = m.clone();
    match axis {
        ShrinkAxis::Rows => {
            for i in 0..out.rows() {
                let row = out.row_mut(i);
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                let factor = group_factor(norm, tau);
                row.iter_mut().for_each(|v| *v *= factor);
            }
        }
        ShrinkAxis::Columns => {
            let factors: Vec<f64> = m.column_norms().into_iter().map(|n| group_factor(n, tau)).collect();
            for i in 0..out.rows() {
                for (v, f) in out.row_mut(i).iter_mut().zip(&factors) {
                    *v *= f;
                }
            }
        }
    }
    Ok(out)
}

#[inline]
fn group_factor(norm: f64, tau: f64) -> f64 {
    if norm <= tau || norm == 0.0 {
        0.0
    } else {
        1.0 - tau / norm
    }
}

/// Singular value thresholding, the prox of `tau·‖·‖_*`.
pub fn svt(m: &Matrix, tau: f64) -> Result<Matrix> {
    check_tau(tau)?;
    if tau == 0.0 {
        return Ok(m.clone());
    }
    let svd = thin_svd(m)?;
    Ok(svd.reconstruct_with(|s| (s - tau).max(0.0)))
}

/// Euclidean projection onto `{Q : ‖Q‖_* ≤ tau}`.
pub fn project_trace_ball(m: &Matrix, tau: f64) -> Result<Matrix> {
    check_tau(tau)?;
    if tau == 0.0 {
        return Ok(Matrix::zeros(m.rows(), m.cols()));
    }
    let svd = thin_svd(m)?;
    if svd.s.iter().sum::<f64>() <= tau {
        return Ok(m.clone());
    }
    let theta = simplex_threshold(&svd.s, tau);
    Ok(svd.reconstruct_with(|s| (s - theta).max(0.0)))
}

/// Threshold `θ ≥ 0` such that `Σ max(v_i − θ, 0) = radius` for nonnegative `v`
/// whose sum exceeds `radius` (sort-and-threshold).
pub fn simplex_threshold(v: &[f64], radius: f64) -> f64 {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &x) in sorted.iter().enumerate() {
        cumsum += x;
        let t = (cumsum - radius) / (k + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }
    theta.max(0.0)
}

/// Projection of a vector onto the ℓ₁ ball of radius `radius`.
pub fn project_l1_ball(v: &[f64], radius: f64) -> Result<Vec<f64>> {
    check_tau(radius)?;
    let abs: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    if abs.iter().sum::<f64>() <= radius {
        return Ok(v.to_vec());
    }
    let theta = simplex_threshold(&abs, radius);
    Ok(v.iter().map(|&x| shrink_scalar(x, theta)).collect())
}
