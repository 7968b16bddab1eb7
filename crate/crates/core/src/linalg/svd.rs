//! Thin SVD by one-sided (Hestenes) Jacobi rotations.

use super::Matrix;
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 80;
const ORTH_EPS: f64 = 1e-15;

/// `a = u · diag(s) · vt` with `k = min(rows, cols)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub vt: Matrix,
}

impl SvdResult {
    /// `u · diag(f(s)) · vt`
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let (m, k) = self.u.shape();
        let n = self.vt.cols();
        let mut out = Matrix::zeros(m, n);
        for (r, &s) in self.s.iter().enumerate() {
            let sv = f(s);
            if sv == 0.0 {
                continue;
            }
            let vrow = self.vt.row(r);
            for i in 0..m {
                let coef = self.u[(i, r)] * sv;
                if coef == 0.0 {
                    continue;
                }
                for (o, &v) in out.row_mut(i).iter_mut().zip(vrow) {
                    *o += coef * v;
                }
            }
        }
        debug_assert_eq!(k, self.s.len());
        out
    }

    pub fn reconstruct(&self) -> Matrix {
        self.reconstruct_with(|s| s)
    }
}

/// Thin SVD. Singular values are returned nonincreasing; `u` and `vt` always
/// have orthonormal columns/rows, including for rank-deficient input.
pub fn thin_svd(a: &Matrix) -> Result<SvdResult> {
    if !a.is_finite() {
        return Err(Error::NonFinite("thin_svd input"));
    }
    if a.rows() >= a.cols() {
        let (u, s, v) = jacobi_tall(a)?;
        Ok(SvdResult { u, s, vt: v.transpose() })
    } else {
        let (u, s, v) = jacobi_tall(&a.transpose())?;
        Ok(SvdResult { u: v, s, vt: u.transpose() })
    }
}

/// Sum of singular values.
pub fn nuclear_norm(a: &Matrix) -> Result<f64> {
    Ok(thin_svd(a)?.s.iter().sum())
}

/// One-sided Jacobi on a matrix with `rows >= cols`. Returns `(U, s, V)`.
fn jacobi_tall(a: &Matrix) -> Result<(Matrix, Vec<f64>, Matrix)> {
    let (m, n) = a.shape();
    // column-major working copies
    let mut w = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            w[j * m + i] = a[(i, j)];
        }
    }
    let mut v = vec![0.0; n * n];
    for j in 0..n {
        v[j * n + j] = 1.0;
    }

    // columns this small are numerically zero; rotating them never settles
    let negligible = {
        let total: f64 = w.iter().map(|x| x * x).sum();
        total * (f64::EPSILON * f64::EPSILON)
    };
    let mut converged = n < 2;
    let mut worst = 0.0;
    for _sweep in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        worst = 0.0f64;
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let cp = &w[p * m..(p + 1) * m];
                    let cq = &w[q * m..(q + 1) * m];
                    let mut alpha = 0.0;
                    let mut beta = 0.0;
                    let mut gamma = 0.0;
                    for (&x, &y) in cp.iter().zip(cq) {
                        alpha += x * x;
                        beta += y * y;
                        gamma += x * y;
                    }
                    (alpha, beta, gamma)
                };
                if gamma == 0.0 || alpha <= negligible || beta <= negligible {
                    continue;
                }
                let off = gamma.abs() / (alpha * beta).sqrt();
                worst = worst.max(off);
                if off <= ORTH_EPS {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, m, p, q, c, s);
                rotate(&mut v, n, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
        }
    }
    if !converged {
        return Err(Error::SvdNoConvergence {
            sweeps: MAX_SWEEPS,
            residual: worst,
        });
    }

    let norms: Vec<f64> = (0..n)
        .map(|j| w[j * m..(j + 1) * m].iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let s_max = norms.iter().cloned().fold(0.0, f64::max);
    let tiny = s_max * (m.max(n) as f64) * f64::EPSILON;

    let mut u = Matrix::zeros(m, n);
    let mut vm = Matrix::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    let mut deficient = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        let sigma = norms[j];
        let col = &w[j * m..(j + 1) * m];
        if sigma > tiny && sigma > 0.0 {
            for i in 0..m {
                u[(i, k)] = col[i] / sigma;
            }
            s.push(sigma);
        } else {
            s.push(0.0);
            deficient.push(k);
        }
        for i in 0..n {
            vm[(i, k)] = v[j * n + i];
        }
    }
    if !deficient.is_empty() {
        complete_orthonormal(&mut u, &deficient);
    }
    Ok((u, s, vm))
}

#[inline]
fn rotate(buf: &mut [f64], len: usize, p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = buf.split_at_mut(q * len);
    let cp = &mut head[p * len..(p + 1) * len];
    let cq = &mut tail[..len];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Fills the listed columns of `u` with unit vectors orthogonal to every other
/// column, by Gram-Schmidt against the standard basis.
fn complete_orthonormal(u: &mut Matrix, missing: &[usize]) {
    let (m, n) = u.shape();
    let mut filled: Vec<usize> = (0..n).filter(|k| !missing.contains(k)).collect();
    let mut basis = 0;
    for &k in missing {
        loop {
            assert!(basis < m, "cannot complete orthonormal basis");
            let mut cand = vec![0.0; m];
            cand[basis] = 1.0;
            basis += 1;
            // two passes of modified Gram-Schmidt
            for _ in 0..2 {
                for &f in &filled {
                    let d: f64 = (0..m).map(|i| cand[i] * u[(i, f)]).sum();
                    for (i, c) in cand.iter_mut().enumerate() {
                        *c -= d * u[(i, f)];
                    }
                }
            }
            let norm = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-8 {
                for (i, c) in cand.iter().enumerate() {
                    u[(i, k)] = c / norm;
                }
                filled.push(k);
                break;
            }
        }
    }
}
