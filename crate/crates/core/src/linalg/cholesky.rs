use super::Matrix;
use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor `a = L·Lᵀ`, reusable across right-hand sides.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    pub fn factor(a: &Matrix) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::DimensionMismatch {
                op: "cholesky",
                left: a.shape(),
                right: a.shape(),
            });
        }
        let scale = a.max_abs().max(1.0);
        for i in 0..n {
            for j in 0..i {
                if (a[(i, j)] - a[(j, i)]).abs() > 1e-10 * scale {
                    return Err(crate::error::invalid("a", "matrix is not symmetric"));
                }
            }
        }
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j, value: d });
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in j + 1..n {
                let mut s = a[(i, j)];
                let (ri, rj) = (l.row(i), l.row(j));
                for k in 0..j {
                    s -= ri[k] * rj[k];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(Self { l })
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    /// Solves `a · x = b` for every column of `b`.
    pub fn solve(&self, b: &Matrix) -> Result<Matrix> {
        let n = self.dim();
        if b.rows() != n {
            return Err(Error::DimensionMismatch {
                op: "cholesky solve",
                left: (n, n),
                right: b.shape(),
            });
        }
        let nrhs = b.cols();
        let mut x = b.clone();
        // forward: L y = b, row-oriented so each step updates a whole row of rhs
        for i in 0..n {
            for k in 0..i {
                let lik = self.l[(i, k)];
                if lik == 0.0 {
                    continue;
                }
                let (head, tail) = x.as_mut_slice().split_at_mut(i * nrhs);
                let xk = &head[k * nrhs..(k + 1) * nrhs];
                for (xi, &v) in tail[..nrhs].iter_mut().zip(xk) {
                    *xi -= lik * v;
                }
            }
            let d = self.l[(i, i)];
            for v in x.row_mut(i) {
                *v /= d;
            }
        }
        // backward: Lᵀ x = y
        for i in (0..n).rev() {
            for k in i + 1..n {
                let lki = self.l[(k, i)];
                if lki == 0.0 {
                    continue;
                }
                let (head, tail) = x.as_mut_slice().split_at_mut(k * nrhs);
                let xk = &tail[..nrhs];
                for (xi, &v) in head[i * nrhs..(i + 1) * nrhs].iter_mut().zip(xk) {
                    *xi -= lki * v;
                }
            }
            let d = self.l[(i, i)];
            for v in x.row_mut(i) {
                *v /= d;
            }
        }
        Ok(x)
    }
}

/// Solves `a · x = b` for symmetric positive definite `a`.
pub fn solve_spd(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    Cholesky::factor(a)?.solve(b)
}
