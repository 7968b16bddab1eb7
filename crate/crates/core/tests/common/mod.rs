#![allow(dead_code)]

use m2dl_core::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

pub fn gaussian_like(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    // sum of uniforms, close enough to normal for test data
    Matrix::from_fn(r, c, |_, _| (0..4).map(|_| rng.gen_range(-1.0..1.0)).sum::<f64>() * 0.866)
}

/// Eigenvalues of a symmetric matrix by the classical two-sided Jacobi method.
pub fn symmetric_eigenvalues(a: &Matrix) -> Vec<f64> {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Singular values via the eigenvalues of `AᵀA` (or `AAᵀ`, whichever is smaller).
pub fn singular_values_oracle(a: &Matrix) -> Vec<f64> {
    let g = if a.rows() >= a.cols() {
        a.transpose().matmul(a).unwrap()
    } else {
        a.matmul(&a.transpose()).unwrap()
    };
    symmetric_eigenvalues(&g).into_iter().map(|e| e.max(0.0).sqrt()).collect()
}

pub fn nuclear_oracle(a: &Matrix) -> f64 {
    singular_values_oracle(a).iter().sum()
}

/// Largest singular value by power iteration on `AᵀA`.
pub fn spectral_norm_oracle(a: &Matrix) -> f64 {
    let n = a.cols();
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut sigma = 0.0;
    for _ in 0..5000 {
        let av: Vec<f64> = (0..a.rows()).map(|i| (0..n).map(|j| a[(i, j)] * v[j]).sum()).collect();
        let mut w: Vec<f64> = (0..n).map(|j| (0..a.rows()).map(|i| a[(i, j)] * av[i]).sum()).collect();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        w.iter_mut().for_each(|x| *x /= norm);
        sigma = norm.sqrt();
        v = w;
    }
    sigma
}

pub fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
    a.sub(b).unwrap().frobenius_norm() / b.frobenius_norm().max(1e-300)
}
