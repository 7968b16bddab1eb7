//! Small LRR demonstration data.

use m2dl_core::Matrix;
use m2dl_synth::derive_seed;

/// Uniform in [-1, 1) from a counter-based stream (keeps this crate free of an RNG dependency).
fn uniform(seed: u64, k: u64) -> f64 {
    (derive_seed(seed, &[k]) >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

/// 60 samples in ℝ^10 from two 2-D subspaces, three of them corrupted by
/// noise 10× their norm, every sample then scaled to unit norm. Returns the
/// `10 × 60` data and the corrupted column indices.
pub fn two_subspaces(seed: u64) -> (Matrix, Vec<usize>) {
    let mut k = 0u64;
    let mut next = || {
        k += 1;
        uniform(seed, k)
    };
    let bases: Vec<Matrix> = (0..2).map(|_| Matrix::from_fn(10, 2, |_, _| next())).collect();
    let mut x = Matrix::zeros(10, 60);
    for j in 0..60 {
        let b = &bases[j / 30];
        let c = [next(), next()];
        for i in 0..10 {
            x[(i, j)] = b[(i, 0)] * c[0] + b[(i, 1)] * c[1];
        }
    }
    let corrupted = vec![7, 29, 44];
    for &j in &corrupted {
        let col = x.column(j);
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        let noise: Vec<f64> = (0..10).map(|_| next()).collect();
        let nn = noise.iter().map(|v| v * v).sum::<f64>().sqrt();
        let new: Vec<f64> = col.iter().zip(&noise).map(|(a, b)| a + 10.0 * norm * b / nn).collect();
        x.set_column(j, &new);
    }
    for j in 0..x.cols() {
        let col = x.column(j);
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        x.set_column(j, &col.iter().map(|v| v / norm).collect::<Vec<_>>());
    }
    (x, corrupted)
}
