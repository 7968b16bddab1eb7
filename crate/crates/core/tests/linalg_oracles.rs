mod common;

use common::*;
use m2dl_core::linalg::{read_csv, solve_spd, thin_svd, write_csv};
use m2dl_core::Matrix;
use proptest::prelude::*;

#[test]
fn nuclear_norm_matches_eigen_oracle() {
    let mut r = rng(11);
    for _ in 0..10 {
        let a = random(&mut r, 5, 5);
        let s = thin_svd(&a).unwrap().s;
        let oracle = singular_values_oracle(&a);
        for (x, y) in s.iter().zip(&oracle) {
            assert!((x - y).abs() < 1e-9, "{s:?} vs {oracle:?}");
        }
        assert!((s.iter().sum::<f64>() - nuclear_oracle(&a)).abs() < 1e-9);
    }
}

#[test]
fn svd_orthogonality_and_reconstruction_6x4() {
    let mut r = rng(12);
    let a = random(&mut r, 6, 4);
    let svd = thin_svd(&a).unwrap();
    let utu = svd.u.transpose().matmul(&svd.u).unwrap();
    let vvt = svd.vt.matmul(&svd.vt.transpose()).unwrap();
    assert!(utu.sub(&Matrix::identity(4)).unwrap().max_abs() < 1e-12);
    assert!(vvt.sub(&Matrix::identity(4)).unwrap().max_abs() < 1e-12);
    let recon = svd.u.matmul(&Matrix::from_diag(&svd.s)).unwrap().matmul(&svd.vt).unwrap();
    assert!(recon.sub(&a).unwrap().frobenius_norm() < 1e-8);
}

#[test]
fn spd_residual_oracle() {
    let mut r = rng(13);
    let g = random(&mut r, 8, 8);
    let a = g.transpose().matmul(&g).unwrap().add(&Matrix::identity(8)).unwrap();
    let b = random(&mut r, 8, 2);
    let x = solve_spd(&a, &b).unwrap();
    assert!(a.matmul(&x).unwrap().sub(&b).unwrap().frobenius_norm() <= 1e-8 * b.frobenius_norm().max(1.0));
}

#[test]
fn csv_interchange_is_bit_exact() {
    let mut r = rng(14);
    let a = random(&mut r, 4, 3).scale(1e-7);
    let mut buf = Vec::new();
    write_csv(&a, &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().all(|l| l.split(',').count() == 3));
    assert_eq!(read_csv(&buf[..]).unwrap(), a);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn svd_invariants_hold(rows in 1usize..9, cols in 1usize..9, seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = random(&mut r, rows, cols);
        let svd = thin_svd(&a).unwrap();
        prop_assert_eq!(svd.s.len(), rows.min(cols));
        prop_assert!(svd.s.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(svd.s.iter().all(|&s| s >= 0.0));
        let err = svd.reconstruct().sub(&a).unwrap().frobenius_norm();
        prop_assert!(err <= 1e-8 * a.frobenius_norm().max(1.0));
    }

    #[test]
    fn matmul_is_associative(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = random(&mut r, 3, 4);
        let b = random(&mut r, 4, 5);
        let c = random(&mut r, 5, 2);
        let l = a.matmul(&b).unwrap().matmul(&c).unwrap();
        let rr = a.matmul(&b.matmul(&c).unwrap()).unwrap();
        prop_assert!(l.sub(&rr).unwrap().frobenius_norm() <= 1e-9 * l.frobenius_norm().max(1e-12));
    }
}
