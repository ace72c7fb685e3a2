use super::*;
use crate::partition::{extract_block, plan_partition};
use crate::structmat::{MatrixKind, StructuredMatrix};

fn na(d: &DenseMatrix) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_row_slice(d.rows(), d.cols(), d.as_slice())
}

fn dense_solve(m: &DenseMatrix, b: &[f64]) -> Vec<f64> {
    na(m).lu().solve(&nalgebra::DVector::from_column_slice(b)).unwrap().as_slice().to_vec()
}

fn rel_err(x: &[f64], y: &[f64]) -> f64 {
    let d = x.iter().zip(y).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    d / y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300)
}

fn toeplitz(n: usize) -> StructuredMatrix {
    let mut data = vec![-1.0; n - 1];
    data.extend(vec![2.0; n]);
    data.extend(vec![-1.0; n - 1]);
    StructuredMatrix::make(MatrixKind::Banded, n, 1, 1, 1, data, None).unwrap()
}

fn blocks(a: &StructuredMatrix, p: usize) -> Vec<PartitionBlock> {
    let plan = plan_partition(a, p).unwrap();
    // carry the left diagonal so every local block is nonsingular on its own
    (1..=p)
        .map(|i| {
            let mut b = extract_block(a, &plan, i).unwrap();
            b.owns_left_diag = true;
            b
        })
        .collect()
}

fn check_local_solve(b: &PartitionBlock, f: &LocalFactorization, tol: f64) {
    let m = b.to_dense();
    let rhs: Vec<f64> = (0..m.rows()).map(|i| ((i * 7 + 3) % 11) as f64 - 5.0).collect();
    let x = f.solve_local(&rhs).unwrap();
    let x0 = dense_solve(&m, &rhs);
    let e = rel_err(&x, &x0);
    assert!(e < tol, "{} partition {}: {e:e}", f.strategy, f.index);
}

#[test]
fn identity_body_has_no_fill() {
    let a = StructuredMatrix::make(MatrixKind::Banded, 9, 1, 0, 0, vec![1.0; 9], None).unwrap();
    for b in blocks(&a, 3) {
        let f = factor_lu(&b).unwrap();
        let u = &f.units[0];
        for v in [&u.z, &u.y, &u.w, &u.v] {
            assert!(v.as_ref().unwrap().max_abs() == 0.0);
        }
        assert_eq!(u.alpha1.max_abs(), 0.0);
        let r: Vec<f64> = (0..u.body_len()).map(|i| i as f64).collect();
        assert_eq!(u.apply_n_inv(&r), r);
        assert_eq!(u.apply_s_inv(&r), r);
    }
}

#[test]
fn toeplitz_lu_matches_dense() {
    let a = toeplitz(9);
    let bs = blocks(&a, 2);
    let f = factor_lu(&bs[0]).unwrap();
    check_local_solve(&bs[0], &f, 1e-12);
    // z = N⁻¹ b0 is fill-in on the second partition
    let f2 = factor_lu(&bs[1]).unwrap();
    let mask = f2.units[0].block_mask(FillVector::Z).unwrap();
    assert!(mask.iter().filter(|b| **b).count() > 1);
    let mask = f2.units[0].block_mask(FillVector::W).unwrap();
    assert!(mask.iter().filter(|b| **b).count() > 1);
}

#[test]
fn every_strategy_solves_locally() {
    let cases = [
        (MatrixKind::Banded, 40, 1, 2, 1),
        (MatrixKind::Banded, 33, 1, 1, 1),
        (MatrixKind::BlockTridiagonal, 36, 3, 1, 1),
        (MatrixKind::Abd, 32, 2, 1, 0),
    ];
    for (kind, n, m, s, r) in cases {
        let a = StructuredMatrix::generate_random(kind, n, m, s, r, 11, 2.0).unwrap();
        for b in blocks(&a, 3) {
            for st in Strategy::ALL {
                if st == Strategy::Arce && kind != MatrixKind::Abd {
                    continue;
                }
                let f = factor(&b, st, DEFAULT_TOL).unwrap();
                assert!(f.extra_separators.is_empty());
                check_local_solve(&b, &f, 1e-11);
            }
        }
    }
}

#[test]
fn separator_contributions_agree() {
    let a = StructuredMatrix::generate_random(MatrixKind::BlockTridiagonal, 40, 2, 1, 1, 4, 3.0).unwrap();
    let b = &blocks(&a, 3)[1];
    let reference = factor_lu(b).unwrap();
    let (a1, a2, be, ga) = reference.contributions();
    for st in [Strategy::Lud, Strategy::CyclicReduction, Strategy::LuPivot, Strategy::Qr] {
        let f = factor(b, st, DEFAULT_TOL).unwrap();
        let (x1, x2, xb, xg) = f.contributions();
        for (p, q) in [(a1, x1), (a2, x2), (be, xb), (ga, xg)] {
            assert!(p.sub(q).max_abs() <= 1e-10 * p.max_abs().max(1.0), "{st}");
        }
    }
}

#[test]
fn cyclic_reduction_levels() {
    let a = toeplitz(15);
    let bs = blocks(&a, 2);
    let f = factor_cyclic_reduction(&bs[0]).unwrap();
    assert_eq!(f.units[0].body_len(), 7);
    assert_eq!(f.units[0].levels(), 3);
    assert!(f.units[0].z.is_none() && f.units[0].v.is_none());
    check_local_solve(&bs[0], &f, 1e-12);
    let one = toeplitz(3);
    let f = factor_cyclic_reduction(&blocks(&one, 2)[0]).unwrap();
    assert_eq!(f.units[0].levels(), 0);
}

#[test]
fn lud_right_factor_is_diagonal() {
    let d = StructuredMatrix::make(MatrixKind::Banded, 5, 1, 0, 0, vec![2.0, 4.0, 1.0, 3.0, 5.0], None).unwrap();
    let b = &blocks(&d, 2)[0];
    let f = factor_lud(b).unwrap();
    assert_eq!(f.units[0].apply_s_inv(&[2.0, 4.0]), vec![1.0, 1.0]);
    assert_eq!(f.units[0].apply_n_inv(&[2.0, 4.0]), vec![2.0, 4.0]);
}

#[test]
fn singular_leading_minor_triggers_once() {
    // body [[1,1,0],[1,1,1],[0,1,1]] then a separator
    let data = vec![
        1.0, 1.0, 1.0, 1.0, 1.0, 1.0, // sub-diagonal (n-1 = 6)
        1.0, 1.0, 1.0, 4.0, 4.0, 4.0, 4.0, // diagonal
        1.0, 1.0, 1.0, 1.0, 1.0, 1.0, // super-diagonal
    ];
    let a = StructuredMatrix::make(MatrixKind::Banded, 7, 1, 1, 1, data, None).unwrap();
    let bs = blocks(&a, 2);
    assert!(matches!(factor_lu(&bs[0]), Err(Error::ZeroPivot(1))));
    let f = factor_lu_pivot(&bs[0], DEFAULT_TOL).unwrap();
    assert_eq!(f.extra_separators.len(), 1);
    assert_eq!(f.extra_separators[0].range, 1..2);
    check_local_solve(&bs[0], &f, 1e-10);
    let g = factor_qr(&bs[0], DEFAULT_TOL).unwrap();
    check_local_solve(&bs[0], &g, 1e-10);
}

#[test]
fn qr_left_factor_is_orthogonal() {
    let a = StructuredMatrix::generate_random(MatrixKind::Banded, 30, 1, 2, 2, 8, 2.0).unwrap();
    let b = &blocks(&a, 3)[1];
    let f = factor_qr(b, DEFAULT_TOL).unwrap();
    let u = &f.units[0];
    let n = u.body_len();
    // ‖Qᵀ e_j‖ = 1 and (Qᵀe_i)·(Qᵀe_j) = 0
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            u.apply_n_inv(&e)
        })
        .collect();
    for i in 0..n {
        for j in 0..n {
            let d: f64 = cols[i].iter().zip(&cols[j]).map(|(p, q)| p * q).sum();
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((d - want).abs() < 1e-12);
        }
    }
    assert_eq!(u.block_mask(FillVector::V).unwrap().iter().filter(|b| **b).count(), 1);
}

#[test]
fn arce_rejects_upper_blocks_and_reports_growth() {
    let a = StructuredMatrix::generate_random(MatrixKind::BlockTridiagonal, 24, 2, 1, 1, 1, 2.0).unwrap();
    let b = &blocks(&a, 2)[0];
    assert!(matches!(factor_arce(b), Err(Error::UnsupportedStructure(_))));
    let a = StructuredMatrix::generate_random(MatrixKind::Abd, 24, 2, 1, 0, 1, 0.0).unwrap();
    let b = &blocks(&a, 2)[1];
    let f = factor_arce(b).unwrap();
    assert!(f.growth.unwrap().is_finite());
    let u = &f.units[0];
    assert_eq!(u.block_mask(FillVector::Z).unwrap().iter().filter(|b| **b).count(), 1);
    check_local_solve(b, &f, 1e-10);
}

#[test]
fn local_apply_checks_length() {
    let a = toeplitz(9);
    let f = factor_lu(&blocks(&a, 2)[0]).unwrap();
    assert!(matches!(local_apply_n_inv(&f, &[1.0]), Err(Error::DimensionMismatch(_))));
    let x = local_apply_s_inv(&f, &local_apply_n_inv(&f, &[1.0, 0.0, 0.0, 1.0]).unwrap()).unwrap();
    let body = a.to_dense().unwrap().block(0, 0, 4, 4);
    let want = dense_solve(&body, &[1.0, 0.0, 0.0, 1.0]);
    assert!(rel_err(&x, &want) < 1e-13);
}
