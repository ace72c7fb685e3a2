//! Property tests: the partitioned solve agrees with a dense LU solve.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use parfact::localfact::{Strategy as Scheme, DEFAULT_TOL};
use parfact::parfact::{parallel_factor, parallel_factor_with, residual};
use parfact::{MatrixKind, StructuredMatrix};

fn instance() -> impl Strategy<Value = (StructuredMatrix, usize, Scheme)> {
    let kind = prop_oneof![
        Just(MatrixKind::Banded),
        Just(MatrixKind::BlockTridiagonal),
        Just(MatrixKind::Abd),
        Just(MatrixKind::Babd),
        Just(MatrixKind::CirculantLike),
    ];
    (kind, 0usize..=3, 0usize..=3, 1usize..=3, 64usize..=160, any::<u64>(), 2usize..=4, 0usize..6).prop_map(
        |(kind, s, r, m, blocks, seed, p, st)| {
            let (m, s, r) = match kind {
                MatrixKind::Banded => (1, s, r),
                MatrixKind::CirculantLike => (1, s.max(1), r.max(1)),
                MatrixKind::BlockTridiagonal => (m, 1, 1),
                _ => (m, 1, 0),
            };
            let a = StructuredMatrix::generate_random(kind, m * blocks, m, s, r, seed, 2.0).unwrap();
            let mut st = Scheme::ALL[st];
            if st == Scheme::Arce && !matches!(kind, MatrixKind::Abd | MatrixKind::Babd) {
                st = Scheme::Lu;
            }
            (a, p, st)
        },
    )
}

fn dense_solve(a: &StructuredMatrix, f: &[f64]) -> Vec<f64> {
    let d = a.to_dense().unwrap();
    DMatrix::from_row_slice(d.rows(), d.cols(), d.as_slice())
        .lu()
        .solve(&DVector::from_column_slice(f))
        .unwrap()
        .as_slice()
        .to_vec()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_dense_solve((a, p, st) in instance(), fseed in any::<u32>()) {
        let f: Vec<f64> = (0..a.n()).map(|i| (((i as u64 * 2654435761 + fseed as u64) % 1000) as f64) / 500.0 - 1.0).collect();
        let fct = parallel_factor(&a, p, st, DEFAULT_TOL).unwrap();
        let x = fct.solve(&f).unwrap();
        let xd = dense_solve(&a, &f);
        let scale = xd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = x.iter().zip(&xd).fold(0.0f64, |m, (u, v)| m.max((u - v).abs())) / scale;
        prop_assert!(err <= 1e-10, "{} {} p={}: {:e}", a.kind(), st, p, err);
        prop_assert!(residual(&a, &x, &f).unwrap() <= 1e-10);
    }

    #[test]
    fn worker_count_does_not_change_bits((a, p, st) in instance()) {
        let f = vec![1.0; a.n()];
        let one = parallel_factor_with(&a, p, st, DEFAULT_TOL, 1).unwrap().solve(&f).unwrap();
        let three = parallel_factor_with(&a, p, st, DEFAULT_TOL, 3).unwrap().solve(&f).unwrap();
        prop_assert_eq!(one, three);
    }
}
