use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use steplab::experiments::poisson;
use steplab::linalg::{dot, DenseMatrix};
use steplab::operators::{
    laplacian_2d, lambda_max, power_iteration, solve_reference, stability_bound, DenseOperator, GridSpec, Laplacian2d,
    LinearOperator, PowerIterationConfig, Provenance, QuadraticObjective,
};

fn laplacian(m: usize) -> Laplacian2d<f64> {
    laplacian_2d(GridSpec::new(m).unwrap())
}

fn to_nalgebra(a: &DenseMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.rows(), a.cols(), |i, j| a[(i, j)])
}

#[test]
fn analytic_spectrum_matches_dense_eigensolver() {
    for m in 1..=8 {
        let op = laplacian(m);
        let mut dense: Vec<f64> = to_nalgebra(&op.to_dense()).symmetric_eigen().eigenvalues.iter().copied().collect();
        dense.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let analytic = op.eigenvalues();
        assert_eq!(dense.len(), m * m);
        for (a, d) in analytic.iter().zip(&dense) {
            assert_relative_eq!(*a, *d, max_relative = 1e-10);
        }
    }
}

#[test]
fn assembled_matrix_is_the_five_point_stencil() {
    let op = laplacian(3);
    let a = op.to_dense();
    let s = 16.0; // 1 / xi^2 with xi = 1/4
    assert_eq!(a[(4, 4)], 4.0 * s);
    for nb in [1, 3, 5, 7] {
        assert_eq!(a[(4, nb)], -s);
    }
    // no wrap-around between the end of one row and the start of the next
    assert_eq!(a[(2, 3)], 0.0);
    assert_eq!(a[(0, 4)], 0.0);
}

#[test]
fn reference_solve_matches_dense_lu() {
    let obj = poisson(3).unwrap();
    let sol = solve_reference(&obj, 1e-14).unwrap();
    let a = to_nalgebra(&obj.operator().to_dense());
    let x = a.lu().solve(&DVector::from_element(9, 1.0)).unwrap();
    for (p, q) in sol.x.iter().zip(x.iter()) {
        assert_relative_eq!(*p, *q, max_relative = 1e-10);
    }
    let fstar = -0.5 * x.sum();
    assert_relative_eq!(sol.fstar, fstar, max_relative = 1e-10);
}

#[test]
fn power_iteration_agrees_with_dense_eigensolver() {
    let dense = laplacian(6).to_dense();
    let lmax = to_nalgebra(&dense).symmetric_eigen().eigenvalues.max();
    let op = DenseOperator::new(dense);
    let est = power_iteration(&op, &PowerIterationConfig::default()).unwrap();
    assert_relative_eq!(est, lmax, max_relative = 1e-6);
    let (l, prov) = lambda_max(&op, &PowerIterationConfig::default()).unwrap();
    assert_eq!(prov, Provenance::Estimated);
    assert_relative_eq!(l, est, max_relative = 1e-15);
}

#[test]
fn stability_bound_uses_the_analytic_extreme() {
    let m = 63;
    let op = laplacian(m);
    let xi = 1.0 / 64.0;
    let lmax = 8.0 / (xi * xi) * (m as f64 * std::f64::consts::PI * xi / 2.0).sin().powi(2);
    let bound = stability_bound(&op, &PowerIterationConfig::default()).unwrap();
    assert!((bound - 2.0 / lmax).abs() <= 1e-10 * bound);
    assert_eq!(lambda_max(&op, &PowerIterationConfig::default()).unwrap().1, Provenance::Analytic);
}

#[test]
fn bound_over_xi_squared_decreases_toward_one_quarter() {
    let mut prev = f64::INFINITY;
    for m in [7usize, 15, 31, 63] {
        let xi: f64 = GridSpec::new(m).unwrap().xi();
        let ratio = stability_bound(&laplacian(m), &PowerIterationConfig::default()).unwrap() / (xi * xi);
        assert!(ratio < prev && ratio > 0.25, "m={m}: {ratio}");
        prev = ratio;
    }
}

#[test]
fn single_precision_operator_tracks_double() {
    let op32: Laplacian2d<f32> = laplacian_2d(GridSpec::new(5).unwrap());
    let op64 = laplacian(5);
    let v: Vec<f64> = (0..25).map(|i| (i as f64 * 0.37).sin()).collect();
    let v32: Vec<f32> = v.iter().map(|&x| x as f32).collect();
    let a32 = op32.apply(&v32);
    let a64 = op64.apply(&v);
    for (p, q) in a32.iter().zip(&a64) {
        assert!((*p as f64 - q).abs() <= 1e-4 * 36.0 * 8.0);
    }
}

#[test]
fn objective_rejects_wrong_rhs_length() {
    assert!(QuadraticObjective::new(laplacian(3), vec![1.0; 8]).is_err());
    assert!(GridSpec::new(0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn laplacian_is_symmetric_positive_definite(
        u in prop::collection::vec(-1.0f64..1.0, 49),
        w in prop::collection::vec(-1.0f64..1.0, 49),
    ) {
        let op = laplacian(7);
        let au = op.apply(&u);
        let aw = op.apply(&w);
        let lhs = dot(&w, &au);
        let rhs = dot(&u, &aw);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        let uu = dot(&u, &u);
        prop_assume!(uu > 1e-6);
        let lmin = op.spectrum_hint().unwrap().lambda_min;
        prop_assert!(dot(&u, &au) >= lmin * uu * (1.0 - 1e-12));
    }

    #[test]
    fn gap_matches_direct_difference_on_small_problems(x in prop::collection::vec(-2.0f64..2.0, 9)) {
        let mut obj = poisson(3).unwrap();
        let sol = obj.attach_reference(1e-14).unwrap();
        let r = obj.residual(&x);
        let gap = obj.gap_with_residual(&x, &r).unwrap();
        let direct = obj.value(&x) - sol.fstar;
        prop_assert!(gap >= 0.0);
        prop_assert!((gap - direct).abs() <= 1e-10 * (1.0 + direct.abs()));
    }
}
