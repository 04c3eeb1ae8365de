use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use steplab::filters::{
    euler_filter_realization, euler_filter_value, filter_difference_bound, filter_value, filtered_solve,
    filtered_solve_with, FilterArgument, FilterSpec, SvdSystem,
};
use steplab::linalg::DenseMatrix;
use steplab::operators::{DenseOperator, Diagonal};

fn spd(n: usize, seed: u64) -> (DenseMatrix<f64>, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = DenseMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let a = q.transpose().matmul(&q).add(&DenseMatrix::identity(n).scale(0.1));
    let na = DMatrix::from_fn(n, n, |i, j| a[(i, j)]);
    (a, na)
}

fn rhs(n: usize) -> Vec<f64> {
    (0..n).map(|i| 1.0 - 0.3 * i as f64).collect()
}

fn close(x: &[f64], y: &DVector<f64>, tol: f64) {
    let scale = y.norm().max(1.0);
    for (p, q) in x.iter().zip(y.iter()) {
        assert!((p - q).abs() <= tol * scale, "{p} vs {q}");
    }
}

#[test]
fn exponential_filter_solves_the_gradient_flow() {
    let n = 7;
    let (a, na) = spd(n, 11);
    let b = rhs(n);
    let sys = SvdSystem::from_spd(&a, b.clone()).unwrap();
    for t in [0.1, 1.0, 5.0] {
        let x = filtered_solve(&sys, &FilterSpec::exponential(t).unwrap()).unwrap();
        // x(t) = A^{-1} (I - e^{-tA}) b from nalgebra's eigendecomposition
        let eig = na.clone().symmetric_eigen();
        let w = eig.eigenvalues.map(|l| -(-t * l).exp_m1() / l);
        let oracle = &eig.eigenvectors * DMatrix::from_diagonal(&w) * eig.eigenvectors.transpose() * DVector::from_vec(b.clone());
        close(&x, &oracle, 1e-11);
    }
}

#[test]
fn tikhonov_filter_is_the_shifted_solve() {
    let n = 6;
    let (a, na) = spd(n, 5);
    let b = rhs(n);
    let sys = SvdSystem::from_spd(&a, b.clone()).unwrap();
    let beta = 0.3;
    let spec = FilterSpec::tikhonov(beta).unwrap();
    let x = filtered_solve(&sys, &spec).unwrap();
    let oracle = (&na + DMatrix::identity(n, n) * beta).lu().solve(&DVector::from_vec(b.clone())).unwrap();
    close(&x, &oracle, 1e-11);

    let x2 = filtered_solve_with(&sys, &spec, FilterArgument::Squared).unwrap();
    let oracle2 = (&na * &na + DMatrix::identity(n, n) * beta).lu().solve(&(&na * DVector::from_vec(b))).unwrap();
    close(&x2, &oracle2, 1e-10);
}

#[test]
fn truncation_extremes() {
    let n = 5;
    let (a, na) = spd(n, 2);
    let b = rhs(n);
    let sys = SvdSystem::from_spd(&a, b.clone()).unwrap();
    let full = filtered_solve(&sys, &FilterSpec::truncated(n + 1).unwrap()).unwrap();
    close(&full, &na.lu().solve(&DVector::from_vec(b)).unwrap(), 1e-10);
    let none = filtered_solve(&sys, &FilterSpec::truncated(1).unwrap()).unwrap();
    assert!(none.iter().all(|&v| v == 0.0));
}

#[test]
fn truncation_keeps_leading_indices_of_a_diagonal_system() {
    let sys = SvdSystem::diagonal(&[4.0, 2.0, 1.0], vec![1.0, 1.0, 1.0]).unwrap();
    let x = filtered_solve(&sys, &FilterSpec::truncated(3).unwrap()).unwrap();
    let mut sorted = x.clone();
    sorted.sort_by(|p, q| p.partial_cmp(q).unwrap());
    // two of the three components survive: 1/4 and 1/2
    assert_relative_eq!(sorted[0], 0.0);
    assert_relative_eq!(sorted[1], 0.25, max_relative = 1e-15);
    assert_relative_eq!(sorted[2], 0.5, max_relative = 1e-15);
}

#[test]
fn filter_difference_respects_its_bound() {
    let (a, _) = spd(8, 9);
    let sys = SvdSystem::from_spd(&a, rhs(8)).unwrap();
    let e = FilterSpec::exponential(2.0).unwrap();
    let t = FilterSpec::tikhonov(0.5).unwrap();
    let (lhs, rhs) = filter_difference_bound(&sys, &e, &t).unwrap();
    assert!(lhs > 0.0 && lhs <= rhs * (1.0 + 1e-12), "{lhs} > {rhs}");
}

#[test]
fn euler_realization_matches_its_filter_and_flags_instability() {
    let d = vec![0.5, 1.0, 3.0];
    let b = vec![1.0, -2.0, 0.5];
    let op = Diagonal::new(d.clone());
    let steps = 40;
    let t_final = 2.0;
    let real = euler_filter_realization(&op, &b, t_final, steps).unwrap();
    assert!(!real.unstable());
    for i in 0..3 {
        assert_relative_eq!(real.x[i], euler_filter_value(real.h, steps, d[i]) * b[i] / d[i], max_relative = 1e-12);
    }
    let unstable = euler_filter_realization(&op, &b, 20.0, 10).unwrap();
    assert!(unstable.unstable());
    assert_relative_eq!(unstable.amplification, 5.0, max_relative = 1e-12);
}

#[test]
fn euler_on_dense_operator_converges_to_the_exponential_filter() {
    let n = 5;
    let (a, _) = spd(n, 4);
    let b = rhs(n);
    let sys = SvdSystem::from_spd(&a, b.clone()).unwrap();
    let exact = filtered_solve(&sys, &FilterSpec::exponential(1.0).unwrap()).unwrap();
    let op = DenseOperator::new(a);
    let err = |steps| {
        let x = euler_filter_realization(&op, &b, 1.0, steps).unwrap().x;
        x.iter().zip(&exact).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
    };
    let (e1, e2) = (err(400), err(800));
    assert!((e1 / e2 - 2.0).abs() < 0.1, "ratio {}", e1 / e2);
}

#[test]
fn invalid_parameters_are_rejected() {
    assert!(FilterSpec::exponential(0.0).is_err());
    assert!(FilterSpec::tikhonov(-1.0).is_err());
    assert!(FilterSpec::<f64>::truncated(0).is_err());
    assert!(filter_value(&FilterSpec::exponential(1.0).unwrap(), f64::NAN, 1).is_err());
}

#[test]
fn single_precision_filters() {
    let e = FilterSpec::exponential(1.0f32).unwrap();
    let v = filter_value(&e, 1e-6f32, 1).unwrap();
    assert!((v - 1e-6).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn smooth_filters_are_monotone_into_the_unit_interval(
        s in 0.0f64..100.0,
        ds in 0.0f64..10.0,
        t in 0.01f64..10.0,
        beta in 0.01f64..10.0,
    ) {
        for spec in [FilterSpec::exponential(t).unwrap(), FilterSpec::tikhonov(beta).unwrap()] {
            let w0 = filter_value(&spec, s, 1).unwrap();
            let w1 = filter_value(&spec, s + ds, 1).unwrap();
            prop_assert!((0.0..=1.0).contains(&w0));
            prop_assert!(w1 >= w0);
        }
    }

    #[test]
    fn exponential_dominates_euler_for_stable_steps(s in 0.0f64..=1.0, steps in 1usize..200) {
        // 0 <= 1 - h s <= e^{-h s} for h s in [0, 1]
        let h = 1.0 / steps as f64;
        let exact = filter_value(&FilterSpec::exponential(1.0).unwrap(), s, 1).unwrap();
        let euler = euler_filter_value(h, steps, s);
        prop_assert!(euler >= exact - 1e-15);
        prop_assert!(euler <= 1.0 + 1e-15);
    }
}
