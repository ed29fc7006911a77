mod common;

use common::*;
use latent_rom::dmd::*;
use latent_rom::numerics::{to_complex, ComplexMatrix, RealMatrix};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn grid(n: usize, t1: f64, dt: f64) -> Vec<f64> {
    (0..n).map(|k| t1 + k as f64 * dt).collect()
}

fn scalar_traj(values: &[f64], dt: f64) -> LatentTrajectory {
    LatentTrajectory::new(&grid(values.len(), 0.0, dt), RealMatrix::from_row_slice(1, values.len(), values)).unwrap()
}

fn pair(m: &RealMatrix) -> (RealMatrix, RealMatrix) {
    let n = m.ncols();
    (m.columns(0, n - 1).into_owned(), m.columns(1, n - 1).into_owned())
}

#[test]
fn constant_sequence_unit_eigenvalue() {
    let q = RealMatrix::from_row_slice(1, 6, &[1.5; 6]);
    let (q1, q2) = pair(&q);
    let fit = dmd_fit(&q1, &q2, 0.0).unwrap();
    assert_eq!(fit.eigenvalues.len(), 1);
    assert!((fit.eigenvalues[0] - c(1.0, 0.0)).norm() < 1e-14);

    let m = hodmd_fit(&scalar_traj(&[1.5; 12], 0.2), 3, 0.0, AmplitudeMode::Optimal).unwrap();
    assert!((m.eigenvalues[0] - c(1.0, 0.0)).norm() < 1e-12);
    for t in [0.0, 0.3, 1.7, 5.0] {
        assert!((m.predict(t).unwrap().values[0] - 1.5).abs() < 1e-12);
    }
}

#[test]
fn geometric_sequence() {
    let v: Vec<f64> = (0..20).map(|k| 0.9f64.powi(k)).collect();
    let (q1, q2) = pair(&RealMatrix::from_row_slice(1, 20, &v));
    let fit = dmd_fit(&q1, &q2, 0.0).unwrap();
    assert!((fit.eigenvalues[0] - c(0.9, 0.0)).norm() < 1e-10);
}

#[test]
fn planar_rotation() {
    let theta: f64 = 0.3;
    let r = RealMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()]);
    let (q1, q2) = pair(&linear_trajectory(&r, &[1.0, 0.0], 20));
    let fit = dmd_fit(&q1, &q2, 0.0).unwrap();
    let expected = [Complex64::from_polar(1.0, theta), Complex64::from_polar(1.0, -theta)];
    assert!(spectrum_distance(&fit.eigenvalues, &expected) < 1e-9);
}

#[test]
fn dmd_errors() {
    let z = RealMatrix::zeros(2, 3);
    assert!(dmd_fit(&z, &z, 0.0).is_err());
    assert!(dmd_fit(&RealMatrix::identity(2, 2), &RealMatrix::identity(2, 3), 0.0).is_err());
}

#[test]
fn pinv_amplitudes_examples() {
    let id = to_complex(&RealMatrix::identity(3, 3));
    let a = amplitudes_pinv(&id, &[1.0, -2.0, 0.5]).unwrap();
    assert_eq!(a, vec![c(1.0, 0.0), c(-2.0, 0.0), c(0.5, 0.0)]);

    let q = to_complex(&random_orthonormal(5, 2, 3)) * c(0.6, 0.8);
    let v = [0.3, -1.0, 2.0, 0.1, 0.7];
    let a = amplitudes_pinv(&q, &v).unwrap();
    let qh = q.adjoint() * nalgebra::DVector::from_iterator(5, v.iter().map(|x| c(*x, 0.0)));
    for (x, y) in a.iter().zip(qh.iter()) {
        assert!((x - y).norm() < 1e-12);
    }
    assert!(amplitudes_pinv(&id, &[1.0]).is_err());
}

#[test]
fn pinv_amplitudes_minimum_norm() {
    // columns 0 and 2 coincide, so (1, 0, −1) spans the null space
    let col0 = [c(1.0, 0.5), c(0.0, 1.0), c(2.0, 0.0)];
    let col1 = [c(0.0, 0.0), c(1.0, 0.0), c(-1.0, 1.0)];
    let mut xi = ComplexMatrix::zeros(3, 3);
    for i in 0..3 {
        xi[(i, 0)] = col0[i];
        xi[(i, 1)] = col1[i];
        xi[(i, 2)] = col0[i];
    }
    let q = [0.4, -1.2, 2.0];
    let a = amplitudes_pinv(&xi, &q).unwrap();
    let norm = |v: &[Complex64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let residual = |v: &[Complex64]| {
        (0..3)
            .map(|i| ((0..3).map(|l| xi[(i, l)] * v[l]).sum::<Complex64>() - c(q[i], 0.0)).norm_sqr())
            .sum::<f64>()
            .sqrt()
    };
    let mut r = rng(4);
    for _ in 0..50 {
        let s = c(r.random_range(-2.0..2.0), r.random_range(-2.0..2.0));
        let other = [a[0] + s, a[1], a[2] - s];
        assert!((residual(&other) - residual(&a)).abs() < 1e-12);
        assert!(norm(&a) <= norm(&other));
    }
}

#[test]
fn optimal_amplitudes_examples() {
    // one mode: columns c·ξ·λ^j
    let lambda = c(0.9, 0.0);
    let real_xi = [0.5, -1.0];
    let q1 = RealMatrix::from_fn(2, 8, |i, j| 2.5 * real_xi[i] * 0.9f64.powi(j as i32));
    let modes = ComplexMatrix::from_column_slice(2, 1, &[c(real_xi[0], 0.0), c(real_xi[1], 0.0)]);
    let a = amplitudes_optimal(&modes, &[lambda], &q1).unwrap();
    assert!((a[0] - c(2.5, 0.0)).norm() < 1e-12);

    let a = amplitudes_optimal(&ComplexMatrix::from_element(1, 1, c(1.0, 0.0)), &[c(1.0, 0.0)], &RealMatrix::from_row_slice(1, 3, &[3.0, 3.0, 3.0])).unwrap();
    assert!((a[0] - c(3.0, 0.0)).norm() < 1e-14);
}

#[test]
fn optimal_amplitudes_exact_on_linear_data() {
    for seed in 0..10 {
        let (a, _) = random_linear_system(4, seed);
        let q = linear_trajectory(&a, &[1.0, 0.5, -0.3, 0.8], 30);
        let (q1, q2) = pair(&q);
        let fit = dmd_fit(&q1, &q2, 0.0).unwrap();
        let amps = amplitudes_optimal(&fit.modes, &fit.eigenvalues, &q1).unwrap();
        let err = reconstruction_error(&fit.modes, &fit.eigenvalues, &amps, &q1).unwrap();
        assert!(err <= 1e-8 * frob(&q1), "seed {seed}: {err:e}");
    }
}

#[test]
fn hankel_shapes() {
    let values = random_matrix(2, 101, 1);
    let traj = LatentTrajectory::new(&grid(101, 0.0, 0.02), values.clone()).unwrap();
    let (h1, h2) = hankel_embed(&traj, 8).unwrap();
    assert_eq!(h1.shape(), (16, 93));
    assert_eq!(h2.shape(), (16, 93));
    let (p1, p2) = hankel_embed(&traj, 1).unwrap();
    let (d1, d2) = pair(&values);
    assert_eq!((p1, p2), (d1, d2));
    let (b1, _) = hankel_embed(&traj, 99).unwrap();
    assert_eq!(b1.ncols(), 2);
    assert!(hankel_embed(&traj, 100).is_err());
    assert!(hankel_embed(&traj, 0).is_err());
}

#[test]
fn nonuniform_grid_rejected() {
    assert!(LatentTrajectory::new(&[0.0, 0.1, 0.25], RealMatrix::zeros(1, 3)).is_err());
}

#[test]
fn hodmd_delay_one_is_dmd() {
    let (a, _) = random_linear_system(3, 9);
    let q = linear_trajectory(&a, &[1.0, 2.0, -1.0], 25);
    let traj = LatentTrajectory::new(&grid(25, 0.5, 0.1), q.clone()).unwrap();
    for mode in [AmplitudeMode::Optimal, AmplitudeMode::Pinv] {
        let h = hodmd_fit(&traj, 1, 0.0, mode).unwrap();
        let (q1, q2) = pair(&q);
        let d = dmd_model(&q1, &q2, 3, 0.0, mode, 0.5, traj.dt).unwrap();
        assert_eq!(h, d);
        assert_eq!(h.to_bytes(), d.to_bytes());
    }
}

#[test]
fn noisy_two_frequency_signal() {
    let dt = 0.05;
    let (s1, w1, s2, w2) = (-0.1, 2.0, -0.3, 5.0);
    let mut r = rng(12);
    let v: Vec<f64> = (0..200)
        .map(|k| {
            let t = k as f64 * dt;
            (s1 * t).exp() * (w1 * t).cos() + 0.5 * (s2 * t).exp() * (w2 * t).cos() + 1e-4 * r.random_range(-1.0..1.0)
        })
        .collect();
    let m = hodmd_fit(&scalar_traj(&v, dt), 10, 0.0, AmplitudeMode::Optimal).unwrap();
    let dominant = &m.eigenvalues[..4];
    for (sigma, omega) in [(s1, w1), (s2, w2)] {
        let target = (sigma * dt).exp();
        let found = dominant
            .iter()
            .any(|l| (l.norm() - target).abs() <= 1e-2 && (l.arg().abs() - omega * dt).abs() <= 1e-2);
        assert!(found, "no mode near |λ| = {target} among {dominant:?}");
    }
}

#[test]
fn steady_mode_prediction() {
    let m = HodmdModel {
        n_latent: 1,
        n_delay: 2,
        eigenvalues: vec![c(1.0, 0.0)],
        modes: ComplexMatrix::from_column_slice(2, 1, &[c(1.0, 0.0), c(0.0, 0.0)]),
        amplitudes: vec![c(4.2, 0.0)],
        t1: 0.0,
        dt: 0.1,
    };
    for t in [-1.0, 0.0, 0.05, 3.3] {
        assert_eq!(m.predict(t).unwrap().values, vec![4.2]);
    }
    let bad = HodmdModel { dt: 0.0, ..m };
    assert!(bad.predict(1.0).is_err());
}

#[test]
fn zero_eigenvalue_dropped_off_grid() {
    let m = HodmdModel {
        n_latent: 1,
        n_delay: 1,
        eigenvalues: vec![c(1.0, 0.0), c(0.0, 0.0)],
        modes: ComplexMatrix::from_column_slice(1, 2, &[c(1.0, 0.0), c(1.0, 0.0)]),
        amplitudes: vec![c(2.0, 0.0), c(1.0, 0.0)],
        t1: 0.0,
        dt: 1.0,
    };
    assert_eq!(m.predict(0.0).unwrap().values, vec![3.0]);
    assert_eq!(m.predict(2.0).unwrap().values, vec![2.0]);
    let p = m.predict(0.5).unwrap();
    assert_eq!((p.values[0], p.dropped_modes), (2.0, 1));
}

fn exact_recovery(dim: usize, seed: u64) -> (f64, f64, f64) {
    let (a, eigs) = random_linear_system(dim, seed);
    let mut r = rng(seed + 1000);
    let q0: Vec<f64> = (0..dim).map(|_| r.random_range(0.5..1.5) * if r.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
    let q = linear_trajectory(&a, &q0, 40);
    let traj = LatentTrajectory::new(&grid(40, 0.0, 0.1), q.clone()).unwrap();
    let m = hodmd_fit(&traj, 1, 0.0, AmplitudeMode::Optimal).unwrap();
    let eig_err = spectrum_distance(&m.eigenvalues, &eigs);
    let mut pred_err = 0.0f64;
    let mut imag = 0.0f64;
    for k in 0..40 {
        let p = m.predict(k as f64 * 0.1).unwrap();
        let truth: Vec<f64> = q.column(k).iter().copied().collect();
        pred_err = pred_err.max(rel_diff(&p.values, &truth));
        imag = imag.max(p.imag_norm / norm(&p.values));
    }
    (eig_err, pred_err, imag)
}

#[test]
fn exact_recovery_of_linear_systems() {
    for seed in 0..20 {
        let (e, p, i) = exact_recovery(1 + seed as usize % 6, seed);
        assert!(e <= 1e-8 && p <= 1e-8 && i <= 1e-6, "seed {seed}: {e:e} {p:e} {i:e}");
    }
}

fn model_round_trip(m: &HodmdModel) {
    let bytes = m.to_bytes();
    let back = HodmdModel::from_bytes(&bytes).unwrap();
    assert_eq!(back.to_bytes(), bytes);
    assert_eq!(&back, m);
}

#[test]
fn romd_round_trip() {
    let (a, _) = random_linear_system(4, 2);
    let traj = LatentTrajectory::new(&grid(30, 0.25, 0.05), linear_trajectory(&a, &[1.0, 0.0, 0.5, -1.0], 30)).unwrap();
    model_round_trip(&hodmd_fit(&traj, 3, 0.0, AmplitudeMode::Optimal).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn prop_exact_recovery(dim in 1usize..=6, seed in 0u64..100_000) {
        let (e, p, i) = exact_recovery(dim, seed);
        prop_assert!(e <= 1e-8, "eigenvalues off by {e:e}");
        prop_assert!(p <= 1e-8, "predictions off by {p:e}");
        prop_assert!(i <= 1e-6, "imaginary residual {i:e}");
    }

    #[test]
    fn prop_conjugate_closure(n in 1usize..4, steps in 10usize..30, seed in 0u64..100_000) {
        let traj = LatentTrajectory::new(&grid(steps, 0.0, 0.1), random_matrix(n, steps, seed)).unwrap();
        let m = hodmd_fit(&traj, 2, 0.0, AmplitudeMode::Optimal).unwrap();
        let key = |z: &Complex64| (z.re, z.im);
        let mut vals: Vec<(f64, f64)> = m.eigenvalues.iter().map(key).collect();
        let mut conj: Vec<(f64, f64)> = m.eigenvalues.iter().map(|z| key(&z.conj())).collect();
        vals.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        conj.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        prop_assert_eq!(vals, conj);
    }

    #[test]
    fn prop_hankel_structure(n in 1usize..4, steps in 5usize..30, d in 1usize..4, seed in 0u64..1000) {
        prop_assume!(d + 2 <= steps);
        let traj = LatentTrajectory::new(&grid(steps, 0.0, 1.0), random_matrix(n, steps, seed)).unwrap();
        let (h1, h2) = hankel_embed(&traj, d).unwrap();
        prop_assert_eq!(h1.shape(), (n * d, steps - d));
        for k in 0..h1.ncols() - 1 {
            prop_assert_eq!(h2.column(k), h1.column(k + 1));
        }
        for k in 0..h1.ncols() {
            for j in 0..d {
                prop_assert_eq!(h1.view((j * n, k), (n, 1)), traj.values.column(k + j));
            }
        }
    }

    #[test]
    fn prop_optimal_beats_pinv(rows in 1usize..6, cols in 4usize..25, seed in 0u64..100_000) {
        let q = random_matrix(rows, cols + 1, seed);
        let (q1, q2) = pair(&q);
        let fit = dmd_fit(&q1, &q2, 0.0).unwrap();
        let opt = amplitudes_optimal(&fit.modes, &fit.eigenvalues, &q1).unwrap();
        let first: Vec<f64> = q1.column(0).iter().copied().collect();
        let pinv = amplitudes_pinv(&fit.modes, &first).unwrap();
        let e_opt = reconstruction_error(&fit.modes, &fit.eigenvalues, &opt, &q1).unwrap();
        let e_pinv = reconstruction_error(&fit.modes, &fit.eigenvalues, &pinv, &q1).unwrap();
        prop_assert!(e_opt <= e_pinv * (1.0 + 1e-12) + 1e-12, "{e_opt:e} > {e_pinv:e}");
    }

    #[test]
    fn prop_romd_round_trip(n in 1usize..4, steps in 8usize..20, seed in 0u64..1000) {
        let traj = LatentTrajectory::new(&grid(steps, 0.3, 0.07), random_matrix(n, steps, seed)).unwrap();
        let m = hodmd_fit(&traj, 2, 0.0, AmplitudeMode::Pinv).unwrap();
        let bytes = m.to_bytes();
        prop_assert_eq!(HodmdModel::from_bytes(&bytes).unwrap().to_bytes(), bytes);
    }
}
