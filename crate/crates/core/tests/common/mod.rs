//! Independent reference implementations used as test oracles. None of them
//! share code with the library.
#![allow(dead_code)]

use latent_rom::nn::{Activation, FieldShape, LayerSpec, NetParams, Network, SpatialDims};
use latent_rom::numerics::RealMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> RealMatrix {
    let mut r = rng(seed);
    RealMatrix::from_fn(rows, cols, |_, _| r.random_range(-1.0..1.0))
}

pub fn frob(a: &RealMatrix) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&d) / norm(b).max(f64::MIN_POSITIVE)
}

/// One-sided Jacobi SVD on column pairs. Returns singular values sorted
/// descending and the matrices `U`, `V` with `A = U Σ Vᵀ`.
pub fn jacobi_svd(a: &RealMatrix) -> (Vec<f64>, RealMatrix, RealMatrix) {
    let (m, n) = a.shape();
    let mut u = a.clone();
    let mut v = RealMatrix::identity(n, n);
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for i in 0..m {
                    alpha += u[(i, p)] * u[(i, p)];
                    beta += u[(i, q)] * u[(i, q)];
                    gamma += u[(i, p)] * u[(i, q)];
                }
                if gamma == 0.0 {
                    continue;
                }
                off = off.max(gamma.abs() / (alpha * beta).sqrt());
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (x, y) = (u[(i, p)], u[(i, q)]);
                    u[(i, p)] = c * x - s * y;
                    u[(i, q)] = s * x + c * y;
                }
                for i in 0..n {
                    let (x, y) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = c * x - s * y;
                    v[(i, q)] = s * x + c * y;
                }
            }
        }
        if off < 1e-15 {
            break;
        }
    }
    let mut sigma: Vec<(f64, usize)> = (0..n)
        .map(|j| ((0..m).map(|i| u[(i, j)] * u[(i, j)]).sum::<f64>().sqrt(), j))
        .collect();
    sigma.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut uu = RealMatrix::zeros(m, n);
    let mut vv = RealMatrix::zeros(n, n);
    for (k, &(s, j)) in sigma.iter().enumerate() {
        for i in 0..m {
            uu[(i, k)] = if s > 0.0 { u[(i, j)] / s } else { 0.0 };
        }
        for i in 0..n {
            vv[(i, k)] = v[(i, j)];
        }
    }
    (sigma.into_iter().map(|s| s.0).collect(), uu, vv)
}

/// Real roots of a polynomial (coefficients highest degree first) inside
/// `[lo, hi]`, found by bisection on sign changes of a fine scan.
pub fn bisection_roots(coeffs: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let p = |x: f64| coeffs.iter().fold(0.0, |acc, c| acc * x + c);
    let n = 10_000;
    let h = (hi - lo) / n as f64;
    let mut roots = Vec::new();
    for k in 0..n {
        let (mut a, mut b) = (lo + k as f64 * h + 1e-7, lo + (k + 1) as f64 * h + 1e-7);
        if p(a) * p(b) > 0.0 {
            continue;
        }
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if p(a) * p(mid) <= 0.0 {
                b = mid;
            } else {
                a = mid;
            }
        }
        roots.push(0.5 * (a + b));
    }
    roots
}

/// Orthonormal basis of `rank` random directions in `R^n` (modified Gram-Schmidt).
pub fn random_orthonormal(n: usize, rank: usize, seed: u64) -> RealMatrix {
    let mut q = random_matrix(n, rank, seed);
    for j in 0..rank {
        for k in 0..j {
            let d = q.column(j).dot(&q.column(k));
            let ck = q.column(k).into_owned();
            let mut cj = q.column_mut(j);
            cj.axpy(-d, &ck, 1.0);
        }
        let nj = q.column(j).norm();
        q.column_mut(j).scale_mut(1.0 / nj);
    }
    q
}

/// Projection residual `‖S − ū − B Bᵀ (S − ū)‖_F` of the columns of `s` onto
/// the affine subspace through `mean` spanned by the orthonormal `basis`.
pub fn projection_error(s: &RealMatrix, mean: &[f64], basis: &RealMatrix) -> f64 {
    let mut total = 0.0;
    for col in s.column_iter() {
        let d = nalgebra::DVector::from_iterator(col.len(), col.iter().zip(mean).map(|(a, b)| a - b));
        let r = &d - basis * (basis.transpose() * &d);
        total += r.norm_squared();
    }
    total.sqrt()
}

/// Loss `½‖net(x) − target‖²`.
pub fn half_sq_loss(net: &Network, params: &NetParams, x: &[f64], target: &[f64]) -> f64 {
    let y = net.forward(params, x).unwrap();
    0.5 * y.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
}

/// Central-difference gradient of [`half_sq_loss`] with respect to every
/// parameter, in the flat order of [`NetParams::to_flat`].
pub fn fd_param_gradient(net: &Network, params: &NetParams, x: &[f64], target: &[f64], h: f64) -> Vec<f64> {
    let flat = params.to_flat();
    let mut p = params.clone();
    (0..flat.len())
        .map(|i| {
            let mut plus = flat.clone();
            plus[i] += h;
            p.set_flat(&plus);
            let fp = half_sq_loss(net, &p, x, target);
            let mut minus = flat.clone();
            minus[i] -= h;
            p.set_flat(&minus);
            let fm = half_sq_loss(net, &p, x, target);
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Central-difference gradient of [`half_sq_loss`] with respect to the input.
pub fn fd_input_gradient(net: &Network, params: &NetParams, x: &[f64], target: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut xp = x.to_vec();
            xp[i] += h;
            let mut xm = x.to_vec();
            xm[i] -= h;
            (half_sq_loss(net, params, &xp, target) - half_sq_loss(net, params, &xm, target)) / (2.0 * h)
        })
        .collect()
}

/// Worst per-entry relative disagreement, with an absolute floor so entries
/// whose true value is near zero are compared on the scale of the whole gradient.
pub fn gradient_mismatch(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / n.abs().max(1e-3 * scale))
        .fold(0.0, f64::max)
}

/// Mpmath values of the Burgers exact solution at 200-digit precision.
pub const BURGERS_HIGH_PRECISION: [(f64, f64, f64, f64); 4] = [
    (1.0, 0.0, 100.0, 7.194132978569833819799245e-9),
    (0.5, 1.0, 800.0, 0.2499999999950898703582694),
    (1.5, 2.0, 100.0, 1.075789791385666063946084e-6),
    (0.25, 0.5, 290.8, 0.1666666126979118483596026),
];

/// A random real diagonalizable matrix `A = P D P⁻¹` with known spectrum.
/// `D` is block diagonal with real eigenvalues and rotation-scaling blocks
/// for conjugate pairs. Moduli lie in `[0.85, 1.02]` and eigenvalues are at
/// least 0.05 apart; `P` is redrawn until its condition number is below 50.
pub fn random_linear_system(dim: usize, seed: u64) -> (RealMatrix, Vec<num_complex::Complex64>) {
    use num_complex::Complex64;
    let mut r = rng(seed);
    loop {
        let mut d = RealMatrix::zeros(dim, dim);
        let mut eigs = Vec::new();
        let mut k = 0;
        while k < dim {
            let modulus: f64 = r.random_range(0.85..1.02);
            if k + 1 < dim && r.random_bool(0.6) {
                let theta: f64 = r.random_range(0.1..2.8);
                let (re, im) = (modulus * theta.cos(), modulus * theta.sin());
                d[(k, k)] = re;
                d[(k, k + 1)] = -im;
                d[(k + 1, k)] = im;
                d[(k + 1, k + 1)] = re;
                eigs.push(Complex64::new(re, im));
                eigs.push(Complex64::new(re, -im));
                k += 2;
            } else {
                let sign = if r.random_bool(0.8) { 1.0 } else { -1.0 };
                d[(k, k)] = sign * modulus;
                eigs.push(Complex64::new(sign * modulus, 0.0));
                k += 1;
            }
        }
        let separated = eigs
            .iter()
            .enumerate()
            .all(|(i, a)| eigs[i + 1..].iter().all(|b| (a - b).norm() >= 0.05));
        if !separated {
            continue;
        }
        let p = RealMatrix::from_fn(dim, dim, |_, _| r.random_range(-1.0..1.0));
        let (sigma, _, _) = jacobi_svd(&p);
        if sigma[dim - 1] <= 0.0 || sigma[0] / sigma[dim - 1] > 50.0 {
            continue;
        }
        let p_inv = p.clone().try_inverse().unwrap();
        return (&p * d * p_inv, eigs);
    }
}

/// Columns `q₀, A q₀, …, A^{n−1} q₀`.
pub fn linear_trajectory(a: &RealMatrix, q0: &[f64], n: usize) -> RealMatrix {
    let mut out = RealMatrix::zeros(q0.len(), n);
    let mut q = nalgebra::DVector::from_column_slice(q0);
    for k in 0..n {
        out.set_column(k, &q);
        q = a * q;
    }
    out
}

/// Largest distance from each expected eigenvalue to its nearest fitted one,
/// after checking the two sets have equal size.
pub fn spectrum_distance(fitted: &[num_complex::Complex64], expected: &[num_complex::Complex64]) -> f64 {
    assert_eq!(fitted.len(), expected.len());
    expected
        .iter()
        .map(|e| fitted.iter().map(|f| (f - e).norm()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
        .max(
            fitted
                .iter()
                .map(|f| expected.iter().map(|e| (f - e).norm()).fold(f64::INFINITY, f64::min))
                .fold(0.0, f64::max),
        )
}

pub fn conv(dims: SpatialDims, cin: usize, cout: usize, kernel: usize, stride: usize, padding: usize, act: Activation) -> LayerSpec {
    LayerSpec::Conv {
        dims,
        in_channels: cin,
        out_channels: cout,
        kernel,
        stride,
        padding,
        activation: act,
    }
}

pub fn conv_t(dims: SpatialDims, cin: usize, cout: usize, kernel: usize, stride: usize, padding: usize, op: usize) -> LayerSpec {
    LayerSpec::ConvTranspose {
        dims,
        in_channels: cin,
        out_channels: cout,
        kernel,
        stride,
        padding,
        output_padding: op,
        activation: Activation::Silu,
    }
}

pub fn linear(i: usize, o: usize, act: Activation) -> LayerSpec {
    LayerSpec::Linear {
        in_features: i,
        out_features: o,
        activation: act,
    }
}

pub fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

/// Worst relative disagreement between analytic gradients of `½‖net(x) − y‖²`
/// and central differences, over the parameters and optionally the input.
pub fn gradient_check_with(net: &Network, seed: u64, include_input: bool) -> f64 {
    let params = net.init_params(&mut rng(seed));
    let x = random_vec(net.input_shape().len(), seed + 1);
    let target = random_vec(net.output_shape().len(), seed + 2);
    let trace = net.forward_trace(&params, &x).unwrap();
    let upstream: Vec<f64> = trace.output().iter().zip(&target).map(|(a, b)| a - b).collect();
    let (dx, grads) = net.backward(&params, &trace, &upstream).unwrap();
    let mut worst = 0.0f64;
    if include_input {
        worst = gradient_mismatch(&dx, &fd_input_gradient(net, &params, &x, &target, 1e-5));
    }
    if !params.is_empty() {
        let numeric = fd_param_gradient(net, &params, &x, &target, 1e-5);
        worst = worst.max(gradient_mismatch(&grads.to_flat(), &numeric));
    }
    worst
}

pub fn gradient_check(net: &Network, seed: u64) -> f64 {
    gradient_check_with(net, seed, true)
}

pub fn conv_configs(dims: SpatialDims, transposed: bool) -> Vec<Network> {
    let mut r = rng(if transposed { 7 } else { 3 } + dims as u64);
    (0..10)
        .map(|i| {
            let cin = r.random_range(1..4);
            let cout = r.random_range(1..4);
            let kernel = [1, 3, 5][i % 3];
            let stride = 1 + i % 2;
            let padding = r.random_range(0..=kernel / 2);
            let w = r.random_range(kernel.max(3)..9);
            let h = if dims == SpatialDims::Two { r.random_range(kernel.max(2)..7) } else { 1 };
            let act = if i % 2 == 0 { Activation::Silu } else { Activation::Identity };
            let layer = if transposed {
                let op = if stride > 1 { i % 2 } else { 0 };
                conv_t(dims, cin, cout, kernel, stride, padding, op)
            } else {
                conv(dims, cin, cout, kernel, stride, padding, act)
            };
            Network::new(FieldShape::new(cin, h, w), vec![layer]).unwrap()
        })
        .collect()
}

pub fn linear_configs() -> Vec<Network> {
    (0..10)
        .map(|i| {
            let act = if i % 2 == 0 { Activation::Silu } else { Activation::Identity };
            Network::new(FieldShape::flat(1 + i), vec![linear(1 + i, 2 + (i * 7) % 5, act)]).unwrap()
        })
        .collect()
}

pub fn flatten_configs() -> Vec<Network> {
    (0..10)
        .map(|i| {
            let shape = FieldShape::new(1 + i % 3, 1 + i % 2, 2 + i);
            Network::new(shape, vec![LayerSpec::Flatten, linear(shape.len(), 3, Activation::Silu)]).unwrap()
        })
        .collect()
}

pub fn unflatten_configs() -> Vec<Network> {
    (0..10)
        .map(|i| {
            let shape = FieldShape::new(1 + i % 3, 1, 4 + i);
            Network::new(
                FieldShape::flat(5),
                vec![
                    linear(5, shape.len(), Activation::Silu),
                    LayerSpec::Unflatten { shape },
                    conv(SpatialDims::One, shape.channels, 2, 3, 1, 1, Activation::Silu),
                ],
            )
            .unwrap()
        })
        .collect()
}

/// Ten seeded networks for each layer kind.
pub fn layer_suites() -> Vec<(&'static str, Vec<Network>)> {
    vec![
        ("conv1d", conv_configs(SpatialDims::One, false)),
        ("conv2d", conv_configs(SpatialDims::Two, false)),
        ("conv_transpose1d", conv_configs(SpatialDims::One, true)),
        ("conv_transpose2d", conv_configs(SpatialDims::Two, true)),
        ("linear", linear_configs()),
        ("flatten", flatten_configs()),
        ("unflatten", unflatten_configs()),
    ]
}
