//! Dense real/complex matrix kernels.
//!
//! Matrices are nalgebra `DMatrix` values. The SVD comes from faer; the real
//! Schur form (Hessenberg reduction with Francis double-shift QR) from
//! nalgebra. Eigenvectors are recovered here by inverse iteration on the
//! quasi-triangular Schur factor, which keeps eigenvalues of real matrices in
//! exact conjugate pairs.

use faer::Mat;
use nalgebra::{Cholesky, DMatrix, Schur};
use num_complex::Complex64;

use crate::error::{Result, RomError};

pub type RealMatrix = DMatrix<f64>;
pub type ComplexMatrix = DMatrix<Complex64>;

/// Singular values below `RANK_CUTOFF * σ₁` count as zero when `ε = 0`.
pub const RANK_CUTOFF: f64 = 1e-14;

/// Relative cutoff used by [`pinv`] and [`lstsq`].
pub const PINV_CUTOFF: f64 = 1e-12;

/// Thin SVD `A = U diag(σ) Vᵀ` with `σ` sorted descending.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: RealMatrix,
    pub sigma: Vec<f64>,
    pub v: RealMatrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> RealMatrix {
        let mut us = self.u.clone();
        for (j, s) in self.sigma.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.transpose()
    }
}

fn check_finite_real(a: &RealMatrix, what: &'static str) -> Result<()> {
    if a.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(RomError::NonFinite(what))
    }
}

fn check_finite_complex(a: &ComplexMatrix, what: &'static str) -> Result<()> {
    if a.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(RomError::NonFinite(what))
    }
}

/// Descending order, stable for ties so equal values keep their input order.
fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    idx
}

pub fn thin_svd(a: &RealMatrix) -> Result<SvdResult> {
    if a.is_empty() {
        return Err(RomError::invalid("thin_svd of an empty matrix"));
    }
    check_finite_real(a, "thin_svd input")?;
    let (m, n) = a.shape();
    let k = m.min(n);
    let svd = Mat::<f64>::from_fn(m, n, |i, j| a[(i, j)])
        .thin_svd()
        .map_err(|_| RomError::NoConvergence {
            routine: "thin_svd",
            iterations: 0,
        })?;
    let (u_raw, s_raw, v_raw) = (svd.U(), svd.S().column_vector(), svd.V());
    let raw: Vec<f64> = (0..k).map(|i| s_raw[i]).collect();
    let order = descending_order(&raw.iter().map(|s| s.abs()).collect::<Vec<_>>());

    let mut u = RealMatrix::zeros(m, k);
    let mut v = RealMatrix::zeros(n, k);
    let mut sigma = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        let s = raw[src];
        let sign = if s < 0.0 { -1.0 } else { 1.0 };
        sigma.push(s.abs());
        for i in 0..m {
            u[(i, dst)] = sign * u_raw[(i, src)];
        }
        for i in 0..n {
            v[(i, dst)] = v_raw[(i, src)];
        }
    }
    Ok(SvdResult { u, sigma, v })
}

/// Smallest rank `r` whose leading singular values hold at least `1 - epsilon`
/// of the total energy `Σσ²`. `epsilon = 0` counts the singular values above
/// `RANK_CUTOFF * σ₁`.
pub fn truncate_rank(sigma: &[f64], epsilon: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(RomError::invalid(format!(
            "energy threshold {epsilon} outside [0, 1)"
        )));
    }
    let first = sigma.first().copied().unwrap_or(0.0);
    if first <= 0.0 || sigma.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(RomError::invalid(
            "singular values must be finite, nonnegative and not all zero",
        ));
    }
    if epsilon == 0.0 {
        return Ok(sigma.iter().filter(|&&s| s > RANK_CUTOFF * first).count());
    }
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    let mut acc = 0.0;
    for (i, s) in sigma.iter().enumerate() {
        acc += s * s;
        if acc / total >= 1.0 - epsilon {
            return Ok(i + 1);
        }
    }
    Ok(sigma.len())
}

/// Eigenvalues and unit-norm eigenvectors (as columns) of a square real matrix.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<Complex64>,
    pub vectors: ComplexMatrix,
}

/// Eigenvalues of the real quasi-triangular Schur factor; 2×2 blocks yield
/// exact conjugate pairs `(a + bi, a - bi)`.
fn schur_eigenvalues(t: &RealMatrix) -> Vec<Complex64> {
    let n = t.nrows();
    let mut out = Vec::with_capacity(n);
    let mut m = 0;
    while m < n {
        if m + 1 < n && t[(m + 1, m)] != 0.0 {
            let (a, b, c, d) = (t[(m, m)], t[(m, m + 1)], t[(m + 1, m)], t[(m + 1, m + 1)]);
            let half_trace = 0.5 * (a + d);
            let half_diff = 0.5 * (a - d);
            let disc = half_diff * half_diff + b * c;
            if disc < 0.0 {
                let im = (-disc).sqrt();
                out.push(Complex64::new(half_trace, im));
                out.push(Complex64::new(half_trace, -im));
            } else {
                let r = disc.sqrt();
                out.push(Complex64::new(half_trace + r, 0.0));
                out.push(Complex64::new(half_trace - r, 0.0));
            }
            m += 2;
        } else {
            out.push(Complex64::new(t[(m, m)], 0.0));
            m += 1;
        }
    }
    out
}

/// Solves `(H - shift I) y = rhs` for upper Hessenberg `H` by Gaussian
/// elimination with adjacent-row pivoting. Zero pivots are replaced by `tiny`.
fn hessenberg_shifted_solve(
    h: &RealMatrix,
    shift: Complex64,
    rhs: &[Complex64],
    tiny: f64,
) -> Vec<Complex64> {
    let n = h.nrows();
    let mut a: Vec<Vec<Complex64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let v = Complex64::new(h[(i, j)], 0.0);
                    if i == j {
                        v - shift
                    } else {
                        v
                    }
                })
                .collect()
        })
        .collect();
    let mut b = rhs.to_vec();
    for k in 0..n.saturating_sub(1) {
        if a[k + 1][k].norm() > a[k][k].norm() {
            a.swap(k, k + 1);
            b.swap(k, k + 1);
        }
        if a[k][k].norm() == 0.0 {
            a[k][k] = Complex64::new(tiny, 0.0);
        }
        let factor = a[k + 1][k] / a[k][k];
        if factor != Complex64::new(0.0, 0.0) {
            let (top, bottom) = a.split_at_mut(k + 1);
            let pivot_row = &top[k];
            let row = &mut bottom[0];
            for j in k..n {
                row[j] -= factor * pivot_row[j];
            }
            let bk = b[k];
            b[k + 1] -= factor * bk;
        }
    }
    if n > 0 && a[n - 1][n - 1].norm() == 0.0 {
        a[n - 1][n - 1] = Complex64::new(tiny, 0.0);
    }
    let mut y = vec![Complex64::new(0.0, 0.0); n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in i + 1..n {
            s -= a[i][j] * y[j];
        }
        y[i] = s / a[i][i];
    }
    y
}

fn normalize(v: &mut [Complex64]) {
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|z| *z /= norm);
    }
}

/// `‖T y − λ y‖` for quasi-triangular `T`.
fn schur_residual(t: &RealMatrix, lambda: Complex64, y: &[Complex64]) -> f64 {
    let n = t.nrows();
    (0..n)
        .map(|i| {
            let ty: Complex64 = (i.saturating_sub(1)..n).map(|j| y[j] * t[(i, j)]).sum();
            (ty - lambda * y[i]).norm_sqr()
        })
        .sum::<f64>()
        .sqrt()
}

/// Nonsymmetric eigendecomposition `A y_l = λ_l y_l`.
pub fn eig_dense(a: &RealMatrix) -> Result<Eigen> {
    if !a.is_square() {
        return Err(RomError::shape(format!(
            "eig_dense needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    check_finite_real(a, "eig_dense input")?;
    let n = a.nrows();
    if n == 0 {
        return Ok(Eigen {
            values: vec![],
            vectors: ComplexMatrix::zeros(0, 0),
        });
    }
    let iterations = 1000 * (n + 10);
    let schur = Schur::try_new(a.clone(), f64::EPSILON, iterations).ok_or(
        RomError::NoConvergence {
            routine: "eig_dense (Francis QR)",
            iterations,
        },
    )?;
    let (q, t) = schur.unpack();
    let values = schur_eigenvalues(&t);

    let scale = t.norm().max(f64::MIN_POSITIVE);
    let tiny = f64::EPSILON * scale;
    let cluster_tol = 1e-10 * scale;
    let mut ys: Vec<Vec<Complex64>> = Vec::with_capacity(n);
    for (idx, &lambda) in values.iter().enumerate() {
        if idx > 0 && lambda.im < 0.0 && values[idx - 1] == lambda.conj() {
            let partner: Vec<Complex64> = ys[idx - 1].iter().map(|z| z.conj()).collect();
            ys.push(partner);
            continue;
        }
        let cluster: Vec<usize> = (0..idx)
            .filter(|&j| (values[j] - lambda).norm() <= cluster_tol)
            .collect();
        // distinct start vectors for members of one cluster
        let mut y: Vec<Complex64> = (0..n)
            .map(|i| {
                let bump = if i == (idx % n) { 1.0 } else { 0.0 };
                Complex64::new(1.0 + 0.1 * ((i * 7 + idx * 3) % 11) as f64 + bump, 0.0)
            })
            .collect();
        let start = y.clone();
        for _ in 0..3 {
            y = hessenberg_shifted_solve(&t, lambda, &y, tiny);
            for &j in &cluster {
                let prev = &ys[j];
                let dot: Complex64 = prev.iter().zip(&y).map(|(p, v)| p.conj() * v).sum();
                y.iter_mut().zip(prev).for_each(|(v, p)| *v -= dot * p);
            }
            normalize(&mut y);
        }
        // a defective cluster has fewer eigenvectors than members
        if !cluster.is_empty() && schur_residual(&t, lambda, &y) > 1e-10 * scale {
            y = start;
            for _ in 0..3 {
                y = hessenberg_shifted_solve(&t, lambda, &y, tiny);
                normalize(&mut y);
            }
        }
        ys.push(y);
    }

    let qc = q.map(|x| Complex64::new(x, 0.0));
    let mut vectors = ComplexMatrix::zeros(n, n);
    for (j, y) in ys.iter().enumerate() {
        let yv = nalgebra::DVector::from_column_slice(y);
        let mut x = &qc * yv;
        let norm = x.norm();
        if norm > 0.0 {
            x /= Complex64::new(norm, 0.0);
        }
        vectors.column_mut(j).copy_from(&x);
    }
    Ok(Eigen { values, vectors })
}

fn complex_pinv_from_svd(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    let (m, n) = a.shape();
    let svd = Mat::<Complex64>::from_fn(m, n, |i, j| a[(i, j)])
        .thin_svd()
        .map_err(|_| RomError::NoConvergence {
            routine: "complex SVD",
            iterations: 0,
        })?;
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let k = m.min(n);
    let sigma_max = (0..k).fold(0.0f64, |acc, i| acc.max(s[i].re.abs()));
    let mut out = ComplexMatrix::zeros(n, m);
    if sigma_max == 0.0 {
        return Ok(out);
    }
    for l in 0..k {
        let sl = s[l].re.abs();
        if sl > PINV_CUTOFF * sigma_max {
            for j in 0..m {
                let w = u[(j, l)].conj() / sl;
                for i in 0..n {
                    out[(i, j)] += v[(i, l)] * w;
                }
            }
        }
    }
    Ok(out)
}

/// Moore-Penrose pseudoinverse of a real matrix.
pub fn pinv(a: &RealMatrix) -> Result<RealMatrix> {
    if a.is_empty() {
        return Err(RomError::invalid("pinv of an empty matrix"));
    }
    check_finite_real(a, "pinv input")?;
    let svd = thin_svd(a)?;
    let sigma_max = svd.sigma[0];
    let mut out = RealMatrix::zeros(a.ncols(), a.nrows());
    if sigma_max == 0.0 {
        return Ok(out);
    }
    for (k, &s) in svd.sigma.iter().enumerate() {
        if s > PINV_CUTOFF * sigma_max {
            out += (svd.v.column(k) * svd.u.column(k).transpose()) / s;
        }
    }
    Ok(out)
}

/// Moore-Penrose pseudoinverse of a complex matrix.
pub fn pinv_complex(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    if a.is_empty() {
        return Err(RomError::invalid("pinv of an empty matrix"));
    }
    check_finite_complex(a, "pinv input")?;
    complex_pinv_from_svd(a)
}

/// Minimum-norm least-squares solution of `A x = b`.
pub fn lstsq(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(RomError::invalid("lstsq with an empty system matrix"));
    }
    if a.nrows() != b.nrows() {
        return Err(RomError::shape(format!(
            "lstsq: A has {} rows, b has {}",
            a.nrows(),
            b.nrows()
        )));
    }
    check_finite_complex(b, "lstsq rhs")?;
    Ok(pinv_complex(a)? * b)
}

/// Real-valued convenience wrapper around [`lstsq`].
pub fn lstsq_real(a: &RealMatrix, b: &RealMatrix) -> Result<RealMatrix> {
    if a.nrows() != b.nrows() {
        return Err(RomError::shape(format!(
            "lstsq: A has {} rows, b has {}",
            a.nrows(),
            b.nrows()
        )));
    }
    Ok(pinv(a)? * b)
}

/// `V[l, j] = λ_l^j` for `j = 0..ncols`.
pub fn vandermonde(lambdas: &[Complex64], ncols: usize) -> Result<ComplexMatrix> {
    if ncols == 0 {
        return Err(RomError::invalid("vandermonde needs at least one column"));
    }
    let mut v = ComplexMatrix::zeros(lambdas.len(), ncols);
    for (l, &lambda) in lambdas.iter().enumerate() {
        let mut p = Complex64::new(1.0, 0.0);
        for j in 0..ncols {
            v[(l, j)] = p;
            p *= lambda;
        }
    }
    check_finite_complex(&v, "vandermonde")?;
    Ok(v)
}

/// Solves a Hermitian positive (semi)definite system. Falls back to a
/// `1e-12 · trace` ridge when the Cholesky factorization fails.
pub fn hermitian_solve(p: &ComplexMatrix, rhs: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = p.nrows();
    if !p.is_square() || rhs.len() != n {
        return Err(RomError::shape("hermitian_solve dimensions"));
    }
    check_finite_complex(p, "hermitian_solve matrix")?;
    let b = nalgebra::DVector::from_column_slice(rhs);
    if let Some(chol) = Cholesky::new(p.clone()) {
        let x = chol.solve(&b);
        if x.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Ok(x.iter().copied().collect());
        }
    }
    let trace: f64 = (0..n).map(|i| p[(i, i)].re).sum();
    let ridge = 1e-12 * trace.abs().max(f64::MIN_POSITIVE);
    log::warn!("hermitian_solve: Cholesky failed, retrying with ridge {ridge:e}");
    let mut regular = p.clone();
    for i in 0..n {
        regular[(i, i)] += Complex64::new(ridge, 0.0);
    }
    let chol = Cholesky::new(regular).ok_or(RomError::Singular("hermitian_solve"))?;
    let x = chol.solve(&b);
    if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(RomError::Singular("hermitian_solve"));
    }
    Ok(x.iter().copied().collect())
}

pub fn to_complex(a: &RealMatrix) -> ComplexMatrix {
    a.map(|x| Complex64::new(x, 0.0))
}
