//! Dynamic mode decomposition and its higher-order (time-delay) variant for
//! latent trajectories.
//!
//! A fitted model predicts `q̂(t) = Σ_l a_l ξ_l λ_l^{(t − t₁)/Δt}` and returns
//! the real part of the first `n_latent` components.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::data::uniform_step;
use crate::error::{Result, RomError};
use crate::format::{FormatError, Reader, Writer};
use crate::numerics::{
    eig_dense, hermitian_solve, pinv_complex, thin_svd, to_complex, truncate_rank, vandermonde, ComplexMatrix,
    RealMatrix,
};

pub const DMD_MAGIC: &[u8; 4] = b"ROMD";
pub const DMD_VERSION: u32 = 1;

/// Latent values on a uniform time grid `t₁ + kΔt`, one column per time.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTrajectory {
    pub t1: f64,
    pub dt: f64,
    pub values: RealMatrix,
}

impl LatentTrajectory {
    pub fn new(times: &[f64], values: RealMatrix) -> Result<Self> {
        if values.ncols() != times.len() {
            return Err(RomError::shape(format!(
                "{} times but {} latent columns",
                times.len(),
                values.ncols()
            )));
        }
        if values.nrows() == 0 {
            return Err(RomError::invalid("latent trajectory has no components"));
        }
        let dt = uniform_step(times)?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(RomError::NonFinite("latent trajectory"));
        }
        Ok(LatentTrajectory {
            t1: times[0],
            dt,
            values,
        })
    }

    /// Builds a trajectory from one latent vector per time.
    pub fn from_columns(times: &[f64], columns: &[Vec<f64>]) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(RomError::shape("latent vectors differ in length"));
        }
        let flat: Vec<f64> = columns.iter().flatten().copied().collect();
        Self::new(times, RealMatrix::from_column_slice(n, columns.len(), &flat))
    }

    pub fn n_latent(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_times(&self) -> usize {
        self.values.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeMode {
    /// Minimize the reconstruction error over every snapshot.
    #[default]
    Optimal,
    /// `a = Ξ† q₁`
    Pinv,
}

/// Eigenvalues and exact DMD modes of the best-fit operator `Q₂ ≈ A Q₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct DmdFit {
    pub eigenvalues: Vec<Complex64>,
    pub modes: ComplexMatrix,
}

pub fn dmd_fit(q1: &RealMatrix, q2: &RealMatrix, epsilon: f64) -> Result<DmdFit> {
    if q1.shape() != q2.shape() {
        return Err(RomError::shape(format!(
            "snapshot pair shapes differ: {:?} vs {:?}",
            q1.shape(),
            q2.shape()
        )));
    }
    if q1.ncols() == 0 || q1.nrows() == 0 {
        return Err(RomError::invalid("DMD needs at least one snapshot column"));
    }
    let svd = thin_svd(q1)?;
    if svd.sigma[0] == 0.0 {
        return Err(RomError::invalid("DMD input snapshots are all zero"));
    }
    let rank = truncate_rank(&svd.sigma, epsilon)?;
    if rank == 0 {
        return Err(RomError::invalid("DMD truncation left no modes"));
    }
    let x = svd.u.columns(0, rank);
    let mut v_sinv = svd.v.columns(0, rank).into_owned();
    for (j, s) in svd.sigma[..rank].iter().enumerate() {
        v_sinv.column_mut(j).scale_mut(1.0 / s);
    }
    let q2_v_sinv = q2 * &v_sinv;
    let a_tilde = x.transpose() * &q2_v_sinv;
    let eig = eig_dense(&a_tilde)?;
    let modes = to_complex(&q2_v_sinv) * &eig.vectors;
    Ok(DmdFit {
        eigenvalues: eig.values,
        modes,
    })
}

pub fn amplitudes_pinv(modes: &ComplexMatrix, q_first: &[f64]) -> Result<Vec<Complex64>> {
    if modes.nrows() != q_first.len() {
        return Err(RomError::shape(format!(
            "modes have {} rows, snapshot has {}",
            modes.nrows(),
            q_first.len()
        )));
    }
    let b = nalgebra::DVector::from_iterator(q_first.len(), q_first.iter().map(|v| Complex64::new(*v, 0.0)));
    Ok((pinv_complex(modes)? * b).iter().copied().collect())
}

/// Amplitudes minimizing `‖Q₁ − Ξ diag(a) V‖_F` with `V` the Vandermonde
/// matrix of `λ` over the columns of `Q₁`, from the normal equations
/// `((ΞᴴΞ) ∘ conj(VVᴴ)) a = conj(diag(V Q₁ᴴ Ξ))`.
pub fn amplitudes_optimal(modes: &ComplexMatrix, lambdas: &[Complex64], q1: &RealMatrix) -> Result<Vec<Complex64>> {
    if modes.nrows() != q1.nrows() || modes.ncols() != lambdas.len() {
        return Err(RomError::shape(format!(
            "modes {:?}, {} eigenvalues, snapshots {:?}",
            modes.shape(),
            lambdas.len(),
            q1.shape()
        )));
    }
    let v = vandermonde(lambdas, q1.ncols())?;
    let gram = modes.adjoint() * modes;
    let vv = &v * v.adjoint();
    let p = gram.zip_map(&vv, |g, w| g * w.conj());
    let q1c = to_complex(q1);
    let vqx = &v * q1c.transpose() * modes;
    let rhs: Vec<Complex64> = (0..lambdas.len()).map(|l| vqx[(l, l)].conj()).collect();
    hermitian_solve(&p, &rhs)
}

/// Frobenius norm of `Q − Ξ diag(a) V` over the columns of `Q`.
pub fn reconstruction_error(modes: &ComplexMatrix, lambdas: &[Complex64], amplitudes: &[Complex64], q: &RealMatrix) -> Result<f64> {
    let v = vandermonde(lambdas, q.ncols())?;
    let mut scaled = modes.clone();
    for (l, a) in amplitudes.iter().enumerate() {
        scaled.column_mut(l).iter_mut().for_each(|z| *z *= *a);
    }
    let recon = scaled * v;
    Ok(recon
        .iter()
        .zip(q.iter())
        .map(|(r, x)| (r - Complex64::new(*x, 0.0)).norm_sqr())
        .sum::<f64>()
        .sqrt())
}

/// Time-delay embedding: column `k` of the Hankel matrix stacks
/// `q_k, …, q_{k+n_delay−1}`. Returns all but the last column and all but
/// the first.
pub fn hankel_embed(traj: &LatentTrajectory, n_delay: usize) -> Result<(RealMatrix, RealMatrix)> {
    let n_t = traj.n_times();
    if n_delay == 0 || n_t < 2 || n_delay + 2 > n_t {
        return Err(RomError::invalid(format!(
            "n_delay = {n_delay} outside [1, {}] for {n_t} snapshots",
            n_t.saturating_sub(2)
        )));
    }
    let n = traj.n_latent();
    let cols = n_t - n_delay + 1;
    let mut h = RealMatrix::zeros(n * n_delay, cols);
    for k in 0..cols {
        for d in 0..n_delay {
            h.view_mut((d * n, k), (n, 1)).copy_from(&traj.values.column(k + d));
        }
    }
    Ok((h.columns(0, cols - 1).into_owned(), h.columns(1, cols - 1).into_owned()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HodmdModel {
    pub n_latent: usize,
    pub n_delay: usize,
    pub eigenvalues: Vec<Complex64>,
    /// `(n_latent·n_delay) × L`
    pub modes: ComplexMatrix,
    pub amplitudes: Vec<Complex64>,
    pub t1: f64,
    pub dt: f64,
}

/// Result of evaluating a model at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPrediction {
    pub values: Vec<f64>,
    /// Norm of the discarded imaginary part.
    pub imag_norm: f64,
    pub dropped_modes: usize,
}

/// Reorders modes by `|a_l|·‖ξ_l‖`, largest first (stable).
fn sort_modes(eigenvalues: Vec<Complex64>, modes: ComplexMatrix, amplitudes: Vec<Complex64>) -> (Vec<Complex64>, ComplexMatrix, Vec<Complex64>) {
    let weight: Vec<f64> = (0..eigenvalues.len())
        .map(|l| amplitudes[l].norm() * modes.column(l).norm())
        .collect();
    let mut order: Vec<usize> = (0..eigenvalues.len()).collect();
    order.sort_by(|&a, &b| weight[b].total_cmp(&weight[a]));
    let mut sorted = ComplexMatrix::zeros(modes.nrows(), order.len());
    for (dst, &src) in order.iter().enumerate() {
        sorted.column_mut(dst).copy_from(&modes.column(src));
    }
    (
        order.iter().map(|&i| eigenvalues[i]).collect(),
        sorted,
        order.iter().map(|&i| amplitudes[i]).collect(),
    )
}

/// DMD model of the snapshot pair `(Q₁, Q₂)` whose first column sits at `t1`.
pub fn dmd_model(
    q1: &RealMatrix,
    q2: &RealMatrix,
    n_latent: usize,
    epsilon: f64,
    mode: AmplitudeMode,
    t1: f64,
    dt: f64,
) -> Result<HodmdModel> {
    if q1.nrows() % n_latent != 0 || n_latent == 0 {
        return Err(RomError::shape("embedded rows must be a multiple of n_latent"));
    }
    let fit = dmd_fit(q1, q2, epsilon)?;
    let amplitudes = match mode {
        AmplitudeMode::Optimal => amplitudes_optimal(&fit.modes, &fit.eigenvalues, q1)?,
        AmplitudeMode::Pinv => {
            let first: Vec<f64> = q1.column(0).iter().copied().collect();
            amplitudes_pinv(&fit.modes, &first)?
        }
    };
    let (eigenvalues, modes, amplitudes) = sort_modes(fit.eigenvalues, fit.modes, amplitudes);
    Ok(HodmdModel {
        n_latent,
        n_delay: q1.nrows() / n_latent,
        eigenvalues,
        modes,
        amplitudes,
        t1,
        dt,
    })
}

pub fn hodmd_fit(traj: &LatentTrajectory, n_delay: usize, epsilon: f64, mode: AmplitudeMode) -> Result<HodmdModel> {
    let (q1, q2) = hankel_embed(traj, n_delay)?;
    dmd_model(&q1, &q2, traj.n_latent(), epsilon, mode, traj.t1, traj.dt)
}

/// Exponents this close to an integer are evaluated by repeated products.
const INTEGER_TOL: f64 = 1e-9;

impl HodmdModel {
    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Evaluates the model at time `t`, using `λ^s = exp(s·Log λ)` (principal
    /// branch) for non-integer `s = (t − t₁)/Δt`.
    pub fn predict(&self, t: f64) -> Result<LatentPrediction> {
        if !(self.dt > 0.0) || !t.is_finite() {
            return Err(RomError::invalid("prediction needs Δt > 0 and a finite time"));
        }
        let s = (t - self.t1) / self.dt;
        let nearest = s.round();
        let integer = (s - nearest).abs() <= INTEGER_TOL * nearest.abs().max(1.0);
        let mut acc = vec![Complex64::new(0.0, 0.0); self.n_latent];
        let mut dropped = 0;
        for (l, &lambda) in self.eigenvalues.iter().enumerate() {
            let power = if lambda == Complex64::new(0.0, 0.0) {
                if integer && nearest == 0.0 {
                    Complex64::new(1.0, 0.0)
                } else if integer && nearest > 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    log::warn!("dropping zero eigenvalue at exponent {s}");
                    dropped += 1;
                    continue;
                }
            } else if integer && nearest.abs() < i32::MAX as f64 {
                lambda.powi(nearest as i32)
            } else {
                (lambda.ln() * s).exp()
            };
            let coeff = self.amplitudes[l] * power;
            for (i, a) in acc.iter_mut().enumerate() {
                *a += self.modes[(i, l)] * coeff;
            }
        }
        let values: Vec<f64> = acc.iter().map(|z| z.re).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(RomError::NonFinite("HODMD prediction"));
        }
        let imag_norm = acc.iter().map(|z| z.im * z.im).sum::<f64>().sqrt();
        Ok(LatentPrediction {
            values,
            imag_norm,
            dropped_modes: dropped,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(DMD_MAGIC, DMD_VERSION);
        w.usize(self.n_latent);
        w.usize(self.n_delay);
        w.usize(self.n_modes());
        w.f64(self.t1);
        w.f64(self.dt);
        let mut put = |zs: &mut dyn Iterator<Item = &Complex64>| {
            for z in zs {
                w.f64(z.re);
                w.f64(z.im);
            }
        };
        put(&mut self.eigenvalues.iter());
        put(&mut self.modes.iter());
        put(&mut self.amplitudes.iter());
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, DMD_MAGIC, DMD_VERSION)?;
        let n_latent = r.count("latent dimension")?;
        let n_delay = r.count("delay count")?;
        let n_modes = r.count("mode count")?;
        let t1 = r.f64("time origin")?;
        let dt = r.f64("time step")?;
        let rows = n_latent.saturating_mul(n_delay);
        let total = rows
            .saturating_add(2)
            .saturating_mul(n_modes)
            .saturating_mul(16);
        r.require(total, "spectral data")?;
        let mut complex = |n: usize, what: &str| -> std::result::Result<Vec<Complex64>, FormatError> {
            let raw = r.f64s(2 * n, what)?;
            Ok(raw.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect())
        };
        let eigenvalues = complex(n_modes, "eigenvalues")?;
        let modes = complex(rows * n_modes, "modes")?;
        let amplitudes = complex(n_modes, "amplitudes")?;
        r.finish()?;
        if n_latent == 0 || n_delay == 0 || n_modes > rows {
            return Err(FormatError::Corrupt(format!(
                "inconsistent counts: n_latent {n_latent}, n_delay {n_delay}, modes {n_modes}"
            ))
            .into());
        }
        let finite = |z: &Complex64| z.re.is_finite() && z.im.is_finite();
        if !(t1.is_finite() && dt.is_finite() && dt > 0.0)
            || !eigenvalues.iter().chain(&modes).chain(&amplitudes).all(finite)
        {
            return Err(RomError::NonFinite("ROMD file"));
        }
        Ok(HodmdModel {
            n_latent,
            n_delay,
            eigenvalues,
            modes: ComplexMatrix::from_column_slice(rows, n_modes, &modes),
            amplitudes,
            t1,
            dt,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

pub fn hodmd_predict(model: &HodmdModel, t: f64) -> Result<LatentPrediction> {
    model.predict(t)
}
