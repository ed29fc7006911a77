use std::path::Path;

use nalgebra::DVector;

use super::{check_len, Reducer};
use crate::data::SnapshotSet;
use crate::error::{Result, RomError};
use crate::format::{Reader, Writer};
use crate::nn::FieldShape;
use crate::numerics::{thin_svd, truncate_rank, RealMatrix, RANK_CUTOFF};

pub const POD_MAGIC: &[u8; 4] = b"ROMP";
pub const POD_VERSION: u32 = 1;

/// How many POD modes to keep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PodRank {
    /// Smallest rank holding `1 - ε` of the snapshot energy.
    Energy(f64),
    Fixed(usize),
}

/// Affine reduced basis `u ≈ V_rb q + ū`.
#[derive(Debug, Clone, PartialEq)]
pub struct PodModel {
    pub shape: FieldShape,
    pub mean: Vec<f64>,
    /// `n_h × n_rb`, orthonormal columns.
    pub basis: RealMatrix,
    /// All singular values of the centered snapshot matrix.
    pub sigma: Vec<f64>,
}

/// Fits a POD basis to the mean-centered snapshots of `set`.
///
/// A zero centered matrix (all snapshots equal) keeps one arbitrary unit
/// mode, so every field encodes to zero and decodes to the mean.
pub fn pod_fit(set: &SnapshotSet, rank: PodRank) -> Result<PodModel> {
    if set.is_empty() {
        return Err(RomError::invalid("POD needs at least one snapshot"));
    }
    let n_h = set.shape.len();
    let n = set.len();
    let s = RealMatrix::from_column_slice(n_h, n, &set.fields);
    let mean: Vec<f64> = s.column_mean().iter().copied().collect();
    let mut centered = s;
    let mean_vec = DVector::from_column_slice(&mean);
    for mut col in centered.column_iter_mut() {
        col -= &mean_vec;
    }
    let svd = thin_svd(&centered)?;
    let available = if svd.sigma[0] > 0.0 {
        svd.sigma.iter().filter(|&&s| s > RANK_CUTOFF * svd.sigma[0]).count()
    } else {
        0
    };
    let r = match rank {
        PodRank::Fixed(0) => return Err(RomError::invalid("POD rank must be at least 1")),
        PodRank::Fixed(r) if r > available.max(1) => {
            return Err(RomError::invalid(format!(
                "requested {r} POD modes but the snapshots have rank {available}"
            )))
        }
        PodRank::Fixed(r) => r,
        PodRank::Energy(_) if available == 0 => 1,
        PodRank::Energy(eps) => truncate_rank(&svd.sigma, eps)?,
    };
    let basis = if available == 0 {
        let mut e = RealMatrix::zeros(n_h, 1);
        e[(0, 0)] = 1.0;
        e
    } else {
        svd.u.columns(0, r).into_owned()
    };
    Ok(PodModel {
        shape: set.shape,
        mean,
        basis,
        sigma: svd.sigma,
    })
}

impl PodModel {
    pub fn n_rb(&self) -> usize {
        self.basis.ncols()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(POD_MAGIC, POD_VERSION);
        w.usize(self.shape.channels);
        w.usize(self.shape.height);
        w.usize(self.shape.width);
        w.usize(self.n_rb());
        w.f64s(&self.mean);
        w.f64_array(&self.sigma);
        w.f64s(self.basis.as_slice());
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, POD_MAGIC, POD_VERSION)?;
        let shape = FieldShape::new(r.count("channels")?, r.count("height")?, r.count("width")?);
        let n_rb = r.count("basis rank")?;
        let n_h = shape.len();
        let mean = r.f64s(n_h, "mean field")?;
        let sigma = r.f64_array("singular values")?;
        let basis = r.f64s(n_h.saturating_mul(n_rb), "basis")?;
        r.finish()?;
        if n_rb == 0 {
            return Err(crate::format::FormatError::Corrupt("POD basis has rank 0".into()).into());
        }
        if mean.iter().chain(&sigma).chain(&basis).any(|v| !v.is_finite()) {
            return Err(RomError::NonFinite("POD file"));
        }
        Ok(PodModel {
            shape,
            mean,
            basis: RealMatrix::from_column_slice(n_h, n_rb, &basis),
            sigma,
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

impl Reducer for PodModel {
    fn n_latent(&self) -> usize {
        self.n_rb()
    }

    fn field_shape(&self) -> FieldShape {
        self.shape
    }

    /// `q = V_rbᵀ (u − ū)`
    fn encode(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len("POD encode input", self.mean.len(), u.len())?;
        let d = DVector::from_iterator(u.len(), u.iter().zip(&self.mean).map(|(a, b)| a - b));
        Ok(self.basis.tr_mul(&d).iter().copied().collect())
    }

    /// `u = V_rb q + ū`
    fn decode(&self, q: &[f64]) -> Result<Vec<f64>> {
        check_len("POD decode input", self.n_rb(), q.len())?;
        let u = &self.basis * DVector::from_column_slice(q);
        Ok(u.iter().zip(&self.mean).map(|(a, b)| a + b).collect())
    }
}
