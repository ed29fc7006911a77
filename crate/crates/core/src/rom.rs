//! Offline construction and online evaluation of the parametric ROM.
//!
//! Offline: encode every training snapshot, then fit one HODMD model per
//! training parameter. Online: predict the latent state of every training
//! parameter at `t̃`, interpolate across parameters to `ω̃`, decode.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{read_snapshots, write_snapshots, SnapshotSet};
use crate::dmd::{hodmd_fit, AmplitudeMode, HodmdModel, LatentTrajectory, DMD_VERSION};
use crate::error::{Result, RomError};
use crate::nn::{FieldShape, CHECKPOINT_VERSION};
use crate::numerics::{thin_svd, RealMatrix};
use crate::par;
use crate::reduction::{Reducer, ReducerModel, POD_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HodmdConfig {
    pub n_delay: usize,
    pub epsilon: f64,
    pub amplitudes: AmplitudeMode,
}

impl Default for HodmdConfig {
    fn default() -> Self {
        HodmdConfig {
            n_delay: 8,
            epsilon: 0.0,
            amplitudes: AmplitudeMode::Optimal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InterpolatorKind {
    /// Linear for one parameter dimension, RBF otherwise.
    #[default]
    Auto,
    Linear,
    Rbf,
}

/// Piecewise-linear interpolation over scalar nodes; refuses to extrapolate.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearInterpolator {
    /// Node values sorted ascending.
    nodes: Vec<f64>,
    /// `order[k]` is the caller's index of `nodes[k]`.
    order: Vec<usize>,
}

impl LinearInterpolator {
    pub fn new(nodes: &[f64]) -> Result<Self> {
        if nodes.is_empty() {
            return Err(RomError::invalid("linear interpolation needs at least one node"));
        }
        let mut order: Vec<usize> = (0..nodes.len()).collect();
        order.sort_by(|&a, &b| nodes[a].total_cmp(&nodes[b]));
        let sorted: Vec<f64> = order.iter().map(|&i| nodes[i]).collect();
        if sorted.windows(2).any(|w| w[0] >= w[1]) || sorted.iter().any(|v| !v.is_finite()) {
            return Err(RomError::invalid("interpolation nodes must be finite and distinct"));
        }
        Ok(LinearInterpolator { nodes: sorted, order })
    }

    /// `(index, weight)` pairs whose combination gives the value at `x`.
    pub fn weights(&self, x: f64) -> Result<Vec<(usize, f64)>> {
        let (lo, hi) = (self.nodes[0], *self.nodes.last().unwrap());
        if !(lo..=hi).contains(&x) {
            return Err(RomError::Extrapolation { value: x, min: lo, max: hi });
        }
        if let Some(k) = self.nodes.iter().position(|&n| n == x) {
            return Ok(vec![(self.order[k], 1.0)]);
        }
        let k = self.nodes.partition_point(|&n| n < x);
        let (a, b) = (self.nodes[k - 1], self.nodes[k]);
        let theta = (x - a) / (b - a);
        Ok(vec![(self.order[k - 1], 1.0 - theta), (self.order[k], theta)])
    }

    pub fn interpolate(&self, values: &[Vec<f64>], x: f64) -> Result<Vec<f64>> {
        combine(&self.weights(x)?, values)
    }
}

fn combine(weights: &[(usize, f64)], values: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = values.first().map_or(0, Vec::len);
    if let [(i, w)] = weights {
        if *w == 1.0 {
            return Ok(values[*i].clone());
        }
    }
    let mut out = vec![0.0; n];
    for &(i, w) in weights {
        for (o, v) in out.iter_mut().zip(&values[i]) {
            *o += w * v;
        }
    }
    Ok(out)
}

pub fn interp_linear(params: &[f64], values: &[Vec<f64>], x: f64) -> Result<Vec<f64>> {
    check_values(params.len(), values)?;
    LinearInterpolator::new(params)?.interpolate(values, x)
}

/// Thin-plate kernel `φ(r) = r²·ln(1 + r)`.
pub fn thin_plate(r: f64) -> f64 {
    r * r * r.ln_1p()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Thin-plate RBF interpolation with weights from the minimum-norm
/// least-squares solution of the collocation system.
#[derive(Debug, Clone, PartialEq)]
pub struct RbfInterpolator {
    nodes: Vec<Vec<f64>>,
    phi_pinv: RealMatrix,
    /// `σ_max / σ_min` of the collocation matrix.
    pub condition: f64,
}

impl RbfInterpolator {
    pub fn new(nodes: &[Vec<f64>]) -> Result<Self> {
        let n = nodes.len();
        if n < 2 {
            return Err(RomError::invalid("RBF interpolation needs at least two nodes"));
        }
        let d = nodes[0].len();
        if d == 0 || nodes.iter().any(|p| p.len() != d) {
            return Err(RomError::shape("RBF nodes must share a nonzero dimension"));
        }
        for i in 0..n {
            for j in 0..i {
                if nodes[i] == nodes[j] {
                    return Err(RomError::invalid(format!("duplicate RBF node {:?}", nodes[i])));
                }
            }
        }
        let phi = RealMatrix::from_fn(n, n, |i, j| thin_plate(distance(&nodes[i], &nodes[j])));
        let svd = thin_svd(&phi)?;
        let smallest = *svd.sigma.last().unwrap();
        let condition = if smallest > 0.0 { svd.sigma[0] / smallest } else { f64::INFINITY };
        if condition > 1e12 {
            log::warn!("RBF collocation matrix is ill-conditioned (κ ≈ {condition:.3e})");
        }
        let phi_pinv = crate::numerics::pinv(&phi)?;
        Ok(RbfInterpolator {
            nodes: nodes.to_vec(),
            phi_pinv,
            condition,
        })
    }

    pub fn weights(&self, x: &[f64]) -> Result<Vec<(usize, f64)>> {
        if x.len() != self.nodes[0].len() {
            return Err(RomError::shape("query dimension differs from the RBF nodes"));
        }
        let n = self.nodes.len();
        let phi: Vec<f64> = self.nodes.iter().map(|p| thin_plate(distance(p, x))).collect();
        // value(x) = φ(x)ᵀ Φ⁺ V, so node j carries weight (Φ⁺ᵀ φ(x))_j
        Ok((0..n)
            .map(|j| (j, (0..n).map(|s| phi[s] * self.phi_pinv[(s, j)]).sum()))
            .collect())
    }

    pub fn interpolate(&self, values: &[Vec<f64>], x: &[f64]) -> Result<Vec<f64>> {
        check_values(self.nodes.len(), values)?;
        combine(&self.weights(x)?, values)
    }
}

pub fn interp_rbf(params: &[Vec<f64>], values: &[Vec<f64>], x: &[f64]) -> Result<Vec<f64>> {
    RbfInterpolator::new(params)?.interpolate(values, x)
}

fn check_values(n: usize, values: &[Vec<f64>]) -> Result<()> {
    if values.len() != n {
        return Err(RomError::shape(format!("{n} nodes but {} value vectors", values.len())));
    }
    let m = values.first().map_or(0, Vec::len);
    if values.iter().any(|v| v.len() != m) {
        return Err(RomError::shape("value vectors differ in length"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Interpolator {
    Linear(LinearInterpolator),
    Rbf(RbfInterpolator),
}

impl Interpolator {
    pub fn build(kind: InterpolatorKind, params: &[Vec<f64>]) -> Result<Self> {
        let d = params.first().map_or(0, Vec::len);
        let kind = match kind {
            InterpolatorKind::Auto if d == 1 => InterpolatorKind::Linear,
            InterpolatorKind::Auto => InterpolatorKind::Rbf,
            k => k,
        };
        match kind {
            InterpolatorKind::Linear => {
                if d != 1 {
                    return Err(RomError::invalid("linear interpolation needs a scalar parameter"));
                }
                let nodes: Vec<f64> = params.iter().map(|p| p[0]).collect();
                Ok(Interpolator::Linear(LinearInterpolator::new(&nodes)?))
            }
            _ => Ok(Interpolator::Rbf(RbfInterpolator::new(params)?)),
        }
    }

    pub fn kind(&self) -> InterpolatorKind {
        match self {
            Interpolator::Linear(_) => InterpolatorKind::Linear,
            Interpolator::Rbf(_) => InterpolatorKind::Rbf,
        }
    }

    pub fn interpolate(&self, values: &[Vec<f64>], x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Interpolator::Linear(l) => {
                if x.len() != 1 {
                    return Err(RomError::shape("linear interpolation takes a scalar parameter"));
                }
                check_values(l.nodes.len(), values)?;
                l.interpolate(values, x[0])
            }
            Interpolator::Rbf(r) => r.interpolate(values, x),
        }
    }
}

/// A reducer, one HODMD model per training parameter and an interpolator.
#[derive(Debug, Clone)]
pub struct ParametricRom {
    pub reducer: ReducerModel,
    pub params: Vec<Vec<f64>>,
    pub models: Vec<HodmdModel>,
    pub interpolator: Interpolator,
    pub hodmd: HodmdConfig,
    /// Encoded training trajectories, kept so the HODMD stage can be refit.
    pub latents: Vec<LatentTrajectory>,
}

/// Encodes `train` with `reducer`, one trajectory per parameter.
pub fn encode_trajectories(reducer: &dyn Reducer, train: &SnapshotSet) -> Result<Vec<LatentTrajectory>> {
    if train.shape.len() != reducer.field_shape().len() {
        return Err(RomError::shape(format!(
            "snapshots of {} do not fit a reducer for {}",
            train.shape,
            reducer.field_shape()
        )));
    }
    let latents = reducer.encode_batch(&train.to_tensor())?;
    let n_t = train.n_times();
    (0..train.n_params())
        .map(|p| LatentTrajectory::from_columns(&train.times, &latents[p * n_t..(p + 1) * n_t]))
        .collect()
}

fn fit_all(latents: &[LatentTrajectory], hodmd: &HodmdConfig) -> Result<Vec<HodmdModel>> {
    par::try_map_range(latents.len(), |p| {
        hodmd_fit(&latents[p], hodmd.n_delay, hodmd.epsilon, hodmd.amplitudes)
    })
}

/// Builds the ROM from an already fitted reducer and the training snapshots.
pub fn offline(
    train: &SnapshotSet,
    reducer: ReducerModel,
    hodmd: &HodmdConfig,
    interpolator: InterpolatorKind,
) -> Result<ParametricRom> {
    if train.n_params() == 0 {
        return Err(RomError::invalid("offline stage needs at least one training parameter"));
    }
    train.time_step()?;
    let latents = encode_trajectories(&reducer, train)?;
    ParametricRom::from_latents(reducer, train.params.clone(), latents, hodmd, interpolator)
}

impl ParametricRom {
    pub fn from_latents(
        reducer: ReducerModel,
        params: Vec<Vec<f64>>,
        latents: Vec<LatentTrajectory>,
        hodmd: &HodmdConfig,
        interpolator: InterpolatorKind,
    ) -> Result<Self> {
        if params.is_empty() || params.len() != latents.len() {
            return Err(RomError::invalid("one latent trajectory per parameter is required"));
        }
        let first = &latents[0];
        if latents
            .iter()
            .any(|l| l.n_latent() != reducer.n_latent() || l.t1 != first.t1 || l.dt != first.dt || l.n_times() != first.n_times())
        {
            return Err(RomError::shape("latent trajectories must share n_latent and the time grid"));
        }
        let interpolator = Interpolator::build(interpolator, &params)?;
        let models = fit_all(&latents, hodmd)?;
        Ok(ParametricRom {
            reducer,
            params,
            models,
            interpolator,
            hodmd: *hodmd,
            latents,
        })
    }

    /// Same reducer and latents, HODMD stage refit with `hodmd`.
    pub fn refit(&self, hodmd: &HodmdConfig) -> Result<Self> {
        Ok(ParametricRom {
            models: fit_all(&self.latents, hodmd)?,
            hodmd: *hodmd,
            ..self.clone()
        })
    }

    pub fn n_latent(&self) -> usize {
        self.reducer.n_latent()
    }

    pub fn times(&self) -> Vec<f64> {
        let l = &self.latents[0];
        (0..l.n_times()).map(|k| l.t1 + k as f64 * l.dt).collect()
    }

    /// Interpolated latent state at `(t, ω)`.
    pub fn predict_latent(&self, t: f64, omega: &[f64]) -> Result<Vec<f64>> {
        let per_param = par::try_map_range(self.models.len(), |j| {
            let p = self.models[j].predict(t)?;
            let norm = p.values.iter().map(|v| v * v).sum::<f64>().sqrt();
            if p.imag_norm > 1e-6 * norm.max(f64::MIN_POSITIVE) {
                log::debug!("parameter {j}: imaginary residual {:.3e} at t = {t}", p.imag_norm);
            }
            Ok::<_, RomError>(p.values)
        })?;
        self.interpolator.interpolate(&per_param, omega)
    }

    /// Full-order prediction at `(t, ω)`.
    pub fn online(&self, t: f64, omega: &[f64]) -> Result<Vec<f64>> {
        self.reducer.decode(&self.predict_latent(t, omega)?)
    }
}

pub fn online(rom: &ParametricRom, t: f64, omega: &[f64]) -> Result<Vec<f64>> {
    rom.online(t, omega)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSample {
    pub t: f64,
    pub omega: Vec<f64>,
    pub eps_cae: f64,
    pub eps_latent: f64,
    pub eps_cae_phodmd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: Vec<EvalSample>,
    /// `(t, ω)` of samples skipped for a zero-norm reference.
    pub skipped: Vec<(f64, Vec<f64>)>,
    pub e_cae: f64,
    pub e_latent: f64,
    pub e_cae_phodmd: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

impl EvalReport {
    pub fn from_samples(samples: Vec<EvalSample>, skipped: Vec<(f64, Vec<f64>)>) -> Self {
        EvalReport {
            e_cae: mean(samples.iter().map(|s| s.eps_cae)),
            e_latent: mean(samples.iter().map(|s| s.eps_latent)),
            e_cae_phodmd: mean(samples.iter().map(|s| s.eps_cae_phodmd)),
            samples,
            skipped,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,omega,eps_cae,eps_latent,eps_cae_phodmd\n");
        for s in &self.samples {
            let omega: Vec<String> = s.omega.iter().map(|v| format!("{v:.16e}")).collect();
            let _ = writeln!(
                out,
                "{:.16e},{},{:.16e},{:.16e},{:.16e}",
                s.t,
                omega.join(";"),
                s.eps_cae,
                s.eps_latent,
                s.eps_cae_phodmd
            );
        }
        out
    }
}

/// Relative errors of the reducer alone, of the latent prediction, and of the
/// full pipeline on every snapshot of `test`.
pub fn evaluate(rom: &ParametricRom, test: &SnapshotSet) -> Result<EvalReport> {
    if test.shape.len() != rom.reducer.field_shape().len() {
        return Err(RomError::shape("test fields do not match the reducer"));
    }
    let n_t = test.n_times();
    let rows = par::try_map_range(test.len(), |k| {
        let (p, i) = (k / n_t, k % n_t);
        let (t, omega) = (test.times[i], &test.params[p]);
        let u = test.field(p, i);
        let u_norm = norm(u);
        let q = rom.reducer.encode(u)?;
        let q_norm = norm(&q);
        if u_norm == 0.0 || q_norm == 0.0 {
            return Ok::<_, RomError>(Err((t, omega.clone())));
        }
        let recon = rom.reducer.decode(&q)?;
        let q_pred = rom.predict_latent(t, omega)?;
        let u_pred = rom.reducer.decode(&q_pred)?;
        Ok(Ok(EvalSample {
            t,
            omega: omega.clone(),
            eps_cae: diff_norm(u, &recon) / u_norm,
            eps_latent: diff_norm(&q, &q_pred) / q_norm,
            eps_cae_phodmd: diff_norm(u, &u_pred) / u_norm,
        }))
    })?;
    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    for row in rows {
        match row {
            Ok(s) => samples.push(s),
            Err(id) => {
                log::warn!("skipping sample t = {}, ω = {:?}: zero-norm reference", id.0, id.1);
                skipped.push(id);
            }
        }
    }
    Ok(EvalReport::from_samples(samples, skipped))
}

/// Evaluates the ROM refit at every delay count of `n_delays`.
pub fn delay_sweep(rom: &ParametricRom, test: &SnapshotSet, n_delays: &[usize]) -> Result<Vec<(usize, EvalReport)>> {
    n_delays
        .iter()
        .map(|&n_delay| {
            let refit = rom.refit(&HodmdConfig { n_delay, ..rom.hodmd })?;
            Ok((n_delay, evaluate(&refit, test)?))
        })
        .collect()
}

pub fn sweep_csv(sweep: &[(usize, EvalReport)]) -> String {
    let mut out = String::from("n_delay,E_cae,E_latent,E_cae_phodmd\n");
    for (n, r) in sweep {
        let _ = writeln!(out, "{n},{:.16e},{:.16e},{:.16e}", r.e_cae, r.e_latent, r.e_cae_phodmd);
    }
    out
}

const REDUCER_FILE_POD: &str = "reducer.romp";
const REDUCER_FILE_CAE: &str = "reducer.romw";
const LATENTS_FILE: &str = "latents.roms";
const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormatVersions {
    pub romd: u32,
    pub romp: u32,
    pub romw: u32,
    pub roms: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub reducer_kind: String,
    pub reducer_file: String,
    pub n_latent: usize,
    pub params: Vec<Vec<f64>>,
    pub times: Vec<f64>,
    pub interpolator: InterpolatorKind,
    pub hodmd: HodmdConfig,
    pub models: Vec<String>,
    pub latents_file: String,
    pub versions: FormatVersions,
}

/// Writes the ROM as a directory: reducer file, one "ROMD" file per
/// parameter, the encoded training trajectories and `manifest.json`.
pub fn save_bundle(rom: &ParametricRom, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let reducer_file = match rom.reducer {
        ReducerModel::Pod(_) => REDUCER_FILE_POD,
        ReducerModel::Cae(_) => REDUCER_FILE_CAE,
    };
    rom.reducer.save(dir.join(reducer_file))?;
    let mut models = Vec::with_capacity(rom.models.len());
    for (j, m) in rom.models.iter().enumerate() {
        let name = format!("model_{j:03}.romd");
        m.save(dir.join(&name))?;
        models.push(name);
    }
    let times = rom.times();
    let n = rom.n_latent();
    let fields: Vec<f64> = rom.latents.iter().flat_map(|l| l.values.as_slice().iter().copied()).collect();
    let latents = SnapshotSet::new(rom.params.clone(), times.clone(), FieldShape::flat(n), fields)?;
    write_snapshots(&latents, dir.join(LATENTS_FILE))?;
    let manifest = Manifest {
        reducer_kind: rom.reducer.kind().to_string(),
        reducer_file: reducer_file.to_string(),
        n_latent: n,
        params: rom.params.clone(),
        times,
        interpolator: rom.interpolator.kind(),
        hodmd: rom.hodmd,
        models,
        latents_file: LATENTS_FILE.to_string(),
        versions: FormatVersions {
            romd: DMD_VERSION,
            romp: POD_VERSION,
            romw: CHECKPOINT_VERSION,
            roms: crate::data::SNAPSHOT_VERSION,
        },
    };
    std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn load_bundle(dir: impl AsRef<Path>) -> Result<ParametricRom> {
    let dir = dir.as_ref();
    let manifest: Manifest = serde_json::from_slice(&std::fs::read(dir.join(MANIFEST_FILE))?)?;
    let path = |name: &str| -> PathBuf { dir.join(name) };
    let reducer = ReducerModel::load(path(&manifest.reducer_file))?;
    if reducer.n_latent() != manifest.n_latent || manifest.models.len() != manifest.params.len() {
        return Err(RomError::invalid("bundle manifest disagrees with its files"));
    }
    let models = manifest
        .models
        .iter()
        .map(|m| HodmdModel::load(path(m)))
        .collect::<Result<Vec<_>>>()?;
    let set = read_snapshots(path(&manifest.latents_file))?;
    if set.params != manifest.params || set.shape.len() != manifest.n_latent {
        return Err(RomError::invalid("bundle latents disagree with the manifest"));
    }
    let latents = (0..set.n_params())
        .map(|p| {
            let cols: Vec<Vec<f64>> = (0..set.n_times()).map(|t| set.field(p, t).to_vec()).collect();
            LatentTrajectory::from_columns(&set.times, &cols)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ParametricRom {
        reducer,
        interpolator: Interpolator::build(manifest.interpolator, &manifest.params)?,
        params: manifest.params,
        models,
        hodmd: manifest.hodmd,
        latents,
    })
}
