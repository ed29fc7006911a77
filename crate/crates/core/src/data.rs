//! Snapshot datasets: the analytic Burgers solution, a synthetic 2D generator,
//! and the "ROMS" container.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RomError};
use crate::format::{Reader, Writer};
use crate::nn::{FieldShape, FieldTensor};
use crate::par;

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"ROMS";
pub const SNAPSHOT_VERSION: u32 = 1;

/// Relative tolerance on the spacing of a uniform time grid.
pub const UNIFORM_TOL: f64 = 1e-9;

/// Exact solution of the viscous Burgers equation on `[0, 2]`:
///
/// `u = (x/(t+1)) / (1 + √((t+1)/t₀) · exp(Re·x²/(4t+4)))`, `t₀ = exp(Re/8)`.
///
/// The denominator is handled through its exponent so large `Re·x²` never
/// overflows.
pub fn burgers_exact(x: f64, t: f64, re: f64) -> f64 {
    let tp = t + 1.0;
    let e = 0.5 * (tp.ln() - re / 8.0) + re * x * x / (4.0 * tp);
    let lead = x / tp;
    if e > 0.0 {
        let w = (-e).exp();
        lead * w / (1.0 + w)
    } else {
        lead / (1.0 + e.exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    #[default]
    Burgers1d,
    Synthetic2d,
}

/// How validation and test parameters/times are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Evenly spaced interior points (midpoints of equal sub-intervals).
    Uniform,
    #[default]
    SeededRandom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    /// `x_i = (i + ½)·L/n`
    #[default]
    CellCenter,
    /// `x_i = i·L/(n − 1)`, boundaries included
    Node,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    /// Lower corner of the parameter box, one entry per parameter dimension.
    pub param_min: Vec<f64>,
    pub param_max: Vec<f64>,
    /// Training grid counts per parameter dimension.
    pub train_params: Vec<usize>,
    pub t_min: f64,
    pub t_max: f64,
    pub train_times: usize,
    pub validation_params: usize,
    pub validation_times: usize,
    pub test_params: usize,
    pub test_times: usize,
    pub sampling: Sampling,
    /// Overrides the drawn test parameters when present.
    pub fixed_test_params: Option<Vec<Vec<f64>>>,
    pub grid: GridKind,
    pub shape: FieldShape,
    /// Synthetic 2D only: number of Gaussian blobs.
    pub gaussians: usize,
    /// Synthetic 2D only: blob standard deviation as a fraction of the domain.
    pub width: f64,
    /// Synthetic 2D only: phase rate κ when the parameter carries velocity alone.
    pub phase_rate: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::burgers()
    }
}

impl DatasetSpec {
    pub fn burgers() -> Self {
        DatasetSpec {
            kind: DatasetKind::Burgers1d,
            param_min: vec![100.0],
            param_max: vec![800.0],
            train_params: vec![10],
            t_min: 0.0,
            t_max: 2.0,
            train_times: 101,
            validation_params: 4,
            validation_times: 20,
            test_params: 2,
            test_times: 10,
            sampling: Sampling::SeededRandom,
            fixed_test_params: None,
            grid: GridKind::CellCenter,
            shape: FieldShape::new(1, 1, 128),
            gaussians: 0,
            width: 0.0,
            phase_rate: 0.0,
            seed: 0,
        }
    }

    /// Test parameters fixed at Re ∈ {290.8, 646.0}.
    pub fn burgers_fixed_test() -> Self {
        DatasetSpec {
            fixed_test_params: Some(vec![vec![290.8], vec![646.0]]),
            ..DatasetSpec::burgers()
        }
    }

    pub fn synthetic2d(shape: FieldShape) -> Self {
        DatasetSpec {
            kind: DatasetKind::Synthetic2d,
            param_min: vec![0.1],
            param_max: vec![0.3],
            train_params: vec![5],
            t_min: 0.0,
            t_max: 2.0,
            train_times: 41,
            validation_params: 2,
            validation_times: 10,
            test_params: 2,
            test_times: 10,
            sampling: Sampling::SeededRandom,
            fixed_test_params: None,
            grid: GridKind::CellCenter,
            shape,
            gaussians: 3,
            width: 0.08,
            phase_rate: 2.0 * PI,
            seed: 0,
        }
    }

    pub fn param_dim(&self) -> usize {
        self.param_min.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.param_dim();
        let mut problems = Vec::new();
        if d == 0 || self.param_max.len() != d || self.train_params.len() != d {
            problems.push("parameter range and count vectors must share a nonzero length".to_string());
        }
        for (lo, hi) in self.param_min.iter().zip(&self.param_max) {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                problems.push(format!("parameter range [{lo}, {hi}] is empty"));
            }
        }
        if !(self.t_min.is_finite() && self.t_max.is_finite() && self.t_min < self.t_max) {
            problems.push(format!("time range [{}, {}] is empty", self.t_min, self.t_max));
        }
        let counts = [
            ("train_times", self.train_times),
            ("validation_params", self.validation_params),
            ("validation_times", self.validation_times),
            ("test_params", self.test_params),
            ("test_times", self.test_times),
        ];
        for (name, c) in counts {
            if c == 0 {
                problems.push(format!("{name} must be at least 1"));
            }
        }
        if self.train_params.contains(&0) {
            problems.push("train_params entries must be at least 1".into());
        }
        if self.shape.is_empty() {
            problems.push("field shape is empty".into());
        }
        if let Some(fixed) = &self.fixed_test_params {
            if fixed.is_empty() || fixed.iter().any(|p| p.len() != d) {
                problems.push("fixed_test_params entries must match the parameter dimension".into());
            }
        }
        match self.kind {
            DatasetKind::Burgers1d => {
                if d != 1 {
                    problems.push("burgers1d takes one parameter (Re)".into());
                }
                if self.shape.channels != 1 || self.shape.height != 1 || self.shape.width < 2 {
                    problems.push("burgers1d fields have shape (1, 1, n_x ≥ 2)".into());
                }
                if self.param_min.first().is_some_and(|re| *re <= 0.0) {
                    problems.push("Re must be positive".into());
                }
                if self.t_min < 0.0 {
                    problems.push("burgers1d times must be nonnegative".into());
                }
            }
            DatasetKind::Synthetic2d => {
                if !(d == 1 || d == 2) {
                    problems.push("synthetic2d takes (v) or (v, κ)".into());
                }
                if self.gaussians == 0 || !(self.width > 0.0) {
                    problems.push("synthetic2d needs at least one Gaussian of positive width".into());
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(RomError::invalid(problems.join("; ")))
        }
    }
}

/// Fields indexed by (parameter, time), stored in (param, time, channel, y, x) order.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    pub params: Vec<Vec<f64>>,
    pub times: Vec<f64>,
    pub shape: FieldShape,
    pub fields: Vec<f64>,
}

/// The three splits produced by a dataset generator.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplits {
    pub train: SnapshotSet,
    pub validation: SnapshotSet,
    pub test: SnapshotSet,
}

impl SnapshotSet {
    pub fn new(params: Vec<Vec<f64>>, times: Vec<f64>, shape: FieldShape, fields: Vec<f64>) -> Result<Self> {
        let d = params.first().map_or(0, Vec::len);
        if params.iter().any(|p| p.len() != d) {
            return Err(RomError::shape("parameter vectors have differing dimensions"));
        }
        let expected = params.len() * times.len() * shape.len();
        if fields.len() != expected {
            return Err(RomError::shape(format!(
                "{} parameters × {} times × {shape} needs {expected} values, got {}",
                params.len(),
                times.len(),
                fields.len()
            )));
        }
        if params.iter().flatten().chain(&times).chain(&fields).any(|v| !v.is_finite()) {
            return Err(RomError::NonFinite("snapshot set"));
        }
        Ok(SnapshotSet {
            params,
            times,
            shape,
            fields,
        })
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn param_dim(&self) -> usize {
        self.params.first().map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.n_params() * self.n_times()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn field(&self, p: usize, t: usize) -> &[f64] {
        let n = self.shape.len();
        let start = (p * self.n_times() + t) * n;
        &self.fields[start..start + n]
    }

    /// Every snapshot as one batch, parameter-major.
    pub fn to_tensor(&self) -> FieldTensor {
        FieldTensor {
            batch: self.len(),
            shape: self.shape,
            values: self.fields.clone(),
        }
    }

    /// Spacing of the time grid; fails unless it is uniform within
    /// [`UNIFORM_TOL`] relative.
    pub fn time_step(&self) -> Result<f64> {
        uniform_step(&self.times)
    }
}

pub fn uniform_step(times: &[f64]) -> Result<f64> {
    if times.len() < 2 {
        return Err(RomError::invalid("a time grid needs at least two points"));
    }
    let n = times.len();
    let dt = (times[n - 1] - times[0]) / (n - 1) as f64;
    if !(dt > 0.0) {
        return Err(RomError::invalid("time grid is not increasing"));
    }
    for (k, w) in times.windows(2).enumerate() {
        if ((w[1] - w[0]) - dt).abs() > UNIFORM_TOL * dt {
            return Err(RomError::invalid(format!(
                "time grid is not uniform: step {k} is {} against {dt}",
                w[1] - w[0]
            )));
        }
    }
    Ok(dt)
}

/// `n` evenly spaced points on `[lo, hi]` (one point gives `lo`).
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n)
            .map(|i| if i == n - 1 { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
            .collect(),
    }
}

fn draw_sorted(rng: &mut ChaCha8Rng, lo: f64, hi: f64, n: usize, sampling: Sampling) -> Vec<f64> {
    let mut v: Vec<f64> = match sampling {
        Sampling::Uniform => (0..n).map(|i| lo + (hi - lo) * (i as f64 + 0.5) / n as f64).collect(),
        Sampling::SeededRandom => (0..n).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect(),
    };
    v.sort_by(f64::total_cmp);
    v
}

fn draw_params(rng: &mut ChaCha8Rng, spec: &DatasetSpec, n: usize) -> Vec<Vec<f64>> {
    let d = spec.param_dim();
    if d == 1 {
        return draw_sorted(rng, spec.param_min[0], spec.param_max[0], n, spec.sampling)
            .into_iter()
            .map(|v| vec![v])
            .collect();
    }
    (0..n)
        .map(|i| {
            (0..d)
                .map(|k| {
                    let (lo, hi) = (spec.param_min[k], spec.param_max[k]);
                    match spec.sampling {
                        Sampling::Uniform => lo + (hi - lo) * (i as f64 + 0.5) / n as f64,
                        Sampling::SeededRandom => lo + (hi - lo) * rng.random::<f64>(),
                    }
                })
                .collect()
        })
        .collect()
}

/// Cartesian product of per-dimension linspaces, last dimension fastest.
fn train_grid(spec: &DatasetSpec) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = (0..spec.param_dim())
        .map(|k| linspace(spec.param_min[k], spec.param_max[k], spec.train_params[k]))
        .collect();
    let mut out = vec![vec![]];
    for axis in &axes {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<f64>| {
                axis.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(*v);
                    p
                })
            })
            .collect();
    }
    out
}

fn grid_points(kind: GridKind, length: f64, n: usize) -> Vec<f64> {
    match kind {
        GridKind::CellCenter => (0..n).map(|i| (i as f64 + 0.5) * length / n as f64).collect(),
        GridKind::Node => linspace(0.0, length, n),
    }
}

fn build_set<F>(params: Vec<Vec<f64>>, times: Vec<f64>, shape: FieldShape, sample: F) -> Result<SnapshotSet>
where
    F: Fn(&[f64], f64) -> Vec<f64> + Sync,
{
    let n_t = times.len();
    let per = par::map_range(params.len() * n_t, |k| sample(&params[k / n_t], times[k % n_t]));
    let fields = per.into_iter().flatten().collect();
    SnapshotSet::new(params, times, shape, fields)
}

fn make_splits<F>(spec: &DatasetSpec, sample: F) -> Result<DatasetSplits>
where
    F: Fn(&[f64], f64) -> Vec<f64> + Sync,
{
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let train_times = linspace(spec.t_min, spec.t_max, spec.train_times);
    let train = build_set(train_grid(spec), train_times, spec.shape, &sample)?;

    let val_params = draw_params(&mut rng, spec, spec.validation_params);
    let val_times = draw_sorted(&mut rng, spec.t_min, spec.t_max, spec.validation_times, spec.sampling);
    let validation = build_set(val_params, val_times, spec.shape, &sample)?;

    let mut test_params = draw_params(&mut rng, spec, spec.test_params);
    if let Some(fixed) = &spec.fixed_test_params {
        test_params = fixed.clone();
    }
    let test_times = draw_sorted(&mut rng, spec.t_min, spec.t_max, spec.test_times, spec.sampling);
    let test = build_set(test_params, test_times, spec.shape, &sample)?;
    Ok(DatasetSplits {
        train,
        validation,
        test,
    })
}

/// Burgers splits: a uniform training grid in (Re, t) plus drawn validation
/// and test sets, each sampled on the spatial grid of `spec.grid`.
pub fn make_burgers_dataset(spec: &DatasetSpec) -> Result<DatasetSplits> {
    if spec.kind != DatasetKind::Burgers1d {
        return Err(RomError::invalid("make_burgers_dataset needs a burgers1d spec"));
    }
    spec.validate()?;
    let xs = grid_points(spec.grid, 2.0, spec.shape.width);
    make_splits(spec, |p, t| xs.iter().map(|&x| burgers_exact(x, t, p[0])).collect())
}

/// Blob centers and amplitudes for the synthetic generator, fixed by `seed`.
fn blobs(spec: &DatasetSpec) -> Vec<(f64, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_b10b);
    (0..spec.gaussians)
        .map(|_| (rng.random::<f64>(), rng.random::<f64>(), 0.5 + rng.random::<f64>()))
        .collect()
}

fn periodic_offset(a: f64) -> f64 {
    a - a.round()
}

/// One synthetic 2D field on the unit periodic square.
///
/// Gaussian blobs translate along x with velocity `v`; channel `c` of `m` is
/// scaled by `1 + ½·cos(2πc/m + κ·v·t)`. The parameter is `(v)` or `(v, κ)`.
pub fn synthetic2d_field(spec: &DatasetSpec, centers: &[(f64, f64, f64)], omega: &[f64], t: f64) -> Vec<f64> {
    let v = omega[0];
    let kappa = omega.get(1).copied().unwrap_or(spec.phase_rate);
    let FieldShape {
        channels: m,
        height: ny,
        width: nx,
    } = spec.shape;
    let ys = grid_points(spec.grid, 1.0, ny);
    let xs = grid_points(spec.grid, 1.0, nx);
    let inv = 1.0 / (2.0 * spec.width * spec.width);
    let mut base = vec![0.0; ny * nx];
    for &(cx, cy, amp) in centers {
        let cx = (cx + v * t).rem_euclid(1.0);
        for (iy, y) in ys.iter().enumerate() {
            let dy = periodic_offset(y - cy);
            for (ix, x) in xs.iter().enumerate() {
                let dx = periodic_offset(x - cx);
                base[iy * nx + ix] += amp * (-(dx * dx + dy * dy) * inv).exp();
            }
        }
    }
    let mut out = Vec::with_capacity(m * ny * nx);
    for c in 0..m {
        let factor = 1.0 + 0.5 * (2.0 * PI * c as f64 / m as f64 + kappa * v * t).cos();
        out.extend(base.iter().map(|b| b * factor));
    }
    out
}

pub fn make_synthetic2d_dataset(spec: &DatasetSpec) -> Result<DatasetSplits> {
    if spec.kind != DatasetKind::Synthetic2d {
        return Err(RomError::invalid("make_synthetic2d_dataset needs a synthetic2d spec"));
    }
    spec.validate()?;
    let centers = blobs(spec);
    make_splits(spec, |p, t| synthetic2d_field(spec, &centers, p, t))
}

pub fn make_dataset(spec: &DatasetSpec) -> Result<DatasetSplits> {
    match spec.kind {
        DatasetKind::Burgers1d => make_burgers_dataset(spec),
        DatasetKind::Synthetic2d => make_synthetic2d_dataset(spec),
    }
}

impl SnapshotSet {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(SNAPSHOT_MAGIC, SNAPSHOT_VERSION);
        w.usize(self.param_dim());
        w.usize(self.n_params());
        w.usize(self.n_times());
        w.usize(self.shape.channels);
        w.usize(self.shape.height);
        w.usize(self.shape.width);
        for p in &self.params {
            w.f64s(p);
        }
        w.f64s(&self.times);
        w.f64s(&self.fields);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, SNAPSHOT_MAGIC, SNAPSHOT_VERSION)?;
        let d = r.count("parameter dimension")?;
        let n_p = r.count("parameter count")?;
        let n_t = r.count("time count")?;
        let shape = FieldShape::new(r.count("channels")?, r.count("height")?, r.count("width")?);
        let total = d
            .checked_mul(n_p)
            .and_then(|a| a.checked_add(n_t))
            .and_then(|a| n_p.checked_mul(n_t)?.checked_mul(shape.len())?.checked_add(a))
            .and_then(|a| a.checked_mul(8))
            .unwrap_or(usize::MAX);
        r.require(total, "snapshot payload")?;
        let mut params = Vec::with_capacity(n_p);
        for _ in 0..n_p {
            params.push(r.f64s(d, "parameter values")?);
        }
        let times = r.f64s(n_t, "time grid")?;
        let fields = r.f64s(n_p * n_t * shape.len(), "fields")?;
        r.finish()?;
        SnapshotSet::new(params, times, shape, fields)
    }
}

pub fn write_snapshots(set: &SnapshotSet, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, set.to_bytes())?;
    Ok(())
}

pub fn read_snapshots(path: impl AsRef<Path>) -> Result<SnapshotSet> {
    let bytes = std::fs::read(path)?;
    SnapshotSet::from_bytes(&bytes)
}
