mod common;

use common::*;
use latent_rom::data::{make_burgers_dataset, DatasetSpec, SnapshotSet};
use latent_rom::nn::{silu, FieldShape, FieldTensor, LayerSpec, TrainConfig};
use latent_rom::numerics::RealMatrix;
use latent_rom::reduction::*;
use proptest::prelude::*;

fn set_from_columns(s: &RealMatrix) -> SnapshotSet {
    let n = s.ncols();
    SnapshotSet::new(
        vec![vec![1.0]],
        (0..n).map(|k| k as f64).collect(),
        FieldShape::new(1, 1, s.nrows()),
        s.as_slice().to_vec(),
    )
    .unwrap()
}

fn rank3_data(seed: u64) -> RealMatrix {
    random_matrix(20, 3, seed) * random_matrix(3, 15, seed + 1)
}

#[test]
fn pod_identical_snapshots() {
    let set = set_from_columns(&RealMatrix::from_element(5, 4, 0.25));
    let m = pod_fit(&set, PodRank::Energy(0.0)).unwrap();
    assert_eq!(m.n_rb(), 1);
    assert_eq!(m.encode(&[0.25; 5]).unwrap(), vec![0.0]);
    assert_eq!(m.decode(&[0.0]).unwrap(), vec![0.25; 5]);
}

#[test]
fn pod_affine_line_exact() {
    let a = random_matrix(12, 1, 1);
    let b = random_matrix(12, 1, 2);
    let s = RealMatrix::from_fn(12, 9, |i, j| a[(i, 0)] + 0.3 * j as f64 * b[(i, 0)]);
    let m = pod_fit(&set_from_columns(&s), PodRank::Energy(0.0)).unwrap();
    assert_eq!(m.n_rb(), 1);
    for col in s.column_iter() {
        let u: Vec<f64> = col.iter().copied().collect();
        let r = m.decode(&m.encode(&u).unwrap()).unwrap();
        assert!(norm(&r.iter().zip(&u).map(|(x, y)| x - y).collect::<Vec<_>>()) <= 1e-10);
    }
}

#[test]
fn pod_rank_three_data() {
    // centered rank-3 data: subtract the column mean first so the mean does not add a direction
    let mut s = rank3_data(5);
    let mean = s.column_mean();
    for mut c in s.column_iter_mut() {
        c -= &mean;
    }
    let m = pod_fit(&set_from_columns(&s), PodRank::Energy(0.0)).unwrap();
    assert_eq!(m.n_rb(), 3);
    assert!(projection_error(&s, &m.mean, &m.basis) <= 1e-10 * frob(&s));
    assert!(pod_fit(&set_from_columns(&s), PodRank::Fixed(5)).is_err());
}

#[test]
fn pod_basis_orthonormal_and_unit_coordinates() {
    let s = random_matrix(30, 12, 9);
    let m = pod_fit(&set_from_columns(&s), PodRank::Fixed(4)).unwrap();
    let g = m.basis.transpose() * &m.basis;
    assert!(frob(&(g - RealMatrix::identity(4, 4))) <= 1e-10);
    assert_eq!(m.encode(&m.mean).unwrap().iter().map(|v| v.abs()).fold(0.0, f64::max) <= 1e-14, true);
    let u: Vec<f64> = m.mean.iter().zip(m.basis.column(0).iter()).map(|(a, b)| a + b).collect();
    let q = m.encode(&u).unwrap();
    assert!((q[0] - 1.0).abs() < 1e-12 && q[1..].iter().all(|v| v.abs() < 1e-12));
    assert!(m.encode(&[0.0; 3]).is_err());
}

#[test]
fn pod_projection_beats_random_bases() {
    let s = random_matrix(40, 25, 17);
    let m = pod_fit(&set_from_columns(&s), PodRank::Fixed(5)).unwrap();
    let pod_err = projection_error(&s, &m.mean, &m.basis);
    let u: Vec<f64> = random_matrix(40, 1, 99).as_slice().to_vec();
    let recon = m.decode(&m.encode(&u).unwrap()).unwrap();
    let own = norm(&u.iter().zip(&recon).map(|(a, b)| a - b).collect::<Vec<_>>());
    for k in 0..100 {
        let w = random_orthonormal(40, 5, 1000 + k);
        assert!(pod_err <= projection_error(&s, &m.mean, &w));
        // a rotated copy of the same subspace projects identically
        let rotated = &m.basis * random_orthonormal(5, 5, 2000 + k);
        let single = projection_error(&RealMatrix::from_column_slice(40, 1, &u), &m.mean, &rotated);
        assert!((own - single).abs() <= 1e-10 * own.max(1.0));
    }
}

fn linear_widths(m: &CaeModel) -> Vec<(usize, usize)> {
    m.network
        .layers()
        .iter()
        .filter_map(|l| match *l {
            LayerSpec::Linear { in_features, out_features, .. } => Some((in_features, out_features)),
            _ => None,
        })
        .collect()
}

#[test]
fn reference_architectures() {
    let burgers = CaeModel::new(FieldShape::new(1, 1, 128), &CaeArch::burgers(2), 0).unwrap();
    assert_eq!(linear_widths(&burgers)[..2], [(64, 11), (11, 2)]);
    let rbc = CaeModel::new(FieldShape::new(3, 64, 128), &CaeArch::planar(10), 0).unwrap();
    assert_eq!(linear_widths(&rbc)[..2], [(512, 71), (71, 10)]);
    let khi = CaeModel::new(FieldShape::new(4, 128, 128), &CaeArch::planar(8), 0).unwrap();
    assert_eq!(linear_widths(&khi)[..2], [(1024, 90), (90, 8)]);
    assert_eq!(burgers.network.shape_at(1), FieldShape::new(32, 1, 64));
    assert_eq!(rbc.network.shape_at(1), FieldShape::new(16, 32, 64));
}

#[test]
fn shape_round_trip_all_architectures() {
    let cases = [
        (FieldShape::new(1, 1, 128), CaeArch::burgers(2)),
        (FieldShape::new(3, 64, 128), CaeArch::planar(2)),
        (FieldShape::new(4, 128, 128), CaeArch::planar(2)),
    ];
    for (shape, arch) in cases {
        for n_latent in [2, 6, 8, 10] {
            let m = CaeModel::new(shape, &CaeArch { n_latent, ..arch.clone() }, 1).unwrap();
            assert_eq!(m.n_latent(), n_latent);
            assert_eq!(m.field_shape(), shape);
            let batch = 1 + n_latent % 3;
            let x = FieldTensor::new(batch, shape, random_matrix(1, batch * shape.len(), 4).as_slice().to_vec()).unwrap();
            let qs = m.encode_batch(&x).unwrap();
            assert_eq!(qs.len(), batch);
            assert!(qs.iter().all(|q| q.len() == n_latent));
            let ys = m.decode_batch(&qs).unwrap();
            assert!(ys.iter().all(|y| y.len() == shape.len()));
            for (b, q) in qs.iter().enumerate() {
                assert_eq!(q, &m.encode(x.sample(b)).unwrap());
            }
        }
    }
}

#[test]
fn indivisible_grid_rejected() {
    assert!(CaeModel::new(FieldShape::new(1, 1, 100), &CaeArch::burgers(2), 0).is_err());
}

#[test]
fn zero_final_encoder_layer_gives_constant_latent() {
    let mut m = CaeModel::new(FieldShape::new(1, 1, 128), &CaeArch::burgers(2), 3).unwrap();
    let last = m.split - 1;
    m.params.layers[last].weight.iter_mut().for_each(|w| *w = 0.0);
    let bias = m.params.layers[last].bias.clone();
    let expected: Vec<f64> = bias.iter().map(|b| silu(*b)).collect();
    for seed in 0..3 {
        let u = random_matrix(1, 128, seed).as_slice().to_vec();
        assert_eq!(m.encode(&u).unwrap(), expected);
    }
}

#[test]
fn reducer_file_dispatch() {
    let dir = tempfile::tempdir().unwrap();
    let pod = ReducerModel::Pod(pod_fit(&set_from_columns(&random_matrix(8, 6, 1)), PodRank::Fixed(2)).unwrap());
    let cae = ReducerModel::Cae(CaeModel::new(FieldShape::new(1, 1, 16), &CaeArch { conv_layers: 2, channels: 2, ..CaeArch::burgers(2) }, 0).unwrap());
    for (name, r) in [("a.bin", pod), ("b.bin", cae)] {
        let path = dir.path().join(name);
        r.save(&path).unwrap();
        assert_eq!(ReducerModel::load(&path).unwrap(), r);
    }
    std::fs::write(dir.path().join("c.bin"), b"JUNKJUNK").unwrap();
    assert!(ReducerModel::load(dir.path().join("c.bin")).is_err());
}

fn small_burgers() -> (SnapshotSet, SnapshotSet) {
    let spec = DatasetSpec {
        shape: FieldShape::new(1, 1, 32),
        train_params: vec![3],
        train_times: 11,
        ..DatasetSpec::burgers()
    };
    let s = make_burgers_dataset(&spec).unwrap();
    (s.train, s.validation)
}

#[test]
fn grid_enumeration_order() {
    let points = GridSearchSpace::default().points();
    assert_eq!(points.len(), 60);
    assert_eq!((points[0].weight_decay, points[0].conv_layers, points[0].n_latent), (1e-8, 4, 2));
    assert_eq!((points[1].weight_decay, points[1].conv_layers, points[1].n_latent), (1e-8, 4, 4));
    assert_eq!((points[5].weight_decay, points[5].conv_layers, points[5].n_latent), (1e-8, 5, 2));
    assert_eq!((points[59].weight_decay, points[59].conv_layers, points[59].n_latent), (1e-11, 6, 10));
    assert!(points.iter().enumerate().all(|(i, p)| p.index == i));
}

#[test]
fn grid_singleton_equals_training() {
    let (train, val) = small_burgers();
    let arch = CaeArch { conv_layers: 3, channels: 4, ..CaeArch::burgers(2) };
    let cfg = TrainConfig { max_epochs: 5, seed: 7, ..TrainConfig::default() };
    let space = GridSearchSpace { weight_decays: vec![1e-11], conv_layers: vec![3], latent_dims: vec![2] };
    let result = grid_search(&space, &arch, &train, &val, &cfg).unwrap();
    let (model, log) = train_cae(&arch, &train, &val, &cfg).unwrap();
    assert_eq!(result.best_index, 0);
    assert_eq!(result.best, model);
    assert_eq!(result.best_log, log);
    assert_eq!(result.report.len(), 1);
}

#[test]
fn grid_records_failures_and_is_deterministic() {
    let (train, val) = small_burgers();
    let arch = CaeArch { channels: 2, ..CaeArch::burgers(2) };
    let cfg = TrainConfig { max_epochs: 3, ..TrainConfig::default() };
    // six stride-2 layers cannot fit a width-32 field
    let space = GridSearchSpace { weight_decays: vec![1e-10], conv_layers: vec![2, 6], latent_dims: vec![1, 2] };
    let a = grid_search(&space, &arch, &train, &val, &cfg).unwrap();
    let b = grid_search(&space, &arch, &train, &val, &cfg).unwrap();
    assert_eq!(a.report, b.report);
    assert_eq!(a.report.len(), 4);
    assert!(a.report[..2].iter().all(|r| r.failure.is_none() && r.validation_error.is_some()));
    assert!(a.report[2..].iter().all(|r| r.failure.is_some() && r.validation_error.is_none()));
    let errs: Vec<f64> = a.report[..2].iter().map(|r| r.validation_error.unwrap()).collect();
    let expected = if errs[1] < errs[0] { 1 } else { 0 };
    assert_eq!(a.best_index, expected);
    assert_eq!(a.report.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn prop_pod_idempotent(rows in 5usize..30, cols in 2usize..12, rank in 1usize..4, seed in 0u64..10_000) {
        let s = random_matrix(rows, cols, seed);
        let r = rank.min(cols - 1).max(1);
        let m = pod_fit(&set_from_columns(&s), PodRank::Fixed(r)).unwrap();
        let q: Vec<f64> = random_matrix(r, 1, seed + 1).as_slice().to_vec();
        let back = m.encode(&m.decode(&q).unwrap()).unwrap();
        prop_assert!(back.iter().zip(&q).all(|(a, b)| (a - b).abs() <= 1e-10));
    }

    #[test]
    fn prop_pod_optimal_among_random_bases(rows in 6usize..25, cols in 3usize..12, seed in 0u64..10_000) {
        let s = random_matrix(rows, cols, seed);
        let r = 1 + seed as usize % (cols.min(rows) - 1);
        let m = pod_fit(&set_from_columns(&s), PodRank::Fixed(r)).unwrap();
        let e = projection_error(&s, &m.mean, &m.basis);
        for k in 0..10 {
            prop_assert!(e <= projection_error(&s, &m.mean, &random_orthonormal(rows, r, seed * 31 + k)) + 1e-12);
        }
    }
}
