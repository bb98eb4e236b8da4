#![allow(clippy::needless_range_loop)]

mod common;

use bimf::data::{
    build_user_bundles, generate_synthetic, ImageStore, ImageTensor, RatingScale, RatingsDataset,
    SparseRatings, SyntheticConfig, UserImageBundle,
};
use bimf::factorization::{
    joint_loss, pmf_loss, train, update_item_factors, update_user_factors, Checkpoint, ColdInputs,
    Hyperparams, LatentMatrix, ModelKind, NoiseVariances, Trainer, TrainingData,
};
use bimf::network::{LatentNetwork, OptimizerConfig};
use bimf::Error;
use common::{random_dataset, random_image, rng, small_arch};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn random_factors(r: &mut impl Rng, k: usize, cols: usize) -> LatentMatrix {
    LatentMatrix::random(k, cols, 0.7, r)
}

/// Dense (user, item) -> rating table for naive summation.
fn dense(ds: &RatingsDataset) -> Vec<Vec<Option<f64>>> {
    let mut t = vec![vec![None; ds.num_items()]; ds.num_users()];
    for r in ds.ratings() {
        t[r.user][r.item] = Some(r.value);
    }
    t
}

fn naive_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for t in 0..a.len() {
        s += a[t] * b[t];
    }
    s
}

fn naive_sq_dist(a: &[f64], b: Option<&[f64]>) -> f64 {
    let mut s = 0.0;
    for t in 0..a.len() {
        let m = b.map_or(0.0, |b| b[t]);
        s += (a[t] - m) * (a[t] - m);
    }
    s
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn pmf_loss_trivial_cases() {
    let ds = RatingsDataset::from_triplets(2, 2, [(0, 0, 2.0), (1, 1, 3.0)], RatingScale::default())
        .unwrap();
    let sp = SparseRatings::from_dataset(&ds);
    let z = LatentMatrix::zeros(3, 2);
    assert_eq!(pmf_loss(&z, &z, &sp, 1.0, 1.0).unwrap(), (4.0 + 9.0) / 2.0);

    let one = RatingsDataset::from_triplets(1, 1, [(0, 0, 2.0)], RatingScale::default()).unwrap();
    let sp = SparseRatings::from_dataset(&one);
    let u = LatentMatrix::from_vec(1, 1, vec![1.0]).unwrap();
    let v = LatentMatrix::from_vec(1, 1, vec![2.0]).unwrap();
    // lambdas must be positive elsewhere; the loss itself accepts zero
    assert_eq!(pmf_loss(&u, &v, &sp, 0.0, 0.0).unwrap(), 0.0);
}

#[test]
fn pmf_loss_matches_triple_loop() {
    for seed in 0..20 {
        let mut r = rng(seed);
        let ds = random_dataset(&mut r, 5, 4, 0.6);
        let k = r.random_range(1..5);
        let u = random_factors(&mut r, k, 5);
        let v = random_factors(&mut r, k, 4);
        let (lu, lv) = (r.random_range(0.01..10.0), r.random_range(0.01..10.0));
        let table = dense(&ds);
        let mut brute = 0.0;
        for i in 0..5 {
            for j in 0..4 {
                if let Some(x) = table[i][j] {
                    let mut p = 0.0;
                    for t in 0..k {
                        p += u.col(i)[t] * v.col(j)[t];
                    }
                    brute += 0.5 * (x - p) * (x - p);
                }
            }
        }
        for i in 0..5 {
            for t in 0..k {
                brute += 0.5 * lu * u.col(i)[t] * u.col(i)[t];
            }
        }
        for j in 0..4 {
            for t in 0..k {
                brute += 0.5 * lv * v.col(j)[t] * v.col(j)[t];
            }
        }
        let got = pmf_loss(&u, &v, &SparseRatings::from_dataset(&ds), lu, lv).unwrap();
        assert!(close(got, brute, 1e-12), "{got} vs {brute}");
    }
}

struct SideInfo {
    store: ImageStore,
    bundles: Vec<Option<UserImageBundle>>,
}

fn side_info(r: &mut impl Rng, ds: &RatingsDataset, slots: usize) -> SideInfo {
    let arch = small_arch(8);
    let mut store = ImageStore::new(8, 8, 3);
    for id in ds.item_ids() {
        store.insert(id.clone(), random_image(r, arch.input)).unwrap();
    }
    let bundles = build_user_bundles(ds, &store, slots, 3).unwrap();
    SideInfo { store, bundles }
}

#[test]
fn joint_loss_matches_brute_force() {
    let arch = small_arch(8);
    for seed in 0..6 {
        let mut r = rng(100 + seed);
        let (n, m, k, p) = (5, 6, 3, 2);
        let ds = random_dataset(&mut r, n, m, 0.5);
        let side = side_info(&mut r, &ds, p);
        let data = TrainingData::with_images(&ds, &side.store, side.bundles.clone()).unwrap();
        let un = LatentNetwork::init(&arch, p, k, 0.2, &mut r).unwrap();
        let inet = LatentNetwork::init(&arch, 1, k, 0.2, &mut r).unwrap();
        let u = random_factors(&mut r, k, n);
        let v = random_factors(&mut r, k, m);
        let hyper = Hyperparams {
            k,
            lambda_u: 0.7,
            lambda_v: 1.3,
            lambda_w_user: 0.05,
            lambda_w_item: 0.2,
            ..Hyperparams::default()
        };
        let got = joint_loss(&u, &v, Some(&un), Some(&inet), &data, &hyper).unwrap();

        let table = dense(&ds);
        let mut brute = 0.0;
        for i in 0..n {
            for j in 0..m {
                if let Some(x) = table[i][j] {
                    let e = x - naive_dot(u.col(i), v.col(j));
                    brute += 0.5 * e * e;
                }
            }
        }
        for i in 0..n {
            let mean = side.bundles[i].as_ref().map(|b| {
                let imgs: Vec<&ImageTensor> = b
                    .items
                    .iter()
                    .map(|&j| side.store.get(&ds.item_ids()[j]).unwrap().as_ref())
                    .collect();
                un.forward(&imgs).unwrap()
            });
            brute += 0.5 * 0.7 * naive_sq_dist(u.col(i), mean.as_deref());
        }
        for j in 0..m {
            let img = side.store.get(&ds.item_ids()[j]).unwrap();
            let mean = inet.forward(&[img.as_ref()]).unwrap();
            brute += 0.5 * 1.3 * naive_sq_dist(v.col(j), Some(&mean));
        }
        let sq = |net: &LatentNetwork| -> f64 {
            let mut s = 0.0;
            for t in 0..net.num_tensors() {
                for w in net.tensor(t) {
                    s += w * w;
                }
            }
            s
        };
        brute += 0.5 * 0.05 * sq(&un) + 0.5 * 0.2 * sq(&inet);
        assert!(close(got.total, brute, 1e-12), "{} vs {brute}", got.total);
    }
}

#[test]
fn joint_loss_with_zero_encoders_is_pmf_loss() {
    let arch = small_arch(8);
    let mut r = rng(7);
    let ds = random_dataset(&mut r, 6, 5, 0.5);
    let side = side_info(&mut r, &ds, 2);
    let data = TrainingData::with_images(&ds, &side.store, side.bundles.clone()).unwrap();
    let k = 4;
    let u = random_factors(&mut r, k, 6);
    let v = random_factors(&mut r, k, 5);
    let hyper = Hyperparams { k, lambda_u: 2.0, lambda_v: 0.5, ..Hyperparams::default() };
    let zu = LatentNetwork::zeros(&arch, 2, k).unwrap();
    let zi = LatentNetwork::zeros(&arch, 1, k).unwrap();
    let joint = joint_loss(&u, &v, Some(&zu), Some(&zi), &data, &hyper).unwrap();
    let pmf = pmf_loss(&u, &v, &SparseRatings::from_dataset(&ds), 2.0, 0.5).unwrap();
    assert_eq!(joint.total, pmf);
}

#[test]
fn joint_loss_at_prior_means_without_ratings_is_weight_prior() {
    let arch = small_arch(8);
    let mut r = rng(8);
    let ds = RatingsDataset::from_triplets(3, 4, [], RatingScale::default()).unwrap();
    let mut store = ImageStore::new(8, 8, 3);
    for id in ds.item_ids() {
        store.insert(id.clone(), random_image(&mut r, arch.input)).unwrap();
    }
    let bundles: Vec<Option<UserImageBundle>> = (0..3)
        .map(|i| Some(UserImageBundle { user: i, items: vec![i, i + 1], real: vec![true, true] }))
        .collect();
    let data = TrainingData::with_images(&ds, &store, bundles.clone()).unwrap();
    let k = 3;
    let un = LatentNetwork::init(&arch, 2, k, 0.2, &mut r).unwrap();
    let inet = LatentNetwork::init(&arch, 1, k, 0.2, &mut r).unwrap();
    let ucols: Vec<Vec<f64>> = bundles
        .iter()
        .map(|b| {
            let b = b.as_ref().unwrap();
            let imgs: Vec<&ImageTensor> =
                b.items.iter().map(|&j| store.get(&j.to_string()).unwrap().as_ref()).collect();
            un.forward(&imgs).unwrap()
        })
        .collect();
    let vcols: Vec<Vec<f64>> = (0..4)
        .map(|j| inet.forward(&[store.get(&j.to_string()).unwrap().as_ref()]).unwrap())
        .collect();
    let u = LatentMatrix::from_columns(k, &ucols).unwrap();
    let v = LatentMatrix::from_columns(k, &vcols).unwrap();
    let hyper = Hyperparams { k, lambda_w_user: 0.3, lambda_w_item: 0.6, ..Hyperparams::default() };
    let loss = joint_loss(&u, &v, Some(&un), Some(&inet), &data, &hyper).unwrap();
    let expected = 0.5 * 0.3 * un.weight_sq_norm() + 0.5 * 0.6 * inet.weight_sq_norm();
    assert!(close(loss.total, expected, 1e-14));
    assert_eq!(loss.fit, 0.0);
}

#[test]
fn lambdas_are_variance_ratios_and_scale_the_regularizer_linearly() {
    let var = NoiseVariances { rating: 0.5, user: 2.0, item: 0.25, user_weights: 5.0, item_weights: 0.1 };
    let h = Hyperparams::default().with_variances(var).unwrap();
    assert_eq!(h.lambda_u, 0.5 / 2.0);
    assert_eq!(h.lambda_v, 0.5 / 0.25);
    assert_eq!(h.lambda_w_user, 0.5 / 5.0);
    assert_eq!(h.lambda_w_item, 0.5 / 0.1);

    let arch = small_arch(8);
    let mut r = rng(9);
    let ds = random_dataset(&mut r, 5, 5, 0.5);
    let side = side_info(&mut r, &ds, 2);
    let data = TrainingData::with_images(&ds, &side.store, side.bundles.clone()).unwrap();
    let k = 2;
    let un = LatentNetwork::init(&arch, 2, k, 0.2, &mut r).unwrap();
    let inet = LatentNetwork::init(&arch, 1, k, 0.2, &mut r).unwrap();
    let u = random_factors(&mut r, k, 5);
    let v = random_factors(&mut r, k, 5);
    let base = Hyperparams { k, ..h };
    let scaled = Hyperparams {
        lambda_u: 3.0 * base.lambda_u,
        lambda_v: 3.0 * base.lambda_v,
        lambda_w_user: 3.0 * base.lambda_w_user,
        lambda_w_item: 3.0 * base.lambda_w_item,
        ..base.clone()
    };
    let a = joint_loss(&u, &v, Some(&un), Some(&inet), &data, &base).unwrap();
    let b = joint_loss(&u, &v, Some(&un), Some(&inet), &data, &scaled).unwrap();
    assert_eq!(a.fit, b.fit);
    assert!(close(b.total - b.fit, 3.0 * (a.total - a.fit), 1e-12));
}

#[test]
fn scalar_update_matches_algebra() {
    let ds = RatingsDataset::from_triplets(1, 1, [(0, 0, 4.0)], RatingScale::default()).unwrap();
    let sp = SparseRatings::from_dataset(&ds);
    let v = LatentMatrix::from_vec(1, 1, vec![1.0]).unwrap();
    let c = 0.5;
    let mean = LatentMatrix::from_vec(1, 1, vec![c]).unwrap();
    for lambda in [0.1, 1.0, 7.0] {
        let u = update_user_factors(&v, &sp, Some(&mean), lambda).unwrap();
        let expected = (4.0 + lambda * c) / (1.0 + lambda);
        assert!((u.col(0)[0] - expected).abs() < 1e-15);
        let back = update_item_factors(&v, &sp, Some(&mean), lambda).unwrap();
        assert!((back.col(0)[0] - expected).abs() < 1e-15);
    }
}

#[test]
fn cold_columns_copy_the_prior_mean_exactly() {
    let mut r = rng(10);
    // user 2 and item 3 have no ratings
    let ds = RatingsDataset::from_triplets(
        3,
        4,
        [(0, 0, 3.0), (0, 1, 4.0), (1, 2, 2.0), (1, 0, 5.0)],
        RatingScale::default(),
    )
    .unwrap();
    let sp = SparseRatings::from_dataset(&ds);
    let k = 5;
    let um = random_factors(&mut r, k, 3);
    let vm = random_factors(&mut r, k, 4);
    let v = random_factors(&mut r, k, 4);
    let u = update_user_factors(&v, &sp, Some(&um), 0.37).unwrap();
    assert_eq!(u.col(2), um.col(2));
    let v2 = update_item_factors(&u, &sp, Some(&vm), 0.37).unwrap();
    assert_eq!(v2.col(3), vm.col(3));
    let plain = update_user_factors(&v, &sp, None, 0.37).unwrap();
    assert!(plain.col(2).iter().all(|&x| x == 0.0));
}

/// lambda (u_i - mean_i) + sum_j I_ij (u_i.v_j - r_ij) v_j
fn block_gradient(x: &[f64], others: &LatentMatrix, entries: (&[usize], &[f64]), mean: &[f64], lambda: f64) -> f64 {
    let k = x.len();
    let mut g: Vec<f64> = (0..k).map(|t| lambda * (x[t] - mean[t])).collect();
    for (&j, &r) in entries.0.iter().zip(entries.1) {
        let e = naive_dot(x, others.col(j)) - r;
        for t in 0..k {
            g[t] += e * others.col(j)[t];
        }
    }
    g.iter().map(|a| a * a).sum::<f64>().sqrt()
}

#[test]
fn updates_zero_the_block_gradient() {
    for seed in 0..10 {
        let mut r = rng(200 + seed);
        let (n, m) = (6, r.random_range(3..12));
        let k = r.random_range(1..8);
        let ds = random_dataset(&mut r, n, m, 0.6);
        let sp = SparseRatings::from_dataset(&ds);
        let um = random_factors(&mut r, k, n);
        let vm = random_factors(&mut r, k, m);
        let v = random_factors(&mut r, k, m);
        let lambda = r.random_range(0.05..5.0);
        let u = update_user_factors(&v, &sp, Some(&um), lambda).unwrap();
        for i in 0..n {
            let g = block_gradient(u.col(i), &v, sp.user_row(i), um.col(i), lambda);
            assert!(g < 1e-9, "user {i}: {g}");
        }
        let v2 = update_item_factors(&u, &sp, Some(&vm), lambda).unwrap();
        for j in 0..m {
            let g = block_gradient(v2.col(j), &u, sp.item_col(j), vm.col(j), lambda);
            assert!(g < 1e-9, "item {j}: {g}");
        }
    }
}

#[test]
fn small_lambda_item_update_approaches_least_squares() {
    let mut r = rng(11);
    let (n, m, k) = (12, 4, 3);
    let triplets: Vec<(usize, usize, f64)> = (0..n)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .map(|(i, j)| (i, j, 1.0 + ((i * 7 + j * 3) % 5) as f64))
        .collect();
    let ds = RatingsDataset::from_triplets(n, m, triplets, RatingScale::default()).unwrap();
    let sp = SparseRatings::from_dataset(&ds);
    let u = random_factors(&mut r, k, n);
    let v = update_item_factors(&u, &sp, None, 1e-10).unwrap();
    let a = DMatrix::from_fn(n, k, |i, t| u.col(i)[t]);
    let table = dense(&ds);
    for j in 0..m {
        let b = DVector::from_fn(n, |i, _| table[i][j].unwrap());
        let ls = (a.transpose() * &a).lu().solve(&(a.transpose() * b)).unwrap();
        for t in 0..k {
            assert!((v.col(j)[t] - ls[t]).abs() < 1e-6, "{} vs {}", v.col(j)[t], ls[t]);
        }
    }
}

#[test]
fn nonpositive_lambda_is_rejected() {
    let ds = RatingsDataset::from_triplets(1, 1, [(0, 0, 4.0)], RatingScale::default()).unwrap();
    let sp = SparseRatings::from_dataset(&ds);
    let v = LatentMatrix::zeros(2, 1);
    assert!(update_user_factors(&v, &sp, None, 0.0).is_err());
}

fn checkpoint_from(u: LatentMatrix, v: LatentMatrix) -> Checkpoint {
    let (n, m) = (u.cols(), v.cols());
    Checkpoint {
        kind: ModelKind::Pmf,
        hyper: Hyperparams { k: u.dim(), ..Hyperparams::default() },
        scale: RatingScale::default(),
        train_mean: 3.0,
        u,
        v,
        user_net: None,
        item_net: None,
        user_ids: (0..n).map(|i| i.to_string()).collect(),
        item_ids: (0..m).map(|j| j.to_string()).collect(),
        user_train_counts: vec![1; n],
        item_train_counts: vec![1; m],
    }
}

#[test]
fn predict_examples() {
    let mut r = rng(12);
    let zero_u = checkpoint_from(LatentMatrix::zeros(4, 1), random_factors(&mut r, 4, 3));
    for j in 0..3 {
        assert_eq!(zero_u.predict(0, j).unwrap(), 0.0);
    }
    let e1 = LatentMatrix::from_vec(3, 1, vec![1.0, 0.0, 0.0]).unwrap();
    assert_eq!(checkpoint_from(e1.clone(), e1).predict(0, 0).unwrap(), 1.0);

    let ck = checkpoint_from(random_factors(&mut r, 50, 4), random_factors(&mut r, 50, 5));
    for i in 0..4 {
        for j in 0..5 {
            let oracle = naive_dot(ck.u.col(i), ck.v.col(j));
            assert!((ck.predict(i, j).unwrap() - oracle).abs() < 1e-12);
        }
    }
    assert!(ck.predict(4, 0).is_err());
}

#[test]
fn cold_item_prediction_needs_an_image() {
    let arch = small_arch(8);
    let mut r = rng(13);
    let mut ck = checkpoint_from(random_factors(&mut r, 3, 2), random_factors(&mut r, 3, 2));
    ck.item_train_counts[1] = 0;
    assert!(matches!(ck.predict(0, 1), Err(Error::ColdWithoutImage(_))));
    let net = LatentNetwork::init(&arch, 1, 3, 0.3, &mut r).unwrap();
    let img = random_image(&mut r, arch.input);
    ck.item_net = Some(net.clone());
    let cold = ColdInputs { item_image: Some(&img), user_images: None };
    let expected = naive_dot(ck.u.col(0), &net.forward(&[&img]).unwrap());
    assert!((ck.predict_with(0, 1, &cold).unwrap() - expected).abs() < 1e-12);
    ck.u.col_mut(0).iter_mut().for_each(|x| *x *= 1000.0);
    let clamped = ck.predict_clamped(0, 1, &cold).unwrap();
    assert!((1.0..=5.0).contains(&clamped));
}

fn small_synthetic(seed: u64) -> (RatingsDataset, ImageStore) {
    let cfg = SyntheticConfig {
        num_users: 40,
        num_items: 30,
        latent_dim: 3,
        observed_fraction: 0.2,
        image_height: 8,
        image_width: 8,
        ..SyntheticConfig::default()
    };
    let (ds, store, _) = generate_synthetic(&cfg, seed).unwrap();
    (ds, store)
}

fn small_hyper() -> Hyperparams {
    Hyperparams {
        k: 3,
        outer_max_iters: 3,
        cnn_epochs_per_iter: 2,
        optimizer: OptimizerConfig { learning_rate: 0.01, ..OptimizerConfig::default() },
        ..Hyperparams::default()
    }
}

#[test]
fn checkpoint_round_trip_is_byte_stable_and_predicts_identically() {
    let (ds, store) = small_synthetic(1);
    let bundles = build_user_bundles(&ds, &store, 2, 1).unwrap();
    let data = TrainingData::with_images(&ds, &store, bundles).unwrap();
    let (ck, _) = train(ModelKind::BiIsfmf, &data, &small_hyper(), &small_arch(8), 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bimf");
    ck.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded.to_bytes().unwrap(), std::fs::read(&path).unwrap());
    assert_eq!(loaded, ck);
    for i in 0..ds.num_users() {
        for j in 0..ds.num_items() {
            if !ck.is_cold_item(j) && !ck.is_cold_user(i) {
                assert_eq!(loaded.predict(i, j).unwrap().to_bits(), ck.predict(i, j).unwrap().to_bits());
            }
        }
    }
    let mut bytes = ck.to_bytes().unwrap();
    bytes[0] = b'X';
    assert!(Checkpoint::from_bytes(&bytes).is_err());
    assert!(Checkpoint::from_bytes(&bytes[..10]).is_err());
}

#[test]
fn infinite_tolerance_runs_one_iteration() {
    let (ds, _) = small_synthetic(2);
    let hyper = Hyperparams { rel_tol: f64::INFINITY, outer_max_iters: 10, ..small_hyper() };
    let (_, report) = train(ModelKind::Pmf, &TrainingData::ratings_only(&ds), &hyper, &small_arch(8), 1).unwrap();
    assert_eq!(report.iterations.len(), 1);
    assert!(report.converged);
    assert_eq!(report.loss_trace().len(), 2);
}

#[test]
fn bilateral_first_iteration_descends() {
    let (ds, store) = small_synthetic(3);
    let bundles = build_user_bundles(&ds, &store, 2, 1).unwrap();
    let data = TrainingData::with_images(&ds, &store, bundles).unwrap();
    let (_, report) = train(ModelKind::BiIsfmf, &data, &small_hyper(), &small_arch(8), 2).unwrap();
    assert!(report.iterations[0].loss_after_item_encoder < report.initial_loss);
    assert!(report.iterations[0].user_encoder_trace.is_some());
    assert!(report.iterations[0].item_encoder_trace.is_some());
}

#[test]
fn image_models_require_images() {
    let (ds, _) = small_synthetic(4);
    let data = TrainingData::ratings_only(&ds);
    for kind in [ModelKind::IsfmfItem, ModelKind::BiIsfmf] {
        let err = train(kind, &data, &small_hyper(), &small_arch(8), 2).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)), "{err}");
    }
}

#[test]
fn divergence_returns_last_good_checkpoint() {
    let (ds, store) = small_synthetic(5);
    let bundles = build_user_bundles(&ds, &store, 2, 1).unwrap();
    let data = TrainingData::with_images(&ds, &store, bundles).unwrap();
    let hyper = Hyperparams {
        optimizer: OptimizerConfig { learning_rate: 1e8, momentum: 0.9, batch_size: 2 },
        cnn_epochs_per_iter: 20,
        ..small_hyper()
    };
    match train(ModelKind::IsfmfItem, &data, &hyper, &small_arch(8), 2) {
        Err(Error::Diverged { last_good, .. }) => {
            assert!(last_good.u.is_finite() && last_good.v.is_finite());
            assert_eq!(last_good.kind, ModelKind::IsfmfItem);
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn training_is_deterministic_per_seed() {
    let (ds, store) = small_synthetic(6);
    let bundles = build_user_bundles(&ds, &store, 2, 1).unwrap();
    let data = TrainingData::with_images(&ds, &store, bundles).unwrap();
    let run = || {
        Trainer::new(ModelKind::BiIsfmf, small_hyper(), small_arch(8), 2)
            .train(&data)
            .unwrap()
    };
    let (c1, r1) = run();
    let (c2, r2) = run();
    assert_eq!(c1.to_bytes().unwrap(), c2.to_bytes().unwrap());
    assert_eq!(r1.loss_trace(), r2.loss_trace());
}
