use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::hyper::{Hyperparams, ModelKind};
use super::latent::LatentMatrix;
use super::objective::{joint_loss_terms, LossBreakdown};
use super::update::{update_item_factors, update_user_factors};
use crate::data::{ImageStore, ImageTensor, RatingsDataset, SparseRatings, UserImageBundle};
use crate::error::{Error, Result};
use crate::network::{
    bundle_images, train_epochs, Architecture, LatentNetwork, LossTrace, OptimizerState,
};
use crate::parallel;

// RNG stream ids, one per independently seeded component
const STREAM_FACTORS: u64 = 0;
const STREAM_USER_NET: u64 = 1;
const STREAM_ITEM_NET: u64 = 2;
const STREAM_USER_OPT: u64 = 3;
const STREAM_ITEM_OPT: u64 = 4;

/// Training ratings with their side information, aligned to the dataset's
/// item and user indices.
#[derive(Debug, Clone)]
pub struct TrainingData<'a> {
    pub train: &'a RatingsDataset,
    pub item_images: Vec<Option<Arc<ImageTensor>>>,
    pub user_bundles: Vec<Option<UserImageBundle>>,
}

impl<'a> TrainingData<'a> {
    pub fn ratings_only(train: &'a RatingsDataset) -> Self {
        TrainingData {
            train,
            item_images: vec![None; train.num_items()],
            user_bundles: vec![None; train.num_users()],
        }
    }

    pub fn with_images(
        train: &'a RatingsDataset,
        images: &ImageStore,
        user_bundles: Vec<Option<UserImageBundle>>,
    ) -> Result<Self> {
        if user_bundles.len() != train.num_users() {
            return Err(Error::DimensionMismatch(format!(
                "{} bundles for {} users",
                user_bundles.len(),
                train.num_users()
            )));
        }
        Ok(TrainingData {
            train,
            item_images: images.aligned(train),
            user_bundles,
        })
    }

    fn user_inputs(&self) -> Result<Vec<(usize, Vec<&ImageTensor>)>> {
        self.user_bundles
            .iter()
            .flatten()
            .map(|b| Ok((b.user, bundle_images(b, &self.item_images)?)))
            .collect()
    }

    fn item_inputs(&self) -> Vec<(usize, Vec<&ImageTensor>)> {
        self.item_images
            .iter()
            .enumerate()
            .filter_map(|(j, img)| img.as_deref().map(|img| (j, vec![img])))
            .collect()
    }
}

/// Joint objective of one outer iteration and its parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub loss_start: f64,
    pub loss_after_users: f64,
    pub loss_after_items: f64,
    pub loss_after_user_encoder: f64,
    pub loss_after_item_encoder: f64,
    pub breakdown: LossBreakdown,
    pub user_encoder_trace: Option<LossTrace>,
    pub item_encoder_trace: Option<LossTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub kind: ModelKind,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub converged: bool,
    pub iterations: Vec<IterationRecord>,
    pub wall_time_secs: f64,
}

impl TrainReport {
    /// Joint loss before training and after every outer iteration.
    pub fn loss_trace(&self) -> Vec<f64> {
        std::iter::once(self.initial_loss)
            .chain(self.iterations.iter().map(|r| r.loss_after_item_encoder))
            .collect()
    }
}

/// Prior means of every column: network output where side information
/// exists, zero elsewhere. `None` without a network.
pub fn prior_means(
    net: Option<&LatentNetwork>,
    inputs: &[(usize, Vec<&ImageTensor>)],
    cols: usize,
    k: usize,
) -> Result<Option<LatentMatrix>> {
    let Some(net) = net else { return Ok(None) };
    let outputs = parallel::map_slice(inputs, |(_, imgs)| net.forward(imgs));
    let mut means = LatentMatrix::zeros(k, cols);
    for ((c, _), out) in inputs.iter().zip(outputs) {
        means.col_mut(*c).copy_from_slice(&out?);
    }
    Ok(Some(means))
}

/// Joint MAP objective for the given factors and encoders.
pub fn joint_loss(
    u: &LatentMatrix,
    v: &LatentMatrix,
    user_net: Option<&LatentNetwork>,
    item_net: Option<&LatentNetwork>,
    data: &TrainingData<'_>,
    hyper: &Hyperparams,
) -> Result<LossBreakdown> {
    let sparse = SparseRatings::from_dataset(data.train);
    let user_inputs = data.user_inputs()?;
    let item_inputs = data.item_inputs();
    let um = prior_means(user_net, &user_inputs, u.cols(), u.dim())?;
    let im = prior_means(item_net, &item_inputs, v.cols(), v.dim())?;
    joint_loss_terms(
        u,
        v,
        &sparse,
        um.as_ref(),
        im.as_ref(),
        user_net.map_or(0.0, LatentNetwork::weight_sq_norm),
        item_net.map_or(0.0, LatentNetwork::weight_sq_norm),
        hyper,
    )
}

/// Configures and runs the alternating optimization.
#[derive(Debug, Clone)]
pub struct Trainer {
    kind: ModelKind,
    hyper: Hyperparams,
    arch: Architecture,
    slots: usize,
    user_net: Option<LatentNetwork>,
    item_net: Option<LatentNetwork>,
}

impl Trainer {
    /// `slots` is the number of images per user bundle.
    pub fn new(kind: ModelKind, hyper: Hyperparams, arch: Architecture, slots: usize) -> Self {
        Trainer {
            kind,
            hyper,
            arch,
            slots,
            user_net: None,
            item_net: None,
        }
    }

    /// Starts from the given user-side network instead of a seeded one.
    pub fn with_user_network(mut self, net: LatentNetwork) -> Self {
        self.user_net = Some(net);
        self
    }

    pub fn with_item_network(mut self, net: LatentNetwork) -> Self {
        self.item_net = Some(net);
        self
    }

    pub fn train(self, data: &TrainingData<'_>) -> Result<(Checkpoint, TrainReport)> {
        let started = Instant::now();
        let Trainer {
            kind,
            hyper,
            arch,
            slots,
            user_net,
            item_net,
        } = self;
        hyper.validate()?;
        let train = data.train;
        if train.is_empty() {
            return Err(Error::EmptyDataset("no training ratings".into()));
        }
        let (n, m, k) = (train.num_users(), train.num_items(), hyper.k);
        if data.item_images.len() != m || data.user_bundles.len() != n {
            return Err(Error::DimensionMismatch(
                "side information is not aligned with the training set".into(),
            ));
        }
        let sparse = SparseRatings::from_dataset(train);

        let item_inputs = if kind.uses_item_encoder() {
            let inputs = data.item_inputs();
            if inputs.is_empty() {
                return Err(Error::InvalidInput(format!("{kind} requires item images")));
            }
            inputs
        } else {
            Vec::new()
        };
        let user_inputs = if kind.uses_user_encoder() {
            let inputs = data.user_inputs()?;
            if inputs.is_empty() {
                return Err(Error::InvalidInput(format!("{kind} requires user image bundles")));
            }
            inputs
        } else {
            Vec::new()
        };

        let stream_rng = |stream: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
            rng.set_stream(stream);
            rng
        };
        let mut user_net = match (kind.uses_user_encoder(), user_net) {
            (false, _) => None,
            (true, Some(net)) => Some(net),
            (true, None) => Some(LatentNetwork::init(
                &arch,
                slots,
                k,
                hyper.weight_init_std,
                &mut stream_rng(STREAM_USER_NET),
            )?),
        };
        let mut item_net = match (kind.uses_item_encoder(), item_net) {
            (false, _) => None,
            (true, Some(net)) => Some(net),
            (true, None) => Some(LatentNetwork::init(
                &arch,
                1,
                k,
                hyper.weight_init_std,
                &mut stream_rng(STREAM_ITEM_NET),
            )?),
        };
        for net in user_net.iter().chain(item_net.iter()) {
            if net.latent_dim() != k {
                return Err(Error::DimensionMismatch(format!(
                    "network emits {} dimensions, k = {k}",
                    net.latent_dim()
                )));
            }
        }
        if let Some((_, imgs)) = user_inputs.first() {
            if user_net.as_ref().is_some_and(|net| net.slots() != imgs.len()) {
                return Err(Error::DimensionMismatch(
                    "bundle length does not match the user head".into(),
                ));
            }
        }

        let mut rng = stream_rng(STREAM_FACTORS);
        let mut u = LatentMatrix::random(k, n, hyper.factor_init_std, &mut rng);
        let mut v = LatentMatrix::random(k, m, hyper.factor_init_std, &mut rng);

        let mut user_opt = OptimizerState::new(hyper.optimizer, hyper.seed ^ (STREAM_USER_OPT << 56))?;
        let mut item_opt = OptimizerState::new(hyper.optimizer, hyper.seed ^ (STREAM_ITEM_OPT << 56))?;

        let mut user_means = prior_means(user_net.as_ref(), &user_inputs, n, k)?;
        let mut item_means = prior_means(item_net.as_ref(), &item_inputs, m, k)?;
        let loss_of = |u: &LatentMatrix,
                       v: &LatentMatrix,
                       um: &Option<LatentMatrix>,
                       im: &Option<LatentMatrix>,
                       un: &Option<LatentNetwork>,
                       inet: &Option<LatentNetwork>| {
            joint_loss_terms(
                u,
                v,
                &sparse,
                um.as_ref(),
                im.as_ref(),
                un.as_ref().map_or(0.0, LatentNetwork::weight_sq_norm),
                inet.as_ref().map_or(0.0, LatentNetwork::weight_sq_norm),
                &hyper,
            )
        };

        let user_counts = train.user_counts();
        let item_counts = train.item_counts();
        let train_mean = train.mean_rating().expect("non-empty");
        let snapshot = |u: &LatentMatrix,
                        v: &LatentMatrix,
                        un: &Option<LatentNetwork>,
                        inet: &Option<LatentNetwork>| Checkpoint {
            kind,
            hyper: hyper.clone(),
            scale: train.scale(),
            train_mean,
            u: u.clone(),
            v: v.clone(),
            user_net: un.clone(),
            item_net: inet.clone(),
            user_ids: train.user_ids().to_vec(),
            item_ids: train.item_ids().to_vec(),
            user_train_counts: user_counts.clone(),
            item_train_counts: item_counts.clone(),
        };

        let initial = loss_of(&u, &v, &user_means, &item_means, &user_net, &item_net)?;
        let mut report = TrainReport {
            kind,
            initial_loss: initial.total,
            final_loss: initial.total,
            converged: false,
            iterations: Vec::new(),
            wall_time_secs: 0.0,
        };
        let mut prev = initial.total;

        for iteration in 0..hyper.outer_max_iters {
            let last_good = (u.clone(), v.clone(), user_net.clone(), item_net.clone());
            let diverged = |message: String| Error::Diverged {
                iteration,
                message,
                last_good: Box::new(snapshot(&last_good.0, &last_good.1, &last_good.2, &last_good.3)),
            };
            let step = (|| -> Result<IterationRecord> {
                u = update_user_factors(&v, &sparse, user_means.as_ref(), hyper.lambda_u)?;
                let after_users = loss_of(&u, &v, &user_means, &item_means, &user_net, &item_net)?;
                v = update_item_factors(&u, &sparse, item_means.as_ref(), hyper.lambda_v)?;
                let after_items = loss_of(&u, &v, &user_means, &item_means, &user_net, &item_net)?;

                let mut user_trace = None;
                if let Some(net) = user_net.as_mut().filter(|_| hyper.cnn_epochs_per_iter > 0) {
                    let (inputs, targets) = regression_set(&user_inputs, &u);
                    user_trace = Some(train_epochs(
                        net,
                        &inputs,
                        &targets,
                        hyper.lambda_u,
                        hyper.lambda_w_user,
                        &mut user_opt,
                        hyper.cnn_epochs_per_iter,
                    )?);
                    user_means = prior_means(Some(net), &user_inputs, n, k)?;
                }
                let after_user_net = loss_of(&u, &v, &user_means, &item_means, &user_net, &item_net)?;

                let mut item_trace = None;
                if let Some(net) = item_net.as_mut().filter(|_| hyper.cnn_epochs_per_iter > 0) {
                    let (inputs, targets) = regression_set(&item_inputs, &v);
                    item_trace = Some(train_epochs(
                        net,
                        &inputs,
                        &targets,
                        hyper.lambda_v,
                        hyper.lambda_w_item,
                        &mut item_opt,
                        hyper.cnn_epochs_per_iter,
                    )?);
                    item_means = prior_means(Some(net), &item_inputs, m, k)?;
                }
                let end = loss_of(&u, &v, &user_means, &item_means, &user_net, &item_net)?;
                Ok(IterationRecord {
                    iteration,
                    loss_start: prev,
                    loss_after_users: after_users.total,
                    loss_after_items: after_items.total,
                    loss_after_user_encoder: after_user_net.total,
                    loss_after_item_encoder: end.total,
                    breakdown: end,
                    user_encoder_trace: user_trace,
                    item_encoder_trace: item_trace,
                })
            })();
            let record = match step {
                Ok(r) => r,
                Err(e) if e.is_numerical() => return Err(diverged(e.to_string())),
                Err(e) => return Err(e),
            };
            let current = record.loss_after_item_encoder;
            log::debug!("{kind} iteration {iteration}: joint loss {current:.6}");
            report.iterations.push(record);
            report.final_loss = current;
            let delta = (prev - current).abs();
            if hyper.rel_tol == f64::INFINITY || delta <= hyper.rel_tol * prev.abs() {
                report.converged = true;
                break;
            }
            prev = current;
        }
        report.wall_time_secs = started.elapsed().as_secs_f64();
        Ok((snapshot(&u, &v, &user_net, &item_net), report))
    }
}

fn regression_set<'a>(
    inputs: &[(usize, Vec<&'a ImageTensor>)],
    factors: &LatentMatrix,
) -> (Vec<Vec<&'a ImageTensor>>, Vec<Vec<f64>>) {
    inputs
        .iter()
        .map(|(c, imgs)| (imgs.clone(), factors.col(*c).to_vec()))
        .unzip()
}

/// Trains `kind` with seeded initial networks.
pub fn train(
    kind: ModelKind,
    data: &TrainingData<'_>,
    hyper: &Hyperparams,
    arch: &Architecture,
    slots: usize,
) -> Result<(Checkpoint, TrainReport)> {
    Trainer::new(kind, hyper.clone(), arch.clone(), slots).train(data)
}
