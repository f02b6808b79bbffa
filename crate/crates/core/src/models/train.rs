use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::triplet::{all_triplets_loss, batch_triplet_loss, mine_triplets, Triplet, TripletConfig};
use super::{eval, ModelError};
use crate::datasets::{random_crop, TensorSet};
use crate::nn::{cross_entropy, Adam, Mode, Network, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub early_stop_patience: usize,
    pub lr: f64,
    /// Multiplier applied when validation loss stalls for `lr_patience` epochs.
    pub lr_decay: f64,
    pub lr_patience: usize,
    pub lr_floor: f64,
    pub batch_size: usize,
    pub split: [f64; 3],
    pub seed: u64,
    /// Random-crop padding in pixels; 0 disables augmentation.
    pub augment_pad: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            early_stop_patience: 5,
            lr: 1e-3,
            lr_decay: 0.5,
            lr_patience: 3,
            lr_floor: 1e-5,
            batch_size: 256,
            split: [0.6, 0.2, 0.2],
            seed: 42,
            augment_pad: 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "loss")]
pub enum Objective {
    CrossEntropy,
    Triplet(TripletConfig),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose weights were returned.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,val_acc,lr\n");
        for r in &self.epochs {
            let _ = writeln!(
                s,
                "{},{:.6},{:.6},{:.6},{:.8}",
                r.epoch, r.train_loss, r.val_loss, r.val_acc, r.lr
            );
        }
        s
    }

    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.get(self.best_epoch.checked_sub(1)?)
    }
}

/// Progress callbacks. `Mined` fires for every triplet batch before the
/// parameter update, with the embeddings the triplets were mined from.
pub enum TrainEvent<'a> {
    Batch {
        epoch: usize,
        index: usize,
        loss: f64,
    },
    Mined {
        embeddings: &'a Tensor<f32>,
        labels: &'a [usize],
        triplets: &'a [Triplet],
        margin: f32,
    },
    Epoch(&'a EpochRecord),
}

/// Mini-batch Adam with plateau learning-rate decay and early stopping on
/// validation loss; returns the weights of the best validation epoch.
pub fn train_model(
    mut net: Network,
    train: &TensorSet,
    val: &TensorSet,
    cfg: &TrainConfig,
    objective: &Objective,
    observer: &mut dyn FnMut(TrainEvent<'_>),
) -> Result<(Network, History), ModelError> {
    if train.is_empty() || val.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 || cfg.lr <= 0.0 {
        return Err(ModelError::InvalidConfig(format!("{cfg:?}")));
    }
    let mut opt = Adam::new(cfg.lr);
    let mut history = History::default();
    let mut best: Option<(f64, Network)> = None;
    let (mut since_best, mut since_decay) = (0, 0);
    let spatial = train.inputs.shape().len() == 4;

    for epoch in 1..=cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);

        let (mut loss_sum, mut loss_batches) = (0.0f64, 0usize);
        let mut pending: Vec<usize> = Vec::new();
        for (index, chunk) in order.chunks(cfg.batch_size).enumerate() {
            pending.extend_from_slice(chunk);
            let batch = train.select(&pending);
            let mut x = batch.inputs;
            if spatial && cfg.augment_pad > 0 {
                x = random_crop(&x, cfg.augment_pad, &mut rng);
            }
            net.zero_grad();
            let out = net.forward(&x, Mode::Train, &mut rng)?;
            let (loss, grad) = match objective {
                Objective::CrossEntropy => {
                    let (l, g) = cross_entropy(&out, &batch.labels)?;
                    (f64::from(l), g)
                }
                Objective::Triplet(tc) => {
                    match mine_triplets(&out, &batch.labels, tc.margin, tc.mining) {
                        Ok(triplets) => {
                            observer(TrainEvent::Mined {
                                embeddings: &out,
                                labels: &batch.labels,
                                triplets: &triplets,
                                margin: tc.margin,
                            });
                            let (l, g) = batch_triplet_loss(&out, &triplets, tc.margin);
                            (f64::from(l), g)
                        }
                        Err(ModelError::NoValidTriplets) => {
                            // merge into the next batch
                            net.clear_caches();
                            continue;
                        }
                        Err(e) => return Err(e),
                    }
                }
            };
            pending.clear();
            net.backward(grad)?;
            opt.step(net.trainable_params_mut());
            loss_sum += loss;
            loss_batches += 1;
            observer(TrainEvent::Batch { epoch, index, loss });
        }
        net.clear_caches();

        let (val_loss, val_acc) = validate(&mut net, val, objective, cfg.batch_size)?;
        let record = EpochRecord {
            epoch,
            train_loss: if loss_batches > 0 { loss_sum / loss_batches as f64 } else { 0.0 },
            val_loss,
            val_acc,
            lr: opt.learning_rate,
        };
        history.epochs.push(record);
        observer(TrainEvent::Epoch(&record));

        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, net.clone()));
            history.best_epoch = epoch;
            since_best = 0;
            since_decay = 0;
        } else {
            since_best += 1;
            since_decay += 1;
            if since_best >= cfg.early_stop_patience {
                history.stopped_early = epoch < cfg.epochs;
                break;
            }
            if since_decay >= cfg.lr_patience {
                opt.learning_rate = (opt.learning_rate * cfg.lr_decay).max(cfg.lr_floor);
                since_decay = 0;
            }
        }
    }
    let (_, best_net) = best.expect("at least one epoch ran");
    Ok((best_net, history))
}

/// Validation loss and accuracy. Triplet runs report the mean loss over all
/// valid triplets of each batch and nearest-centroid accuracy.
fn validate(net: &mut Network, val: &TensorSet, objective: &Objective, batch: usize) -> Result<(f64, f64), ModelError> {
    let out = net.infer_batched(&val.inputs, batch)?;
    match objective {
        Objective::CrossEntropy => {
            let (loss, _) = cross_entropy(&out, &val.labels)?;
            Ok((f64::from(loss), eval::accuracy_from_probs(&out, &val.labels)))
        }
        Objective::Triplet(tc) => {
            let (mut sum, mut count) = (0.0, 0usize);
            for start in (0..val.len()).step_by(batch) {
                let idx: Vec<usize> = (start..(start + batch).min(val.len())).collect();
                let labels: Vec<usize> = idx.iter().map(|&i| val.labels[i]).collect();
                if let Some(l) = all_triplets_loss(&out.select_rows(&idx), &labels, tc.margin) {
                    sum += l;
                    count += 1;
                }
            }
            let loss = if count > 0 { sum / count as f64 } else { 0.0 };
            let centroids = eval::class_centroids(&out, &val.labels, 10);
            Ok((loss, eval::nearest_centroid_accuracy(&out, &val.labels, &centroids)))
        }
    }
}
