//! The three networks of the recognizer: blank-cell classifier, direct
//! softmax digit classifier and triplet-loss embedder with a softmax head.

mod arch;
mod blank;
mod gradcheck;
pub mod eval;
mod recipes;
mod train;
mod triplet;

pub use arch::{
    blank_classifier_specs, build_blank_classifier, build_direct_classifier, build_triplet_embedder,
    direct_classifier_specs, head_specs, triplet_embedder_specs, EMBEDDING_DIM, IMAGE_INPUT,
};
pub use blank::{apply_row_rule, classify_blank, CellClass};
pub use gradcheck::{gradient_suite, GradCheckCase, GRADCHECK_TOLERANCE};
pub use recipes::{train_blank, train_softmax, train_triplet, TripletModel};
pub use train::{train_model, EpochRecord, History, Objective, TrainConfig, TrainEvent};
pub use triplet::{
    all_triplets_loss, batch_triplet_loss, mine_triplets, squared_distances, triplet_loss, triplet_violations,
    Mining, Triplet, TripletConfig, TripletKind,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datasets::TensorSet;
use crate::nn::{Network, NnError, Tensor};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("batch yields no valid triplets")]
    NoValidTriplets,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// One recognized cell. `digit == None` means blank.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DigitPrediction {
    pub digit: Option<u8>,
    pub confidence: f32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f32>>,
}

/// Runs a softmax classifier and returns argmax digits with their
/// probabilities.
pub fn predict_digits(net: &mut Network, inputs: &Tensor<f32>) -> Result<Vec<DigitPrediction>, ModelError> {
    let probs = net.infer_batched(inputs, 256)?;
    Ok((0..probs.rows())
        .map(|i| {
            let (d, p) = eval::argmax(probs.row(i));
            DigitPrediction {
                digit: Some(d as u8),
                confidence: p,
                embedding: None,
            }
        })
        .collect())
}

/// Accuracy of a softmax classifier on `set`.
pub fn accuracy(net: &mut Network, set: &TensorSet) -> Result<f64, ModelError> {
    let probs = net.infer_batched(&set.inputs, 256)?;
    Ok(eval::accuracy_from_probs(&probs, &set.labels))
}

/// Evaluation-mode embeddings, `[N, D]`.
pub fn embed(embedder: &mut Network, inputs: &Tensor<f32>) -> Result<Tensor<f32>, ModelError> {
    Ok(embedder.infer_batched(inputs, 256)?)
}

/// Trains a dense(10)+softmax head on frozen embedder outputs and returns
/// the combined classifier (embedder layers flagged frozen) with the head's
/// training history.
pub fn attach_classifier_head(
    embedder: &Network,
    train: &TensorSet,
    val: &TensorSet,
    cfg: &TrainConfig,
) -> Result<(Network, History), ModelError> {
    let mut frozen = embedder.clone();
    frozen.freeze_all();
    let embed_set = |set: &TensorSet, net: &mut Network| -> Result<TensorSet, ModelError> {
        Ok(TensorSet {
            inputs: embed(net, &set.inputs)?,
            labels: set.labels.clone(),
        })
    };
    let train_e = embed_set(train, &mut frozen)?;
    let val_e = embed_set(val, &mut frozen)?;
    let head = Network::build(frozen.output_shape(), &head_specs(), cfg.seed)?;
    let cfg = TrainConfig {
        augment_pad: 0,
        ..cfg.clone()
    };
    let (head, history) = train_model(head, &train_e, &val_e, &cfg, &Objective::CrossEntropy, &mut |_| {})?;
    frozen.append(head)?;
    Ok((frozen, history))
}

/// Head training defaults: a linear probe converges quickly at a larger step.
pub fn head_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 30,
        lr: 0.01,
        augment_pad: 0,
        seed,
        ..TrainConfig::default()
    }
}
