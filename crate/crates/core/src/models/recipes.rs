use super::{
    attach_classifier_head, build_blank_classifier, build_direct_classifier, build_triplet_embedder, head_train_config, train_model, History,
    ModelError, Objective, TrainConfig, TrainEvent, TripletConfig,
};
use crate::datasets::TensorSet;
use crate::nn::Network;

/// Direct softmax classifier trained with cross-entropy.
pub fn train_softmax(
    train: &TensorSet,
    val: &TensorSet,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(TrainEvent<'_>),
) -> Result<(Network, History), ModelError> {
    train_model(build_direct_classifier(cfg.seed), train, val, cfg, &Objective::CrossEntropy, observer)
}

/// Blank/digit cell classifier (class 1 = digit).
pub fn train_blank(
    train: &TensorSet,
    val: &TensorSet,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(TrainEvent<'_>),
) -> Result<(Network, History), ModelError> {
    train_model(build_blank_classifier(cfg.seed), train, val, cfg, &Objective::CrossEntropy, observer)
}

pub struct TripletModel {
    pub embedder: Network,
    /// Frozen embedder followed by the softmax head.
    pub classifier: Network,
    pub history: History,
    pub head_history: History,
}

/// Embedder trained with mined triplets, then a softmax head on top.
pub fn train_triplet(
    train: &TensorSet,
    val: &TensorSet,
    cfg: &TrainConfig,
    triplet: &TripletConfig,
    observer: &mut dyn FnMut(TrainEvent<'_>),
) -> Result<TripletModel, ModelError> {
    let (embedder, history) = train_model(
        build_triplet_embedder(cfg.seed),
        train,
        val,
        cfg,
        &Objective::Triplet(triplet.clone()),
        observer,
    )?;
    let (classifier, head_history) = attach_classifier_head(&embedder, train, val, &head_train_config(cfg.seed))?;
    Ok(TripletModel {
        embedder,
        classifier,
        history,
        head_history,
    })
}
