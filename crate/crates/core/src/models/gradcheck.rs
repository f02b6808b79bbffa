//! Finite-difference verification of every layer kind under both training
//! losses, in double precision.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{batch_triplet_loss, triplet_loss, ModelError, Triplet, TripletKind};
use crate::nn::{cross_entropy, gradient_check, GradCheckReport, LayerSpec, Network, Tensor};

/// Maximum relative error tolerated between analytic and numeric gradients.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckCase {
    pub layer: String,
    pub loss: &'static str,
    pub max_relative_error: f64,
    pub checked: usize,
}

impl GradCheckCase {
    pub fn passed(&self) -> bool {
        self.max_relative_error < GRADCHECK_TOLERANCE
    }
}

const BATCH: usize = 6;
const LABELS: [usize; BATCH] = [0, 0, 1, 1, 2, 2];
/// Large enough that every sampled role assignment is active.
const MARGIN: f64 = 2.0;

/// Inputs skew positive: a sample whose ReLU output vanishes would reach
/// the normalization as the zero-initialized bias, where it is singular.
fn random(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-0.5..1.0)).collect()).expect("sized")
}

/// Triplets held fixed while differencing, restricted to those well inside
/// the loss's linear region so the hinge never flips under perturbation.
fn active_triplets(emb: &Tensor<f64>) -> Vec<Triplet> {
    let mut out = Vec::new();
    for a in 0..BATCH {
        for n in (0..BATCH).filter(|&n| LABELS[n] != LABELS[a]) {
            let t = Triplet {
                anchor: a,
                positive: a ^ 1,
                negative: n,
                kind: TripletKind::Fallback,
            };
            if triplet_loss(emb.row(a), emb.row(a ^ 1), emb.row(n), MARGIN) > 0.05 {
                out.push(t);
            }
        }
    }
    out
}

fn run(input: &[usize], body: &[LayerSpec], triplet: bool, seed: u64) -> Result<GradCheckReport, ModelError> {
    let mut specs = body.to_vec();
    specs.push(LayerSpec::Dense { units: 3 });
    specs.push(if triplet { LayerSpec::L2Normalize } else { LayerSpec::Softmax });
    let mut net = Network::<f64>::build(input, &specs, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shape = vec![BATCH];
    shape.extend_from_slice(input);
    let x = random(shape, &mut rng);
    let report = if triplet {
        let triplets = active_triplets(&net.infer(&x)?);
        gradient_check(&mut net, &x, |out| Ok(batch_triplet_loss(out, &triplets, MARGIN)), seed)?
    } else {
        gradient_check(&mut net, &x, |out| cross_entropy(out, &LABELS), seed)?
    };
    Ok(report)
}

/// One case per (layer kind, loss). Each layer sits under a dense layer and
/// the loss's own output layer, so softmax and normalization are covered
/// by every case of their loss.
pub fn gradient_suite() -> Result<Vec<GradCheckCase>, ModelError> {
    let cases: Vec<(&str, Vec<usize>, Vec<LayerSpec>)> = vec![
        ("conv3x3", vec![2, 5, 5], vec![LayerSpec::Conv3x3 { out_channels: 2 }]),
        ("maxpool2", vec![2, 4, 4], vec![LayerSpec::MaxPool2]),
        ("batchnorm-spatial", vec![2, 3, 3], vec![LayerSpec::BatchNorm]),
        ("batchnorm-flat", vec![5], vec![LayerSpec::BatchNorm]),
        ("dense", vec![2, 2, 2], vec![LayerSpec::Dense { units: 4 }]),
        ("relu", vec![6], vec![LayerSpec::Relu]),
        ("dropout", vec![6], vec![LayerSpec::Dropout { rate: 0.3 }]),
        ("softmax", vec![4], vec![LayerSpec::Softmax]),
        ("l2normalize", vec![4], vec![LayerSpec::L2Normalize]),
    ];
    let mut out = Vec::new();
    for (i, (name, input, body)) in cases.into_iter().enumerate() {
        for triplet in [false, true] {
            let r = run(&input, &body, triplet, 100 + i as u64)?;
            out.push(GradCheckCase {
                layer: name.to_string(),
                loss: if triplet { "triplet" } else { "cross-entropy" },
                max_relative_error: r.max_relative_error,
                checked: r.checked,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_case_passes() {
        let cases = gradient_suite().unwrap();
        assert_eq!(cases.len(), 18);
        for c in &cases {
            assert!(c.passed(), "{c:?}");
        }
    }
}
