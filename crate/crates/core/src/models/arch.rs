use crate::nn::{LayerSpec, Network};

/// Per-sample input shape of every image model.
pub const IMAGE_INPUT: [usize; 3] = [1, 32, 32];
pub const EMBEDDING_DIM: usize = 128;
const CONV_WIDTHS: [usize; 5] = [16, 32, 64, 128, 128];

pub fn direct_classifier_specs() -> Vec<LayerSpec> {
    let mut specs = Vec::new();
    for out_channels in CONV_WIDTHS {
        specs.extend([
            LayerSpec::Conv3x3 { out_channels },
            LayerSpec::Relu,
            LayerSpec::MaxPool2,
            LayerSpec::BatchNorm,
        ]);
    }
    specs.extend([
        LayerSpec::Dense { units: 256 },
        LayerSpec::Relu,
        LayerSpec::Dropout { rate: 0.5 },
        LayerSpec::Dense { units: 10 },
        LayerSpec::Softmax,
    ]);
    specs
}

/// The direct classifier's convolution stack without batch normalization,
/// then a linear 128-unit projection, dropout and L2 normalization.
pub fn triplet_embedder_specs() -> Vec<LayerSpec> {
    let mut specs = Vec::new();
    for out_channels in CONV_WIDTHS {
        specs.extend([
            LayerSpec::Conv3x3 { out_channels },
            LayerSpec::Relu,
            LayerSpec::MaxPool2,
        ]);
    }
    specs.extend([
        LayerSpec::Dense {
            units: EMBEDDING_DIM,
        },
        LayerSpec::Dropout { rate: 0.5 },
        LayerSpec::L2Normalize,
    ]);
    specs
}

/// Two conv-pool stages, a 64-unit hidden layer and a 2-way softmax
/// (class 0 = blank, 1 = digit).
pub fn blank_classifier_specs() -> Vec<LayerSpec> {
    vec![
        LayerSpec::Conv3x3 { out_channels: 8 },
        LayerSpec::Relu,
        LayerSpec::MaxPool2,
        LayerSpec::Conv3x3 { out_channels: 16 },
        LayerSpec::Relu,
        LayerSpec::MaxPool2,
        LayerSpec::Dense { units: 64 },
        LayerSpec::Relu,
        LayerSpec::Dense { units: 2 },
        LayerSpec::Softmax,
    ]
}

pub fn head_specs() -> Vec<LayerSpec> {
    vec![LayerSpec::Dense { units: 10 }, LayerSpec::Softmax]
}

pub fn build_direct_classifier(seed: u64) -> Network {
    Network::build(&IMAGE_INPUT, &direct_classifier_specs(), seed).expect("static architecture")
}

pub fn build_triplet_embedder(seed: u64) -> Network {
    Network::build(&IMAGE_INPUT, &triplet_embedder_specs(), seed).expect("static architecture")
}

pub fn build_blank_classifier(seed: u64) -> Network {
    Network::build(&IMAGE_INPUT, &blank_classifier_specs(), seed).expect("static architecture")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    #[test]
    fn shapes_close_to_one_by_one() {
        let mut net = build_direct_classifier(0);
        let x = Tensor::new(vec![2, 1, 32, 32], vec![0.5f32; 2048]).unwrap();
        let y = net.infer(&x).unwrap();
        assert_eq!(y.shape(), &[2, 10]);
        assert!((y.row(0).iter().sum::<f32>() - 1.0).abs() < 1e-5);
        assert!(direct_classifier_specs()
            .iter()
            .filter(|s| matches!(s, LayerSpec::Dropout { .. }))
            .all(|s| *s == LayerSpec::Dropout { rate: 0.5 }));
        // the layer feeding the first dense stage sees a 128×1×1 activation
        let n_pool = direct_classifier_specs().iter().filter(|s| **s == LayerSpec::MaxPool2).count();
        assert_eq!(32 >> n_pool, 1);
    }

    #[test]
    fn embedder_is_unit_norm_without_batchnorm() {
        let specs = triplet_embedder_specs();
        assert!(!specs.contains(&LayerSpec::BatchNorm));
        let mut net = build_triplet_embedder(1);
        let x = Tensor::new(vec![3, 1, 32, 32], (0..3072).map(|i| (i % 7) as f32 / 7.0).collect()).unwrap();
        let e = net.infer(&x).unwrap();
        assert_eq!(e.shape(), &[3, EMBEDDING_DIM]);
        for i in 0..3 {
            let n: f32 = e.row(i).iter().map(|v| v * v).sum::<f32>().sqrt();
            assert!((n - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn parameter_budget() {
        assert!(build_direct_classifier(0).num_params() < 1_000_000);
        assert!(build_triplet_embedder(0).num_params() < 1_000_000);
    }
}
