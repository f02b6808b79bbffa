//! Layer kinds. Spatial activations travel channel-major (`[C, N, H, W]`)
//! inside a network so that convolutions are a single GEMM over the batch.

mod activation;
mod conv;
mod dense;
mod norm;
mod pool;

pub(crate) use activation::{Dropout, L2Normalize, Relu, Softmax};
pub(crate) use conv::Conv3x3;
pub(crate) use dense::Dense;
pub(crate) use norm::BatchNorm;
pub(crate) use pool::MaxPool2;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{NnError, Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Declarative description of one layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// 3×3 convolution, stride 1, one pixel of zero padding.
    Conv3x3 { out_channels: usize },
    MaxPool2,
    BatchNorm,
    Dense { units: usize },
    Relu,
    Dropout { rate: f32 },
    Softmax,
    L2Normalize,
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv3x3 { .. } => "conv3x3",
            LayerSpec::MaxPool2 => "maxpool2",
            LayerSpec::BatchNorm => "batchnorm",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Relu => "relu",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Softmax => "softmax",
            LayerSpec::L2Normalize => "l2normalize",
        }
    }
}

pub(crate) enum Layer<T> {
    Conv(Conv3x3<T>),
    Pool(MaxPool2),
    Norm(BatchNorm<T>),
    Dense(Dense<T>),
    Relu(Relu),
    Dropout(Dropout<T>),
    Softmax(Softmax<T>),
    L2(L2Normalize<T>),
}

/// Per-sample activation shape: `[C, H, W]` or `[F]`.
pub(crate) type SampleShape = Vec<usize>;

impl<T: Real> Layer<T> {
    /// Instantiates `spec` for per-sample input `input`, returning the layer
    /// and its per-sample output shape.
    pub(crate) fn build(
        spec: LayerSpec,
        input: &[usize],
        rng: &mut dyn RngCore,
    ) -> Result<(Self, SampleShape), NnError> {
        let spatial = || -> Result<(usize, usize, usize), NnError> {
            match input {
                [c, h, w] => Ok((*c, *h, *w)),
                _ => Err(NnError::InvalidSpec(format!(
                    "{} needs a spatial input, got {input:?}",
                    spec.name()
                ))),
            }
        };
        let flat = || -> Result<usize, NnError> {
            match input {
                [f] => Ok(*f),
                _ => Err(NnError::InvalidSpec(format!(
                    "{} needs a flat input, got {input:?}",
                    spec.name()
                ))),
            }
        };
        Ok(match spec {
            LayerSpec::Conv3x3 { out_channels } => {
                let (c, h, w) = spatial()?;
                if out_channels == 0 {
                    return Err(NnError::InvalidSpec("conv3x3 with zero channels".into()));
                }
                (
                    Layer::Conv(Conv3x3::new(c, out_channels, rng)),
                    vec![out_channels, h, w],
                )
            }
            LayerSpec::MaxPool2 => {
                let (c, h, w) = spatial()?;
                if h < 2 || w < 2 {
                    return Err(NnError::InvalidSpec(format!("maxpool2 on {h}×{w}")));
                }
                (Layer::Pool(MaxPool2::default()), vec![c, h / 2, w / 2])
            }
            LayerSpec::BatchNorm => {
                let channels = input[0];
                (Layer::Norm(BatchNorm::new(channels)), input.to_vec())
            }
            LayerSpec::Dense { units } => {
                if units == 0 {
                    return Err(NnError::InvalidSpec("dense with zero units".into()));
                }
                let fan_in: usize = input.iter().product();
                (Layer::Dense(Dense::new(fan_in, units, rng)), vec![units])
            }
            LayerSpec::Relu => (Layer::Relu(Relu::default()), input.to_vec()),
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(NnError::InvalidSpec(format!("dropout rate {rate}")));
                }
                (Layer::Dropout(Dropout::new(rate)), input.to_vec())
            }
            LayerSpec::Softmax => {
                flat()?;
                (Layer::Softmax(Softmax::default()), input.to_vec())
            }
            LayerSpec::L2Normalize => {
                flat()?;
                (Layer::L2(L2Normalize::default()), input.to_vec())
            }
        })
    }

    pub(crate) fn spec(&self) -> LayerSpec {
        match self {
            Layer::Conv(l) => LayerSpec::Conv3x3 {
                out_channels: l.out_channels(),
            },
            Layer::Pool(_) => LayerSpec::MaxPool2,
            Layer::Norm(_) => LayerSpec::BatchNorm,
            Layer::Dense(l) => LayerSpec::Dense { units: l.units() },
            Layer::Relu(_) => LayerSpec::Relu,
            Layer::Dropout(l) => LayerSpec::Dropout { rate: l.rate() },
            Layer::Softmax(_) => LayerSpec::Softmax,
            Layer::L2(_) => LayerSpec::L2Normalize,
        }
    }

    pub(crate) fn forward(
        &mut self,
        x: Tensor<T>,
        mode: Mode,
        rng: &mut dyn RngCore,
    ) -> Result<Tensor<T>, NnError> {
        match self {
            Layer::Conv(l) => l.forward(x, mode),
            Layer::Pool(l) => l.forward(x, mode),
            Layer::Norm(l) => l.forward(x, mode),
            Layer::Dense(l) => l.forward(x, mode),
            Layer::Relu(l) => l.forward(x, mode),
            Layer::Dropout(l) => l.forward(x, mode, rng),
            Layer::Softmax(l) => l.forward(x, mode),
            Layer::L2(l) => l.forward(x, mode),
        }
    }

    pub(crate) fn backward(&mut self, g: Tensor<T>) -> Result<Tensor<T>, NnError> {
        match self {
            Layer::Conv(l) => l.backward(g),
            Layer::Pool(l) => l.backward(g),
            Layer::Norm(l) => l.backward(g),
            Layer::Dense(l) => l.backward(g),
            Layer::Relu(l) => l.backward(g),
            Layer::Dropout(l) => l.backward(g),
            Layer::Softmax(l) => l.backward(g),
            Layer::L2(l) => l.backward(g),
        }
    }

    /// Trainable parameter tensors, in a fixed order.
    pub(crate) fn params(&self) -> Vec<&Tensor<T>> {
        match self {
            Layer::Conv(l) => vec![&l.weight, &l.bias],
            Layer::Norm(l) => vec![&l.gamma, &l.beta],
            Layer::Dense(l) => vec![&l.weight, &l.bias],
            _ => Vec::new(),
        }
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::Conv(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Norm(l) => vec![&mut l.gamma, &mut l.beta],
            Layer::Dense(l) => vec![&mut l.weight, &mut l.bias],
            _ => Vec::new(),
        }
    }

    /// Non-trainable state that must survive a checkpoint.
    pub(crate) fn buffers(&self) -> Vec<&[T]> {
        match self {
            Layer::Norm(l) => vec![&l.running_mean, &l.running_var],
            _ => Vec::new(),
        }
    }

    pub(crate) fn buffers_mut(&mut self) -> Vec<&mut Vec<T>> {
        match self {
            Layer::Norm(l) => vec![&mut l.running_mean, &mut l.running_var],
            _ => Vec::new(),
        }
    }

    pub(crate) fn clear_cache(&mut self) {
        match self {
            Layer::Conv(l) => l.cache = None,
            Layer::Pool(l) => l.cache = None,
            Layer::Norm(l) => l.cache = None,
            Layer::Dense(l) => l.cache = None,
            Layer::Relu(l) => l.cache = None,
            Layer::Dropout(l) => l.cache = None,
            Layer::Softmax(l) => l.cache = None,
            Layer::L2(l) => l.cache = None,
        }
    }

    pub(crate) fn cast<U: Real>(&self) -> Layer<U> {
        match self {
            Layer::Conv(l) => Layer::Conv(l.cast()),
            Layer::Pool(_) => Layer::Pool(MaxPool2::default()),
            Layer::Norm(l) => Layer::Norm(l.cast()),
            Layer::Dense(l) => Layer::Dense(l.cast()),
            Layer::Relu(_) => Layer::Relu(Relu::default()),
            Layer::Dropout(l) => Layer::Dropout(Dropout::new(l.rate())),
            Layer::Softmax(_) => Layer::Softmax(Softmax::default()),
            Layer::L2(_) => Layer::L2(L2Normalize::default()),
        }
    }
}

impl<T: Real> Clone for Layer<T> {
    /// Clones parameters and buffers; activation caches are not carried over.
    fn clone(&self) -> Self {
        self.cast::<T>()
    }
}

pub(crate) fn he_uniform<T: Real>(n: usize, fan_in: usize, rng: &mut dyn RngCore) -> Vec<T> {
    use rand::Rng;
    let limit = (6.0 / fan_in as f64).sqrt();
    (0..n)
        .map(|_| T::of(rng.random_range(-limit..limit)))
        .collect()
}

pub(crate) fn spatial_dims<T: Real>(x: &Tensor<T>, layer: &str) -> Result<[usize; 4], NnError> {
    match *x.shape() {
        [c, n, h, w] => Ok([c, n, h, w]),
        ref s => Err(NnError::ShapeMismatch {
            expected: format!("{layer}: [C, N, H, W] activation"),
            got: format!("{s:?}"),
        }),
    }
}

pub(crate) fn flat_dims<T: Real>(x: &Tensor<T>, layer: &str) -> Result<[usize; 2], NnError> {
    match *x.shape() {
        [n, f] => Ok([n, f]),
        ref s => Err(NnError::ShapeMismatch {
            expected: format!("{layer}: [N, F] activation"),
            got: format!("{s:?}"),
        }),
    }
}

pub(crate) fn check_grad_shape<T: Real>(
    g: &Tensor<T>,
    expected: &[usize],
    layer: &str,
) -> Result<(), NnError> {
    if g.shape() != expected {
        return Err(NnError::ShapeMismatch {
            expected: format!("{layer} upstream gradient {expected:?}"),
            got: format!("{:?}", g.shape()),
        });
    }
    Ok(())
}
