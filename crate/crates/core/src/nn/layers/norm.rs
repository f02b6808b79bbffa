use super::{check_grad_shape, Mode};
use crate::nn::{NnError, Real, Tensor};

const MOMENTUM: f64 = 0.9;
const EPS: f64 = 1e-5;

pub(crate) struct NormCache<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
    shape: Vec<usize>,
}

/// Batch normalization over the channel axis of `[C, N, H, W]` activations
/// or the feature axis of `[N, F]` activations.
pub(crate) struct BatchNorm<T> {
    pub(crate) gamma: Tensor<T>,
    pub(crate) beta: Tensor<T>,
    pub(crate) running_mean: Vec<T>,
    pub(crate) running_var: Vec<T>,
    pub(crate) cache: Option<NormCache<T>>,
}

/// Element `j` of channel `ch` lives at `offset(ch) + j * stride`.
struct Layout {
    channels: usize,
    count: usize,
    ch_step: usize,
    stride: usize,
}

impl Layout {
    fn of(shape: &[usize]) -> Result<Self, NnError> {
        match *shape {
            [c, n, h, w] => Ok(Self {
                channels: c,
                count: n * h * w,
                ch_step: n * h * w,
                stride: 1,
            }),
            [n, f] => Ok(Self {
                channels: f,
                count: n,
                ch_step: 1,
                stride: f,
            }),
            _ => Err(NnError::ShapeMismatch {
                expected: "batchnorm: 2-D or 4-D activation".into(),
                got: format!("{shape:?}"),
            }),
        }
    }

    #[inline]
    fn index(&self, ch: usize, j: usize) -> usize {
        ch * self.ch_step + j * self.stride
    }
}

impl<T: Real> BatchNorm<T> {
    pub(crate) fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::new(vec![channels], vec![T::one(); channels]).expect("shape"),
            beta: Tensor::zeros(vec![channels]),
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            cache: None,
        }
    }

    pub(crate) fn cast<U: Real>(&self) -> BatchNorm<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::of(x.as_f64())).collect();
        BatchNorm {
            gamma: self.gamma.cast(),
            beta: self.beta.cast(),
            running_mean: conv(&self.running_mean),
            running_var: conv(&self.running_var),
            cache: None,
        }
    }

    pub(crate) fn forward(&mut self, mut x: Tensor<T>, mode: Mode) -> Result<Tensor<T>, NnError> {
        let lay = Layout::of(x.shape())?;
        if lay.channels != self.gamma.len() {
            return Err(NnError::ShapeMismatch {
                expected: format!("batchnorm over {} channels", self.gamma.len()),
                got: format!("{} channels", lay.channels),
            });
        }
        let eps = T::of(EPS);
        let shape = x.shape().to_vec();
        let gamma = self.gamma.values().to_vec();
        let beta = self.beta.values().to_vec();
        let xv = x.values_mut();
        match mode {
            Mode::Eval => {
                for ch in 0..lay.channels {
                    let scale = gamma[ch] / (self.running_var[ch] + eps).sqrt();
                    let shift = beta[ch] - self.running_mean[ch] * scale;
                    for j in 0..lay.count {
                        let i = lay.index(ch, j);
                        xv[i] = xv[i] * scale + shift;
                    }
                }
                self.cache = None;
            }
            Mode::Train => {
                let m = T::of(lay.count as f64);
                let mut xhat = vec![T::zero(); xv.len()];
                let mut inv_std = Vec::with_capacity(lay.channels);
                let mom = T::of(MOMENTUM);
                for ch in 0..lay.channels {
                    let mut mean = T::zero();
                    for j in 0..lay.count {
                        mean += xv[lay.index(ch, j)];
                    }
                    mean /= m;
                    let mut var = T::zero();
                    for j in 0..lay.count {
                        let d = xv[lay.index(ch, j)] - mean;
                        var += d * d;
                    }
                    var /= m;
                    let is = T::one() / (var + eps).sqrt();
                    for j in 0..lay.count {
                        let i = lay.index(ch, j);
                        let xh = (xv[i] - mean) * is;
                        xhat[i] = xh;
                        xv[i] = gamma[ch] * xh + beta[ch];
                    }
                    inv_std.push(is);
                    let unbiased = if lay.count > 1 {
                        var * m / (m - T::one())
                    } else {
                        var
                    };
                    self.running_mean[ch] = mom * self.running_mean[ch] + (T::one() - mom) * mean;
                    self.running_var[ch] = mom * self.running_var[ch] + (T::one() - mom) * unbiased;
                }
                self.cache = Some(NormCache {
                    xhat,
                    inv_std,
                    shape,
                });
            }
        }
        Ok(x)
    }

    pub(crate) fn backward(&mut self, mut g: Tensor<T>) -> Result<Tensor<T>, NnError> {
        let cache = self.cache.take().ok_or(NnError::StaleCache("batchnorm"))?;
        check_grad_shape(&g, &cache.shape, "batchnorm")?;
        let lay = Layout::of(&cache.shape)?;
        let m = T::of(lay.count as f64);
        let gamma = self.gamma.values().to_vec();
        let mut dgamma = vec![T::zero(); lay.channels];
        let mut dbeta = vec![T::zero(); lay.channels];
        let gv = g.values_mut();
        for ch in 0..lay.channels {
            let (mut sum_g, mut sum_gx) = (T::zero(), T::zero());
            for j in 0..lay.count {
                let i = lay.index(ch, j);
                sum_g += gv[i];
                sum_gx += gv[i] * cache.xhat[i];
            }
            dgamma[ch] = sum_gx;
            dbeta[ch] = sum_g;
            let k = gamma[ch] * cache.inv_std[ch] / m;
            for j in 0..lay.count {
                let i = lay.index(ch, j);
                gv[i] = k * (m * gv[i] - sum_g - cache.xhat[i] * sum_gx);
            }
        }
        for (d, v) in self.gamma.grad_mut().iter_mut().zip(dgamma) {
            *d += v;
        }
        for (d, v) in self.beta.grad_mut().iter_mut().zip(dbeta) {
            *d += v;
        }
        Ok(g)
    }
}
