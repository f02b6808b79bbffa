use super::{check_grad_shape, flat_dims, Mode};
use crate::nn::{NnError, Real, Tensor};
use rand::{Rng, RngCore};

#[derive(Default)]
pub(crate) struct Relu {
    pub(crate) cache: Option<(Vec<bool>, Vec<usize>)>,
}

impl Relu {
    pub(crate) fn forward<T: Real>(&mut self, mut x: Tensor<T>, mode: Mode) -> Result<Tensor<T>, NnError> {
        let shape = x.shape().to_vec();
        let mut mask = Vec::with_capacity(if mode == Mode::Train { x.len() } else { 0 });
        for v in x.values_mut() {
            let on = *v > T::zero();
            if !on {
                *v = T::zero();
            }
            if mode == Mode::Train {
                mask.push(on);
            }
        }
        self.cache = (mode == Mode::Train).then_some((mask, shape));
        Ok(x)
    }

    pub(crate) fn backward<T: Real>(&mut self, mut g: Tensor<T>) -> Result<Tensor<T>, NnError> {
        let (mask, shape) = self.cache.take().ok_or(NnError::StaleCache("relu"))?;
        check_grad_shape(&g, &shape, "relu")?;
        for (v, on) in g.values_mut().iter_mut().zip(mask) {
            if !on {
                *v = T::zero();
            }
        }
        Ok(g)
    }
}

/// Inverted dropout: survivors are scaled by `1/(1-rate)` during training,
/// evaluation is the identity.
pub(crate) struct Dropout<T> {
    rate: f32,
    pub(crate) cache: Option<(Vec<T>, Vec<usize>)>,
}

impl<T: Real> Dropout<T> {
    pub(crate) fn new(rate: f32) -> Self {
        Self { rate, cache: None }
    }

    pub(crate) fn rate(&self) -> f32 {
        self.rate
    }

    pub(crate) fn forward(
        &mut self,
        mut x: Tensor<T>,
        mode: Mode,
        rng: &mut dyn RngCore,
    ) -> Result<Tensor<T>, NnError> {
        if mode == Mode::Eval {
            self.cache = None;
            return Ok(x);
        }
        let keep = T::of(1.0 / (1.0 - f64::from(self.rate)));
        let rate = self.rate;
        let mask: Vec<T> = (0..x.len())
            .map(|_| {
                if rng.random::<f32>() < rate {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        for (v, m) in x.values_mut().iter_mut().zip(&mask) {
            *v *= *m;
        }
        self.cache = Some((mask, x.shape().to_vec()));
        Ok(x)
    }

    pub(crate) fn backward(&mut self, mut g: Tensor<T>) -> Result<Tensor<T>, NnError> {
        let (mask, shape) = self.cache.take().ok_or(NnError::StaleCache("dropout"))?;
        check_grad_shape(&g, &shape, "dropout")?;
        for (v, m) in g.values_mut().iter_mut().zip(mask) {
            *v *= m;
        }
        Ok(g)
    }
}

/// Row-wise softmax over `[N, K]`.
#[derive(Default)]
pub(crate) struct Softmax<T> {
    pub(crate) cache: Option<Tensor<T>>,
}

impl<T: Real> Softmax<T> {
    pub(crate) fn forward(&mut self, mut x: Tensor<T>, mode: Mode) -> Result<Tensor<T>, NnError> {
        let [_, k] = flat_dims(&x, "softmax")?;
        for row in x.values_mut().chunks_mut(k) {
            softmax_in_place(row);
        }
        self.cache = (mode == Mode::Train).then(|| x.clone());
        Ok(x)
    }

    pub(crate) fn backward(&mut self, mut g: Tensor<T>) -> Result<Tensor<T>, NnError> {
        let y = self.cache.take().ok_or(NnError::StaleCache("softmax"))?;
        check_grad_shape(&g, y.shape(), "softmax")?;
        let k = y.row_len();
        for (gr, yr) in g.values_mut().chunks_mut(k).zip(y.values().chunks(k)) {
            let dot: T = gr.iter().zip(yr).map(|(a, b)| *a * *b).sum();
            for (gv, yv) in gr.iter_mut().zip(yr) {
                *gv = *yv * (*gv - dot);
            }
        }
        Ok(g)
    }
}

pub(crate) fn softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

const L2_EPS: f64 = 1e-12;

/// Row-wise projection onto the unit sphere.
#[derive(Default)]
pub(crate) struct L2Normalize<T> {
    pub(crate) cache: Option<(Tensor<T>, Vec<T>)>,
}

impl<T: Real> L2Normalize<T> {
    pub(crate) fn forward(&mut self, mut x: Tensor<T>, mode: Mode) -> Result<Tensor<T>, NnError> {
        let [n, d] = flat_dims(&x, "l2normalize")?;
        let mut norms = Vec::with_capacity(n);
        for row in x.values_mut().chunks_mut(d) {
            let norm = row
                .iter()
                .map(|v| *v * *v)
                .sum::<T>()
                .sqrt()
                .max(T::of(L2_EPS));
            row.iter_mut().for_each(|v| *v /= norm);
            norms.push(norm);
        }
        self.cache = (mode == Mode::Train).then(|| (x.clone(), norms));
        Ok(x)
    }

    pub(crate) fn backward(&mut self, mut g: Tensor<T>) -> Result<Tensor<T>, NnError> {
        let (y, norms) = self.cache.take().ok_or(NnError::StaleCache("l2normalize"))?;
        check_grad_shape(&g, y.shape(), "l2normalize")?;
        let d = y.row_len();
        for ((gr, yr), norm) in g.values_mut().chunks_mut(d).zip(y.values().chunks(d)).zip(norms) {
            let dot: T = gr.iter().zip(yr).map(|(a, b)| *a * *b).sum();
            for (gv, yv) in gr.iter_mut().zip(yr) {
                *gv = (*gv - *yv * dot) / norm;
            }
        }
        Ok(g)
    }
}
