use super::{check_grad_shape, he_uniform, Mode};
use crate::nn::{NnError, Real, Tensor};
use rand::RngCore;

pub(crate) struct DenseCache<T> {
    x: Vec<T>,
    n: usize,
    /// Channel-major input shape when the input was spatial.
    spatial: Option<[usize; 4]>,
}

/// Fully connected layer, `y = x·Wᵀ + b`; spatial input is flattened in
/// `(c, y, x)` order per sample.
pub(crate) struct Dense<T> {
    pub(crate) weight: Tensor<T>,
    pub(crate) bias: Tensor<T>,
    pub(crate) cache: Option<DenseCache<T>>,
}

impl<T: Real> Dense<T> {
    pub(crate) fn new(fan_in: usize, units: usize, rng: &mut dyn RngCore) -> Self {
        Self {
            weight: Tensor::new(vec![units, fan_in], he_uniform(units * fan_in, fan_in, rng))
                .expect("consistent shape"),
            bias: Tensor::zeros(vec![units]),
            cache: None,
        }
    }

    pub(crate) fn units(&self) -> usize {
        self.weight.shape()[0]
    }

    fn fan_in(&self) -> usize {
        self.weight.shape()[1]
    }

    pub(crate) fn cast<U: Real>(&self) -> Dense<U> {
        Dense {
            weight: self.weight.cast(),
            bias: self.bias.cast(),
            cache: None,
        }
    }

    pub(crate) fn forward(&mut self, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>, NnError> {
        let (n, flat, spatial) = match *x.shape() {
            [n, _] => (n, x.into_values(), None),
            [c, n, h, w] => (n, cnhw_to_rows(x.values(), c, n, h * w), Some([c, n, h, w])),
            ref s => {
                return Err(NnError::ShapeMismatch {
                    expected: "dense: 2-D or 4-D activation".into(),
                    got: format!("{s:?}"),
                })
            }
        };
        let fi = self.fan_in();
        if flat.len() != n * fi {
            return Err(NnError::ShapeMismatch {
                expected: format!("dense with {fi} inputs per sample"),
                got: format!("{} values for {n} samples", flat.len()),
            });
        }
        let units = self.units();
        let mut y = Vec::with_capacity(n * units);
        for _ in 0..n {
            y.extend_from_slice(self.bias.values());
        }
        T::gemm(
            n,
            fi,
            units,
            T::one(),
            &flat,
            fi as isize,
            1,
            self.weight.values(),
            1,
            fi as isize,
            T::one(),
            &mut y,
            units as isize,
            1,
        );
        self.cache = (mode == Mode::Train).then_some(DenseCache {
            x: flat,
            n,
            spatial,
        });
        Tensor::new(vec![n, units], y)
    }

    pub(crate) fn backward(&mut self, g: Tensor<T>) -> Result<Tensor<T>, NnError> {
        let cache = self.cache.take().ok_or(NnError::StaleCache("dense"))?;
        let (n, units, fi) = (cache.n, self.units(), self.fan_in());
        check_grad_shape(&g, &[n, units], "dense")?;
        let gv = g.values();
        T::gemm(
            units,
            n,
            fi,
            T::one(),
            gv,
            1,
            units as isize,
            &cache.x,
            fi as isize,
            1,
            T::one(),
            self.weight.grad_mut(),
            fi as isize,
            1,
        );
        let db = self.bias.grad_mut();
        for row in gv.chunks(units) {
            for (d, v) in db.iter_mut().zip(row) {
                *d += *v;
            }
        }
        let mut dx = vec![T::zero(); n * fi];
        T::gemm(
            n,
            units,
            fi,
            T::one(),
            gv,
            units as isize,
            1,
            self.weight.values(),
            fi as isize,
            1,
            T::zero(),
            &mut dx,
            fi as isize,
            1,
        );
        match cache.spatial {
            None => Tensor::new(vec![n, fi], dx),
            Some([c, n, h, w]) => Tensor::new(vec![c, n, h, w], rows_to_cnhw(&dx, c, n, h * w)),
        }
    }
}

fn cnhw_to_rows<T: Real>(x: &[T], c: usize, n: usize, hw: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for ci in 0..c {
        for img in 0..n {
            let src = &x[(ci * n + img) * hw..][..hw];
            out[img * c * hw + ci * hw..][..hw].copy_from_slice(src);
        }
    }
    out
}

fn rows_to_cnhw<T: Real>(x: &[T], c: usize, n: usize, hw: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for ci in 0..c {
        for img in 0..n {
            let src = &x[img * c * hw + ci * hw..][..hw];
            out[(ci * n + img) * hw..][..hw].copy_from_slice(src);
        }
    }
    out
}
