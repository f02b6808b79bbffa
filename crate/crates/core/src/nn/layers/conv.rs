use super::{check_grad_shape, he_uniform, spatial_dims, Mode};
use crate::nn::{NnError, Real, Tensor};
use rand::RngCore;

pub(crate) struct ConvCache<T> {
    cols: Vec<T>,
    dims: [usize; 4],
}

/// 3×3 convolution with SAME padding, lowered to im2col + GEMM.
pub(crate) struct Conv3x3<T> {
    in_channels: usize,
    pub(crate) weight: Tensor<T>,
    pub(crate) bias: Tensor<T>,
    pub(crate) cache: Option<ConvCache<T>>,
}

impl<T: Real> Conv3x3<T> {
    pub(crate) fn new(in_channels: usize, out_channels: usize, rng: &mut dyn RngCore) -> Self {
        let k = in_channels * 9;
        Self {
            in_channels,
            weight: Tensor::new(vec![out_channels, k], he_uniform(out_channels * k, k, rng))
                .expect("consistent shape"),
            bias: Tensor::zeros(vec![out_channels]),
            cache: None,
        }
    }

    pub(crate) fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub(crate) fn cast<U: Real>(&self) -> Conv3x3<U> {
        Conv3x3 {
            in_channels: self.in_channels,
            weight: self.weight.cast(),
            bias: self.bias.cast(),
            cache: None,
        }
    }

    pub(crate) fn forward(&mut self, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>, NnError> {
        let [c, n, h, w] = spatial_dims(&x, "conv3x3")?;
        if c != self.in_channels {
            return Err(NnError::ShapeMismatch {
                expected: format!("conv3x3 with {} input channels", self.in_channels),
                got: format!("{c} channels"),
            });
        }
        let nhw = n * h * w;
        let k = c * 9;
        let cols = im2col(x.values(), c, n, h, w);
        let co = self.out_channels();
        let mut out = vec![T::zero(); co * nhw];
        for (row, &b) in out.chunks_mut(nhw).zip(self.bias.values()) {
            row.iter_mut().for_each(|v| *v = b);
        }
        T::gemm(
            co,
            k,
            nhw,
            T::one(),
            self.weight.values(),
            k as isize,
            1,
            &cols,
            nhw as isize,
            1,
            T::one(),
            &mut out,
            nhw as isize,
            1,
        );
        self.cache = match mode {
            Mode::Train => Some(ConvCache {
                cols,
                dims: [c, n, h, w],
            }),
            Mode::Eval => None,
        };
        Tensor::new(vec![co, n, h, w], out)
    }

    pub(crate) fn backward(&mut self, g: Tensor<T>) -> Result<Tensor<T>, NnError> {
        let cache = self.cache.take().ok_or(NnError::StaleCache("conv3x3"))?;
        let [c, n, h, w] = cache.dims;
        let co = self.out_channels();
        check_grad_shape(&g, &[co, n, h, w], "conv3x3")?;
        let nhw = n * h * w;
        let k = c * 9;
        let gv = g.values();

        // dW += dY · colsᵀ
        T::gemm(
            co,
            nhw,
            k,
            T::one(),
            gv,
            nhw as isize,
            1,
            &cache.cols,
            1,
            nhw as isize,
            T::one(),
            self.weight.grad_mut(),
            k as isize,
            1,
        );
        for (db, row) in self.bias.grad_mut().iter_mut().zip(gv.chunks(nhw)) {
            *db += row.iter().copied().sum::<T>();
        }

        // dcols = Wᵀ · dY
        let mut dcols = cache.cols;
        T::gemm(
            k,
            co,
            nhw,
            T::one(),
            self.weight.values(),
            1,
            k as isize,
            gv,
            nhw as isize,
            1,
            T::zero(),
            &mut dcols,
            nhw as isize,
            1,
        );
        Tensor::new(vec![c, n, h, w], col2im(&dcols, c, n, h, w))
    }
}

/// Rows indexed by `(channel, ky, kx)`, columns by `(n, y, x)`.
fn im2col<T: Real>(x: &[T], c: usize, n: usize, h: usize, w: usize) -> Vec<T> {
    let hw = h * w;
    let nhw = n * hw;
    let mut cols = vec![T::zero(); c * 9 * nhw];
    for ci in 0..c {
        let plane = &x[ci * nhw..(ci + 1) * nhw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[(ci * 9 + ky * 3 + kx) * nhw..][..nhw];
                for img in 0..n {
                    for y in 0..h {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let src = &plane[img * hw + sy as usize * w..][..w];
                        let dst = &mut row[img * hw + y * w..][..w];
                        match kx {
                            0 => dst[1..].copy_from_slice(&src[..w - 1]),
                            1 => dst.copy_from_slice(src),
                            _ => dst[..w - 1].copy_from_slice(&src[1..]),
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im<T: Real>(cols: &[T], c: usize, n: usize, h: usize, w: usize) -> Vec<T> {
    let hw = h * w;
    let nhw = n * hw;
    let mut x = vec![T::zero(); c * nhw];
    for ci in 0..c {
        let plane = &mut x[ci * nhw..(ci + 1) * nhw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[(ci * 9 + ky * 3 + kx) * nhw..][..nhw];
                for img in 0..n {
                    for y in 0..h {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let dst = &mut plane[img * hw + sy as usize * w..][..w];
                        let src = &row[img * hw + y * w..][..w];
                        match kx {
                            0 => dst[..w - 1]
                                .iter_mut()
                                .zip(&src[1..])
                                .for_each(|(d, s)| *d += *s),
                            1 => dst.iter_mut().zip(src).for_each(|(d, s)| *d += *s),
                            _ => dst[1..]
                                .iter_mut()
                                .zip(&src[..w - 1])
                                .for_each(|(d, s)| *d += *s),
                        }
                    }
                }
            }
        }
    }
    x
}
