use super::{check_grad_shape, spatial_dims, Mode};
use crate::nn::{NnError, Real, Tensor};

pub(crate) struct PoolCache {
    argmax: Vec<u32>,
    in_dims: [usize; 4],
}

/// 2×2 max pooling with stride 2; odd trailing rows/columns are dropped.
#[derive(Default)]
pub(crate) struct MaxPool2 {
    pub(crate) cache: Option<PoolCache>,
}

impl MaxPool2 {
    pub(crate) fn forward<T: Real>(&mut self, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>, NnError> {
        let [c, n, h, w] = spatial_dims(&x, "maxpool2")?;
        let (oh, ow) = (h / 2, w / 2);
        let planes = c * n;
        let xv = x.values();
        let mut out = Vec::with_capacity(planes * oh * ow);
        let mut argmax = Vec::with_capacity(if mode == Mode::Train { planes * oh * ow } else { 0 });
        for p in 0..planes {
            let base = p * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let i0 = base + 2 * oy * w + 2 * ox;
                    // first maximum wins on ties
                    let mut best = i0;
                    for cand in [i0 + 1, i0 + w, i0 + w + 1] {
                        if xv[cand] > xv[best] {
                            best = cand;
                        }
                    }
                    out.push(xv[best]);
                    if mode == Mode::Train {
                        argmax.push(best as u32);
                    }
                }
            }
        }
        self.cache = (mode == Mode::Train).then_some(PoolCache {
            argmax,
            in_dims: [c, n, h, w],
        });
        Tensor::new(vec![c, n, oh, ow], out)
    }

    pub(crate) fn backward<T: Real>(&mut self, g: Tensor<T>) -> Result<Tensor<T>, NnError> {
        let cache = self.cache.take().ok_or(NnError::StaleCache("maxpool2"))?;
        let [c, n, h, w] = cache.in_dims;
        check_grad_shape(&g, &[c, n, h / 2, w / 2], "maxpool2")?;
        let mut dx = vec![T::zero(); c * n * h * w];
        for (&idx, &gv) in cache.argmax.iter().zip(g.values()) {
            dx[idx as usize] += gv;
        }
        Tensor::new(vec![c, n, h, w], dx)
    }
}
