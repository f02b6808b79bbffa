use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{Layer, LayerSpec, Mode};
use super::{NnError, Real, Tensor};

/// A sequential network. Inputs are `[N, C, H, W]` (or `[N, F]` for a flat
/// input); outputs of the final dense stage are `[N, F]`.
pub struct Network<T: Real = f32> {
    input: Vec<usize>,
    layers: Vec<Layer<T>>,
    frozen: Vec<bool>,
    /// Per-sample output shape of each layer.
    shapes: Vec<Vec<usize>>,
}

impl<T: Real> Clone for Network<T> {
    fn clone(&self) -> Self {
        self.cast()
    }
}

impl<T: Real> std::fmt::Debug for Network<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Network")
            .field("input", &self.input)
            .field("layers", &self.specs())
            .field("frozen", &self.frozen)
            .finish()
    }
}

impl<T: Real> Network<T> {
    /// Builds a network for per-sample input shape `input` (`[C, H, W]` or
    /// `[F]`), initializing weights from `seed`.
    pub fn build(input: &[usize], specs: &[LayerSpec], seed: u64) -> Result<Self, NnError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::build_with(input, specs, &mut rng)
    }

    pub fn build_with(
        input: &[usize],
        specs: &[LayerSpec],
        rng: &mut dyn RngCore,
    ) -> Result<Self, NnError> {
        if !(input.len() == 1 || input.len() == 3) || input.contains(&0) {
            return Err(NnError::InvalidSpec(format!("input shape {input:?}")));
        }
        let mut net = Self {
            input: input.to_vec(),
            layers: Vec::with_capacity(specs.len()),
            frozen: Vec::with_capacity(specs.len()),
            shapes: Vec::with_capacity(specs.len()),
        };
        for spec in specs {
            net.push(*spec, rng)?;
        }
        Ok(net)
    }

    fn push(&mut self, spec: LayerSpec, rng: &mut dyn RngCore) -> Result<(), NnError> {
        let (layer, shape) = Layer::build(spec, self.output_shape(), rng)?;
        self.layers.push(layer);
        self.frozen.push(false);
        self.shapes.push(shape);
        Ok(())
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input
    }

    /// Per-sample output shape.
    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().unwrap_or(&self.input)
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn is_frozen(&self, layer: usize) -> bool {
        self.frozen[layer]
    }

    pub fn freeze_all(&mut self) {
        self.frozen.iter_mut().for_each(|f| *f = true);
    }

    pub(crate) fn set_frozen(&mut self, layer: usize, frozen: bool) {
        self.frozen[layer] = frozen;
    }

    /// Appends the layers of `tail`, which must accept this network's output.
    pub fn append(&mut self, tail: Network<T>) -> Result<(), NnError> {
        if tail.input != self.output_shape() {
            return Err(NnError::ShapeMismatch {
                expected: format!("tail input {:?}", self.output_shape()),
                got: format!("{:?}", tail.input),
            });
        }
        self.layers.extend(tail.layers);
        self.frozen.extend(tail.frozen);
        self.shapes.extend(tail.shapes);
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.params())
            .map(Tensor::len)
            .sum()
    }

    /// All parameter tensors, frozen or not, in layer order.
    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    /// Parameters of unfrozen layers, in layer order.
    pub fn trainable_params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers
            .iter_mut()
            .zip(&self.frozen)
            .filter(|(_, f)| !**f)
            .flat_map(|(l, _)| l.params_mut())
            .collect()
    }

    pub(crate) fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn zero_grad(&mut self) {
        for l in &mut self.layers {
            for p in l.params_mut() {
                p.zero_grad();
            }
        }
    }

    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            input: self.input.clone(),
            layers: self.layers.iter().map(Layer::cast).collect(),
            frozen: self.frozen.clone(),
            shapes: self.shapes.clone(),
        }
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<usize, NnError> {
        let s = x.shape();
        if s.len() != self.input.len() + 1 || s[1..] != self.input[..] {
            return Err(NnError::ShapeMismatch {
                expected: format!("[N, {:?}] network input", self.input),
                got: format!("{s:?}"),
            });
        }
        Ok(s[0])
    }

    pub fn forward(
        &mut self,
        x: &Tensor<T>,
        mode: Mode,
        rng: &mut dyn RngCore,
    ) -> Result<Tensor<T>, NnError> {
        let n = self.check_input(x)?;
        let mut a = match *self.input {
            [c, h, w] => Tensor::new(vec![c, n, h, w], swap_leading(x.values(), n, c, h * w))?,
            _ => Tensor::new(x.shape().to_vec(), x.values().to_vec())?,
        };
        for layer in &mut self.layers {
            a = layer.forward(a, mode, rng)?;
        }
        match *a.shape() {
            [c, n, h, w] => Tensor::new(vec![n, c, h, w], swap_leading(a.values(), c, n, h * w)),
            _ => Ok(a),
        }
    }

    /// Deterministic inference (dropout off, batchnorm on running statistics).
    pub fn infer(&mut self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        self.forward(x, Mode::Eval, &mut rng)
    }

    /// Inference in chunks of `batch` samples.
    pub fn infer_batched(&mut self, x: &Tensor<T>, batch: usize) -> Result<Tensor<T>, NnError> {
        let n = self.check_input(x)?;
        let batch = batch.max(1);
        let mut out = Vec::new();
        let mut out_shape = None;
        for start in (0..n).step_by(batch) {
            let idx: Vec<usize> = (start..(start + batch).min(n)).collect();
            let y = self.infer(&x.select_rows(&idx))?;
            out_shape.get_or_insert_with(|| y.shape()[1..].to_vec());
            out.extend_from_slice(y.values());
        }
        let mut shape = vec![n];
        shape.extend(out_shape.unwrap_or_else(|| self.output_shape().to_vec()));
        Tensor::new(shape, out)
    }

    /// Backpropagates `g` (gradient with respect to the output), accumulating
    /// parameter gradients and returning the gradient with respect to the input.
    pub fn backward(&mut self, g: Tensor<T>) -> Result<Tensor<T>, NnError> {
        let mut g = match *g.shape() {
            [n, c, h, w] => Tensor::new(vec![c, n, h, w], swap_leading(g.values(), n, c, h * w))?,
            _ => g,
        };
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(g)?;
        }
        match *g.shape() {
            [c, n, h, w] => Tensor::new(vec![n, c, h, w], swap_leading(g.values(), c, n, h * w)),
            _ => Ok(g),
        }
    }

    pub fn clear_caches(&mut self) {
        self.layers.iter_mut().for_each(Layer::clear_cache);
    }
}

/// Transposes the two leading axes of an `[a, b, inner]` array.
fn swap_leading<T: Copy>(x: &[T], a: usize, b: usize, inner: usize) -> Vec<T> {
    if a == 1 || b == 1 {
        return x.to_vec();
    }
    let mut out = Vec::with_capacity(x.len());
    for j in 0..b {
        for i in 0..a {
            out.extend_from_slice(&x[(i * b + j) * inner..][..inner]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::squared_error;
    use rand::Rng;

    fn random_tensor(shape: Vec<usize>, seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn multi_channel_input_round_trips_layout() {
        let x = random_tensor(vec![3, 2, 4, 4], 1);
        let cnhw = swap_leading(x.values(), 3, 2, 16);
        assert_eq!(swap_leading(&cnhw, 2, 3, 16), x.values());
    }

    #[test]
    fn softmax_head_outputs_simplex() {
        let specs = [
            LayerSpec::Conv3x3 { out_channels: 2 },
            LayerSpec::MaxPool2,
            LayerSpec::Dense { units: 5 },
            LayerSpec::Softmax,
        ];
        let mut net = Network::<f64>::build(&[1, 4, 4], &specs, 3).unwrap();
        let y = net.infer(&random_tensor(vec![3, 1, 4, 4], 2)).unwrap();
        assert_eq!(y.shape(), &[3, 5]);
        for i in 0..3 {
            let s: f64 = y.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(y.row(i).iter().all(|p| *p >= 0.0));
        }
    }

    #[test]
    fn input_shape_is_validated() {
        let mut net = Network::<f64>::build(&[4], &[LayerSpec::Dense { units: 2 }], 0).unwrap();
        let err = net.infer(&random_tensor(vec![2, 3], 0)).unwrap_err();
        assert!(matches!(err, NnError::ShapeMismatch { .. }));
    }

    #[test]
    fn backward_without_forward_is_stale() {
        let mut net = Network::<f64>::build(&[4], &[LayerSpec::Dense { units: 2 }], 0).unwrap();
        let err = net.backward(Tensor::zeros(vec![1, 2])).unwrap_err();
        assert!(matches!(err, NnError::StaleCache("dense")));
        // eval forward leaves no cache either
        net.infer(&random_tensor(vec![1, 4], 0)).unwrap();
        assert!(net.backward(Tensor::zeros(vec![1, 2])).is_err());
    }

    #[test]
    fn linear_quadratic_gradient_matches_closed_form() {
        // L = ||W x + b - y||², dL/dW = 2 (Wx + b - y) xᵀ, dL/dx = 2 Wᵀ(Wx + b - y)
        let mut net = Network::<f64>::build(&[3], &[LayerSpec::Dense { units: 2 }], 9).unwrap();
        let x = random_tensor(vec![1, 3], 4);
        let y = random_tensor(vec![1, 2], 5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = net.forward(&x, Mode::Train, &mut rng).unwrap();
        let (_, g) = squared_error(&out, &y).unwrap();
        let dx = net.backward(g).unwrap();
        let w = net.params()[0].values().to_vec();
        let b = net.params()[1].values().to_vec();
        let r: Vec<f64> = (0..2)
            .map(|i| (0..3).map(|j| w[i * 3 + j] * x.values()[j]).sum::<f64>() + b[i] - y.values()[i])
            .collect();
        let dw = net.params()[0].grad().unwrap();
        for i in 0..2 {
            for j in 0..3 {
                assert!((dw[i * 3 + j] - 2.0 * r[i] * x.values()[j]).abs() < 1e-12);
            }
        }
        for j in 0..3 {
            let want: f64 = (0..2).map(|i| 2.0 * w[i * 3 + j] * r[i]).sum();
            assert!((dx.values()[j] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_parameter_gradients() {
        let specs = [
            LayerSpec::Conv3x3 { out_channels: 2 },
            LayerSpec::Relu,
            LayerSpec::BatchNorm,
            LayerSpec::MaxPool2,
            LayerSpec::Dense { units: 3 },
        ];
        let mut net = Network::<f64>::build(&[1, 4, 4], &specs, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = net.forward(&random_tensor(vec![2, 1, 4, 4], 7), Mode::Train, &mut rng).unwrap();
        net.backward(Tensor::zeros(out.shape().to_vec())).unwrap();
        for p in net.params() {
            assert!(p.grad().unwrap().iter().all(|g| *g == 0.0));
        }
    }

    #[test]
    fn relu_blocks_gradient_at_negative_preactivation() {
        let mut net = Network::<f64>::build(&[2], &[LayerSpec::Relu], 0).unwrap();
        let x = Tensor::new(vec![1, 2], vec![-0.5, 0.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        net.forward(&x, Mode::Train, &mut rng).unwrap();
        let dx = net.backward(Tensor::new(vec![1, 2], vec![1.0, 1.0]).unwrap()).unwrap();
        assert_eq!(dx.values(), &[0.0, 1.0]);
    }

    #[test]
    fn dropout_eval_is_identity() {
        let mut net = Network::<f64>::build(&[6], &[LayerSpec::Dropout { rate: 0.5 }], 0).unwrap();
        let x = random_tensor(vec![4, 6], 3);
        assert_eq!(net.infer(&x).unwrap(), x);
    }

    #[test]
    fn dropout_train_rate_and_scaling() {
        let mut net = Network::<f32>::build(&[20_000], &[LayerSpec::Dropout { rate: 0.5 }], 0).unwrap();
        let x = Tensor::new(vec![1, 20_000], vec![1.0f32; 20_000]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let y = net.forward(&x, Mode::Train, &mut rng).unwrap();
        let zeros = y.values().iter().filter(|v| **v == 0.0).count() as f64;
        // binomial sd = sqrt(n p (1-p)) ≈ 70.7
        assert!((zeros - 10_000.0).abs() < 4.0 * 70.72);
        assert!(y.values().iter().all(|v| *v == 0.0 || *v == 2.0));
    }

    #[test]
    fn batchnorm_train_output_is_standardized() {
        let mut net = Network::<f64>::build(&[3, 4, 4], &[LayerSpec::BatchNorm], 0).unwrap();
        let x = random_tensor(vec![8, 3, 4, 4], 21);
        let x = Tensor::new(x.shape().to_vec(), x.values().iter().map(|v| 3.0 * v + 2.0).collect()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let y = net.forward(&x, Mode::Train, &mut rng).unwrap();
        for c in 0..3 {
            let vals: Vec<f64> = (0..8)
                .flat_map(|n| y.values()[(n * 3 + c) * 16..][..16].to_vec())
                .collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let v = vals.iter().map(|a| (a - m).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(m.abs() < 1e-4);
            assert!((v - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn append_checks_shapes_and_keeps_frozen_flags() {
        let mut body = Network::<f64>::build(&[4], &[LayerSpec::Dense { units: 3 }], 0).unwrap();
        body.freeze_all();
        let head = Network::<f64>::build(&[3], &[LayerSpec::Dense { units: 2 }, LayerSpec::Softmax], 1)
            .unwrap();
        let bad = Network::<f64>::build(&[5], &[LayerSpec::Relu], 1).unwrap();
        assert!(body.clone().append(bad).is_err());
        body.append(head).unwrap();
        assert_eq!(body.len(), 3);
        assert!(body.is_frozen(0) && !body.is_frozen(1));
        assert_eq!(body.trainable_params_mut().len(), 2);
    }
}
