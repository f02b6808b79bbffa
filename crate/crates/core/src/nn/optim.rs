use super::{Real, Tensor};

/// Adam with bias correction. Moment buffers are matched to parameters by
/// position, so the same parameter list order must be passed on every step.
#[derive(Clone, Debug)]
pub struct Adam<T: Real = f32> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(learning_rate: f64) -> Self {
        assert!(learning_rate > 0.0, "learning rate must be positive");
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from each tensor's gradient slot. Tensors without
    /// a gradient are treated as having a zero gradient.
    pub fn step(&mut self, params: Vec<&mut Tensor<T>>) {
        if self.m.len() != params.len() {
            self.m = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let c1 = T::one() - b1;
        let c2 = T::one() - b2;
        let lr_t = T::of(self.learning_rate / (1.0 - self.beta1.powi(t)));
        let corr2 = T::of(1.0 / (1.0 - self.beta2.powi(t)));
        let eps = T::of(self.eps);
        for ((p, m), v) in params.into_iter().zip(&mut self.m).zip(&mut self.v) {
            assert_eq!(p.len(), m.len(), "parameter list changed between steps");
            let (w, g) = p.value_and_grad_mut();
            for i in 0..w.len() {
                m[i] = b1 * m[i] + c1 * g[i];
                v[i] = b2 * v[i] + c2 * g[i] * g[i];
                w[i] -= lr_t * m[i] / ((v[i] * corr2).sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64, g: f64) -> Tensor<f64> {
        let mut t = Tensor::new(vec![1], vec![v]).unwrap();
        t.grad_mut()[0] = g;
        t
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // t=1: m̂ = g, v̂ = g², Δ = -lr·g/(|g| + ε)
        let mut p = scalar(0.0, 1.0);
        let mut opt = Adam::new(0.001);
        opt.step(vec![&mut p]);
        let want = -0.001 * 1.0 / (1.0 + 1e-8);
        assert!((p.values()[0] - want).abs() < 1e-15);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = scalar(0.7, 0.0);
        let mut opt = Adam::new(0.01);
        for _ in 0..5 {
            opt.step(vec![&mut p]);
        }
        assert_eq!(p.values()[0], 0.7);
        assert_eq!(opt.steps(), 5);
    }

    #[test]
    fn constant_gradient_descends() {
        let mut p = scalar(0.0, -2.0);
        let mut opt = Adam::new(0.01);
        let mut last = 0.0;
        for _ in 0..50 {
            opt.step(vec![&mut p]);
            assert!(p.values()[0] > last);
            last = p.values()[0];
        }
    }
}
