use super::{NnError, Real, Tensor};

/// Smallest probability fed to the logarithm.
const P_FLOOR: f64 = 1e-12;

/// Mean negative log-likelihood of `labels` under row-wise probabilities
/// `probs` (`[N, K]`), with the gradient with respect to `probs`.
pub fn cross_entropy<T: Real>(probs: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>), NnError> {
    let (n, k) = match *probs.shape() {
        [n, k] => (n, k),
        ref s => {
            return Err(NnError::ShapeMismatch {
                expected: "[N, K] probabilities".into(),
                got: format!("{s:?}"),
            })
        }
    };
    if labels.len() != n || labels.iter().any(|&y| y >= k) {
        return Err(NnError::ShapeMismatch {
            expected: format!("{n} labels below {k}"),
            got: format!("{} labels", labels.len()),
        });
    }
    let floor = T::of(P_FLOOR);
    let inv_n = T::one() / T::of(n as f64);
    let mut grad = vec![T::zero(); n * k];
    let mut loss = T::zero();
    for (i, &y) in labels.iter().enumerate() {
        let p = probs.values()[i * k + y];
        loss -= p.max(floor).ln();
        if p > floor {
            grad[i * k + y] = -inv_n / p;
        }
    }
    Ok((loss * inv_n, Tensor::new(vec![n, k], grad)?))
}

/// `Σ (out − target)²` with its gradient.
pub fn squared_error<T: Real>(out: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>), NnError> {
    if out.shape() != target.shape() {
        return Err(NnError::ShapeMismatch {
            expected: format!("target {:?}", out.shape()),
            got: format!("{:?}", target.shape()),
        });
    }
    let two = T::of(2.0);
    let mut loss = T::zero();
    let grad = out
        .values()
        .iter()
        .zip(target.values())
        .map(|(o, t)| {
            let d = *o - *t;
            loss += d * d;
            two * d
        })
        .collect();
    Ok((loss, Tensor::new(out.shape().to_vec(), grad)?))
}
