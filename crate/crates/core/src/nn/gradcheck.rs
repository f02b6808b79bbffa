use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Mode, Network, NnError, Tensor};

const STEP: f64 = 1e-5;
/// Denominator floor so that near-zero gradients compare absolutely.
const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub checked: usize,
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Compares backward-pass gradients of every parameter and input coordinate
/// with central differences of `loss ∘ net`. The network runs in training
/// mode with the dropout stream re-seeded identically for every evaluation.
pub fn gradient_check<F>(
    net: &mut Network<f64>,
    x: &Tensor<f64>,
    mut loss: F,
    seed: u64,
) -> Result<GradCheckReport, NnError>
where
    F: FnMut(&Tensor<f64>) -> Result<(f64, Tensor<f64>), NnError>,
{
    net.zero_grad();
    let out = net.forward(x, Mode::Train, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let (_, g) = loss(&out)?;
    let dx = net.backward(g)?;
    let analytic: Vec<Vec<f64>> = net
        .params()
        .iter()
        .map(|p| p.grad().map_or_else(|| vec![0.0; p.len()], <[f64]>::to_vec))
        .collect();

    let mut eval = |net: &mut Network<f64>, x: &Tensor<f64>| -> Result<f64, NnError> {
        let out = net.forward(x, Mode::Train, &mut ChaCha8Rng::seed_from_u64(seed))?;
        net.clear_caches();
        Ok(loss(&out)?.0)
    };

    let mut worst = 0.0f64;
    let mut checked = 0;
    for (pi, grads) in analytic.iter().enumerate() {
        for (i, &a) in grads.iter().enumerate() {
            let orig = param_value(net, pi, i);
            set_param(net, pi, i, orig + STEP);
            let plus = eval(net, x)?;
            set_param(net, pi, i, orig - STEP);
            let minus = eval(net, x)?;
            set_param(net, pi, i, orig);
            worst = worst.max(relative_error(a, (plus - minus) / (2.0 * STEP)));
            checked += 1;
        }
    }
    let mut xp = x.clone();
    for i in 0..x.len() {
        let orig = x.values()[i];
        xp.values_mut()[i] = orig + STEP;
        let plus = eval(net, &xp)?;
        xp.values_mut()[i] = orig - STEP;
        let minus = eval(net, &xp)?;
        xp.values_mut()[i] = orig;
        worst = worst.max(relative_error(dx.values()[i], (plus - minus) / (2.0 * STEP)));
        checked += 1;
    }
    Ok(GradCheckReport {
        max_relative_error: worst,
        checked,
    })
}

fn param_value(net: &Network<f64>, tensor: usize, i: usize) -> f64 {
    net.params()[tensor].values()[i]
}

fn set_param(net: &mut Network<f64>, tensor: usize, i: usize, v: f64) {
    let mut all: Vec<&mut Tensor<f64>> = net
        .layers_mut()
        .iter_mut()
        .flat_map(|l| l.params_mut())
        .collect();
    all[tensor].values_mut()[i] = v;
}
