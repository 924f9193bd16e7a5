//! Adam with decoupled weight decay.

use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-6,
            weight_decay: 0.01,
        }
    }
}

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(params: &[Tensor]) -> Self {
        OptimizerState {
            first_moment: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            second_moment: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            step: 0,
        }
    }
}

/// One bias-corrected update of every tensor in `params`.
///
/// `names` is used for diagnostics; `decay` selects which tensors receive weight
/// decay (biases and layer-norm parameters normally do not). Weight decay is
/// applied to the parameter directly and never enters the moment estimates.
pub fn adam_step(
    params: &mut [Tensor],
    grads: &[Tensor],
    state: &mut OptimizerState,
    names: &[String],
    decay: &[bool],
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    let n = params.len();
    if grads.len() != n
        || state.first_moment.len() != n
        || names.len() != n
        || decay.len() != n
    {
        return Err(Error::shape("adam_step", &[n], &[grads.len()]));
    }
    for (i, g) in grads.iter().enumerate() {
        if g.shape() != params[i].shape() || state.first_moment[i].shape() != params[i].shape() {
            return Err(Error::shape("adam_step", params[i].shape(), g.shape()));
        }
        if !g.is_finite() {
            return Err(Error::NonFiniteGradient {
                param: names[i].clone(),
            });
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);

    for i in 0..n {
        let wd = if decay[i] { cfg.weight_decay } else { 0.0 };
        let m = state.first_moment[i].data_mut();
        let v = state.second_moment[i].data_mut();
        let p = params[i].data_mut();
        for (j, &g) in grads[i].data().iter().enumerate() {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] -= lr * (m_hat / (v_hat.sqrt() + cfg.epsilon) + wd * p[j]);
        }
    }
    Ok(())
}
