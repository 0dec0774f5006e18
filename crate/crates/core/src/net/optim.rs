//! Parameter update rules: Adam (default) and SGD with momentum.

use crate::error::{Error, Result};

use super::{LayerParams, Network};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
    SgdMomentum { momentum: f64 },
}

#[derive(Debug, Clone)]
struct MomentBuffer {
    weights_m: Vec<f64>,
    weights_v: Vec<f64>,
    bias_m: Vec<f64>,
    bias_v: Vec<f64>,
}

/// Per-network optimizer state; moment buffers mirror the parameter shapes.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: OptimizerKind,
    learning_rate: f64,
    step: u64,
    moments: Vec<Option<MomentBuffer>>,
}

impl OptimizerState {
    pub fn new(net: &Network, kind: OptimizerKind, learning_rate: f64) -> Result<Self> {
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be a non-negative finite number, got {learning_rate}"
            )));
        }
        let needs_second = matches!(kind, OptimizerKind::Adam { .. });
        let moments = net
            .params()
            .iter()
            .map(|p| {
                p.as_ref().map(|lp| MomentBuffer {
                    weights_m: vec![0.0; lp.weights.len()],
                    weights_v: vec![0.0; if needs_second { lp.weights.len() } else { 0 }],
                    bias_m: vec![0.0; lp.bias.len()],
                    bias_v: vec![0.0; if needs_second { lp.bias.len() } else { 0 }],
                })
            })
            .collect();
        Ok(OptimizerState {
            kind,
            learning_rate,
            step: 0,
            moments,
        })
    }

    /// Adam with the usual defaults (beta 0.9/0.999, epsilon 1e-8).
    pub fn adam(net: &Network, learning_rate: f64) -> Result<Self> {
        Self::new(
            net,
            OptimizerKind::Adam {
                beta1: 0.9,
                beta2: 0.999,
                epsilon: 1e-8,
            },
            learning_rate,
        )
    }

    pub fn sgd_momentum(net: &Network, learning_rate: f64, momentum: f64) -> Result<Self> {
        Self::new(net, OptimizerKind::SgdMomentum { momentum }, learning_rate)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    /// Applies one update from per-layer gradients (same layout as the
    /// network's parameter list).
    pub(crate) fn apply(
        &mut self,
        params: &mut [Option<LayerParams>],
        grads: &[Option<LayerParams>],
    ) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.moments.len() {
            return Err(Error::Shape("optimizer state does not match network".into()));
        }
        self.step += 1;
        let lr = self.learning_rate;
        for ((param, grad), moment) in params.iter_mut().zip(grads).zip(&mut self.moments) {
            let (Some(param), Some(grad), Some(moment)) = (param.as_mut(), grad.as_ref(), moment.as_mut())
            else {
                continue;
            };
            match self.kind {
                OptimizerKind::Adam { beta1, beta2, epsilon } => {
                    let correction1 = 1.0 - beta1.powi(self.step as i32);
                    let correction2 = 1.0 - beta2.powi(self.step as i32);
                    adam_update(
                        param.weights.data_mut(),
                        grad.weights.data(),
                        &mut moment.weights_m,
                        &mut moment.weights_v,
                        lr,
                        beta1,
                        beta2,
                        epsilon,
                        correction1,
                        correction2,
                    );
                    adam_update(
                        param.bias.data_mut(),
                        grad.bias.data(),
                        &mut moment.bias_m,
                        &mut moment.bias_v,
                        lr,
                        beta1,
                        beta2,
                        epsilon,
                        correction1,
                        correction2,
                    );
                }
                OptimizerKind::SgdMomentum { momentum } => {
                    momentum_update(
                        param.weights.data_mut(),
                        grad.weights.data(),
                        &mut moment.weights_m,
                        lr,
                        momentum,
                    );
                    momentum_update(
                        param.bias.data_mut(),
                        grad.bias.data(),
                        &mut moment.bias_m,
                        lr,
                        momentum,
                    );
                }
            }
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn adam_update(
    values: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    correction1: f64,
    correction2: f64,
) {
    for i in 0..values.len() {
        let g = grads[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        let m_hat = m[i] / correction1;
        let v_hat = v[i] / correction2;
        values[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
    }
}

fn momentum_update(values: &mut [f64], grads: &[f64], velocity: &mut [f64], lr: f64, momentum: f64) {
    for i in 0..values.len() {
        velocity[i] = momentum * velocity[i] + grads[i];
        values[i] -= lr * velocity[i];
    }
}
