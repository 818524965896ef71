//! Parameter updates from accumulated gradients.

use alloc::string::String;
use alloc::vec::Vec;

use crate::float;

use super::{ParamStore, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    PlainSgd,
    AdaptiveMoment,
}

/// Gradient-descent stepper. Plain SGD applies `p -= rate * g`; the
/// adaptive-moment variant keeps per-parameter first and second moment
/// estimates with the standard defaults (0.9, 0.999, 1e-8) and
/// bias-corrects both.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step_count: u64,
    first_moment: Vec<Tensor>,
    second_moment: Vec<Tensor>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, rate: f64) -> Self {
        Optimizer {
            kind,
            rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    pub fn plain_sgd(rate: f64) -> Self {
        Optimizer::new(OptimizerKind::PlainSgd, rate)
    }

    pub fn adaptive_moment(rate: f64) -> Self {
        Optimizer::new(OptimizerKind::AdaptiveMoment, rate)
    }

    /// Applies one update from the store's accumulated gradients. Fails
    /// fast on any non-finite gradient, leaving parameters untouched.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<(), TensorError> {
        for (id, param) in store.iter() {
            if !param.grad.is_finite() {
                let _ = id;
                return Err(TensorError::NonFiniteGradient {
                    param: String::from(param.name.as_str()),
                });
            }
        }
        match self.kind {
            OptimizerKind::PlainSgd => {
                let rate = self.rate;
                for id in store.ids().collect::<Vec<_>>() {
                    let grad = store.grad(id).data().to_vec();
                    let value = store.value_mut(id).data_mut();
                    for (v, g) in value.iter_mut().zip(&grad) {
                        *v -= rate * g;
                    }
                }
            }
            OptimizerKind::AdaptiveMoment => {
                if self.first_moment.len() != store.len() {
                    self.first_moment =
                        store.iter().map(|(_, p)| Tensor::zeros(p.value.shape().to_vec())).collect();
                    self.second_moment = self.first_moment.clone();
                }
                self.step_count += 1;
                let t = self.step_count as i32;
                let bc1 = 1.0 - float::powi(self.beta1, t);
                let bc2 = 1.0 - float::powi(self.beta2, t);
                for id in store.ids().collect::<Vec<_>>() {
                    let grad = store.grad(id).data().to_vec();
                    let m = self.first_moment[id.0].data_mut();
                    let v = self.second_moment[id.0].data_mut();
                    let value = store.value_mut(id).data_mut();
                    for i in 0..grad.len() {
                        let g = grad[i];
                        m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                        v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                        let m_hat = m[i] / bc1;
                        let v_hat = v[i] / bc2;
                        value[i] -= self.rate * m_hat / (float::sqrt(v_hat) + self.epsilon);
                    }
                }
            }
        }
        Ok(())
    }
}
