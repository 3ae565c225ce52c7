//! First-order optimizers over a flat parameter vector.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    AdamW,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adamw" => Ok(OptimizerKind::AdamW),
            other => Err(Error::Config(format!("unknown optimizer {other:?}"))),
        }
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// SGD or AdamW with decoupled weight decay. Decay applies only to the
/// entries flagged in `decay_mask`.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    weight_decay: f64,
    decay_mask: Vec<bool>,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, weight_decay: f64, decay_mask: Vec<bool>) -> Self {
        let n = decay_mask.len();
        Optimizer {
            kind,
            lr,
            weight_decay,
            decay_mask,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(params.len(), grad.len());
        debug_assert_eq!(params.len(), self.decay_mask.len());
        self.t += 1;
        let (lr, wd) = (self.lr, self.weight_decay);
        match self.kind {
            OptimizerKind::Sgd => {
                for (i, (p, g)) in params.iter_mut().zip(grad).enumerate() {
                    if self.decay_mask[i] {
                        *p *= 1.0 - lr * wd;
                    }
                    *p -= lr * g;
                }
            }
            OptimizerKind::AdamW => {
                let bc1 = 1.0 - ADAM_BETA1.powi(self.t);
                let bc2 = 1.0 - ADAM_BETA2.powi(self.t);
                for (i, (p, g)) in params.iter_mut().zip(grad).enumerate() {
                    if self.decay_mask[i] {
                        *p *= 1.0 - lr * wd;
                    }
                    self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
                    self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
                    let m_hat = self.m[i] / bc1;
                    let v_hat = self.v[i] / bc2;
                    *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                }
            }
        }
    }
}
