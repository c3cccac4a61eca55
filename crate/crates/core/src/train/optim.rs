use serde::{Deserialize, Serialize};

use crate::model::ModelParams;

use super::grad::Gradients;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// Dense SGD or Adam (with bias correction) over every parameter tensor.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    step: i32,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, params: &ModelParams) -> Self {
        let zeros = || -> Vec<Vec<f64>> {
            if kind == OptimizerKind::Adam {
                params.tensors().iter().map(|t| vec![0.0; t.len()]).collect()
            } else {
                Vec::new()
            }
        };
        Self {
            kind,
            lr,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    pub fn apply(&mut self, params: &mut ModelParams, grads: &Gradients) {
        self.step += 1;
        let lr = self.lr;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.tensors_mut().into_iter().zip(grads.tensors()) {
                    p.iter_mut().zip(g).for_each(|(x, dx)| *x -= lr * dx);
                }
            }
            OptimizerKind::Adam => {
                let c1 = 1.0 - BETA1.powi(self.step);
                let c2 = 1.0 - BETA2.powi(self.step);
                let tensors = params.tensors_mut().into_iter().zip(grads.tensors());
                for ((p, g), (m, v)) in tensors.zip(self.first.iter_mut().zip(self.second.iter_mut())) {
                    for k in 0..p.len() {
                        m[k] = BETA1 * m[k] + (1.0 - BETA1) * g[k];
                        v[k] = BETA2 * v[k] + (1.0 - BETA2) * g[k] * g[k];
                        let mhat = m[k] / c1;
                        let vhat = v[k] / c2;
                        p[k] -= lr * mhat / (vhat.sqrt() + EPS);
                    }
                }
            }
        }
    }
}
