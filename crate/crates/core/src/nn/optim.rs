use serde::{Deserialize, Serialize};

use super::{Gradients, NetworkModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

/// Optimiser hyper-parameters. The learning rate passed to [`Optimizer::step`]
/// is supplied by the caller so that schedules live with the training loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Optimizer {
    fn default() -> Self {
        Self::adam()
    }
}

impl Optimizer {
    pub fn adam() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn sgd() -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            ..Self::adam()
        }
    }

    pub fn of_kind(kind: OptimizerKind) -> Self {
        Self { kind, ..Self::adam() }
    }

    pub fn init_state(&self, model: &NetworkModel) -> OptimizerState {
        let zeros = || {
            model
                .parameters()
                .iter()
                .map(|p| vec![0.0; p.len()])
                .collect::<Vec<_>>()
        };
        OptimizerState {
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    pub fn step(&self, model: &mut NetworkModel, grads: &Gradients, state: &mut OptimizerState, lr: f64) {
        state.step += 1;
        let t = state.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let params = model.parameters_mut();
        assert_eq!(params.len(), grads.0.len(), "gradient list does not match the model");
        for (((p, g), m), v) in params
            .into_iter()
            .zip(&grads.0)
            .zip(&mut state.first)
            .zip(&mut state.second)
        {
            assert_eq!(p.len(), g.len(), "gradient shape does not match the parameter");
            match self.kind {
                OptimizerKind::Sgd => {
                    for (w, d) in p.iter_mut().zip(g) {
                        *w -= lr * d;
                    }
                }
                OptimizerKind::Adam => {
                    for (((w, d), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *m = self.beta1 * *m + (1.0 - self.beta1) * d;
                        *v = self.beta2 * *v + (1.0 - self.beta2) * d * d;
                        let m_hat = *m / bc1;
                        let v_hat = *v / bc2;
                        *w -= lr * m_hat / (v_hat.sqrt() + self.eps);
                    }
                }
            }
        }
    }
}

/// Adam moment estimates (unused by SGD).
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}
