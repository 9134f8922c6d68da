use serde::{Deserialize, Serialize};

use crate::model::ModelParams;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 3.5e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias correction. Moments are stored with the parameter layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub first: ModelParams,
    pub second: ModelParams,
    pub steps: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ModelParams) -> Self {
        Adam {
            config,
            first: params.zeros_like(),
            second: params.zeros_like(),
            steps: 0,
        }
    }

    /// One update with learning rate `lr` (the schedule lives with the caller).
    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, lr: f64) {
        self.steps += 1;
        let AdamConfig {
            beta1,
            beta2,
            epsilon,
            ..
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.steps as i32);
        let c2 = 1.0 - beta2.powi(self.steps as i32);
        let grads = grads.tensors();
        for (((p, m), v), (_, _, g)) in params
            .tensors_mut()
            .into_iter()
            .zip(self.first.tensors_mut())
            .zip(self.second.tensors_mut())
            .zip(grads)
        {
            for k in 0..p.len() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                p[k] -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Activation, Dense};
    use ndarray::{array, Array1, Array2};

    fn scalar_params(w: f64) -> ModelParams {
        ModelParams {
            activation: Activation::Identity,
            bounded_features: false,
            layers: vec![Dense {
                weight: array![[w]],
                bias: Array1::zeros(1),
            }],
            branches: vec![Array2::zeros((1, 1))],
        }
    }

    /// f(w) = (w - 3)^2, two steps by hand.
    #[test]
    fn matches_hand_computed_updates_on_quadratic() {
        let config = AdamConfig {
            learning_rate: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        };
        let mut p = scalar_params(1.0);
        let mut adam = Adam::new(config, &p);

        let grad = |w: f64| 2.0 * (w - 3.0);
        let mut g = scalar_params(grad(1.0));
        adam.step(&mut p, &g, config.learning_rate);
        // step 1: m = 0.1*g, v = 0.001*g^2; m_hat = g, v_hat = g^2
        let g1 = -4.0f64;
        let w1 = 1.0 - 0.1 * g1 / (g1.abs() + 1e-8);
        assert!((p.layers[0].weight[(0, 0)] - w1).abs() < 1e-10);

        g.layers[0].weight[(0, 0)] = grad(w1);
        adam.step(&mut p, &g, config.learning_rate);
        let g2 = grad(w1);
        let m = 0.9 * (0.1 * g1) + 0.1 * g2;
        let v = 0.999 * (0.001 * g1 * g1) + 0.001 * g2 * g2;
        let m_hat = m / (1.0 - 0.9f64.powi(2));
        let v_hat = v / (1.0 - 0.999f64.powi(2));
        let w2 = w1 - 0.1 * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((p.layers[0].weight[(0, 0)] - w2).abs() < 1e-10);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = scalar_params(0.5);
        let before = p.clone();
        let mut adam = Adam::new(AdamConfig::default(), &p);
        let zero = p.zeros_like();
        for _ in 0..5 {
            adam.step(&mut p, &zero, 1e-3);
        }
        assert_eq!(p, before);
    }
}
