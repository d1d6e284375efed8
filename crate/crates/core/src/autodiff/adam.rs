use serde::{Deserialize, Serialize};

use super::{ParamId, ParamStore, Scalar, Tensor};

fn default_lr() -> f64 {
    0.00025
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub epsilon: f64,
    /// Rescales the gradient when its global L2 norm exceeds this value.
    #[serde(default)]
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: default_lr(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_eps(),
            clip_norm: None,
        }
    }
}

/// Bias-corrected Adam moments for every parameter of a store.
#[derive(Debug, Clone)]
pub struct AdamState<T = f64> {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Option<Vec<T>>>,
    v: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, step: 0, m: Vec::new(), v: Vec::new() }
    }

    /// Applies one update. Parameters without a gradient are left alone
    /// but the step counter still advances.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &[(ParamId, Tensor<T>)]) {
        self.step += 1;
        if self.m.len() < store.len() {
            self.m.resize(store.len(), None);
            self.v.resize(store.len(), None);
        }
        let c = self.config;
        let scale = match c.clip_norm {
            Some(max) => {
                let norm = grads
                    .iter()
                    .flat_map(|(_, g)| g.data().iter())
                    .map(|v| v.f64() * v.f64())
                    .sum::<f64>()
                    .sqrt();
                if norm > max { max / norm } else { 1.0 }
            }
            None => 1.0,
        };
        let t = self.step as i32;
        let lr_t = c.learning_rate * (1.0 - c.beta2.powi(t)).sqrt() / (1.0 - c.beta1.powi(t));
        let (b1, b2, eps, lr_t, scale) = (T::of(c.beta1), T::of(c.beta2), T::of(c.epsilon), T::of(lr_t), T::of(scale));
        let bc2 = T::of((1.0 - c.beta2.powi(t)).sqrt());
        let one = T::one();
        for (id, g) in grads {
            if !store.param(*id).trainable {
                continue;
            }
            let n = g.len();
            let m = self.m[id.0].get_or_insert_with(|| vec![T::zero(); n]);
            let v = self.v[id.0].get_or_insert_with(|| vec![T::zero(); n]);
            let p = store.get_mut(*id).data_mut();
            for j in 0..n {
                let gj = g.data()[j] * scale;
                m[j] = b1 * m[j] + (one - b1) * gj;
                v[j] = b2 * v[j] + (one - b2) * gj * gj;
                // Epsilon is applied to the bias-corrected second moment.
                p[j] = p[j] - lr_t * m[j] / (v[j].sqrt() + eps * bc2);
            }
        }
    }
}
