use alloc::vec;
use alloc::vec::Vec;
// Float math for no_std builds; inherent methods win when std is linked.
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::graph::{Grads, Graph};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for one graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new<U>(config: AdamConfig, graph: &Graph<U>) -> Self
    where
        U: Real,
    {
        let zeros: Vec<Vec<T>> = graph
            .params()
            .iter()
            .map(|p| vec![T::zero(); p.value.len()])
            .collect();
        Adam {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One bias-corrected Adam update of every parameter of `graph`.
    pub fn update(&mut self, graph: &mut Graph<T>, grads: &Grads<T>) {
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - libm_powi(c.beta1, t);
        let bc2 = 1.0 - libm_powi(c.beta2, t);
        let lr = T::lit(c.learning_rate * bc2.sqrt() / bc1);
        let (b1, b2, eps) = (T::lit(c.beta1), T::lit(c.beta2), T::lit(c.eps * bc2.sqrt()));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        for (pi, p) in graph.params_mut().iter_mut().enumerate() {
            let (m, v, g) = (&mut self.m[pi], &mut self.v[pi], &grads.values[pi]);
            for j in 0..p.value.len() {
                m[j] = b1 * m[j] + one_b1 * g[j];
                v[j] = b2 * v[j] + one_b2 * g[j] * g[j];
                p.value[j] = p.value[j] - lr * m[j] / (v[j].sqrt() + eps);
            }
        }
    }
}

fn libm_powi(b: f64, e: i32) -> f64 {
    num_traits::Float::powi(b, e)
}
