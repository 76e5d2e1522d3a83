//! Adam with bias correction. State is reset at every task boundary, so a
//! parameter whose gradient stays zero for a whole task is never touched.

use crate::error::{Error, Result};
use crate::nets::ParameterStore;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    /// Zeroed moments shaped after `params`.
    pub fn new(config: AdamConfig, params: &ParameterStore) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().map(|t| vec![0.0; t.numel()]).collect();
        Self {
            config,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &[Vec<f64>] {
        &self.m
    }

    pub fn second_moment(&self) -> &[Vec<f64>] {
        &self.v
    }

    /// Zeroes both moments and the step counter; hyperparameters are kept.
    pub fn reset(&mut self) {
        self.m.iter_mut().chain(self.v.iter_mut()).for_each(|b| b.iter_mut().for_each(|x| *x = 0.0));
        self.t = 0;
    }

    pub fn step(&mut self, params: &ParameterStore) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::InvalidDims(format!(
                "optimizer tracks {} tensors, got {}",
                self.m.len(),
                params.len()
            )));
        }
        for ((name, t), m) in params.iter().zip(&self.m) {
            if t.numel() != m.len() {
                return Err(Error::InvalidDims(format!(
                    "optimizer state for {name} has {} entries, tensor has {}",
                    m.len(),
                    t.numel()
                )));
            }
            if t.grad_ref().is_none() {
                return Err(Error::InvalidArgument(format!("no gradient for {name}")));
            }
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for ((t, m), v) in params.tensors().zip(&mut self.m).zip(&mut self.v) {
            let grad = t.grad_ref();
            let grad = grad.as_ref().expect("checked above");
            let mut data = t.data_mut();
            for i in 0..grad.len() {
                let g = grad[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                data[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
