//! AdamW with decoupled weight decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Optimizer state: moment buffers aligned with a [`ParamStore`]'s order.
#[derive(Debug, Clone)]
pub struct AdamWState {
    pub config: AdamWConfig,
    step_count: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamWState {
    pub fn new(params: &ParamStore, config: AdamWConfig) -> Self {
        let zeros = || params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        Self {
            config,
            step_count: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One update. `grads` must be aligned with `params` (same names, same
    /// shapes). Nothing is modified when any gradient is non-finite.
    pub fn step(&mut self, params: &mut ParamStore, grads: &ParamStore, lr: f64) -> Result<()> {
        if !(lr >= 0.0) || !lr.is_finite() {
            return Err(Error::Usage(format!("learning rate must be >= 0, got {lr}")));
        }
        params.check_compatible(grads)?;
        if params.len() != self.m.len() {
            return Err(Error::Dimension(format!(
                "optimizer state tracks {} tensors, store has {}",
                self.m.len(),
                params.len()
            )));
        }
        if let Some((name, _)) = grads.iter().find(|(_, g)| !g.is_finite()) {
            return Err(Error::Numeric(format!("non-finite gradient for {name}")));
        }

        self.step_count += 1;
        let AdamWConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let t = self.step_count as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        let decay = 1.0 - lr * weight_decay;

        for (i, ((_, p), (_, g))) in params.iter_mut().zip(grads.iter()).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *pv *= decay;
                *mv = beta1 * *mv + (1.0 - beta1) * gv;
                *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Zero-filled gradient store shaped like `params`.
pub fn zero_grads(params: &ParamStore) -> ParamStore {
    let mut out = ParamStore::new();
    for (name, t) in params.iter() {
        out.insert(name, Tensor::zeros(t.shape()))
            .expect("names are unique in the source store");
    }
    out
}
