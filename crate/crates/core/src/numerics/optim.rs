//! Adaptive-moment optimizer with decoupled weight decay.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, WeeError};
use crate::numerics::{Grads, ParamStore};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
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

#[derive(Clone, Debug)]
pub struct AdamW {
    cfg: AdamWConfig,
    moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
    t: u64,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig) -> Result<Self> {
        if !(0.0..1.0).contains(&cfg.beta1) || !(0.0..1.0).contains(&cfg.beta2) || cfg.eps <= 0.0 {
            return Err(WeeError::Config(format!("invalid optimizer settings {cfg:?}")));
        }
        Ok(Self {
            cfg,
            moments: BTreeMap::new(),
            t: 0,
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One update of every trainable parameter that has a gradient;
    /// `lr_for` gives the step size per parameter name.
    pub fn step(
        &mut self,
        store: &mut ParamStore,
        grads: &Grads,
        lr_for: impl Fn(&str) -> f64,
    ) -> Result<()> {
        self.t += 1;
        let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for p in store.iter_mut().filter(|p| p.trainable) {
            let Some(g) = grads.get(&p.name) else { continue };
            if g.shape() != p.value.shape() {
                return Err(WeeError::Shape(format!("gradient for `{}`", p.name)));
            }
            let n = g.len();
            let (m, v) = self
                .moments
                .entry(p.name.clone())
                .or_insert_with(|| (vec![0.0; n], vec![0.0; n]));
            let lr = lr_for(&p.name);
            for (((w, &gi), mi), vi) in p.value.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                let update = (*mi / c1) / ((*vi / c2).sqrt() + self.cfg.eps);
                *w -= lr * (update + self.cfg.weight_decay * *w);
            }
        }
        Ok(())
    }
}
