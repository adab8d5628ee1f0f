//! Adam with bias correction.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::store::ParameterStore;
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One Adam update of every parameter in `store`, then `step += 1`.
///
/// Every parameter must have an entry in `grads`; the store is left untouched
/// when one is missing.
pub fn adam_step<T: Real>(
    store: &mut ParameterStore<T>,
    grads: &BTreeMap<String, Tensor<T>>,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    let names: Vec<String> = store.param_names().map(str::to_string).collect();
    for name in &names {
        let g = grads.get(name).ok_or_else(|| Error::MissingGradient(name.clone()))?;
        g.expect_shape(store.param(name)?.shape(), "adam_step")?;
    }
    let t = store.step() + 1;
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    for name in &names {
        let g = &grads[name];
        let (p, m, v) = store
            .param_and_moments_mut(name)
            .ok_or_else(|| Error::MissingGradient(name.clone()))?;
        for (((p, m), v), &g) in p
            .data_mut()
            .iter_mut()
            .zip(m.data_mut())
            .zip(v.data_mut())
            .zip(g.data())
        {
            let g = g.to_f64().unwrap_or(f64::NAN);
            let mn = cfg.beta1 * m.to_f64().unwrap_or(0.0) + (1.0 - cfg.beta1) * g;
            let vn = cfg.beta2 * v.to_f64().unwrap_or(0.0) + (1.0 - cfg.beta2) * g * g;
            *m = T::from_f64(mn);
            *v = T::from_f64(vn);
            let update = lr * (mn / bc1) / ((vn / bc2).sqrt() + cfg.epsilon);
            *p = T::from_f64(p.to_f64().unwrap_or(f64::NAN) - update);
        }
    }
    store.set_step(t);
    Ok(())
}
