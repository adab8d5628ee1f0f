use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::ops::batchnorm::{BatchStats, RunningStats};
use crate::tensor::{Real, Tensor};

/// Learnable tensors with their Adam moments, batch-norm running statistics
/// and the global optimizer step.
///
/// Maps are ordered by name so iteration and serialization are deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterStore<T> {
    params: BTreeMap<String, Tensor<T>>,
    adam_m: BTreeMap<String, Tensor<T>>,
    adam_v: BTreeMap<String, Tensor<T>>,
    running: BTreeMap<String, RunningStats<T>>,
    step: u64,
    init_seed: u64,
}

impl<T: Real> ParameterStore<T> {
    pub fn new(init_seed: u64) -> Self {
        Self {
            params: BTreeMap::new(),
            adam_m: BTreeMap::new(),
            adam_v: BTreeMap::new(),
            running: BTreeMap::new(),
            step: 0,
            init_seed,
        }
    }

    /// Adds a parameter with zeroed Adam moments.
    pub fn insert_param(&mut self, name: impl Into<String>, value: Tensor<T>) {
        let name = name.into();
        self.adam_m.insert(name.clone(), Tensor::zeros(value.shape()));
        self.adam_v.insert(name.clone(), Tensor::zeros(value.shape()));
        self.params.insert(name, value);
    }

    pub fn insert_running(&mut self, bn_name: impl Into<String>, stats: RunningStats<T>) {
        self.running.insert(bn_name.into(), stats);
    }

    pub fn param(&self, name: &str) -> Result<&Tensor<T>> {
        self.params.get(name).ok_or_else(|| Error::StoreMismatch {
            name: name.to_string(),
            expected: None,
            found: None,
        })
    }

    pub fn param_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.params.get_mut(name).ok_or_else(|| Error::StoreMismatch {
            name: name.to_string(),
            expected: None,
            found: None,
        })
    }

    pub fn params(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn num_params(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    pub fn running(&self, bn_name: &str) -> Result<&RunningStats<T>> {
        self.running.get(bn_name).ok_or_else(|| Error::StoreMismatch {
            name: format!("{bn_name}.running_mean"),
            expected: None,
            found: None,
        })
    }

    pub fn running_mut(&mut self, bn_name: &str) -> Result<&mut RunningStats<T>> {
        self.running.get_mut(bn_name).ok_or_else(|| Error::StoreMismatch {
            name: format!("{bn_name}.running_mean"),
            expected: None,
            found: None,
        })
    }

    pub fn running_stats(&self) -> impl Iterator<Item = (&str, &RunningStats<T>)> {
        self.running.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Folds batch statistics from a train-mode forward into the running averages.
    pub fn apply_bn_updates(&mut self, updates: &[(String, BatchStats)], momentum: f64) -> Result<()> {
        for (name, stats) in updates {
            self.running_mut(name)?.update(stats, momentum);
        }
        Ok(())
    }

    pub fn moments(&self, name: &str) -> Option<(&Tensor<T>, &Tensor<T>)> {
        Some((self.adam_m.get(name)?, self.adam_v.get(name)?))
    }

    pub(crate) fn set_moments(&mut self, name: &str, m: Tensor<T>, v: Tensor<T>) {
        self.adam_m.insert(name.to_string(), m);
        self.adam_v.insert(name.to_string(), v);
    }

    pub(crate) fn param_and_moments_mut(
        &mut self,
        name: &str,
    ) -> Option<(&mut Tensor<T>, &mut Tensor<T>, &mut Tensor<T>)> {
        Some((
            self.params.get_mut(name)?,
            self.adam_m.get_mut(name)?,
            self.adam_v.get_mut(name)?,
        ))
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub(crate) fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    /// Converts every tensor to another precision. Moments and step are kept.
    pub fn cast<U: Real>(&self) -> ParameterStore<U> {
        let conv = |m: &BTreeMap<String, Tensor<T>>| m.iter().map(|(k, v)| (k.clone(), v.cast())).collect();
        ParameterStore {
            params: conv(&self.params),
            adam_m: conv(&self.adam_m),
            adam_v: conv(&self.adam_v),
            running: self
                .running
                .iter()
                .map(|(k, r)| {
                    (
                        k.clone(),
                        RunningStats {
                            mean: r.mean.cast(),
                            var: r.var.cast(),
                        },
                    )
                })
                .collect(),
            step: self.step,
            init_seed: self.init_seed,
        }
    }
}
