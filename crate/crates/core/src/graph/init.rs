use crate::ops::batchnorm::RunningStats;
use crate::rng::{self, Purpose};
use crate::store::ParameterStore;
use crate::tensor::{Real, Tensor};

use super::{ArchGraph, ParamRole};

/// He-normal conv weights (`std = sqrt(2 / fan_in)`), zero biases, unit BN scale
/// and zero BN shift. Each tensor draws from its own stream, indexed by its
/// position in the graph, so the result depends only on `seed`.
pub fn init_params<T: Real>(graph: &ArchGraph, seed: u64) -> ParameterStore<T> {
    let mut store = ParameterStore::new(seed);
    for (i, spec) in graph.param_specs().into_iter().enumerate() {
        let value = match spec.role {
            ParamRole::ConvWeight { fan_in } => {
                let std = (2.0 / fan_in as f64).sqrt();
                let mut buf = vec![0.0; spec.shape.numel()];
                rng::fill_gaussian(&mut rng::stream(seed, Purpose::Init, i as u64), &mut buf);
                Tensor::from_fn(spec.shape, |k| T::from_f64(buf[k] * std))
            }
            ParamRole::Bias | ParamRole::Beta => Tensor::zeros(spec.shape),
            ParamRole::Gamma => Tensor::full(spec.shape, T::one()),
        };
        store.insert_param(spec.name, value);
    }
    for bn in graph.bn_names() {
        let c = graph.node(bn).map_or(0, |n| n.channels);
        store.insert_running(bn, RunningStats::new(c));
    }
    store
}
