use std::collections::BTreeMap;

use crate::autodiff::{BnRun, Tape, Var};
use crate::error::{Error, Result};
use crate::ops::batchnorm::{BatchStats, BN_EPSILON};
use crate::ops::conv::same_padding;
use crate::store::ParameterStore;
use crate::tensor::{Real, Tensor};

use super::{ArchGraph, NodeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch norm normalizes with batch statistics.
    Train,
    /// Batch norm uses the stored running statistics.
    Eval,
}

pub struct TapeForward<T> {
    /// Reconstructed image `y - residual`.
    pub output: Var<T>,
    /// Predicted noise.
    pub residual: Var<T>,
    /// Leaves bound to store parameters.
    pub params: BTreeMap<String, Var<T>>,
    /// Train-mode batch statistics, by BN node, for [`ParameterStore::apply_bn_updates`].
    pub bn_updates: Vec<(String, BatchStats)>,
}

/// Runs the graph on `y`, recording on `tape`.
///
/// Parameters become variables on a recording tape and constants otherwise.
/// Intermediate values are released once their last consumer has run.
pub fn forward_tape<T: Real>(
    graph: &ArchGraph,
    store: &ParameterStore<T>,
    tape: &mut Tape<T>,
    y: &Var<T>,
    mode: Mode,
) -> Result<TapeForward<T>> {
    graph.check_store(store)?;
    let c = graph.variant().channels;
    if y.shape().c != c {
        return Err(Error::Graph(format!(
            "network expects {c} input channels, got input of shape {}",
            y.shape()
        )));
    }
    let nodes = graph.nodes();
    let mut remaining = vec![0usize; nodes.len()];
    for n in nodes {
        for &i in &n.inputs {
            remaining[i] += 1;
        }
    }
    let mut values: Vec<Option<Var<T>>> = vec![None; nodes.len()];
    let mut params = BTreeMap::new();
    let mut bn_updates = Vec::new();
    let mut residual = None;

    let mut bind = |tape: &mut Tape<T>, name: String| -> Result<Var<T>> {
        let v = store.param(&name)?.clone();
        let var = if tape.is_recording() { tape.variable(v) } else { tape.constant(v) };
        params.insert(name, var.clone());
        Ok(var)
    };

    for (idx, node) in nodes.iter().enumerate() {
        let inputs: Vec<Var<T>> = node
            .inputs
            .iter()
            .map(|&i| values[i].clone().expect("inputs precede their consumers"))
            .collect();
        for &i in &node.inputs {
            remaining[i] -= 1;
            if remaining[i] == 0 {
                values[i] = None;
            }
        }
        let out = match node.kind {
            NodeKind::Input => y.clone(),
            NodeKind::Conv(spec) => {
                let w = bind(tape, format!("{}.weight", node.id))?;
                let b = if spec.bias {
                    Some(bind(tape, format!("{}.bias", node.id))?)
                } else {
                    None
                };
                let pad = same_padding(spec.kernel, spec.dilation);
                tape.conv2d(&inputs[0], &w, b.as_ref(), spec.dilation, pad)?
            }
            NodeKind::Bn { .. } => {
                let gamma = bind(tape, format!("{}.gamma", node.id))?;
                let beta = bind(tape, format!("{}.beta", node.id))?;
                let run = match mode {
                    Mode::Train => BnRun::Train,
                    Mode::Eval => BnRun::Eval(store.running(&node.id)?),
                };
                let (out, stats) = tape.batchnorm(&inputs[0], &gamma, &beta, run, BN_EPSILON)?;
                if let Some(s) = stats {
                    bn_updates.push((node.id.clone(), s));
                }
                out
            }
            NodeKind::Relu => tape.relu(&inputs[0]),
            NodeKind::Concat => tape.concat(&inputs[0], &inputs[1])?,
            NodeKind::SubtractFromInput => {
                residual = Some(inputs[1].clone());
                tape.sub(&inputs[0], &inputs[1])?
            }
        };
        if remaining[idx] > 0 || idx == graph.output() {
            values[idx] = Some(out);
        }
    }
    let output = values[graph.output()].take().expect("output computed");
    Ok(TapeForward {
        output,
        residual: residual.expect("graph ends in a reconstruction node"),
        params,
        bn_updates,
    })
}

/// Evaluates the network without recording gradients. Returns the denoised
/// image and the predicted residual.
pub fn forward<T: Real>(
    graph: &ArchGraph,
    store: &ParameterStore<T>,
    y: &Tensor<T>,
    mode: Mode,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let mut tape = Tape::inference();
    let yv = tape.constant(y.clone());
    let f = forward_tape(graph, store, &mut tape, &yv, mode)?;
    drop(tape);
    Ok((f.output.into_value(), f.residual.into_value()))
}
