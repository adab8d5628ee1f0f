//! The network as a layer DAG: construction, execution, initialization and
//! analytic accounting.

mod analysis;
mod exec;
mod init;
pub mod variant;

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::Shape;

pub use analysis::{Branch, InspectReport, LayerRow, MACS_PATCH};
pub use exec::{forward, forward_tape, Mode, TapeForward};
pub use init::init_params;
pub use variant::{preset, variant_presets, ArchVariant, Family, Preset, SingleBranch};

/// Feature width of every hidden layer.
pub const FEATURES: usize = 64;
/// Layers in the first branch.
pub const FEB1_LAYERS: usize = 16;
/// Conv+ReLU layers in the second branch before its 1×1 compression.
pub const FEB2_LAYERS: usize = 15;
/// Layers in the DnCNN reference stack.
pub const DNCNN_LAYERS: usize = 17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ConvSpec {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub dilation: usize,
    pub bias: bool,
}

impl ConvSpec {
    pub fn weight_shape(&self) -> Shape {
        Shape::new(self.out_ch, self.in_ch, self.kernel, self.kernel)
    }

    pub fn weight_len(&self) -> usize {
        self.out_ch * self.in_ch * self.kernel * self.kernel
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Input,
    Conv(ConvSpec),
    Bn { channels: usize },
    Relu,
    Concat,
    /// `inputs[0] - inputs[1]`: the network input minus the predicted residual.
    SubtractFromInput,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayerNode {
    pub id: String,
    pub kind: NodeKind,
    /// Indices of predecessor nodes, in operand order.
    pub inputs: Vec<usize>,
    /// Output channels.
    pub channels: usize,
}

/// A built network. Nodes are stored in topological order; node 0 is the input
/// and the last node is the reconstruction.
#[derive(Debug, Clone)]
pub struct ArchGraph {
    variant: ArchVariant,
    nodes: Vec<LayerNode>,
    feb1_end: Option<usize>,
    feb2_end: Option<usize>,
}

/// A learnable tensor the graph expects in its parameter store.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Shape,
    pub role: ParamRole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    ConvWeight { fan_in: usize },
    Bias,
    Gamma,
    Beta,
}

impl ArchGraph {
    pub fn variant(&self) -> &ArchVariant {
        &self.variant
    }

    pub fn nodes(&self) -> &[LayerNode] {
        &self.nodes
    }

    pub fn output(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn node(&self, id: &str) -> Option<&LayerNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Parameters in node order.
    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let mut out = Vec::new();
        for n in &self.nodes {
            match n.kind {
                NodeKind::Conv(c) => {
                    out.push(ParamSpec {
                        name: format!("{}.weight", n.id),
                        shape: c.weight_shape(),
                        role: ParamRole::ConvWeight {
                            fan_in: c.in_ch * c.kernel * c.kernel,
                        },
                    });
                    if c.bias {
                        out.push(ParamSpec {
                            name: format!("{}.bias", n.id),
                            shape: Shape::vector(c.out_ch),
                            role: ParamRole::Bias,
                        });
                    }
                }
                NodeKind::Bn { channels } => {
                    for (suffix, role) in [("gamma", ParamRole::Gamma), ("beta", ParamRole::Beta)] {
                        out.push(ParamSpec {
                            name: format!("{}.{suffix}", n.id),
                            shape: Shape::vector(channels),
                            role,
                        });
                    }
                }
                _ => {}
            }
        }
        out
    }

    pub fn bn_names(&self) -> Vec<&str> {
        self.nodes
            .iter()
            .filter(|n| matches!(n.kind, NodeKind::Bn { .. }))
            .map(|n| n.id.as_str())
            .collect()
    }

    /// Checks that `store` holds exactly the graph's parameters and BN statistics.
    pub fn check_store<T: crate::Real>(&self, store: &crate::store::ParameterStore<T>) -> Result<()> {
        let specs = self.param_specs();
        for s in &specs {
            let found = store.param(&s.name).map_err(|_| Error::StoreMismatch {
                name: s.name.clone(),
                expected: Some(s.shape),
                found: None,
            })?;
            if found.shape() != s.shape {
                return Err(Error::StoreMismatch {
                    name: s.name.clone(),
                    expected: Some(s.shape),
                    found: Some(found.shape()),
                });
            }
        }
        let wanted: BTreeSet<&str> = specs.iter().map(|s| s.name.as_str()).collect();
        if let Some(extra) = store.param_names().find(|n| !wanted.contains(n)) {
            return Err(Error::StoreMismatch {
                name: extra.to_string(),
                expected: None,
                found: Some(store.param(extra)?.shape()),
            });
        }
        for bn in self.bn_names() {
            let rs = store.running(bn)?;
            let c = Shape::vector(self.node(bn).map_or(0, |n| n.channels));
            if rs.mean.shape() != c || rs.var.shape() != c {
                return Err(Error::StoreMismatch {
                    name: format!("{bn}.running_mean"),
                    expected: Some(c),
                    found: Some(rs.mean.shape()),
                });
            }
        }
        Ok(())
    }
}

struct Builder {
    nodes: Vec<LayerNode>,
}

impl Builder {
    fn push(&mut self, id: String, kind: NodeKind, inputs: Vec<usize>) -> Result<usize> {
        let in_ch: Vec<usize> = inputs.iter().map(|&i| self.nodes[i].channels).collect();
        let channels = match kind {
            NodeKind::Input => 0,
            NodeKind::Conv(c) => {
                if in_ch != [c.in_ch] {
                    return Err(Error::Graph(format!(
                        "{id}: conv expects {} input channels, predecessor has {in_ch:?}",
                        c.in_ch
                    )));
                }
                c.out_ch
            }
            NodeKind::Bn { channels } => {
                if in_ch != [channels] {
                    return Err(Error::Graph(format!(
                        "{id}: batch norm over {channels} channels fed {in_ch:?}"
                    )));
                }
                channels
            }
            NodeKind::Relu => in_ch[0],
            NodeKind::Concat => in_ch.iter().sum(),
            NodeKind::SubtractFromInput => {
                if in_ch[0] != in_ch[1] {
                    return Err(Error::Graph(format!(
                        "{id}: cannot subtract {} channels from {}",
                        in_ch[1], in_ch[0]
                    )));
                }
                in_ch[0]
            }
        };
        self.nodes.push(LayerNode {
            id,
            kind,
            inputs,
            channels,
        });
        Ok(self.nodes.len() - 1)
    }

    fn conv(&mut self, id: &str, x: usize, out_ch: usize, kernel: usize, dilation: usize, bias: bool) -> Result<usize> {
        let spec = ConvSpec {
            in_ch: self.nodes[x].channels,
            out_ch,
            kernel,
            dilation,
            bias,
        };
        self.push(id.to_string(), NodeKind::Conv(spec), vec![x])
    }

    /// Conv (+BN) + ReLU; the conv carries a bias only when BN is absent.
    fn cbr(&mut self, id: &str, x: usize, out_ch: usize, dilation: usize, bn: bool) -> Result<usize> {
        let c = self.conv(&format!("{id}.conv"), x, out_ch, 3, dilation, !bn)?;
        let c = if bn {
            self.push(format!("{id}.bn"), NodeKind::Bn { channels: out_ch }, vec![c])?
        } else {
            c
        };
        self.push(format!("{id}.relu"), NodeKind::Relu, vec![c])
    }

    fn dncnn(&mut self, prefix: &str, x: usize, out_ch: usize, bn: bool) -> Result<usize> {
        let mut h = self.cbr(&format!("{prefix}.l01"), x, FEATURES, 1, false)?;
        for l in 2..DNCNN_LAYERS {
            h = self.cbr(&format!("{prefix}.l{l:02}"), h, FEATURES, 1, bn)?;
        }
        self.conv(&format!("{prefix}.l{DNCNN_LAYERS:02}.conv"), h, out_ch, 3, 1, true)
    }
}

/// Builds the layer DAG for `variant`.
pub fn build(variant: &ArchVariant) -> Result<ArchGraph> {
    variant.validate()?;
    let c = variant.channels;
    let bn = variant.batch_norm;
    let mut b = Builder { nodes: Vec::new() };
    b.nodes.push(LayerNode {
        id: "input".into(),
        kind: NodeKind::Input,
        inputs: vec![],
        channels: c,
    });
    let y = 0;
    let mut feb1_end = None;
    let mut feb2_end = None;

    let residual = match variant.family {
        Family::DnCnn => b.dncnn("dncnn", y, c, bn)?,
        Family::TwoDnCnn => {
            let a = b.dncnn("dncnn_a", y, c, bn)?;
            let d = b.dncnn("dncnn_b", y, c, bn)?;
            let cat = b.push("fuse.concat".into(), NodeKind::Concat, vec![a, d])?;
            b.conv("fuse", cat, c, 1, 1, true)?
        }
        Family::DudeNet => {
            let k = variant.compress_kernel;
            let dil = |l: usize, sparse: bool| {
                if sparse && (variant.dilated_layers_feb1.contains(&l) || (variant.every_layer_dilated && l < FEB1_LAYERS)) {
                    2
                } else {
                    1
                }
            };
            if variant.single_branch != SingleBranch::Feb2Only {
                let mut h = y;
                for l in 1..FEB1_LAYERS {
                    h = b.cbr(&format!("feb1.l{l:02}"), h, FEATURES, dil(l, true), bn)?;
                }
                feb1_end = Some(b.conv(&format!("feb1.l{FEB1_LAYERS:02}.conv"), h, FEATURES, 3, dil(FEB1_LAYERS, true), true)?);
            }
            if variant.single_branch != SingleBranch::Feb1Only {
                let mut h = y;
                for l in 1..=FEB2_LAYERS {
                    h = b.cbr(&format!("feb2.l{l:02}"), h, FEATURES, dil(l, variant.sparse_in_feb2), false)?;
                }
                feb2_end = Some(b.conv("feb2.cb1", h, FEATURES, k, 1, true)?);
            }
            let features = match (feb1_end, feb2_end) {
                (Some(f1), Some(f2)) => {
                    let cat = b.push("eb1.concat".into(), NodeKind::Concat, vec![f1, f2])?;
                    let h = if bn {
                        b.push("eb1.bn".into(), NodeKind::Bn { channels: 2 * FEATURES }, vec![cat])?
                    } else {
                        cat
                    };
                    b.push("eb1.relu".into(), NodeKind::Relu, vec![h])?
                }
                (Some(f), None) | (None, Some(f)) => f,
                (None, None) => unreachable!("at least one branch is always built"),
            };
            let h = if variant.include_cb2 { b.conv("cb2", features, c, k, 1, true)? } else { features };
            let h = if variant.include_eb2 {
                b.push("eb2.concat".into(), NodeKind::Concat, vec![h, y])?
            } else {
                h
            };
            b.conv("cb3", h, c, k, 1, true)?
        }
    };
    b.push("rb".into(), NodeKind::SubtractFromInput, vec![y, residual])?;
    Ok(ArchGraph {
        variant: variant.clone(),
        nodes: b.nodes,
        feb1_end,
        feb2_end,
    })
}
