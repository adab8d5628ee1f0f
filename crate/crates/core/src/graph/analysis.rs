use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};

use super::{ArchGraph, NodeKind};

/// Patch side at which MAC counts are quoted as "Gflops".
pub const MACS_PATCH: usize = 41;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Feb1,
    Feb2,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerRow {
    pub id: String,
    pub kind: &'static str,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub dilation: usize,
    pub receptive_field: usize,
    pub params: usize,
    pub macs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InspectReport {
    pub variant: String,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub depth: usize,
    pub receptive_field_feb1: Option<usize>,
    pub receptive_field_feb2: Option<usize>,
    pub receptive_field: usize,
    pub params: usize,
    pub conv_weights: usize,
    pub macs: u64,
    /// MACs on one 41×41 patch, in units of 10⁹.
    pub gflops_41: f64,
    pub layers: Vec<LayerRow>,
}

impl ArchGraph {
    fn per_node<F: Fn(usize, &[usize]) -> usize>(&self, f: F) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes.len());
        for (i, n) in self.nodes.iter().enumerate() {
            let ins: Vec<usize> = n.inputs.iter().map(|&j| out[j]).collect();
            out.push(f(i, &ins));
        }
        out
    }

    fn receptive_fields(&self) -> Vec<usize> {
        self.per_node(|i, ins| {
            let base = ins.iter().copied().max().unwrap_or(1);
            match self.nodes[i].kind {
                NodeKind::Conv(c) => base + c.dilation * (c.kernel - 1),
                _ => base,
            }
        })
    }

    /// Longest chain of convolutions from input to output.
    pub fn depth(&self) -> usize {
        let d = self.per_node(|i, ins| {
            let base = ins.iter().copied().max().unwrap_or(0);
            base + usize::from(matches!(self.nodes[i].kind, NodeKind::Conv(_)))
        });
        d[self.output()]
    }

    /// Receptive field side length from the recurrence `rf += dilation * (k - 1)`
    /// along the widest path. `Full` is measured at the network output.
    pub fn receptive_field(&self, branch: Branch) -> Result<usize> {
        let rf = self.receptive_fields();
        let at = match branch {
            Branch::Feb1 => self.feb1_end,
            Branch::Feb2 => self.feb2_end,
            Branch::Full => Some(self.output()),
        };
        at.map(|i| rf[i]).ok_or_else(|| {
            Error::Graph(format!(
                "variant `{}` has no {branch:?} branch",
                self.variant.name
            ))
        })
    }

    /// Conv weights, conv biases and BN affine parameters. Running statistics are excluded.
    pub fn count_params(&self) -> usize {
        self.nodes.iter().map(|n| node_params(&n.kind)).sum()
    }

    /// Conv weight elements only.
    pub fn count_conv_weights(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| match n.kind {
                NodeKind::Conv(c) => c.weight_len(),
                _ => 0,
            })
            .sum()
    }

    /// Multiply-accumulates of every convolution on an `h`×`w` input.
    pub fn count_macs(&self, h: usize, w: usize) -> u64 {
        (self.count_conv_weights() as u64) * (h * w) as u64
    }

    /// MACs on one 41×41 patch, in billions.
    pub fn gflops(&self) -> f64 {
        self.count_macs(MACS_PATCH, MACS_PATCH) as f64 / 1e9
    }

    pub fn inspect(&self, h: usize, w: usize) -> InspectReport {
        let rf = self.receptive_fields();
        let layers = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let in_ch = n.inputs.iter().map(|&j| self.nodes[j].channels).sum();
                let (kind, kernel, dilation, macs) = match n.kind {
                    NodeKind::Input => ("input", 0, 0, 0),
                    NodeKind::Conv(c) => ("conv", c.kernel, c.dilation, (c.weight_len() * h * w) as u64),
                    NodeKind::Bn { .. } => ("bn", 0, 0, 0),
                    NodeKind::Relu => ("relu", 0, 0, 0),
                    NodeKind::Concat => ("concat", 0, 0, 0),
                    NodeKind::SubtractFromInput => ("subtract_from_input", 0, 0, 0),
                };
                LayerRow {
                    id: n.id.clone(),
                    kind,
                    in_ch,
                    out_ch: n.channels,
                    kernel,
                    dilation,
                    receptive_field: rf[i],
                    params: node_params(&n.kind),
                    macs,
                }
            })
            .collect();
        InspectReport {
            variant: self.variant.name.clone(),
            channels: self.variant.channels,
            height: h,
            width: w,
            depth: self.depth(),
            receptive_field_feb1: self.receptive_field(Branch::Feb1).ok(),
            receptive_field_feb2: self.receptive_field(Branch::Feb2).ok(),
            receptive_field: rf[self.output()],
            params: self.count_params(),
            conv_weights: self.count_conv_weights(),
            macs: self.count_macs(h, w),
            gflops_41: self.gflops(),
            layers,
        }
    }
}

fn node_params(kind: &NodeKind) -> usize {
    match *kind {
        NodeKind::Conv(c) => c.weight_len() + if c.bias { c.out_ch } else { 0 },
        NodeKind::Bn { channels } => 2 * channels,
        _ => 0,
    }
}

impl InspectReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let opt = |v: Option<usize>| v.map_or("-".to_string(), |v| v.to_string());
        let _ = writeln!(s, "variant        {}", self.variant);
        let _ = writeln!(s, "channels       {}", self.channels);
        let _ = writeln!(s, "depth          {}", self.depth);
        let _ = writeln!(
            s,
            "receptive      feb1 {}  feb2 {}  output {}",
            opt(self.receptive_field_feb1),
            opt(self.receptive_field_feb2),
            self.receptive_field
        );
        let _ = writeln!(s, "params         {} ({:.3}M)", self.params, self.params as f64 / 1e6);
        let _ = writeln!(s, "conv weights   {}", self.conv_weights);
        let _ = writeln!(s, "MACs {}x{}     {}", self.height, self.width, self.macs);
        let _ = writeln!(s, "Gflops (41x41) {:.3}", self.gflops_41);
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:<22} {:<20} {:>5} {:>5} {:>2} {:>3} {:>4} {:>8} {:>12}",
            "node", "kind", "in", "out", "k", "dil", "rf", "params", "macs"
        );
        for l in &self.layers {
            let _ = writeln!(
                s,
                "{:<22} {:<20} {:>5} {:>5} {:>2} {:>3} {:>4} {:>8} {:>12}",
                l.id, l.kind, l.in_ch, l.out_ch, l.kernel, l.dilation, l.receptive_field, l.params, l.macs
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build, preset, ArchVariant, Family, SingleBranch};
    use std::collections::BTreeSet;

    fn g(name: &str) -> ArchGraph {
        build(&preset(name, 1).unwrap()).unwrap()
    }

    #[test]
    fn canonical_depth_and_receptive_fields() {
        let c = g("canonical");
        assert_eq!(c.depth(), 18);
        assert_eq!(c.receptive_field(Branch::Feb1).unwrap(), 41);
        assert_eq!(c.receptive_field(Branch::Feb2).unwrap(), 31);
        assert_eq!(c.receptive_field(Branch::Full).unwrap(), 41);
    }

    #[test]
    fn elep_receptive_field() {
        assert_eq!(g("elep").receptive_field(Branch::Feb1).unwrap(), 63);
        assert!(g("elep").receptive_field(Branch::Feb2).is_err());
    }

    #[test]
    fn single_dilated_conv_has_rf_five() {
        let v = ArchVariant {
            name: "probe".into(),
            family: Family::DudeNet,
            channels: 1,
            dilated_layers_feb1: BTreeSet::new(),
            sparse_in_feb2: false,
            include_cb2: false,
            include_eb2: false,
            single_branch: SingleBranch::Feb1Only,
            every_layer_dilated: false,
            compress_kernel: 1,
            batch_norm: true,
        };
        // 16 plain 3×3 layers then the 1×1 head.
        assert_eq!(build(&v).unwrap().receptive_field(Branch::Full).unwrap(), 33);
        let mut d = v.clone();
        d.dilated_layers_feb1.insert(2);
        assert_eq!(build(&d).unwrap().receptive_field(Branch::Full).unwrap(), 35);
    }

    #[test]
    fn canonical_conv_weight_sum() {
        let feb1 = 576 + 15 * 36864;
        let feb2 = 576 + 14 * 36864 + 4096;
        let want = feb1 + feb2 + 128 + 2;
        assert_eq!(g("canonical").count_conv_weights(), want);
        let biases = 64 + 15 * 64 + 64 + 1 + 1;
        let bn = 15 * 128 + 256;
        assert_eq!(g("canonical").count_params(), want + biases + bn);
    }

    #[test]
    fn dncnn_accounting() {
        let d = g("dncnn");
        assert_eq!(d.count_conv_weights(), 576 + 15 * 36864 + 576);
        assert_eq!(d.depth(), 17);
        assert_eq!(d.count_macs(41, 41), 554_112 * 1681);
    }

    #[test]
    fn macs_equal_weights_times_area() {
        for p in crate::graph::variant_presets(3) {
            let gr = build(&p.variant).unwrap();
            assert_eq!(gr.count_macs(13, 7), gr.count_conv_weights() as u64 * 91);
        }
    }

    #[test]
    fn inspect_report_formats() {
        let r = g("canonical").inspect(41, 41);
        assert_eq!(r.layers.len(), g("canonical").nodes().len());
        let text = r.to_text();
        assert!(text.contains("feb1.l02.conv") && text.contains("depth          18"), "{text}");
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["receptive_field_feb1"], 41);
        assert_eq!(v["layers"][0]["kind"], "input");
    }
}
