//! Architecture variants: the canonical network and its ablations.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Layer positions (1-based) of the dilated convolutions in the canonical first branch.
pub const CANONICAL_DILATED: [usize; 4] = [2, 5, 9, 12];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    DudeNet,
    /// 17-layer residual CNN used as a complexity reference.
    DnCnn,
    /// Two parallel DnCNN stacks fused by a 1×1 convolution.
    TwoDnCnn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SingleBranch {
    None,
    Feb1Only,
    Feb2Only,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchVariant {
    pub name: String,
    pub family: Family,
    /// Image channels: 1 for grayscale, 3 for color.
    pub channels: usize,
    pub dilated_layers_feb1: BTreeSet<usize>,
    /// Second branch also dilates the layers in `dilated_layers_feb1`.
    pub sparse_in_feb2: bool,
    pub include_cb2: bool,
    pub include_eb2: bool,
    pub single_branch: SingleBranch,
    /// Dilate layers 1–15 of the first branch.
    pub every_layer_dilated: bool,
    /// Kernel of the compression convolutions (1 canonically, 3 for the all-3×3 variant).
    pub compress_kernel: usize,
    pub batch_norm: bool,
}

impl ArchVariant {
    pub fn canonical(channels: usize) -> Self {
        Self {
            name: "canonical".into(),
            family: Family::DudeNet,
            channels,
            dilated_layers_feb1: CANONICAL_DILATED.into_iter().collect(),
            sparse_in_feb2: false,
            include_cb2: true,
            include_eb2: true,
            single_branch: SingleBranch::None,
            every_layer_dilated: false,
            compress_kernel: 1,
            batch_norm: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::Graph("variant needs at least one image channel".into()));
        }
        if let Some(&bad) = self.dilated_layers_feb1.iter().find(|&&l| !(2..=15).contains(&l)) {
            return Err(Error::Graph(format!(
                "dilated layer index {bad} is outside 2..=15"
            )));
        }
        if self.compress_kernel != 1 && self.compress_kernel != 3 {
            return Err(Error::Graph(format!(
                "compression kernel must be 1 or 3, got {}",
                self.compress_kernel
            )));
        }
        Ok(())
    }

    fn renamed(mut self, name: &str) -> Self {
        self.name = name.into();
        self
    }

    fn dilated(mut self, layers: &[usize]) -> Self {
        self.dilated_layers_feb1 = layers.iter().copied().collect();
        self
    }

    fn branch(mut self, b: SingleBranch) -> Self {
        self.single_branch = b;
        self
    }

    fn family(mut self, f: Family) -> Self {
        self.family = f;
        self
    }
}

/// A named variant with the ablation row it reproduces.
#[derive(Debug, Clone)]
pub struct Preset {
    pub variant: ArchVariant,
    pub description: &'static str,
}

/// Every preset for `channels` image channels, canonical first.
pub fn variant_presets(channels: usize) -> Vec<Preset> {
    let base = ArchVariant::canonical(channels);
    let p = |variant: ArchVariant, description| Preset { variant, description };
    vec![
        p(base.clone(), "DudeNet"),
        p(base.clone().renamed("no-sparse").dilated(&[]), "The combination of RB, EB, CB and FEB without sparse mechanism"),
        p(
            ArchVariant { include_cb2: false, include_eb2: false, ..base.clone() }.renamed("no-cb2-no-eb2"),
            "DudeNet without CB2 and EB2",
        ),
        p(
            ArchVariant { include_cb2: false, include_eb2: false, ..base.clone() }
                .renamed("no-sparse-no-cb2-no-eb2")
                .dilated(&[]),
            "DudeNet without sparse mechanism, CB2 and EB2",
        ),
        p(
            ArchVariant { include_eb2: false, ..base.clone() }.renamed("cb2-without-eb2"),
            "DudeNet with CB2 and without EB2",
        ),
        p(
            ArchVariant { include_eb2: false, ..base.clone() }.renamed("no-sparse-eb1").dilated(&[]),
            "The combination of RB, EB1, CB and FEB without sparse mechanism",
        ),
        p(
            ArchVariant { include_eb2: false, batch_norm: false, ..base.clone() }
                .renamed("no-sparse-eb1-no-bn")
                .dilated(&[]),
            "The combination of RB, EB1, CB and FEB without sparse mechanism and BN",
        ),
        p(
            base.clone().renamed("fs").branch(SingleBranch::Feb1Only),
            "The combination of the first network with sparse mechanism, CB2 and CB3 (FS)",
        ),
        p(
            base.clone().renamed("fws").branch(SingleBranch::Feb1Only).dilated(&[]),
            "The combination of FEBnet1 without sparse mechanism, CB2 and CB3 (FWS)",
        ),
        p(
            base.clone()
                .renamed("feb1-successive")
                .branch(SingleBranch::Feb1Only)
                .dilated(&[2, 3, 4, 5]),
            "FEBnet1 with successive big energy points, CB2, CB3",
        ),
        p(
            base.clone().renamed("feb2-cb2-cb3").branch(SingleBranch::Feb2Only),
            "FEBnet2 with CB2, and CB3",
        ),
        p(
            ArchVariant { every_layer_dilated: true, ..base.clone() }
                .renamed("elep")
                .branch(SingleBranch::Feb1Only)
                .dilated(&[]),
            "The combination of each layer with a big energy points in the first network, CB2 and CB3 (ELEP)",
        ),
        p(
            ArchVariant { sparse_in_feb2: true, ..base.clone() }.renamed("two-sparse"),
            "DudeNet with two sparse mechanisms",
        ),
        p(
            base.clone().renamed("equidistant").dilated(&[2, 5, 8, 11]),
            "DudeNet with dilated factor of 2 in layers 2, 5, 8 and 11 in FEBnet1",
        ),
        p(
            ArchVariant { compress_kernel: 3, ..base.clone() }.renamed("all-3x3"),
            "DudeNet with kernel of size 3x3 in each layer",
        ),
        p(base.clone().renamed("dncnn").family(Family::DnCnn).dilated(&[]), "DnCNN"),
        p(base.renamed("two-dncnns").family(Family::TwoDnCnn).dilated(&[]), "Two DnCNNs"),
    ]
}

/// Looks a preset up by name; the error lists the valid names.
pub fn preset(name: &str, channels: usize) -> Result<ArchVariant> {
    let all = variant_presets(channels);
    all.iter()
        .find(|p| p.variant.name == name)
        .map(|p| p.variant.clone())
        .ok_or_else(|| {
            let names: Vec<&str> = all.iter().map(|p| p.variant.name.as_str()).collect();
            Error::Config(format!(
                "unknown preset `{name}`; available: {}",
                names.join(", ")
            ))
        })
}
