//! Run configuration and its canonical text form.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{EpochConfig, SigmaMode, BLIND_MAX, DEFAULT_BATCH, PATCH_SIZE};
use crate::error::{Error, Result};
use crate::graph::{preset, ArchVariant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaKind {
    Fixed,
    Blind,
}

/// Accepts a number or a numeric string, so canonical text parses back.
#[derive(Deserialize)]
#[serde(untagged)]
enum Num {
    N(f64),
    S(String),
}

impl Num {
    fn value<E: serde::de::Error>(self) -> std::result::Result<f64, E> {
        match self {
            Num::N(v) => Ok(v),
            Num::S(s) => s.trim().parse().map_err(E::custom),
        }
    }
}

fn real<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Num::deserialize(d)?.value()
}

fn opt_real<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<f64>, D::Error> {
    Option::<Num>::deserialize(d)?.map(Num::value).transpose()
}

fn as_string<S: serde::Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{v:?}"))
}

fn opt_as_string<S: serde::Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(v) => as_string(v, s),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Architecture preset name.
    pub variant: String,
    /// 1 for grayscale, 3 for color.
    pub channels: usize,
    /// Noise level on the 0–255 scale (fixed mode) or the top of the range (blind mode).
    #[serde(deserialize_with = "real")]
    pub sigma: f64,
    pub sigma_mode: SigmaKind,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(deserialize_with = "real", serialize_with = "as_string")]
    pub lr_start: f64,
    #[serde(deserialize_with = "real", serialize_with = "as_string")]
    pub lr_end: f64,
    /// Replaces the schedule with a constant rate when set.
    #[serde(deserialize_with = "opt_real", serialize_with = "opt_as_string")]
    pub lr_override: Option<f64>,
    pub seed: u64,
    /// Epochs between checkpoints; the final epoch is always saved. 0 saves only the final one.
    pub checkpoint_every: usize,
    pub patch_size: usize,
    pub train_dir: Option<PathBuf>,
    pub test_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: "canonical".into(),
            channels: 1,
            sigma: 25.0,
            sigma_mode: SigmaKind::Fixed,
            epochs: 70,
            batch_size: DEFAULT_BATCH,
            lr_start: 1e-3,
            lr_end: 1e-5,
            lr_override: None,
            seed: 0,
            checkpoint_every: 10,
            patch_size: PATCH_SIZE,
            train_dir: None,
            test_dir: None,
            out_dir: None,
        }
    }
}

impl TrainConfig {
    /// Parses JSON text; errors carry line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.channels != 1 && self.channels != 3 {
            return bad(format!("channels must be 1 or 3, got {}", self.channels));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.patch_size == 0 {
            return bad("patch_size must be at least 1".into());
        }
        if !(self.lr_end > 0.0 && self.lr_start >= self.lr_end && self.lr_start.is_finite()) {
            return bad(format!(
                "learning rates need lr_start >= lr_end > 0 (got {} and {})",
                self.lr_start, self.lr_end
            ));
        }
        if let Some(lr) = self.lr_override {
            if !(lr >= 0.0 && lr.is_finite()) {
                return bad(format!("lr_override must be finite and non-negative, got {lr}"));
            }
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be finite and non-negative, got {}", self.sigma));
        }
        self.variant().map(|_| ())
    }

    pub fn variant(&self) -> Result<ArchVariant> {
        preset(&self.variant, self.channels)
    }

    pub fn sigma_mode(&self) -> SigmaMode {
        match self.sigma_mode {
            SigmaKind::Fixed => SigmaMode::Fixed(self.sigma),
            SigmaKind::Blind => SigmaMode::Blind { max: self.sigma },
        }
    }

    pub fn epoch_config(&self) -> EpochConfig {
        EpochConfig {
            patch_size: self.patch_size,
            batch_size: self.batch_size,
            sigma: self.sigma_mode(),
        }
    }

    /// Blind training over the standard 0–55 range.
    pub fn blind(mut self) -> Self {
        self.sigma_mode = SigmaKind::Blind;
        self.sigma = BLIND_MAX;
        self
    }

    /// Compact JSON with sorted keys and learning rates as strings.
    pub fn canonical_text(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        // serde_json's default map is ordered, so keys come out sorted
        serde_json::to_string(&v).expect("value serializes")
    }

    /// First 8 bytes (big-endian) of the SHA-256 of the canonical text.
    pub fn hash(&self) -> u64 {
        let d = Sha256::digest(self.canonical_text().as_bytes());
        u64::from_be_bytes(d[..8].try_into().expect("digest is 32 bytes"))
    }
}
