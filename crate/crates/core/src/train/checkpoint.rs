//! Binary checkpoint format.
//!
//! ```text
//! "DUDN" | u32 version | u32 len, canonical config JSON
//! u32 record count, then per record:
//!     u16 name len | name | u8 dtype (0 f32, 1 f64, 2 u64) | u8 ndim | u32 dims... | payload
//! PRNG block: u64 master seed | u64 next epoch | u64 augment seed | u64 noise seed
//! u64 CRC-64/XZ of every preceding byte
//! ```
//!
//! All integers and payloads are little-endian. Records are written in a fixed
//! order (parameters, Adam moments, BN statistics, counters, metrics) so a
//! load/save round trip reproduces the file byte for byte.

use std::collections::BTreeMap;
use std::path::Path;

use crc::{Crc, CRC_64_XZ};

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::graph::{build, ArchGraph};
use crate::ops::batchnorm::RunningStats;
use crate::rng::{derive_seed, Purpose};
use crate::store::ParameterStore;
use crate::tensor::{Shape, Tensor};

pub const MAGIC: &[u8; 4] = b"DUDN";
pub const VERSION: u32 = 1;

const CRC64: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
}

/// Seeds of the streams the next epoch will use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub master: u64,
    pub next_epoch: u64,
    pub augment: u64,
    pub noise: u64,
}

impl RngState {
    pub fn at_epoch(master: u64, next_epoch: u64) -> Self {
        Self {
            master,
            next_epoch,
            augment: derive_seed(master, Purpose::Augment, next_epoch),
            noise: derive_seed(master, Purpose::Noise, next_epoch),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub store: ParameterStore<f32>,
    /// Completed epochs.
    pub epoch: usize,
    pub rng: RngState,
    pub metrics: Vec<EpochMetrics>,
}

enum Payload<'a> {
    F32(&'a [f32]),
    F64(Vec<f64>),
    U64(Vec<u64>),
}

struct Writer {
    buf: Vec<u8>,
    records: u32,
}

impl Writer {
    fn record(&mut self, name: &str, dims: &[usize], payload: Payload<'_>) {
        let name_len = u16::try_from(name.len()).expect("record names are short");
        self.buf.extend(name_len.to_le_bytes());
        self.buf.extend(name.as_bytes());
        let tag = match payload {
            Payload::F32(_) => 0u8,
            Payload::F64(_) => 1,
            Payload::U64(_) => 2,
        };
        self.buf.push(tag);
        self.buf.push(dims.len() as u8);
        for &d in dims {
            self.buf.extend((d as u32).to_le_bytes());
        }
        match payload {
            Payload::F32(v) => v.iter().for_each(|x| self.buf.extend(x.to_le_bytes())),
            Payload::F64(v) => v.iter().for_each(|x| self.buf.extend(x.to_le_bytes())),
            Payload::U64(v) => v.iter().for_each(|x| self.buf.extend(x.to_le_bytes())),
        }
        self.records += 1;
    }

    fn tensor(&mut self, name: &str, t: &Tensor<f32>) {
        self.record(name, &t.shape().dims(), Payload::F32(t.data()));
    }
}

impl Checkpoint {
    pub fn config_hash(&self) -> u64 {
        self.config.hash()
    }

    /// The trailing CRC of the encoded checkpoint; identifies its exact contents.
    pub fn fingerprint(&self) -> u64 {
        let bytes = self.encode();
        u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().expect("8-byte trailer"))
    }

    pub fn graph(&self) -> Result<ArchGraph> {
        build(&self.config.variant()?)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer {
            buf: Vec::new(),
            records: 0,
        };
        let s = &self.store;
        for (name, t) in s.params() {
            w.tensor(name, t);
        }
        for name in s.param_names() {
            let (m, _) = s.moments(name).expect("every parameter has moments");
            w.tensor(&format!("adam.m/{name}"), m);
        }
        for name in s.param_names() {
            let (_, v) = s.moments(name).expect("every parameter has moments");
            w.tensor(&format!("adam.v/{name}"), v);
        }
        for (bn, rs) in s.running_stats() {
            w.tensor(&format!("{bn}.running_mean"), &rs.mean);
            w.tensor(&format!("{bn}.running_var"), &rs.var);
        }
        w.record("train.step", &[1], Payload::U64(vec![s.step()]));
        w.record("train.epoch", &[1], Payload::U64(vec![self.epoch as u64]));
        w.record("train.init_seed", &[1], Payload::U64(vec![s.init_seed()]));
        let n = self.metrics.len();
        w.record("metrics.lr", &[n], Payload::F64(self.metrics.iter().map(|m| m.lr).collect()));
        w.record("metrics.loss", &[n], Payload::F64(self.metrics.iter().map(|m| m.mean_loss).collect()));

        let config = self.config.canonical_text();
        let mut out = Vec::with_capacity(w.buf.len() + config.len() + 64);
        out.extend(MAGIC);
        out.extend(VERSION.to_le_bytes());
        out.extend((config.len() as u32).to_le_bytes());
        out.extend(config.as_bytes());
        out.extend(w.records.to_le_bytes());
        out.extend(w.buf);
        for v in [self.rng.master, self.rng.next_epoch, self.rng.augment, self.rng.noise] {
            out.extend(v.to_le_bytes());
        }
        let crc = CRC64.checksum(&out);
        out.extend(crc.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let corrupt = |m: &str| Error::CorruptCheckpoint(m.to_string());
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(corrupt("bad magic (not a checkpoint file)"));
        }
        if bytes.len() < 8 + 8 {
            return Err(corrupt("file is truncated"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: VERSION,
            });
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
        if CRC64.checksum(body) != stored {
            return Err(corrupt("checksum mismatch (file is truncated or damaged)"));
        }

        let mut r = Reader { buf: body, pos: 8 };
        let clen = r.u32()? as usize;
        let text = std::str::from_utf8(r.take(clen)?).map_err(|_| corrupt("config is not UTF-8"))?;
        let config = TrainConfig::from_json(text).map_err(|e| corrupt(&format!("config block: {e}")))?;
        let graph = build(&config.variant()?)?;

        let count = r.u32()?;
        let mut tensors = BTreeMap::new();
        let mut scalars = BTreeMap::new();
        let mut series = BTreeMap::new();
        for _ in 0..count {
            let nlen = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(nlen)?)
                .map_err(|_| corrupt("record name is not UTF-8"))?
                .to_string();
            let tag = r.u8()?;
            let ndim = r.u8()? as usize;
            let dims: Vec<usize> = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_>>()?;
            let numel: usize = dims.iter().product();
            match tag {
                0 => {
                    let raw = r.take(numel.checked_mul(4).ok_or_else(|| corrupt("record too large"))?)?;
                    let data: Vec<f32> = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
                    if ndim != 4 {
                        return Err(corrupt(&format!("tensor `{name}` has {ndim} dims")));
                    }
                    tensors.insert(name, (dims, data));
                }
                1 => {
                    let raw = r.take(numel.checked_mul(8).ok_or_else(|| corrupt("record too large"))?)?;
                    let data: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
                    series.insert(name, data);
                }
                2 => {
                    let raw = r.take(numel.checked_mul(8).ok_or_else(|| corrupt("record too large"))?)?;
                    let data: Vec<u64> = raw.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
                    scalars.insert(name, data.first().copied().ok_or_else(|| corrupt("empty scalar"))?);
                }
                t => return Err(corrupt(&format!("unknown dtype tag {t} in `{name}`"))),
            }
        }
        let master = r.u64()?;
        let next_epoch = r.u64()?;
        let augment = r.u64()?;
        let noise = r.u64()?;
        if r.pos != body.len() {
            return Err(corrupt("trailing bytes after PRNG block"));
        }
        let rng = RngState {
            master,
            next_epoch,
            augment,
            noise,
        };
        if rng != RngState::at_epoch(master, next_epoch) {
            return Err(corrupt("PRNG block is inconsistent with its master seed"));
        }

        let scalar = |k: &str| scalars.get(k).copied().ok_or_else(|| corrupt(&format!("missing `{k}`")));
        let mut store = ParameterStore::new(scalar("train.init_seed")?);
        store.set_step(scalar("train.step")?);
        let epoch = scalar("train.epoch")? as usize;

        let mut take = |name: &str| -> Result<Tensor<f32>> {
            let (dims, data) = tensors.remove(name).ok_or_else(|| Error::TensorMismatch {
                name: name.to_string(),
                expected: None,
                found: None,
            })?;
            Tensor::from_vec(Shape::new(dims[0], dims[1], dims[2], dims[3]), data)
        };
        for spec in graph.param_specs() {
            let p = take(&spec.name)?;
            let m = take(&format!("adam.m/{}", spec.name))?;
            let v = take(&format!("adam.v/{}", spec.name))?;
            store.insert_param(spec.name.clone(), p);
            store.set_moments(&spec.name, m, v);
        }
        for bn in graph.bn_names() {
            let mean = take(&format!("{bn}.running_mean"))?;
            let var = take(&format!("{bn}.running_var"))?;
            store.insert_running(bn, RunningStats { mean, var });
        }
        if let Some((name, (dims, _))) = tensors.into_iter().next() {
            return Err(Error::TensorMismatch {
                name,
                expected: None,
                found: Some(dims),
            });
        }
        let lrs = series.remove("metrics.lr").ok_or_else(|| corrupt("missing `metrics.lr`"))?;
        let losses = series.remove("metrics.loss").ok_or_else(|| corrupt("missing `metrics.loss`"))?;
        if lrs.len() != losses.len() {
            return Err(corrupt("metric series differ in length"));
        }
        let metrics = lrs
            .into_iter()
            .zip(losses)
            .enumerate()
            .map(|(i, (lr, mean_loss))| EpochMetrics {
                epoch: i + 1,
                lr,
                mean_loss,
            })
            .collect();

        let ck = Self {
            config,
            store,
            epoch,
            rng,
            metrics,
        };
        ck.check_graph(&graph)?;
        Ok(ck)
    }

    /// Checks every stored tensor against `graph`, naming the first that does not fit.
    pub fn check_graph(&self, graph: &ArchGraph) -> Result<()> {
        let specs = graph.param_specs();
        let dims = |s: Shape| s.dims().to_vec();
        for (name, t) in self.store.params() {
            match specs.iter().find(|s| s.name == name) {
                Some(s) if s.shape == t.shape() => {}
                other => {
                    return Err(Error::TensorMismatch {
                        name: name.to_string(),
                        expected: other.map(|s| dims(s.shape)),
                        found: Some(dims(t.shape())),
                    })
                }
            }
            let (m, v) = self.store.moments(name).expect("every parameter has moments");
            for (kind, x) in [("adam.m", m), ("adam.v", v)] {
                if x.shape() != t.shape() {
                    return Err(Error::TensorMismatch {
                        name: format!("{kind}/{name}"),
                        expected: Some(dims(t.shape())),
                        found: Some(dims(x.shape())),
                    });
                }
            }
        }
        if let Some(s) = specs.iter().find(|s| self.store.param(&s.name).is_err()) {
            return Err(Error::TensorMismatch {
                name: s.name.clone(),
                expected: Some(dims(s.shape)),
                found: None,
            });
        }
        graph.check_store(&self.store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    ckpt.save(path)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::load(path)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::CorruptCheckpoint("unexpected end of data".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
