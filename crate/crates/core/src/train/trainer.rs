use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use log::info;

use crate::autodiff::Tape;
use crate::config::TrainConfig;
use crate::data::{build_epoch, Batch, Image, TrainingSet};
use crate::error::{Error, Result};
use crate::graph::{build, forward_tape, init_params, ArchGraph, Mode};
use crate::ops::batchnorm::BN_MOMENTUM;
use crate::ops::loss::mse_residual_loss;
use crate::optim::{adam_step, AdamConfig};
use crate::rng::{derive_seed, Purpose};
use crate::store::ParameterStore;
use crate::tensor::Tensor;

use super::checkpoint::{Checkpoint, EpochMetrics, RngState};
use super::schedule::lr_at;

/// One gradient step on `batch`; returns the loss before the update.
pub fn train_step(
    graph: &ArchGraph,
    store: &mut ParameterStore<f32>,
    batch: &Batch,
    lr: f64,
    adam: &AdamConfig,
) -> Result<f64> {
    let mut tape = Tape::new();
    let y = tape.constant(batch.noisy.clone());
    let f = forward_tape(graph, store, &mut tape, &y, Mode::Train)?;
    let loss = mse_residual_loss(f.residual.value(), &batch.noisy, &batch.clean)?;
    if !loss.loss.is_finite() {
        return Err(Error::NonFinite { op: "loss" });
    }
    drop(f.output);
    let mut grads = tape.backward(&f.residual, loss.grad)?;
    let grads: BTreeMap<String, Tensor<f32>> = f
        .params
        .iter()
        .map(|(name, v)| {
            let g = grads.take(v).unwrap_or_else(|| Tensor::zeros(v.shape()));
            (name.clone(), g)
        })
        .collect();
    adam_step(store, &grads, lr, adam)?;
    store.apply_bn_updates(&f.bn_updates, BN_MOMENTUM)?;
    Ok(loss.loss)
}

/// A training run in progress.
pub struct Trainer {
    cfg: TrainConfig,
    graph: ArchGraph,
    store: ParameterStore<f32>,
    set: TrainingSet,
    epoch: usize,
    metrics: Vec<EpochMetrics>,
    adam: AdamConfig,
}

impl Trainer {
    /// Fresh run: parameters drawn from the config seed.
    pub fn new(cfg: TrainConfig, images: &[Image]) -> Result<Self> {
        cfg.validate()?;
        let graph = build(&cfg.variant()?)?;
        let store = init_params(&graph, derive_seed(cfg.seed, Purpose::Init, 0));
        Self::assemble(cfg, graph, store, images, 0, Vec::new())
    }

    /// Continues from `ckpt`. The checkpoint's own config is used.
    pub fn resume(ckpt: Checkpoint, images: &[Image]) -> Result<Self> {
        if ckpt.epoch >= ckpt.config.epochs {
            return Err(Error::AlreadyComplete {
                epochs: ckpt.config.epochs,
            });
        }
        let graph = ckpt.graph()?;
        ckpt.check_graph(&graph)?;
        if ckpt.rng != RngState::at_epoch(ckpt.config.seed, ckpt.epoch as u64 + 1) {
            return Err(Error::CorruptCheckpoint("PRNG state does not match the stored epoch".into()));
        }
        Self::assemble(ckpt.config, graph, ckpt.store, images, ckpt.epoch, ckpt.metrics)
    }

    fn assemble(
        cfg: TrainConfig,
        graph: ArchGraph,
        store: ParameterStore<f32>,
        images: &[Image],
        epoch: usize,
        metrics: Vec<EpochMetrics>,
    ) -> Result<Self> {
        if let Some(img) = images.iter().find(|i| i.channels() != cfg.channels) {
            return Err(Error::Data(format!(
                "config expects {}-channel images, found one with {}",
                cfg.channels,
                img.channels()
            )));
        }
        let set = TrainingSet::new(images, cfg.patch_size)?;
        Ok(Self {
            cfg,
            graph,
            store,
            set,
            epoch,
            metrics,
            adam: AdamConfig::default(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn graph(&self) -> &ArchGraph {
        &self.graph
    }

    pub fn store(&self) -> &ParameterStore<f32> {
        &self.store
    }

    /// Completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn metrics(&self) -> &[EpochMetrics] {
        &self.metrics
    }

    pub fn is_done(&self) -> bool {
        self.epoch >= self.cfg.epochs
    }

    /// Trains one epoch and records its mean batch loss.
    pub fn run_epoch(&mut self) -> Result<EpochMetrics> {
        if self.is_done() {
            return Err(Error::AlreadyComplete { epochs: self.cfg.epochs });
        }
        let e = self.epoch + 1;
        let lr = lr_at(e, &self.cfg)?;
        let epoch = build_epoch(&self.set, &self.cfg.epoch_config(), self.cfg.seed, e as u64)?;
        let mut total = 0.0;
        let mut count = 0usize;
        for (b, batch) in epoch.batches().enumerate() {
            let loss = train_step(&self.graph, &mut self.store, &batch, lr, &self.adam).map_err(|err| {
                if err.is_numeric() {
                    Error::NonFiniteLoss {
                        epoch: e,
                        batch: b,
                        seed: derive_seed(self.cfg.seed, Purpose::Noise, e as u64),
                    }
                } else {
                    err
                }
            })?;
            total += loss;
            count += 1;
        }
        let m = EpochMetrics {
            epoch: e,
            lr,
            mean_loss: total / count as f64,
        };
        info!("epoch {e}/{}  lr {lr:.3e}  loss {:.6}", self.cfg.epochs, m.mean_loss);
        self.epoch = e;
        self.metrics.push(m.clone());
        Ok(m)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.cfg.clone(),
            store: self.store.clone(),
            epoch: self.epoch,
            rng: RngState::at_epoch(self.cfg.seed, self.epoch as u64 + 1),
            metrics: self.metrics.clone(),
        }
    }

    /// Trains to the configured epoch count, calling `after_epoch` after each one.
    pub fn run(&mut self, mut after_epoch: impl FnMut(&Self) -> Result<()>) -> Result<()> {
        while !self.is_done() {
            self.run_epoch()?;
            after_epoch(self)?;
        }
        Ok(())
    }
}

/// Trains from scratch and returns the final checkpoint.
pub fn train(cfg: &TrainConfig, images: &[Image]) -> Result<Checkpoint> {
    let mut t = Trainer::new(cfg.clone(), images)?;
    t.run(|_| Ok(()))?;
    Ok(t.checkpoint())
}

/// Finishes the run stored in `ckpt`.
pub fn resume(ckpt: Checkpoint, images: &[Image]) -> Result<Checkpoint> {
    let mut t = Trainer::resume(ckpt, images)?;
    t.run(|_| Ok(()))?;
    Ok(t.checkpoint())
}

/// Like [`resume`], but refuses a checkpoint whose config differs from `cfg`.
pub fn resume_with(cfg: &TrainConfig, ckpt: Checkpoint, images: &[Image]) -> Result<Checkpoint> {
    let (expected, found) = (cfg.hash(), ckpt.config_hash());
    if expected != found {
        return Err(Error::ConfigMismatch { expected, found });
    }
    resume(ckpt, images)
}

/// `epoch<TAB>lr<TAB>mean_loss` per line.
pub fn metrics_tsv(metrics: &[EpochMetrics]) -> String {
    metrics
        .iter()
        .map(|m| format!("{}\t{:e}\t{:.9e}\n", m.epoch, m.lr, m.mean_loss))
        .collect()
}

/// Runs `trainer` to completion, writing `epoch_NNN.ckpt` every
/// `checkpoint_every` epochs, `final.ckpt` at the end and `metrics.tsv`
/// after every epoch into `out_dir`.
pub fn run_to_dir(trainer: &mut Trainer, out_dir: &Path) -> Result<Checkpoint> {
    fs::create_dir_all(out_dir)?;
    let every = trainer.config().checkpoint_every;
    trainer.run(|t| {
        let mut f = fs::File::create(out_dir.join("metrics.tsv"))?;
        f.write_all(metrics_tsv(t.metrics()).as_bytes())?;
        if every > 0 && t.epoch() % every == 0 && !t.is_done() {
            t.checkpoint().save(out_dir.join(format!("epoch_{:03}.ckpt", t.epoch())))?;
        }
        Ok(())
    })?;
    let ck = trainer.checkpoint();
    ck.save(out_dir.join("final.ckpt"))?;
    Ok(ck)
}
