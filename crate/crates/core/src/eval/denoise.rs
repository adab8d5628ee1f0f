use crate::data::Image;
use crate::error::{Error, Result};
use crate::graph::{forward, ArchGraph, Mode};
use crate::store::ParameterStore;
use crate::train::Checkpoint;

/// A network ready for eval-mode inference.
pub struct Denoiser {
    graph: ArchGraph,
    store: ParameterStore<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Denoised {
    /// Clamped to `[0, 1]`.
    pub clamped: Image,
    /// Network output as computed.
    pub raw: Image,
}

impl Denoiser {
    pub fn new(graph: ArchGraph, store: ParameterStore<f32>) -> Result<Self> {
        graph.check_store(&store)?;
        Ok(Self { graph, store })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let graph = ckpt.graph()?;
        ckpt.check_graph(&graph)?;
        Self::new(graph, ckpt.store.clone())
    }

    pub fn graph(&self) -> &ArchGraph {
        &self.graph
    }

    pub fn store(&self) -> &ParameterStore<f32> {
        &self.store
    }

    /// One forward pass over the whole image.
    pub fn denoise(&self, img: &Image) -> Result<Denoised> {
        let c = self.graph.variant().channels;
        if img.channels() != c {
            return Err(Error::Data(format!(
                "model expects {c}-channel images, input has {}",
                img.channels()
            )));
        }
        let (x, _) = forward(&self.graph, &self.store, &img.to_tensor(), Mode::Eval)?;
        let raw = Image::from_tensor(&x, 0)?;
        Ok(Denoised {
            clamped: raw.map(|v| v.clamp(0.0, 1.0)),
            raw,
        })
    }
}

/// Denoises `img` with the network stored in `ckpt`.
pub fn denoise(ckpt: &Checkpoint, img: &Image) -> Result<Denoised> {
    Denoiser::from_checkpoint(ckpt)?.denoise(img)
}
