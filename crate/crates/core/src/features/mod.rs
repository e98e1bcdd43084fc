//! Per-frame embeddings from a frozen backbone.
//!
//! Each frame is resized to the backbone's input size, scaled, normalized
//! per channel and handed to an [`EmbeddingBackend`], which returns one
//! D-vector (for CNN backbones: the globally average-pooled last
//! convolutional feature map). Backends:
//!
//! - [`OnnxBackend`] (feature `onnx`): an exported backbone plus its JSON sidecar.
//! - [`GridPoolBackend`]: block-averaged pixels, a tiny model-free backbone.
//! - [`MockBackend`]: hash-derived vectors for plumbing tests.

mod cache;
mod grid;
mod mock;
#[cfg(feature = "onnx")]
mod onnx;
mod spec;

pub use cache::{cache_path, decode_sequence, encode_sequence, read_cache, read_feature_file, write_cache};
pub use grid::GridPoolBackend;
pub use mock::{mock_extractor, MockBackend};
#[cfg(feature = "onnx")]
pub use onnx::OnnxBackend;
pub use spec::{BackendSpec, Preset, ValueScale};

use crate::error::{Error, Result};
use crate::videoio::{resize_bilinear, Frame, FrameClip};

/// A `1 × 3 × H × W` float tensor, channels first.
#[derive(Debug, Clone, PartialEq)]
pub struct InputTensor {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f32>,
}

impl InputTensor {
    pub fn channel(&self, c: usize) -> &[f32] {
        let plane = self.width as usize * self.height as usize;
        &self.data[c * plane..(c + 1) * plane]
    }
}

/// Resize, scale to the backend's value range, then `(v - mean) / std` per
/// channel.
pub fn prepare_input(frame: &Frame, spec: &BackendSpec) -> InputTensor {
    let (w, h) = spec.input_size;
    let resized = resize_bilinear(frame, w, h);
    let plane = w as usize * h as usize;
    let mut data = vec![0f32; 3 * plane];
    for (i, p) in resized.pixels().enumerate() {
        for c in 0..3 {
            let scaled = spec.value_scale.apply(p[c]);
            let v = (scaled - spec.channel_means[c] as f64) / spec.channel_stds[c] as f64;
            data[c * plane + i] = v as f32;
        }
    }
    InputTensor {
        width: w,
        height: h,
        data,
    }
}

/// Maps one prepared frame to an embedding vector.
///
/// Instances are not assumed to be shareable across threads; pipelines
/// create one per worker.
pub trait EmbeddingBackend: Send {
    fn spec(&self) -> &BackendSpec;

    fn embed(&self, input: &InputTensor) -> Result<Vec<f32>>;

    fn name(&self) -> &str {
        &self.spec().name
    }
}

/// T × D per-frame feature vectors of one clip, row-major `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence {
    clip_id: String,
    backend_name: String,
    dim: usize,
    vectors: Vec<f32>,
}

impl EmbeddingSequence {
    pub fn new(
        clip_id: impl Into<String>,
        backend_name: impl Into<String>,
        dim: usize,
        vectors: Vec<f32>,
    ) -> Result<Self> {
        let clip_id = clip_id.into();
        if dim == 0 || vectors.is_empty() || !vectors.len().is_multiple_of(dim) {
            return Err(Error::dims(
                format!("embedding sequence {clip_id:?}"),
                format!("T*{dim} values with T >= 1"),
                vectors.len(),
            ));
        }
        if let Some(pos) = vectors.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "embedding of {clip_id:?} at frame {} component {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self {
            clip_id,
            backend_name: backend_name.into(),
            dim,
            vectors,
        })
    }

    pub fn from_rows(
        clip_id: impl Into<String>,
        backend_name: impl Into<String>,
        rows: &[Vec<f32>],
    ) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        let clip_id = clip_id.into();
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::dims(format!("embedding rows of {clip_id:?}"), dim, bad.len()));
        }
        Self::new(clip_id, backend_name, dim, rows.concat())
    }

    pub fn clip_id(&self) -> &str {
        &self.clip_id
    }

    pub fn backend_name(&self) -> &str {
        &self.backend_name
    }

    /// Number of frames T.
    pub fn len(&self) -> usize {
        self.vectors.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Embedding width D.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.vectors[t * self.dim..(t + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.vectors.chunks_exact(self.dim)
    }

    /// All values, time-major.
    pub fn as_flat(&self) -> &[f32] {
        &self.vectors
    }

    /// The rows at `indices`, in that order (repeats allowed).
    pub fn select(&self, indices: &[usize]) -> Result<EmbeddingSequence> {
        let mut vectors = Vec::with_capacity(indices.len() * self.dim);
        for &t in indices {
            if t >= self.len() {
                return Err(Error::Invalid(format!(
                    "row {t} out of range for {} frames of {:?}",
                    self.len(),
                    self.clip_id
                )));
            }
            vectors.extend_from_slice(self.row(t));
        }
        Self::new(self.clip_id.clone(), self.backend_name.clone(), self.dim, vectors)
    }

    pub(crate) fn with_backend_name(mut self, name: impl Into<String>) -> Self {
        self.backend_name = name.into();
        self
    }
}

/// Embeds every frame of `clip` in order.
pub fn extract_clip_embeddings(
    clip: &FrameClip,
    backend: &dyn EmbeddingBackend,
    spec: &BackendSpec,
) -> Result<EmbeddingSequence> {
    let mut vectors = Vec::with_capacity(clip.len() * spec.embedding_dim);
    for (t, frame) in clip.frames().iter().enumerate() {
        let input = prepare_input(frame, spec);
        let v = backend.embed(&input)?;
        if v.len() != spec.embedding_dim {
            return Err(Error::Backend {
                backend: spec.name.clone(),
                message: format!(
                    "output width mismatch: expected D={}, got {}",
                    spec.embedding_dim,
                    v.len()
                ),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!(
                "{} output for {:?} frame {t}",
                spec.name,
                clip.clip_id()
            )));
        }
        vectors.extend_from_slice(&v);
    }
    EmbeddingSequence::new(clip.clip_id(), spec.name.clone(), spec.embedding_dim, vectors)
}
