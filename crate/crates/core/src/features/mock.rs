use crate::error::{Error, Result};
use crate::io::{checksum64, f32s_to_le_bytes};
use crate::rng::{splitmix64, unit_from_bits};

use super::{BackendSpec, EmbeddingBackend, InputTensor, ValueScale};

/// Deterministic stand-in for a backbone.
///
/// For a prepared input with little-endian `f32` bytes `b`, component `j` is
///
/// ```text
/// digest = XXH64(b, seed = 0)
/// z      = splitmix64(digest ^ j ^ seed)
/// e[j]   = 2 * ((z >> 11) * 2^-53) - 1        // in [-1, 1)
/// ```
///
/// Identical frames map to identical vectors; any pixel change scrambles
/// the whole vector, so the mock carries no visual similarity.
#[derive(Debug, Clone)]
pub struct MockBackend {
    seed: u64,
    spec: BackendSpec,
}

impl MockBackend {
    pub const INPUT_SIZE: (u32, u32) = (32, 32);

    pub fn new(seed: u64, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("mock embedding dimension must be >= 1".into()));
        }
        Ok(Self {
            seed,
            spec: BackendSpec {
                name: format!("mock-s{seed}-d{dim}"),
                input_size: Self::INPUT_SIZE,
                channel_means: [0.0; 3],
                channel_stds: [1.0; 3],
                value_scale: ValueScale::Unit,
                embedding_dim: dim,
                model_path: None,
            },
        })
    }
}

pub fn mock_extractor(seed: u64, d: usize) -> Result<MockBackend> {
    MockBackend::new(seed, d)
}

impl EmbeddingBackend for MockBackend {
    fn spec(&self) -> &BackendSpec {
        &self.spec
    }

    fn embed(&self, input: &InputTensor) -> Result<Vec<f32>> {
        let digest = checksum64(&f32s_to_le_bytes(&input.data));
        Ok((0..self.spec.embedding_dim as u64)
            .map(|j| {
                let z = splitmix64(digest ^ j ^ self.seed);
                (2.0 * unit_from_bits(z) - 1.0) as f32
            })
            .collect())
    }
}
