use crate::error::{Error, Result};

use super::{BackendSpec, EmbeddingBackend, InputTensor, ValueScale};

/// A model-free "tiny backbone": the prepared input is split into a
/// `grid × grid` block layout and each block is averaged per channel,
/// giving `D = 3 · grid²` features ordered channel, block row, block column.
///
/// Unlike the mock, nearby images get nearby embeddings, so heads trained
/// on these features generalize to unseen clips.
#[derive(Debug, Clone)]
pub struct GridPoolBackend {
    grid: u32,
    spec: BackendSpec,
}

impl GridPoolBackend {
    pub const DEFAULT_GRID: u32 = 4;
    pub const DEFAULT_INPUT: u32 = 32;

    pub fn new(grid: u32, input_size: u32) -> Result<Self> {
        if grid == 0 || input_size < grid {
            return Err(Error::Config(format!(
                "grid backend needs 1 <= grid <= input size, got grid {grid} at {input_size}px"
            )));
        }
        Ok(Self {
            grid,
            spec: BackendSpec {
                name: format!("grid{grid}-{input_size}px"),
                input_size: (input_size, input_size),
                channel_means: [0.0; 3],
                channel_stds: [1.0; 3],
                value_scale: ValueScale::Unit,
                embedding_dim: 3 * (grid * grid) as usize,
                model_path: None,
            },
        })
    }

    /// Parses `grid`, `grid:G` or `grid:G:S`.
    pub fn from_descriptor(desc: &str) -> Result<Option<Self>> {
        let mut parts = desc.split(':');
        if parts.next() != Some("grid") {
            return Ok(None);
        }
        let parse = |p: Option<&str>, default: u32| -> Result<u32> {
            p.map(|s| {
                s.parse()
                    .map_err(|_| Error::Config(format!("bad number {s:?} in backend {desc:?}")))
            })
            .unwrap_or(Ok(default))
        };
        let grid = parse(parts.next(), Self::DEFAULT_GRID)?;
        let size = parse(parts.next(), Self::DEFAULT_INPUT)?;
        if parts.next().is_some() {
            return Err(Error::Config(format!("bad grid backend {desc:?}")));
        }
        Self::new(grid, size).map(Some)
    }
}

impl EmbeddingBackend for GridPoolBackend {
    fn spec(&self) -> &BackendSpec {
        &self.spec
    }

    fn embed(&self, input: &InputTensor) -> Result<Vec<f32>> {
        let (w, h) = (input.width as usize, input.height as usize);
        let g = self.grid as usize;
        if w < g || h < g {
            return Err(Error::Backend {
                backend: self.spec.name.clone(),
                message: format!("input {w}x{h} smaller than grid {g}"),
            });
        }
        let mut out = Vec::with_capacity(self.spec.embedding_dim);
        for c in 0..3 {
            let plane = input.channel(c);
            for by in 0..g {
                let (y0, y1) = (by * h / g, (by + 1) * h / g);
                for bx in 0..g {
                    let (x0, x1) = (bx * w / g, (bx + 1) * w / g);
                    let mut sum = 0f64;
                    for y in y0..y1 {
                        sum += plane[y * w + x0..y * w + x1].iter().map(|&v| v as f64).sum::<f64>();
                    }
                    out.push((sum / ((y1 - y0) * (x1 - x0)) as f64) as f32);
                }
            }
        }
        Ok(out)
    }
}
