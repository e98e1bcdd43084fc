//! Model checkpoints.
//!
//! Layout (little-endian):
//!
//! | bytes | content                                        |
//! |-------|------------------------------------------------|
//! | 8     | magic `SNETCKP1`                               |
//! | 4     | `u32` header length H                          |
//! | H     | UTF-8 JSON header (kind, dims, config, meta)   |
//! | 8     | `u64` parameter count P                        |
//! | 4·P   | `f32` parameters, tensors in checkpoint order  |
//! | 8     | `u64` XXH64 (seed 0) of the parameter bytes    |

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, FormatError, Result};
use crate::io::{checksum64, f32s_to_le_bytes, le_bytes_to_f32s, read_file, write_atomic};

use super::{HeadKind, LstmParams, MlpParams, Model, TrainConfig};

const MAGIC: &[u8; 8] = b"SNETCKP1";
const FORMAT_VERSION: u32 = 1;

/// Shape of a head, enough to rebuild an empty parameter set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub kind: HeadKind,
    /// Sequence length the MLP was built for; `None` for the LSTM.
    pub frames: Option<usize>,
    pub input_dim: usize,
    /// MLP hidden widths, or the single LSTM hidden size.
    pub hidden: Vec<usize>,
    pub num_classes: usize,
}

impl ModelDims {
    pub fn of(model: &Model) -> Self {
        match model {
            Model::Mlp(p) => {
                let w = p.widths();
                ModelDims {
                    kind: HeadKind::Mlp,
                    frames: Some(p.frames()),
                    input_dim: p.input_dim(),
                    hidden: w[1..w.len() - 1].to_vec(),
                    num_classes: p.num_classes(),
                }
            }
            Model::Lstm(p) => ModelDims {
                kind: HeadKind::Lstm,
                frames: None,
                input_dim: p.input_dim(),
                hidden: vec![p.hidden()],
                num_classes: p.num_classes(),
            },
        }
    }

    pub fn zero_model(&self) -> Result<Model> {
        match self.kind {
            HeadKind::Mlp => {
                let frames = self
                    .frames
                    .ok_or_else(|| Error::Invalid("MLP dims without a frame count".into()))?;
                Ok(Model::Mlp(MlpParams::zeros(frames, self.input_dim, &self.hidden, self.num_classes)?))
            }
            HeadKind::Lstm => match self.hidden.as_slice() {
                [h] => Ok(Model::Lstm(LstmParams::zeros(self.input_dim, *h, self.num_classes)?)),
                _ => Err(Error::Invalid("LSTM dims need exactly one hidden size".into())),
            },
        }
    }
}

/// What the model was trained on, needed to run it on new clips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Class names indexed by class id.
    pub labels: Vec<String>,
    /// Feature backend (cache key) the inputs came from.
    pub backend: String,
    pub frames_per_clip: usize,
    /// Foreground-extraction tag, e.g. `bg50k5`, or `None` for raw frames.
    pub preprocess: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub config: TrainConfig,
    pub meta: Option<CheckpointMeta>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    dims: ModelDims,
    seed: u64,
    config: TrainConfig,
    meta: Option<CheckpointMeta>,
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let header = Header {
        format_version: FORMAT_VERSION,
        dims: ModelDims::of(&ckpt.model),
        seed: ckpt.config.seed,
        config: ckpt.config.clone(),
        meta: ckpt.meta.clone(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let values: Vec<f32> = ckpt
        .model
        .tensors()
        .iter()
        .flat_map(|(_, t)| t.iter().map(|&v| v as f32))
        .collect();
    let payload = f32s_to_le_bytes(&values);
    let mut out = Vec::with_capacity(8 + 4 + json.len() + 8 + payload.len() + 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&checksum64(&payload).to_le_bytes());
    out
}

/// Parses checkpoint bytes. `path` is only used in error messages.
pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    let fail = |kind| Error::format(path, kind);
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(fail(FormatError::BadMagic));
    }
    let take = |from: usize, n: usize| -> Result<&[u8]> {
        bytes
            .get(from..from + n)
            .ok_or_else(|| fail(FormatError::Truncated(format!("{} bytes", bytes.len()))))
    };
    let hlen = u32::from_le_bytes(take(8, 4)?.try_into().unwrap()) as usize;
    let header: Header = serde_json::from_slice(take(12, hlen)?)
        .map_err(|e| fail(FormatError::Header(e.to_string())))?;
    if header.format_version != FORMAT_VERSION {
        return Err(fail(FormatError::Header(format!(
            "unsupported format version {}",
            header.format_version
        ))));
    }
    let mut model = header
        .dims
        .zero_model()
        .map_err(|e| fail(FormatError::Header(e.to_string())))?;
    let start = 12 + hlen;
    let declared = u64::from_le_bytes(take(start, 8)?.try_into().unwrap());
    let body = bytes.len().saturating_sub(start + 8 + 8);
    if bytes.len() < start + 16 || !body.is_multiple_of(4) {
        return Err(fail(FormatError::Truncated(format!(
            "parameter block of {body} bytes is not a whole number of f32 values"
        ))));
    }
    let actual = (body / 4) as u64;
    if actual != declared {
        return Err(fail(FormatError::Inconsistent { declared, actual }));
    }
    if declared != model.param_count() as u64 {
        return Err(fail(FormatError::Header(format!(
            "dims imply {} parameters, file declares {declared}",
            model.param_count()
        ))));
    }
    let payload = &bytes[start + 8..start + 8 + body];
    let stored = u64::from_le_bytes(bytes[start + 8 + body..].try_into().unwrap());
    let computed = checksum64(payload);
    if stored != computed {
        return Err(fail(FormatError::Checksum { stored, computed }));
    }
    let values = le_bytes_to_f32s(payload);
    let mut it = values.iter();
    for t in model.tensors_mut() {
        for v in t.iter_mut() {
            *v = *it.next().expect("count checked") as f64;
        }
    }
    model.check_finite("checkpoint parameter")?;
    Ok(Checkpoint {
        model,
        config: header.config,
        meta: header.meta,
    })
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    write_atomic(path, &encode_checkpoint(ckpt))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&read_file(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn sample(kind: HeadKind, seed: u64) -> Checkpoint {
        let mut rng = SeededRng::new(seed);
        let model = match kind {
            HeadKind::Mlp => Model::Mlp(MlpParams::init(4, 3, &[5, 2], 6, &mut rng).unwrap()),
            HeadKind::Lstm => Model::Lstm(LstmParams::init(3, 4, 6, &mut rng).unwrap()),
        };
        Checkpoint {
            model,
            config: TrainConfig { seed, ..TrainConfig::default() },
            meta: Some(CheckpointMeta {
                labels: (0..6).map(|i| format!("sign_{i}")).collect(),
                backend: "mock-s1-d3".into(),
                frames_per_clip: 4,
                preprocess: Some("bg50k5".into()),
            }),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        for kind in [HeadKind::Mlp, HeadKind::Lstm] {
            let ck = sample(kind, 9);
            let bytes = encode_checkpoint(&ck);
            assert_eq!(&bytes[..8], b"SNETCKP1");
            let back = decode_checkpoint(&bytes, Path::new("m")).unwrap();
            assert_eq!(back, ck);
            assert_eq!(encode_checkpoint(&back), bytes);
        }
    }

    #[test]
    fn lstm_tensor_order() {
        let ck = sample(HeadKind::Lstm, 1);
        let names: Vec<String> = ck.model.tensors().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names.len(), 14);
        assert_eq!(names[0], "W_i");
        assert_eq!(names[13], "c");
    }

    #[test]
    fn corruption_is_classified() {
        let good = encode_checkpoint(&sample(HeadKind::Mlp, 2));
        let p = Path::new("m");
        let kind = |b: &[u8]| decode_checkpoint(b, p).unwrap_err().format_kind().cloned().unwrap();
        let mut bad = good.clone();
        bad[3] = b'?';
        assert_eq!(kind(&bad), FormatError::BadMagic);
        assert!(matches!(kind(&good[..good.len() - 2]), FormatError::Truncated(_)));
        assert!(matches!(kind(&good[..20]), FormatError::Truncated(_)));
        let mut flipped = good.clone();
        let n = flipped.len();
        flipped[n - 20] ^= 0x40;
        assert!(matches!(kind(&flipped), FormatError::Checksum { .. }));
        let mut short = good[..good.len() - 12].to_vec();
        short.extend_from_slice(&good[good.len() - 8..]);
        assert!(matches!(kind(&short), FormatError::Inconsistent { .. }));
        let mut header = good.clone();
        header[13] = b'#';
        assert!(matches!(kind(&header), FormatError::Header(_)));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let ck = sample(HeadKind::Lstm, 5);
        write_checkpoint(&path, &ck).unwrap();
        assert_eq!(read_checkpoint(&path).unwrap(), ck);
    }
}
