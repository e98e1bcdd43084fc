//! Feature cache files.
//!
//! Layout (all little-endian):
//!
//! | bytes        | content                                  |
//! |--------------|------------------------------------------|
//! | 8            | magic `FEATSEQ1`                         |
//! | 4            | `u32` T (frames)                         |
//! | 4            | `u32` D (embedding width)                |
//! | 4·T·D        | `f32` values, frame-major                |
//! | 8            | `u64` XXH64 (seed 0) of the value bytes  |
//!
//! One file per (clip, backend): `<clip_id>.<backend_name>.feat`.

use std::path::{Path, PathBuf};

use crate::error::{Error, FormatError, Result};
use crate::io::{checksum64, f32s_to_le_bytes, le_bytes_to_f32s, read_file, write_atomic};

use super::EmbeddingSequence;

const MAGIC: &[u8; 8] = b"FEATSEQ1";
const HEADER_LEN: usize = 16;
const TRAILER_LEN: usize = 8;

pub fn cache_path(dir: &Path, clip_id: &str, backend_name: &str) -> Result<PathBuf> {
    for part in [clip_id, backend_name] {
        if part.is_empty() || part.contains(['/', '\\']) || part.starts_with('.') {
            return Err(Error::Invalid(format!("{part:?} cannot be used in a cache file name")));
        }
    }
    Ok(dir.join(format!("{clip_id}.{backend_name}.feat")))
}

pub fn encode_sequence(seq: &EmbeddingSequence) -> Vec<u8> {
    let payload = f32s_to_le_bytes(seq.as_flat());
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + TRAILER_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(seq.len() as u32).to_le_bytes());
    out.extend_from_slice(&(seq.dim() as u32).to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&checksum64(&payload).to_le_bytes());
    out
}

/// Parses feature-file bytes. `path` is only used in error messages.
pub fn decode_sequence(
    bytes: &[u8],
    clip_id: &str,
    backend_name: &str,
    path: &Path,
) -> Result<EmbeddingSequence> {
    let fail = |kind| Error::format(path, kind);
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(fail(FormatError::BadMagic));
    }
    if bytes.len() < HEADER_LEN + TRAILER_LEN {
        return Err(fail(FormatError::Truncated(format!("{} bytes", bytes.len()))));
    }
    let t = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as u64;
    let d = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as u64;
    if t == 0 || d == 0 {
        return Err(fail(FormatError::Header(format!("T={t}, D={d}"))));
    }
    let body = bytes.len() - HEADER_LEN - TRAILER_LEN;
    if !body.is_multiple_of(4) {
        return Err(fail(FormatError::Truncated(format!(
            "payload of {body} bytes is not a whole number of f32 values"
        ))));
    }
    let actual = (body / 4) as u64;
    if actual != t * d {
        return Err(fail(FormatError::Inconsistent {
            declared: t * d,
            actual,
        }));
    }
    let payload = &bytes[HEADER_LEN..HEADER_LEN + body];
    let stored = u64::from_le_bytes(bytes[HEADER_LEN + body..].try_into().unwrap());
    let computed = checksum64(payload);
    if stored != computed {
        return Err(fail(FormatError::Checksum { stored, computed }));
    }
    EmbeddingSequence::new(clip_id, backend_name, d as usize, le_bytes_to_f32s(payload))
}

/// Atomically writes `seq` into `dir` and returns the file path.
pub fn write_cache(seq: &EmbeddingSequence, dir: &Path) -> Result<PathBuf> {
    let path = cache_path(dir, seq.clip_id(), seq.backend_name())?;
    write_atomic(&path, &encode_sequence(seq))?;
    Ok(path)
}

pub fn read_cache(dir: &Path, clip_id: &str, backend_name: &str) -> Result<EmbeddingSequence> {
    let path = cache_path(dir, clip_id, backend_name)?;
    read_feature_file(&path, clip_id, backend_name)
}

/// Reads any file in the feature format, e.g. a reference embedding probe.
pub fn read_feature_file(path: &Path, clip_id: &str, backend_name: &str) -> Result<EmbeddingSequence> {
    let bytes = read_file(path)?;
    decode_sequence(&bytes, clip_id, backend_name, path)
}
