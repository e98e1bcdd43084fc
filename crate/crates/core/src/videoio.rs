//! Frame sequences on disk, temporal sampling and resizing.
//!
//! A clip is a directory of numbered raster images (PPM P6, optionally PNG).
//! Decoding video containers into such directories happens outside this crate.

use std::path::{Path, PathBuf};

use image::RgbImage;

use crate::error::{Error, Result};

/// One RGB frame, 8 bits per channel.
pub type Frame = RgbImage;

const FRAME_EXTENSIONS: &[&str] = &["ppm", "png"];

/// Ordered frames of a single gesture clip. All frames share dimensions and
/// there is at least one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameClip {
    clip_id: String,
    frames: Vec<Frame>,
}

impl FrameClip {
    pub fn new(clip_id: impl Into<String>, frames: Vec<Frame>) -> Result<Self> {
        let clip_id = clip_id.into();
        let first = frames
            .first()
            .ok_or_else(|| Error::Invalid(format!("clip {clip_id:?} has no frames")))?;
        let dims = first.dimensions();
        for (t, f) in frames.iter().enumerate() {
            if f.dimensions() != dims {
                return Err(Error::dims(
                    format!("clip {clip_id:?} frame {t}"),
                    format!("{}x{}", dims.0, dims.1),
                    format!("{}x{}", f.width(), f.height()),
                ));
            }
        }
        Ok(Self { clip_id, frames })
    }

    pub fn clip_id(&self) -> &str {
        &self.clip_id
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// (width, height) shared by every frame.
    pub fn dimensions(&self) -> (u32, u32) {
        self.frames[0].dimensions()
    }

    /// A new clip made of the frames at `indices` (repeats allowed).
    pub fn select(&self, indices: &[usize]) -> Result<FrameClip> {
        let frames = indices
            .iter()
            .map(|&i| {
                self.frames.get(i).cloned().ok_or_else(|| {
                    Error::Invalid(format!("frame index {i} out of range for {} frames", self.len()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        FrameClip::new(self.clip_id.clone(), frames)
    }

    /// Writes the frames as `000.ppm`, `001.ppm`, ... into `dir`.
    pub fn write_ppm_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (t, frame) in self.frames.iter().enumerate() {
            let path = dir.join(format!("{t:03}.ppm"));
            crate::io::write_atomic(&path, &encode_ppm(frame))?;
        }
        Ok(())
    }
}

/// Binary P6 encoding of a frame.
pub fn encode_ppm(frame: &Frame) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    out.extend_from_slice(frame.as_raw());
    out
}

/// Number of frames to take per clip; the sequence length of the heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct SamplingPlan {
    frames_per_clip: usize,
}

impl SamplingPlan {
    pub const DEFAULT_GRID: [usize; 4] = [2, 4, 12, 24];

    pub fn new(frames_per_clip: usize) -> Result<Self> {
        if frames_per_clip == 0 {
            return Err(Error::Config("frames per clip must be at least 1".into()));
        }
        Ok(Self { frames_per_clip })
    }

    pub fn frames_per_clip(&self) -> usize {
        self.frames_per_clip
    }

    pub fn indices(&self, total: usize) -> Vec<usize> {
        uniform_sample(total, self.frames_per_clip)
    }
}

/// `n` frame indices spread over a clip of `total` frames:
/// `index_i = floor(i * total / n)`.
///
/// For `n = 2` this picks the first and the middle frame. Clips shorter than
/// `n` repeat frames. Returns an empty list when `total` or `n` is zero.
pub fn uniform_sample(total: usize, n: usize) -> Vec<usize> {
    if total == 0 {
        return Vec::new();
    }
    (0..n)
        .map(|i| ((i as u128 * total as u128) / n as u128) as usize)
        .collect()
}

/// Sort key for frame filenames: the first embedded integer, then the name.
/// Names without digits sort after all numbered names.
fn frame_sort_key(name: &str) -> (u128, String) {
    let digits: String = name
        .chars()
        .skip_while(|c| !c.is_ascii_digit())
        .take_while(|c| c.is_ascii_digit())
        .collect();
    let number = if digits.is_empty() {
        u128::MAX
    } else {
        digits.parse().unwrap_or(u128::MAX)
    };
    (number, name.to_string())
}

/// Supported frame files in `dir`, in natural-numeric order.
pub fn list_frame_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        let supported = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| FRAME_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            .unwrap_or(false);
        if supported && path.is_file() {
            files.push(path);
        }
    }
    files.sort_by_cached_key(|p| {
        frame_sort_key(&p.file_name().unwrap_or_default().to_string_lossy())
    });
    Ok(files)
}

fn decode_frame(path: &Path) -> Result<Frame> {
    let img = image::open(path).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(img.to_rgb8())
}

/// Loads every frame in `frames_dir`, ordered by embedded frame number.
pub fn load_clip(frames_dir: &Path, clip_id: impl Into<String>) -> Result<FrameClip> {
    let clip_id = clip_id.into();
    let files = list_frame_files(frames_dir)?;
    if files.is_empty() {
        return Err(Error::EmptyClip(frames_dir.to_path_buf()));
    }
    let mut frames = Vec::with_capacity(files.len());
    let mut dims = None;
    for path in &files {
        let frame = decode_frame(path)?;
        match dims {
            None => dims = Some(frame.dimensions()),
            Some(d) if d != frame.dimensions() => {
                return Err(Error::dims(
                    path.display().to_string(),
                    format!("{}x{}", d.0, d.1),
                    format!("{}x{}", frame.width(), frame.height()),
                ));
            }
            Some(_) => {}
        }
        frames.push(frame);
    }
    FrameClip::new(clip_id, frames)
}

/// Bilinear resize with half-pixel-centred sampling:
/// `src = (dst + 0.5) * in / out - 0.5`, clamped to the image, channels
/// independent, rounded to the nearest 8-bit value.
pub fn resize_bilinear(frame: &Frame, out_w: u32, out_h: u32) -> Frame {
    assert!(out_w >= 1 && out_h >= 1, "output size must be at least 1x1");
    let (in_w, in_h) = frame.dimensions();
    if (in_w, in_h) == (out_w, out_h) {
        return frame.clone();
    }
    let xs = axis_taps(in_w, out_w);
    let ys = axis_taps(in_h, out_h);
    let src = frame.as_raw();
    let stride = in_w as usize * 3;
    let mut out = Vec::with_capacity(out_w as usize * out_h as usize * 3);
    for &(y0, y1, fy) in &ys {
        let row0 = &src[y0 * stride..(y0 + 1) * stride];
        let row1 = &src[y1 * stride..(y1 + 1) * stride];
        for &(x0, x1, fx) in &xs {
            for c in 0..3 {
                let p00 = row0[x0 * 3 + c] as f64;
                let p01 = row0[x1 * 3 + c] as f64;
                let p10 = row1[x0 * 3 + c] as f64;
                let p11 = row1[x1 * 3 + c] as f64;
                let top = p00 + (p01 - p00) * fx;
                let bottom = p10 + (p11 - p10) * fx;
                let v = top + (bottom - top) * fy;
                out.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Frame::from_raw(out_w, out_h, out).expect("buffer sized for output")
}

/// Per output coordinate: the two source taps and the weight of the second.
fn axis_taps(in_len: u32, out_len: u32) -> Vec<(usize, usize, f64)> {
    let scale = in_len as f64 / out_len as f64;
    let max = (in_len - 1) as f64;
    (0..out_len)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, max);
            let i0 = s.floor();
            let i1 = (i0 + 1.0).min(max);
            (i0 as usize, i1 as usize, s - i0)
        })
        .collect()
}
