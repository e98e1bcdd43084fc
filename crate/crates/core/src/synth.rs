//! Procedural gesture clips.
//!
//! Every clip shows a bright disc (the "hand") over a dark, noisy, static
//! background. The motion has two phases:
//!
//! - a common phase for the first 60% of the clip, identical for every class:
//!   the disc rises from the bottom edge to the center, then holds still;
//! - a stroke phase: center → A → B → center for even classes, the reverse
//!   loop center → B → A → center for odd ones. The stroke orientation
//!   depends on `class / 2`.
//!
//! Neighbouring class pairs differ only in the order the same positions are
//! visited, so a classifier has to see several frames of the stroke. Frames
//! sampled at the start and the middle of a clip fall inside the common
//! phase and carry no class information.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use image::Rgb;

use crate::error::{Error, Result};
use crate::manifest::{DatasetManifest, SampleRecord, Split};
use crate::rng::SeededRng;
use crate::videoio::{Frame, FrameClip};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub width: u32,
    pub height: u32,
    /// Clip lengths are drawn uniformly from this inclusive range.
    pub min_frames: usize,
    pub max_frames: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 10,
            train_per_class: 10,
            test_per_class: 5,
            width: 48,
            height: 48,
            min_frames: 28,
            max_frames: 36,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.train_per_class + self.test_per_class == 0 {
            return Err(Error::Config("synthetic dataset needs classes and clips".into()));
        }
        if self.width < 8 || self.height < 8 {
            return Err(Error::Config("synthetic frames must be at least 8x8".into()));
        }
        if self.min_frames < 8 || self.min_frames > self.max_frames {
            return Err(Error::Config(format!(
                "frame range {}..={} must start at 8 or more",
                self.min_frames, self.max_frames
            )));
        }
        Ok(())
    }
}

pub fn label_name(class: usize) -> String {
    format!("gesture_{class:02}")
}

pub fn clip_name(class: usize, index: usize) -> String {
    format!("g{class:02}_c{index:02}")
}

type Point = (f64, f64);

fn lerp(a: Point, b: Point, u: f64) -> Point {
    (a.0 + (b.0 - a.0) * u, a.1 + (b.1 - a.1) * u)
}

/// Disc center at normalized time `s` along a piecewise-linear path.
fn position(s: f64, start: Point, center: Point, loop_pts: [Point; 2]) -> Point {
    const RISE: f64 = 0.35;
    const HOLD: f64 = 0.6;
    if s < RISE {
        lerp(start, center, s / RISE)
    } else if s < HOLD {
        center
    } else {
        let u = ((s - HOLD) / (1.0 - HOLD)) * 3.0;
        let path = [center, loop_pts[0], loop_pts[1], center];
        let seg = (u.floor() as usize).min(2);
        lerp(path[seg], path[seg + 1], u - seg as f64)
    }
}

/// One clip of class `class`. All randomness comes from `rng`.
pub fn render_clip(cfg: &SynthConfig, class: usize, clip_id: &str, rng: &mut SeededRng) -> Result<FrameClip> {
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let scale = w.min(h);
    let radius = scale / 8.0;
    let reach = scale * (0.28 + 0.03 * rng.unit_f64());
    let center = (w / 2.0 + rng.symmetric(scale * 0.04), h / 2.0 + rng.symmetric(scale * 0.04));
    let start = (center.0 + rng.symmetric(scale * 0.06), h - radius);
    let theta = (class / 2) as f64 * PI / 5.0 + rng.symmetric(PI / 30.0);
    let at = |a: f64| (center.0 + reach * a.cos(), center.1 + reach * a.sin());
    let (a, b) = (at(theta), at(theta + 2.0 * PI / 3.0));
    let loop_pts = if class.is_multiple_of(2) { [a, b] } else { [b, a] };

    let frames_total = rng.range_inclusive(cfg.min_frames as i64, cfg.max_frames as i64) as usize;
    let background: Vec<[u8; 3]> = (0..cfg.width * cfg.height)
        .map(|_| {
            let base = 20 + rng.below(40) as u8;
            [base, base + rng.below(6) as u8, base.saturating_sub(rng.below(6) as u8)]
        })
        .collect();
    let tint = [220 + rng.below(30) as u8, 170 + rng.below(30) as u8, 140 + rng.below(30) as u8];

    let mut frames = Vec::with_capacity(frames_total);
    for t in 0..frames_total {
        let s = t as f64 / (frames_total - 1) as f64;
        let (cx, cy) = position(s, start, center, loop_pts);
        let mut frame = Frame::new(cfg.width, cfg.height);
        for (i, (x, y, px)) in frame.enumerate_pixels_mut().enumerate() {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            let noise = rng.below(9) as i16 - 4;
            let base = if dx * dx + dy * dy <= radius * radius { tint } else { background[i] };
            *px = Rgb(base.map(|c| (c as i16 + noise).clamp(0, 255) as u8));
        }
        frames.push(frame);
    }
    FrameClip::new(clip_id, frames)
}

/// Every clip with its manifest record, in manifest order (class-major,
/// train clips before test clips). `frames_dir` is `clips/<clip_id>`.
pub fn generate(cfg: &SynthConfig) -> Result<Vec<(SampleRecord, FrameClip)>> {
    cfg.validate()?;
    let per_class = cfg.train_per_class + cfg.test_per_class;
    let mut out = Vec::with_capacity(cfg.classes * per_class);
    for class in 0..cfg.classes {
        for index in 0..per_class {
            let id = clip_name(class, index);
            let mut rng = SeededRng::new(crate::rng::splitmix64(cfg.seed ^ ((class * 1000 + index) as u64)));
            let clip = render_clip(cfg, class, &id, &mut rng)?;
            let record = SampleRecord {
                clip_id: id.clone(),
                frames_dir: PathBuf::from("clips").join(&id),
                label: label_name(class),
                signer_id: format!("signer_{:02}", index % 5),
                split: if index < cfg.train_per_class { Split::Train } else { Split::Test },
            };
            out.push((record, clip));
        }
    }
    Ok(out)
}

/// Writes all clips as PPM frame directories under `root` plus
/// `root/manifest.jsonl`, and returns the manifest.
pub fn write_dataset(cfg: &SynthConfig, root: &Path) -> Result<DatasetManifest> {
    let items = generate(cfg)?;
    for (record, clip) in &items {
        clip.write_ppm_dir(&root.join(&record.frames_dir))?;
    }
    let manifest = DatasetManifest::from_records(items.into_iter().map(|(r, _)| r).collect())?;
    crate::io::write_atomic(&root.join(MANIFEST_FILE), manifest.to_jsonl().as_bytes())?;
    Ok(manifest)
}
