//! Background subtraction for gesture clips.
//!
//! With a history window of one frame the background model is simply the
//! previous frame, so subtraction reduces to thresholded luma differencing.
//! Each mask is cleaned with a k×k median filter and then used to black out
//! static pixels. The first frame has no predecessor and is dropped.

use image::GrayImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::videoio::{Frame, FrameClip};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubtractorConfig {
    /// Frames of background history. Only 1 is supported.
    pub history: u32,
    /// Minimum absolute luma difference (8-bit units) counted as motion;
    /// the comparison is strict.
    pub threshold: u8,
    /// Median filter window size (odd).
    pub blur_kernel: usize,
}

impl Default for SubtractorConfig {
    fn default() -> Self {
        Self {
            history: 1,
            threshold: 50,
            blur_kernel: 5,
        }
    }
}

impl SubtractorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.history != 1 {
            return Err(Error::Config(format!(
                "background history {} unsupported (only 1)",
                self.history
            )));
        }
        check_kernel(self.blur_kernel)
    }

    /// Short tag identifying this configuration in cache keys.
    pub fn tag(&self) -> String {
        format!("bg{}k{}", self.threshold, self.blur_kernel)
    }
}

fn check_kernel(k: usize) -> Result<()> {
    if k == 0 || k.is_multiple_of(2) {
        return Err(Error::Config(format!("median kernel must be odd and >= 1, got {k}")));
    }
    Ok(())
}

/// Binary per-pixel foreground flags (0 or 1), row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForegroundMask {
    width: u32,
    height: u32,
    bits: Vec<u8>,
}

impl ForegroundMask {
    pub fn new(width: u32, height: u32, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != width as usize * height as usize {
            return Err(Error::dims(
                "mask buffer",
                width as usize * height as usize,
                bits.len(),
            ));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::Invalid("mask values must be 0 or 1".into()));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn filled(width: u32, height: u32, value: bool) -> Self {
        Self {
            width,
            height,
            bits: vec![value as u8; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }
}

/// BT.601 luma, `round(0.299 R + 0.587 G + 0.114 B)`.
pub fn to_luma(frame: &Frame) -> GrayImage {
    let data = frame
        .pixels()
        .map(|p| {
            let y = 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64;
            y.round().min(255.0) as u8
        })
        .collect();
    GrayImage::from_raw(frame.width(), frame.height(), data).expect("one byte per pixel")
}

/// Marks pixels whose luma changed by more than `threshold`.
pub fn foreground_mask(prev: &GrayImage, cur: &GrayImage, threshold: u8) -> Result<ForegroundMask> {
    if prev.dimensions() != cur.dimensions() {
        return Err(Error::dims(
            "foreground mask",
            format!("{}x{}", prev.width(), prev.height()),
            format!("{}x{}", cur.width(), cur.height()),
        ));
    }
    let bits = prev
        .as_raw()
        .iter()
        .zip(cur.as_raw())
        .map(|(&a, &b)| (a.abs_diff(b) > threshold) as u8)
        .collect();
    Ok(ForegroundMask {
        width: cur.width(),
        height: cur.height(),
        bits,
    })
}

/// k×k median over a binary mask with edge replication.
///
/// On {0,1} data the median of k² values is 1 exactly when more than half
/// of them are 1, so the window median reduces to a box count, computed here
/// from a summed-area table over the replicated-border image.
pub fn median_blur(mask: &ForegroundMask, k: usize) -> Result<ForegroundMask> {
    check_kernel(k)?;
    if k == 1 {
        return Ok(mask.clone());
    }
    let (w, h) = (mask.width as usize, mask.height as usize);
    let r = k / 2;
    let (pw, ph) = (w + 2 * r, h + 2 * r);
    // integral[(y)*(pw+1) + x] = sum of padded[0..y, 0..x]
    let mut integral = vec![0u32; (pw + 1) * (ph + 1)];
    for py in 0..ph {
        let sy = py.saturating_sub(r).min(h - 1);
        let mut row_sum = 0u32;
        for px in 0..pw {
            let sx = px.saturating_sub(r).min(w - 1);
            row_sum += mask.bits[sy * w + sx] as u32;
            integral[(py + 1) * (pw + 1) + px + 1] = integral[py * (pw + 1) + px + 1] + row_sum;
        }
    }
    let half = (k * k / 2) as u32;
    let mut bits = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            // window rows y..y+k, cols x..x+k in padded coordinates
            let (x1, y1) = (x + k, y + k);
            let sum = integral[y1 * (pw + 1) + x1] + integral[y * (pw + 1) + x]
                - integral[y * (pw + 1) + x1]
                - integral[y1 * (pw + 1) + x];
            bits.push((sum > half) as u8);
        }
    }
    Ok(ForegroundMask {
        width: mask.width,
        height: mask.height,
        bits,
    })
}

/// Keeps foreground pixels and paints the rest black.
pub fn apply_mask(frame: &Frame, mask: &ForegroundMask) -> Result<Frame> {
    if frame.dimensions() != (mask.width, mask.height) {
        return Err(Error::dims(
            "apply mask",
            format!("{}x{}", frame.width(), frame.height()),
            format!("{}x{}", mask.width, mask.height),
        ));
    }
    let mut out = frame.clone();
    for (p, &m) in out.pixels_mut().zip(&mask.bits) {
        if m == 0 {
            *p = image::Rgb([0, 0, 0]);
        }
    }
    Ok(out)
}

/// Background-subtracts every frame against its predecessor; the output has
/// one frame fewer than the input.
pub fn preprocess_clip(clip: &FrameClip, cfg: &SubtractorConfig) -> Result<FrameClip> {
    cfg.validate()?;
    if clip.len() < 2 {
        return Err(Error::Invalid(format!(
            "clip {:?} has {} frame(s); background subtraction needs at least 2",
            clip.clip_id(),
            clip.len()
        )));
    }
    let lumas: Vec<GrayImage> = clip.frames().iter().map(to_luma).collect();
    let mut out = Vec::with_capacity(clip.len() - 1);
    for t in 1..clip.len() {
        let mask = foreground_mask(&lumas[t - 1], &lumas[t], cfg.threshold)?;
        let mask = median_blur(&mask, cfg.blur_kernel)?;
        out.push(apply_mask(&clip.frames()[t], &mask)?);
    }
    FrameClip::new(clip.clip_id(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use proptest::prelude::*;

    fn gray(w: u32, h: u32, v: u8) -> GrayImage {
        GrayImage::from_pixel(w, h, image::Luma([v]))
    }

    fn random_mask(rng: &mut SeededRng, w: u32, h: u32) -> ForegroundMask {
        let bits = (0..w * h).map(|_| rng.below(2) as u8).collect();
        ForegroundMask::new(w, h, bits).unwrap()
    }

    /// Window-sort oracle: collect the k×k replicated neighbourhood, sort it
    /// and take the middle element.
    fn median_oracle(mask: &ForegroundMask, k: usize) -> ForegroundMask {
        let (w, h) = (mask.width() as i64, mask.height() as i64);
        let r = (k / 2) as i64;
        let mut bits = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let mut window = Vec::new();
                for dy in -r..=r {
                    for dx in -r..=r {
                        let sx = (x + dx).clamp(0, w - 1) as u32;
                        let sy = (y + dy).clamp(0, h - 1) as u32;
                        window.push(mask.get(sx, sy));
                    }
                }
                window.sort_unstable();
                bits.push(window[window.len() / 2]);
            }
        }
        ForegroundMask::new(mask.width(), mask.height(), bits).unwrap()
    }

    #[test]
    fn luma_examples() {
        let px = |r, g, b| Frame::from_pixel(1, 1, image::Rgb([r, g, b]));
        assert_eq!(to_luma(&px(255, 255, 255)).get_pixel(0, 0)[0], 255);
        assert_eq!(to_luma(&px(0, 0, 0)).get_pixel(0, 0)[0], 0);
        // 0.299 * 255 = 76.245
        assert_eq!(to_luma(&px(255, 0, 0)).get_pixel(0, 0)[0], (0.299f64 * 255.0).round() as u8);
        assert_eq!(to_luma(&px(255, 0, 0)).get_pixel(0, 0)[0], 76);
    }

    #[test]
    fn mask_threshold_examples() {
        let m = foreground_mask(&gray(1, 1, 100), &gray(1, 1, 160), 50).unwrap();
        assert_eq!(m.get(0, 0), 1);
        let m = foreground_mask(&gray(1, 1, 100), &gray(1, 1, 120), 50).unwrap();
        assert_eq!(m.get(0, 0), 0);
        // strict comparison at the boundary
        let m = foreground_mask(&gray(1, 1, 100), &gray(1, 1, 150), 50).unwrap();
        assert_eq!(m.get(0, 0), 0);
        let img = GrayImage::from_fn(4, 3, |x, y| image::Luma([(x * 40 + y) as u8]));
        assert_eq!(foreground_mask(&img, &img, 0).unwrap().count(), 0);
        assert!(foreground_mask(&gray(2, 2, 0), &gray(2, 3, 0), 50).is_err());
    }

    #[test]
    fn median_examples() {
        let mut rng = SeededRng::new(3);
        let m = random_mask(&mut rng, 9, 7);
        assert_eq!(median_blur(&m, 1).unwrap(), m);

        let mut bits = vec![0u8; 9];
        bits[4] = 1;
        let speck = ForegroundMask::new(3, 3, bits).unwrap();
        assert_eq!(median_blur(&speck, 3).unwrap().count(), 0);

        assert!(median_blur(&m, 4).is_err());
        assert!(median_blur(&m, 0).is_err());
    }

    #[test]
    fn median_matches_window_sort_oracle() {
        let mut rng = SeededRng::new(11);
        for _ in 0..100 {
            let m = random_mask(&mut rng, 16, 16);
            for k in [3, 5] {
                assert_eq!(median_blur(&m, k).unwrap(), median_oracle(&m, k));
            }
        }
    }

    #[test]
    fn apply_mask_examples() {
        let frame = Frame::from_pixel(4, 4, image::Rgb([10, 20, 30]));
        assert_eq!(apply_mask(&frame, &ForegroundMask::filled(4, 4, true)).unwrap(), frame);
        let black = apply_mask(&frame, &ForegroundMask::filled(4, 4, false)).unwrap();
        assert!(black.pixels().all(|p| p.0 == [0, 0, 0]));

        let bits = (0..16).map(|i| ((i % 4 + i / 4) % 2) as u8).collect();
        let checker = ForegroundMask::new(4, 4, bits).unwrap();
        let out = apply_mask(&frame, &checker).unwrap();
        for (x, y, p) in out.enumerate_pixels() {
            let expect = if (x + y) % 2 == 1 { [10, 20, 30] } else { [0, 0, 0] };
            assert_eq!(p.0, expect);
        }
        assert!(apply_mask(&frame, &ForegroundMask::filled(3, 4, true)).is_err());
    }

    #[test]
    fn static_clip_goes_black() {
        let frame = Frame::from_fn(8, 8, |x, y| image::Rgb([(x * 30) as u8, (y * 30) as u8, 77]));
        let clip = FrameClip::new("s", vec![frame; 13]).unwrap();
        let out = preprocess_clip(&clip, &SubtractorConfig::default()).unwrap();
        assert_eq!(out.len(), 12);
        assert!(out.frames().iter().all(|f| f.pixels().all(|p| p.0 == [0, 0, 0])));
    }

    #[test]
    fn single_frame_clip_rejected() {
        let clip = FrameClip::new("s", vec![Frame::new(4, 4)]).unwrap();
        assert!(preprocess_clip(&clip, &SubtractorConfig::default()).is_err());
    }

    #[test]
    fn moving_block_survives() {
        let frames: Vec<Frame> = (0..4)
            .map(|t| {
                Frame::from_fn(16, 16, |x, _| {
                    let on = x >= t * 4 && x < t * 4 + 4;
                    image::Rgb(if on { [250; 3] } else { [10; 3] })
                })
            })
            .collect();
        let clip = FrameClip::new("m", frames).unwrap();
        let cfg = SubtractorConfig { blur_kernel: 3, ..Default::default() };
        let out = preprocess_clip(&clip, &cfg).unwrap();
        // the block's new position stays bright in every output frame
        for (t, f) in out.frames().iter().enumerate() {
            assert_eq!(f.get_pixel(4 * (t as u32 + 1) + 1, 8).0, [250; 3]);
        }
    }

    #[test]
    fn config_validation() {
        assert!(SubtractorConfig::default().validate().is_ok());
        assert!(SubtractorConfig { history: 2, ..Default::default() }.validate().is_err());
        assert!(SubtractorConfig { blur_kernel: 6, ..Default::default() }.validate().is_err());
    }

    proptest! {
        #[test]
        fn mask_symmetric_and_monotone(seed in any::<u64>(), a in 0u8..=255, b in 0u8..=255) {
            let mut rng = SeededRng::new(seed);
            let prev = GrayImage::from_fn(9, 6, |_, _| image::Luma([rng.below(256) as u8]));
            let cur = GrayImage::from_fn(9, 6, |_, _| image::Luma([rng.below(256) as u8]));
            let (lo, hi) = (a.min(b), a.max(b));
            let m_lo = foreground_mask(&prev, &cur, lo).unwrap();
            prop_assert_eq!(&m_lo, &foreground_mask(&cur, &prev, lo).unwrap());
            let m_hi = foreground_mask(&prev, &cur, hi).unwrap();
            prop_assert!(m_hi.bits().iter().zip(m_lo.bits()).all(|(h, l)| h <= l));
        }

        #[test]
        fn median_output_stays_binary(seed in any::<u64>(), k in prop_oneof![Just(1usize), Just(3), Just(5), Just(7)]) {
            let mut rng = SeededRng::new(seed);
            let (w, h) = (1 + rng.below(12) as u32, 1 + rng.below(12) as u32);
            let m = random_mask(&mut rng, w, h);
            let out = median_blur(&m, k).unwrap();
            prop_assert!(out.bits().iter().all(|&b| b <= 1));
            prop_assert_eq!(out, median_oracle(&m, k));
        }

        #[test]
        fn output_length_is_input_minus_one(t in 2usize..30, seed in any::<u64>()) {
            let mut rng = SeededRng::new(seed);
            let frames = (0..t)
                .map(|_| Frame::from_fn(5, 4, |_, _| image::Rgb([rng.below(256) as u8; 3])))
                .collect();
            let clip = FrameClip::new("p", frames).unwrap();
            prop_assert_eq!(preprocess_clip(&clip, &SubtractorConfig::default()).unwrap().len(), t - 1);
        }
    }
}
