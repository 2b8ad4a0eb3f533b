//! Ground-truth fixation maps from raw eye-tracker logs.
//!
//! Screen-space gaze samples are mapped into video pixels (undoing the letterbox the player
//! adds when the video is fitted to the display width), assigned to a frame by timestamp, and
//! splatted with a truncated Gaussian. A frame's ground truth is the sum of the splats of every
//! sample that landed on it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::field::ScalarField;

/// One raw eye-tracker record, in screen pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeSample {
    pub video_id: u32,
    pub subject_id: u32,
    #[serde(rename = "x")]
    pub gaze_x: f64,
    #[serde(rename = "y")]
    pub gaze_y: f64,
    pub timestamp_us: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub video_id: u32,
    pub vr_x: u32,
    pub vr_y: u32,
    pub fps: f64,
    pub frame_count: u32,
}

impl VideoMeta {
    pub fn validate(&self) -> Result<()> {
        if self.vr_x == 0 || self.vr_y == 0 || self.frame_count == 0 {
            return Err(invalid!("video {}: resolution and frame count must be positive", self.video_id));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(invalid!("video {}: fps must be positive, got {}", self.video_id, self.fps));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreenMeta {
    pub sr_x: u32,
    pub sr_y: u32,
}

/// A gaze sample expressed in video pixels and attached to a frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameFixation {
    pub frame_index: usize,
    pub x: f64,
    pub y: f64,
    pub subject_id: u32,
}

impl FrameFixation {
    /// Nearest pixel as (row, col); may lie outside the frame.
    pub fn pixel(&self) -> (i64, i64) {
        (self.y.round() as i64, self.x.round() as i64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedGaze {
    pub fixation: FrameFixation,
    /// The raw frame index fell outside `[0, frame_count)` and was clamped.
    pub out_of_range: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSplatParams {
    pub window_w: usize,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for GaussianSplatParams {
    fn default() -> Self {
        GaussianSplatParams { window_w: 35, alpha: 1.0, beta: 3.0 }
    }
}

impl GaussianSplatParams {
    pub fn validate(&self) -> Result<()> {
        if self.window_w == 0 {
            return Err(invalid!("splat window must be at least 1 pixel"));
        }
        if !(self.alpha > 0.0 && self.beta > 0.0) {
            return Err(invalid!("splat alpha and beta must be positive"));
        }
        Ok(())
    }

    /// Splat value at squared distance `d2` from the center (no window test).
    #[inline]
    pub fn value_at(&self, d2: f64) -> f64 {
        let w = self.window_w as f64;
        self.alpha / (std::f64::consts::PI * w) * (-self.beta * d2 / (w * w)).exp()
    }

    /// The (2W+1)x(2W+1) kernel, row-major, centered at index (W, W).
    fn kernel(&self) -> Vec<f64> {
        let w = self.window_w as i64;
        let side = (2 * w + 1) as usize;
        let mut k = Vec::with_capacity(side * side);
        for dr in -w..=w {
            for dc in -w..=w {
                k.push(self.value_at((dr * dr + dc * dc) as f64));
            }
        }
        k
    }
}

/// Maps a screen-space gaze sample into video pixels and a frame index.
pub fn normalize_gaze(s: &GazeSample, v: &VideoMeta, scr: &ScreenMeta) -> Result<NormalizedGaze> {
    v.validate()?;
    if scr.sr_x == 0 || scr.sr_y == 0 {
        return Err(invalid!("screen resolution must be positive"));
    }
    if !(s.gaze_x.is_finite() && s.gaze_y.is_finite()) {
        return Err(invalid!(
            "non-finite gaze ({}, {}) for subject {}",
            s.gaze_x,
            s.gaze_y,
            s.subject_id
        ));
    }
    let (vr_x, vr_y) = (v.vr_x as f64, v.vr_y as f64);
    let (sr_x, sr_y) = (scr.sr_x as f64, scr.sr_y as f64);
    let scale = vr_x / sr_x;
    let letterbox = (sr_y - vr_y * sr_x / vr_x) / 2.0;
    let x = scale * s.gaze_x;
    let y = scale * (s.gaze_y - letterbox);

    let raw = (s.timestamp_us as f64 / 1e6 * v.fps).floor();
    let last = (v.frame_count - 1) as f64;
    let out_of_range = raw > last;
    let frame_index = raw.min(last) as usize;

    Ok(NormalizedGaze {
        fixation: FrameFixation { frame_index, x, y, subject_id: s.subject_id },
        out_of_range,
    })
}

fn add_kernel(field: &mut ScalarField, kernel: &[f64], w: i64, center: (i64, i64)) {
    let (h, wd) = (field.height() as i64, field.width() as i64);
    let side = 2 * w + 1;
    let (cr, cc) = center;
    let r0 = (cr - w).max(0);
    let r1 = (cr + w).min(h - 1);
    let c0 = (cc - w).max(0);
    let c1 = (cc + w).min(wd - 1);
    if r0 > r1 || c0 > c1 {
        return;
    }
    for r in r0..=r1 {
        let kr = (r - cr + w) * side;
        for c in c0..=c1 {
            let kv = kernel[(kr + c - cc + w) as usize];
            let i = (r * wd + c) as usize;
            field.values_mut()[i] += kv;
        }
    }
}

/// A single truncated Gaussian centered on the fixation's nearest pixel, cropped at the frame
/// border.
pub fn gaussian_splat(
    center: &FrameFixation,
    p: &GaussianSplatParams,
    height: usize,
    width: usize,
) -> Result<ScalarField> {
    accumulate_fixation_map(std::slice::from_ref(center), p, height, width)
}

/// Sum of splats over every fixation of one frame, in input order.
pub fn accumulate_fixation_map(
    fixations: &[FrameFixation],
    p: &GaussianSplatParams,
    height: usize,
    width: usize,
) -> Result<ScalarField> {
    p.validate()?;
    if height == 0 || width == 0 {
        return Err(invalid!("map dimensions must be positive"));
    }
    if let Some(first) = fixations.first() {
        if let Some(other) = fixations.iter().find(|f| f.frame_index != first.frame_index) {
            return Err(invalid!(
                "fixations span frames {} and {}",
                first.frame_index,
                other.frame_index
            ));
        }
    }
    let kernel = p.kernel();
    let mut field = ScalarField::zeros(height, width);
    for f in fixations {
        add_kernel(&mut field, &kernel, p.window_w as i64, f.pixel());
    }
    Ok(field)
}

/// Linear rescale of `[min, max]` onto `0..=255`, rounding half up. A constant field maps to
/// all zeros.
pub fn quantize_map(f: &ScalarField) -> Vec<u8> {
    let (lo, hi) = (f.min(), f.max());
    let span = hi - lo;
    if !(span > 0.0) {
        return vec![0; f.len()];
    }
    f.values()
        .iter()
        .map(|&v| ((v - lo) / span * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8)
        .collect()
}

/// Inverse of the storage convention: bytes back to `[0, 1]`.
pub fn dequantize_map(height: usize, width: usize, bytes: &[u8]) -> Result<ScalarField> {
    ScalarField::from_vec(height, width, bytes.iter().map(|&b| b as f64 / 255.0).collect())
}

/// Normalized fixations of one video grouped by frame, plus how many samples were clamped.
#[derive(Debug, Clone, Default)]
pub struct VideoFixations {
    pub by_frame: BTreeMap<usize, Vec<FrameFixation>>,
    pub clamped: usize,
}

/// Groups a video's gaze samples by frame, keeping subject-then-record order within a frame.
pub fn fixations_by_frame(
    samples: &[GazeSample],
    v: &VideoMeta,
    scr: &ScreenMeta,
) -> Result<VideoFixations> {
    let mut ordered: Vec<&GazeSample> = samples.iter().filter(|s| s.video_id == v.video_id).collect();
    // stable: records keep their log order within a subject
    ordered.sort_by_key(|s| s.subject_id);
    let mut out = VideoFixations::default();
    for s in ordered {
        let n = normalize_gaze(s, v, scr)?;
        if n.out_of_range {
            out.clamped += 1;
        }
        out.by_frame.entry(n.fixation.frame_index).or_default().push(n.fixation);
    }
    Ok(out)
}

/// One ground-truth map per frame of the video; frames without samples get an all-zero map.
pub fn video_fixation_maps(
    fixations: &VideoFixations,
    v: &VideoMeta,
    p: &GaussianSplatParams,
) -> Result<Vec<ScalarField>> {
    let (h, w) = (v.vr_y as usize, v.vr_x as usize);
    (0..v.frame_count as usize)
        .map(|k| {
            let fs = fixations.by_frame.get(&k).map(Vec::as_slice).unwrap_or(&[]);
            accumulate_fixation_map(fs, p, h, w)
        })
        .collect()
}
