//! Synthetic video benchmark: one moving object and a few identical static distractors over a
//! textured background, with simulated gaze that follows the moving object.
//!
//! A single frame cannot tell the moving object from its static twins, so only temporal cues
//! (previous saliency and motion boundaries) separate them.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::field::{RgbFrame, ScalarField};
use crate::fixmap::{fixations_by_frame, quantize_map, video_fixation_maps, GaussianSplatParams, GazeSample, ScreenMeta, VideoMeta};
use crate::io;
use crate::seed::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Square,
    Disc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Trajectory {
    /// Constant speed in pixels per frame along a per-clip random direction, bouncing off the
    /// borders.
    Linear { speed: f64 },
    /// Horizontal sweep `amplitude·sin(2πt/period)` with a slow vertical drift.
    Sinusoidal { amplitude: f64, period: f64 },
    Static,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub height: usize,
    pub width: usize,
    pub object: ObjectKind,
    /// Side length (square) or diameter (disc) in pixels.
    pub object_size: usize,
    pub trajectory: Trajectory,
    /// Identical static copies of the object.
    pub distractors: usize,
    /// Amplitude of the static background texture.
    pub texture: f64,
    /// Per-frame i.i.d. pixel noise amplitude, in [0, 1).
    pub noise: f64,
    pub frames_per_clip: usize,
    pub clips: usize,
    pub subjects: usize,
    pub samples_per_frame: usize,
    /// Gaze scatter around the object centre, in pixels.
    pub gaze_jitter: f64,
    pub fps: f64,
    /// Screen resolution the gaze is logged in.
    pub screen: (u32, u32),
    pub splat: GaussianSplatParams,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            height: 64,
            width: 64,
            object: ObjectKind::Square,
            object_size: 20,
            trajectory: Trajectory::Linear { speed: 2.0 },
            distractors: 2,
            texture: 0.25,
            noise: 0.02,
            frames_per_clip: 30,
            clips: 20,
            subjects: 8,
            samples_per_frame: 2,
            gaze_jitter: 1.5,
            fps: 25.0,
            screen: (1024, 1024),
            splat: GaussianSplatParams { window_w: 24, alpha: 1.0, beta: 3.0 },
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.height < 8 || self.width < 8 {
            return Err(invalid!("synthetic frames must be at least 8x8"));
        }
        if self.object_size == 0 || self.object_size * 2 > self.height.min(self.width) {
            return Err(invalid!("object size must be positive and at most half the frame"));
        }
        if !(0.0..1.0).contains(&self.noise) || !(0.0..=1.0).contains(&self.texture) {
            return Err(invalid!("noise must lie in [0, 1) and texture in [0, 1]"));
        }
        if self.frames_per_clip == 0 || self.clips == 0 || self.subjects == 0 || self.samples_per_frame == 0 {
            return Err(invalid!("frame, clip, subject and sample counts must be positive"));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) || !(self.gaze_jitter >= 0.0) {
            return Err(invalid!("fps must be positive and gaze jitter non-negative"));
        }
        if self.screen.0 == 0 || self.screen.1 == 0 {
            return Err(invalid!("screen resolution must be positive"));
        }
        match self.trajectory {
            Trajectory::Linear { speed } if !(speed.is_finite() && speed >= 0.0) => Err(invalid!("speed must be non-negative")),
            Trajectory::Sinusoidal { period, .. } if !(period > 0.0) => Err(invalid!("period must be positive")),
            _ => self.splat.validate(),
        }
    }

    pub fn video_meta(&self, video_id: u32) -> VideoMeta {
        VideoMeta { video_id, vr_x: self.width as u32, vr_y: self.height as u32, fps: self.fps, frame_count: self.frames_per_clip as u32 }
    }

    pub fn screen_meta(&self) -> ScreenMeta {
        ScreenMeta { sr_x: self.screen.0, sr_y: self.screen.1 }
    }
}

/// One generated clip with its ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticClip {
    pub video_id: u32,
    pub frames: Vec<RgbFrame>,
    /// Object centre `(row, col)` per frame.
    pub centers: Vec<(f64, f64)>,
    pub distractors: Vec<(f64, f64)>,
    pub gaze: Vec<GazeSample>,
    pub gt: Vec<ScalarField>,
}

fn object_mask(kind: ObjectKind, size: usize, center: (f64, f64), r: usize, c: usize) -> bool {
    let half = size as f64 / 2.0;
    let (dr, dc) = (r as f64 + 0.5 - center.0, c as f64 + 0.5 - center.1);
    match kind {
        ObjectKind::Square => dr.abs() < half && dc.abs() < half,
        ObjectKind::Disc => dr * dr + dc * dc < half * half,
    }
}

/// Centre positions along the trajectory, kept fully inside the frame.
fn trajectory(spec: &SyntheticSpec, rng: &mut impl Rng) -> Vec<(f64, f64)> {
    let half = spec.object_size as f64 / 2.0;
    let (lo_r, hi_r) = (half, spec.height as f64 - half);
    let (lo_c, hi_c) = (half, spec.width as f64 - half);
    let start = (rng.random_range(lo_r..hi_r), rng.random_range(lo_c..hi_c));
    let angle = rng.random_range(0.0..2.0 * PI);
    let phase = rng.random_range(0.0..2.0 * PI);
    let reflect = |x: f64, lo: f64, hi: f64| {
        let span = hi - lo;
        if span <= 0.0 {
            return lo;
        }
        let m = (x - lo).rem_euclid(2.0 * span);
        lo + if m > span { 2.0 * span - m } else { m }
    };
    (0..spec.frames_per_clip)
        .map(|t| {
            let t = t as f64;
            match spec.trajectory {
                Trajectory::Static => start,
                Trajectory::Linear { speed } => (
                    reflect(start.0 + speed * t * angle.sin(), lo_r, hi_r),
                    reflect(start.1 + speed * t * angle.cos(), lo_c, hi_c),
                ),
                Trajectory::Sinusoidal { amplitude, period } => {
                    let mid_c = (lo_c + hi_c) / 2.0;
                    (
                        reflect(start.0 + 0.5 * t * angle.sin(), lo_r, hi_r),
                        (mid_c + amplitude * (2.0 * PI * t / period + phase).sin()).clamp(lo_c, hi_c),
                    )
                }
            }
        })
        .collect()
}

/// Smooth random background: a few random plane waves per channel.
fn texture(spec: &SyntheticSpec, rng: &mut impl Rng) -> Vec<[f64; 3]> {
    let waves: Vec<[(f64, f64, f64, f64); 3]> = (0..4)
        .map(|_| {
            [0, 1, 2].map(|_| {
                let f = rng.random_range(0.05..0.3);
                let a = rng.random_range(0.0..2.0 * PI);
                (f * a.cos(), f * a.sin(), rng.random_range(0.0..2.0 * PI), rng.random_range(0.5..1.0))
            })
        })
        .collect();
    let base = [rng.random_range(0.3..0.5), rng.random_range(0.3..0.5), rng.random_range(0.3..0.5)];
    let mut out = Vec::with_capacity(spec.height * spec.width);
    for r in 0..spec.height {
        for c in 0..spec.width {
            out.push([0, 1, 2].map(|ch| {
                let s: f64 = waves.iter().map(|w| {
                    let (fr, fc, ph, amp) = w[ch];
                    amp * (fr * r as f64 + fc * c as f64 + ph).sin()
                }).sum::<f64>() / 4.0;
                base[ch] + spec.texture * s
            }));
        }
    }
    out
}

pub fn generate_clip(spec: &SyntheticSpec, video_id: u32) -> Result<SyntheticClip> {
    spec.validate()?;
    let mut rng = rng_for(spec.seed, &format!("synth/clip{video_id}"));
    let centers = trajectory(spec, &mut rng);
    let bg = texture(spec, &mut rng);
    let hue = rng.random_range(0..3);
    let color = [0, 1, 2].map(|ch| if ch == hue { 0.95 } else { 0.1 });
    let half = spec.object_size as f64 / 2.0;
    let distractors: Vec<(f64, f64)> = (0..spec.distractors)
        .map(|_| (rng.random_range(half..spec.height as f64 - half), rng.random_range(half..spec.width as f64 - half)))
        .collect();
    let noise_amp = spec.noise;
    let (h, w) = (spec.height, spec.width);
    let mut frames = Vec::with_capacity(spec.frames_per_clip);
    for &center in &centers {
        let mut noise_rng = rng_for(spec.seed, &format!("synth/clip{video_id}/noise{}", frames.len()));
        let frame = RgbFrame::from_fn(h, w, |r, c| {
            let on = object_mask(spec.object, spec.object_size, center, r, c)
                || distractors.iter().any(|&d| object_mask(spec.object, spec.object_size, d, r, c));
            let px = if on { color } else { bg[r * w + c] };
            if noise_amp > 0.0 {
                px.map(|v| v + noise_amp * noise_rng.random_range(-1.0..1.0))
            } else {
                px
            }
        });
        frames.push(frame);
    }

    // gaze: jittered object centre, logged in screen coordinates
    let meta = spec.video_meta(video_id);
    let scr = spec.screen_meta();
    let scale = spec.screen.0 as f64 / w as f64;
    let offset = (spec.screen.1 as f64 - h as f64 * scale) / 2.0;
    let jitter = Normal::new(0.0, spec.gaze_jitter.max(1e-12)).expect("finite std");
    let mut gaze = Vec::new();
    for subject in 0..spec.subjects as u32 {
        let mut grng = rng_for(spec.seed, &format!("synth/clip{video_id}/subject{subject}"));
        for (k, &(cr, cc)) in centers.iter().enumerate() {
            for s in 0..spec.samples_per_frame {
                let (jr, jc) = if spec.gaze_jitter > 0.0 { (jitter.sample(&mut grng), jitter.sample(&mut grng)) } else { (0.0, 0.0) };
                let t = (k as f64 + (s as f64 + 0.5) / spec.samples_per_frame as f64) / spec.fps;
                gaze.push(GazeSample {
                    video_id,
                    subject_id: subject,
                    gaze_x: (cc + jc) * scale,
                    gaze_y: (cr + jr) * scale + offset,
                    timestamp_us: (t * 1e6).floor() as u64,
                });
            }
        }
    }
    let fx = fixations_by_frame(&gaze, &meta, &scr)?;
    let gt = video_fixation_maps(&fx, &meta, &spec.splat)?;
    Ok(SyntheticClip { video_id, frames, centers, distractors, gaze, gt })
}

pub fn clip_dir_name(video_id: u32) -> String {
    format!("clip_{video_id:03}")
}

/// Writes every clip plus `gaze.csv` and `screen.json` under `out`.
pub fn generate_synthetic(spec: &SyntheticSpec, out: &Path) -> Result<Vec<SyntheticClip>> {
    spec.validate()?;
    io::create_dir(out)?;
    let mut clips = Vec::with_capacity(spec.clips);
    let mut all_gaze = Vec::new();
    for v in 0..spec.clips as u32 {
        let clip = generate_clip(spec, v)?;
        let dir = out.join(clip_dir_name(v));
        io::create_dir(&dir.join("frames"))?;
        io::create_dir(&dir.join("gt"))?;
        for (k, f) in clip.frames.iter().enumerate() {
            io::write_ppm(&dir.join("frames").join(io::frame_name(k)), f)?;
        }
        for (k, g) in clip.gt.iter().enumerate() {
            io::write_pgm(&dir.join("gt").join(io::gt_name(k)), g.height(), g.width(), &quantize_map(g))?;
        }
        io::write_json(&dir.join("video.json"), &spec.video_meta(v))?;
        all_gaze.extend_from_slice(&clip.gaze);
        clips.push(clip);
    }
    io::write_gaze_csv(&out.join("gaze.csv"), &all_gaze)?;
    io::write_json(&out.join("screen.json"), &spec.screen_meta())?;
    Ok(clips)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticSpec {
        SyntheticSpec { clips: 2, frames_per_clip: 5, ..SyntheticSpec::default() }
    }

    #[test]
    fn static_noiseless_frames_repeat() {
        let spec = SyntheticSpec { trajectory: Trajectory::Static, noise: 0.0, ..small() };
        let clip = generate_clip(&spec, 0).unwrap();
        assert!(clip.frames.windows(2).all(|p| p[0] == p[1]));
    }

    #[test]
    fn linear_speed_between_bounces() {
        let spec = SyntheticSpec { gaze_jitter: 0.0, ..small() };
        let clip = generate_clip(&spec, 1).unwrap();
        for p in clip.centers.windows(2) {
            let d = ((p[1].0 - p[0].0).powi(2) + (p[1].1 - p[0].1).powi(2)).sqrt();
            // a bounce can only shorten the chord
            assert!(d <= 2.0 + 1e-9);
        }
        // without jitter every logged sample maps back to the object centre
        let scale = spec.screen.0 as f64 / spec.width as f64;
        for g in clip.gaze.iter().filter(|g| g.subject_id == 0) {
            let k = (g.timestamp_us as f64 / 1e6 * spec.fps).floor() as usize;
            assert!((g.gaze_x / scale - clip.centers[k].1).abs() < 1e-9);
        }
    }

    #[test]
    fn gt_peaks_near_object() {
        let clip = generate_clip(&small(), 0).unwrap();
        for (g, &(r, c)) in clip.gt.iter().zip(&clip.centers) {
            let i = g.values().iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            let (pr, pc) = ((i / 64) as f64, (i % 64) as f64);
            assert!((pr - r).abs() < 5.0 && (pc - c).abs() < 5.0);
        }
    }

    #[test]
    fn generation_is_reproducible() {
        let a = generate_clip(&small(), 3).unwrap();
        let b = generate_clip(&small(), 3).unwrap();
        assert_eq!(a.frames, b.frames);
        assert_eq!(a.gt, b.gt);
        let c = generate_clip(&SyntheticSpec { seed: 1, ..small() }, 3).unwrap();
        assert_ne!(a.frames, c.frames);
    }

    #[test]
    fn spec_validation() {
        assert!(SyntheticSpec { noise: 1.0, ..small() }.validate().is_err());
        assert!(SyntheticSpec { object_size: 40, ..small() }.validate().is_err());
        SyntheticSpec { object: ObjectKind::Disc, trajectory: Trajectory::Sinusoidal { amplitude: 10.0, period: 12.0 }, ..small() }
            .validate()
            .unwrap();
    }
}
