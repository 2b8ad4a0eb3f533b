//! On-disk video datasets: `clip_*/frames/frame_%06d.ppm`, `clip_*/gt/gt_%06d.pgm` and
//! `clip_*/video.json`, with `gaze.csv` and `screen.json` at the root.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{invalid, Error, Result};
use crate::field::{RgbFrame, ScalarField};
use crate::fixmap::{fixations_by_frame, GazeSample, ScreenMeta, VideoMeta};
use crate::io;
use crate::net::{assemble_sgfe_input, frame_tensor};
use crate::opb::{clip_boundaries, OpbParams};
use crate::train::{SamplePair, StageTwoData};

#[derive(Debug, Clone)]
pub struct Clip {
    pub name: String,
    pub meta: VideoMeta,
    pub frames: Vec<RgbFrame>,
    /// Fixation density per frame, scaled to [0, 1].
    pub gt: Vec<ScalarField>,
    /// In-frame fixation pixels `(row, col)` per frame.
    pub fixations: Vec<Vec<(usize, usize)>>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub screen: ScreenMeta,
    pub clips: Vec<Clip>,
}

/// Subdirectories of `root` whose name starts with `clip_`, sorted.
pub fn clip_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let path = entry.map_err(|e| Error::io(root, e))?.path();
        let is_clip = path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("clip_"));
        if is_clip && path.is_dir() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

/// Groups gaze samples into per-frame in-frame pixels.
pub fn fixation_pixels(gaze: &[GazeSample], meta: &VideoMeta, screen: &ScreenMeta) -> Result<Vec<Vec<(usize, usize)>>> {
    let fx = fixations_by_frame(gaze, meta, screen)?;
    let (h, w) = (meta.vr_y as i64, meta.vr_x as i64);
    let mut out = vec![Vec::new(); meta.frame_count as usize];
    for (k, list) in &fx.by_frame {
        let Some(slot) = out.get_mut(*k) else { continue };
        for f in list {
            let (r, c) = f.pixel();
            if (0..h).contains(&r) && (0..w).contains(&c) {
                slot.push((r as usize, c as usize));
            }
        }
    }
    Ok(out)
}

impl Dataset {
    pub fn load(root: &Path) -> Result<Self> {
        let screen = io::read_screen_meta(&root.join("screen.json"))?;
        let gaze = io::read_gaze_csv(&root.join("gaze.csv"))?;
        let mut clips = Vec::new();
        for dir in clip_dirs(root)? {
            let metas = io::read_video_meta(&dir.join("video.json"))?;
            let [meta] = metas[..] else {
                return Err(Error::format(dir.join("video.json"), "a clip holds exactly one video"));
            };
            let frames = io::read_frames(&dir.join("frames"))?;
            let gt = io::list_matching(&dir.join("gt"), "gt_")?
                .iter()
                .map(|p| io::read_map_pgm(p))
                .collect::<Result<Vec<_>>>()?;
            if frames.len() != meta.frame_count as usize || gt.len() != frames.len() {
                return Err(Error::format(
                    &dir,
                    format!("{} frames and {} ground-truth maps for frame_count {}", frames.len(), gt.len(), meta.frame_count),
                ));
            }
            if let Some(f) = frames.iter().find(|f| f.dims() != (meta.vr_y as usize, meta.vr_x as usize)) {
                return Err(Error::format(&dir, format!("frame of {:?} in a {}x{} video", f.dims(), meta.vr_y, meta.vr_x)));
            }
            let fixations = fixation_pixels(&gaze, &meta, &screen)?;
            let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            clips.push(Clip { name, meta, frames, gt, fixations });
        }
        if clips.is_empty() {
            return Err(invalid!("no clip_* directories under {}", root.display()));
        }
        Ok(Dataset { root: root.to_path_buf(), screen, clips })
    }

    pub fn frame_dims(&self) -> (usize, usize) {
        self.clips[0].frames[0].dims()
    }

    /// `(frame, ground truth)` pairs over the chosen clips, every `stride`-th frame.
    pub fn stage_one_samples(&self, clips: &[usize], stride: usize) -> Vec<SamplePair> {
        let mut out = Vec::new();
        for &ci in clips {
            let clip = &self.clips[ci];
            for k in (0..clip.frames.len()).step_by(stride.max(1)) {
                out.push(SamplePair { input: frame_tensor(&clip.frames[k]), target: clip.gt[k].clone(), aux: None });
            }
        }
        out
    }

    /// Colour samples plus four-channel SGFE samples for frames with a predecessor. The
    /// previous-saliency channel is the previous frame's ground truth; the boundary comes from
    /// the clip's OPB recursion.
    pub fn stage_two_data(&self, clips: &[usize], stride: usize, opb: &OpbParams) -> Result<StageTwoData> {
        let mut data = StageTwoData { rgb: self.stage_one_samples(clips, stride), temporal: Vec::new() };
        for &ci in clips {
            let clip = &self.clips[ci];
            let boundaries = clip_boundaries(&clip.frames, opb)?;
            for k in (1..clip.frames.len()).filter(|k| k % stride.max(1) == 0) {
                data.temporal.push(SamplePair {
                    input: assemble_sgfe_input(&clip.frames[k], &clip.gt[k - 1])?,
                    target: clip.gt[k].clone(),
                    aux: Some(boundaries[k].clone()),
                });
            }
        }
        Ok(data)
    }
}
