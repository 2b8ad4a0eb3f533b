//! Per-video inference: SGF3 on the first frame, then SGFE on each later frame fed with its
//! own previous prediction and the OPB boundary of the frame pair.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Result};
use crate::field::{RgbFrame, ScalarField};
use crate::fixmap::quantize_map;
use crate::io;
use crate::net::{assemble_sgfe_input, frame_tensor, predict, NetworkSpec, ParamStore, Variant};
use crate::opb::{clip_boundaries, OpbParams};

/// A parameter set with its architecture.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub spec: NetworkSpec,
    pub params: ParamStore,
}

impl LoadedModel {
    pub fn new(params: ParamStore) -> Result<Self> {
        let spec = params.spec()?;
        params.check_against(&spec)?;
        Ok(LoadedModel { spec, params })
    }

    pub fn load(path: &Path) -> Result<Self> {
        LoadedModel::new(ParamStore::load(path)?)
    }

    pub fn variant(&self) -> Variant {
        self.spec.variant
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.spec.scale.height, self.spec.scale.width)
    }

    /// Single-frame prediction for the colour-only variants.
    pub fn predict_frame(&self, frame: &RgbFrame) -> Result<ScalarField> {
        predict(&self.spec, &self.params, &frame_tensor(frame), None)
    }

    pub fn predict_temporal(&self, frame: &RgbFrame, prev: &ScalarField, boundary: &ScalarField) -> Result<ScalarField> {
        predict(&self.spec, &self.params, &assemble_sgfe_input(frame, prev)?, Some(boundary))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMode {
    Opb,
    /// Boundary forced to zero (the no-boundary ablation).
    Zero,
}

/// What produced one output map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameTrace {
    pub index: usize,
    pub model: Variant,
    /// Fed the pipeline's own previous map.
    pub used_prev: bool,
    pub boundary_zero: bool,
}

#[derive(Debug, Clone)]
pub struct VideoOutput {
    pub maps: Vec<ScalarField>,
    pub boundaries: Vec<ScalarField>,
    pub trace: Vec<FrameTrace>,
}

/// Runs the two-model flow with precomputed boundaries (`boundaries[0]` is unused).
pub fn run_video_with_boundaries(
    frames: &[RgbFrame],
    sgf3: &LoadedModel,
    sgfe: &LoadedModel,
    boundaries: &[ScalarField],
) -> Result<VideoOutput> {
    let Some(first) = frames.first() else {
        return Err(invalid!("a video needs at least one frame"));
    };
    if sgf3.variant() == Variant::Sgfe || sgfe.variant() != Variant::Sgfe {
        return Err(invalid!("expected a single-frame model and an SGFE model, got {} and {}", sgf3.variant(), sgfe.variant()));
    }
    let dims = first.dims();
    if sgf3.dims() != dims || sgfe.dims() != dims {
        return Err(mismatch!("frames of {dims:?} for models of {:?} and {:?}", sgf3.dims(), sgfe.dims()));
    }
    if boundaries.len() != frames.len() {
        return Err(mismatch!("{} boundary maps for {} frames", boundaries.len(), frames.len()));
    }
    let mut maps = Vec::with_capacity(frames.len());
    let mut trace = Vec::with_capacity(frames.len());
    maps.push(sgf3.predict_frame(first)?);
    trace.push(FrameTrace { index: 0, model: sgf3.variant(), used_prev: false, boundary_zero: true });
    for i in 1..frames.len() {
        let b = &boundaries[i];
        let m = sgfe.predict_temporal(&frames[i], &maps[i - 1], b)?;
        trace.push(FrameTrace { index: i, model: Variant::Sgfe, used_prev: true, boundary_zero: b.values().iter().all(|&v| v == 0.0) });
        maps.push(m);
    }
    Ok(VideoOutput { maps, boundaries: boundaries.to_vec(), trace })
}

pub fn run_video(
    frames: &[RgbFrame],
    sgf3: &LoadedModel,
    sgfe: &LoadedModel,
    opb: &OpbParams,
    mode: BoundaryMode,
) -> Result<VideoOutput> {
    let boundaries = match mode {
        BoundaryMode::Opb => clip_boundaries(frames, opb)?,
        BoundaryMode::Zero => frames.iter().map(|f| ScalarField::zeros(f.height(), f.width())).collect(),
    };
    run_video_with_boundaries(frames, sgf3, sgfe, &boundaries)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub sgf3_params: PathBuf,
    pub sgfe_params: PathBuf,
    pub opb: OpbParams,
    pub frames: PathBuf,
    pub out: PathBuf,
}

/// Writes `map_%06d.pgm` for every output map and the trace as JSON.
pub fn write_video_output(out: &Path, output: &VideoOutput) -> Result<()> {
    io::create_dir(out)?;
    for (k, m) in output.maps.iter().enumerate() {
        io::write_pgm(&out.join(io::map_name("map", k)), m.height(), m.width(), &quantize_map(m))?;
    }
    io::write_json(&out.join("trace.json"), &output.trace)
}
