//! File formats: binary PGM/PPM frames and maps, the gaze CSV log and per-video metadata JSON.

use std::fs;
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{RgbFrame, ScalarField};
use crate::fixmap::{quantize_map, GazeSample, ScreenMeta, VideoMeta};

pub fn frame_name(index: usize) -> String {
    format!("frame_{index:06}.ppm")
}

pub fn gt_name(index: usize) -> String {
    format!("gt_{index:06}.pgm")
}

pub fn map_name(prefix: &str, index: usize) -> String {
    format!("{prefix}_{index:06}.pgm")
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn encode_pnm(path: &Path, bytes: &[u8], width: usize, height: usize, rgb: bool) -> Result<()> {
    let mut buf = Vec::with_capacity(bytes.len() + 32);
    let (subtype, color) = if rgb {
        (PnmSubtype::Pixmap(SampleEncoding::Binary), ExtendedColorType::Rgb8)
    } else {
        (PnmSubtype::Graymap(SampleEncoding::Binary), ExtendedColorType::L8)
    };
    PnmEncoder::new(&mut buf)
        .with_subtype(subtype)
        .write_image(bytes, width as u32, height as u32, color)
        .map_err(|e| Error::format(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Writes an 8-bit grayscale P5 file.
pub fn write_pgm(path: &Path, height: usize, width: usize, bytes: &[u8]) -> Result<()> {
    encode_pnm(path, bytes, width, height, false)
}

/// Quantizes a map to 0..=255 and writes it as P5.
pub fn write_map_pgm(path: &Path, field: &ScalarField) -> Result<()> {
    write_pgm(path, field.height(), field.width(), &quantize_map(field))
}

pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let img = image::open(path).map_err(|e| Error::format(path, e))?;
    let gray = img.into_luma8();
    let (w, h) = gray.dimensions();
    Ok((h as usize, w as usize, gray.into_raw()))
}

/// Reads a P5 map back into `[0, 1]`.
pub fn read_map_pgm(path: &Path) -> Result<ScalarField> {
    let (h, w, bytes) = read_pgm(path)?;
    crate::fixmap::dequantize_map(h, w, &bytes)
}

pub fn write_ppm(path: &Path, frame: &RgbFrame) -> Result<()> {
    let (h, w) = frame.dims();
    let mut bytes = Vec::with_capacity(3 * h * w);
    for r in 0..h {
        for c in 0..w {
            for v in frame.pixel(r, c) {
                bytes.push((v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8);
            }
        }
    }
    encode_pnm(path, &bytes, w, h, true)
}

/// Reads a P6 (or P5, replicated to three channels) frame.
pub fn read_frame(path: &Path) -> Result<RgbFrame> {
    let img = image::open(path).map_err(|e| Error::format(path, e))?;
    let rgb = img.into_rgb8();
    let (w, h) = rgb.dimensions();
    let (h, w) = (h as usize, w as usize);
    let plane = h * w;
    let mut data = vec![0.0; 3 * plane];
    for (i, px) in rgb.pixels().enumerate() {
        for ch in 0..3 {
            data[ch * plane + i] = px.0[ch] as f64 / 255.0;
        }
    }
    RgbFrame::from_planar(h, w, data)
}

/// Sorted `frame_*.ppm` / `frame_*.pgm` paths of a directory.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    list_matching(dir, "frame_")
}

/// Sorted `<prefix>*.p[gp]m` paths of a directory.
pub fn list_matching(dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        if name.starts_with(prefix) && (name.ends_with(".ppm") || name.ends_with(".pgm")) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub fn read_frames(dir: &Path) -> Result<Vec<RgbFrame>> {
    list_frames(dir)?.iter().map(|p| read_frame(p)).collect()
}

pub fn read_gaze_csv(path: &Path) -> Result<Vec<GazeSample>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::format(path, e))?;
    let headers = rdr.headers().map_err(|e| Error::format(path, e))?.clone();
    let expected = ["video_id", "subject_id", "x", "y", "timestamp_us"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::format(path, format!("expected header {}", expected.join(","))));
    }
    rdr.deserialize()
        .map(|r| r.map_err(|e| Error::format(path, e)))
        .collect()
}

pub fn write_gaze_csv(path: &Path, samples: &[GazeSample]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e))?;
    for s in samples {
        w.serialize(s).map_err(|e| Error::format(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// A metadata file holds either one video object or an array of them.
pub fn read_video_meta(path: &Path) -> Result<Vec<VideoMeta>> {
    let value: serde_json::Value = read_json(path)?;
    let metas = if value.is_array() {
        serde_json::from_value(value)
    } else {
        serde_json::from_value(value).map(|m| vec![m])
    };
    metas.map_err(|e| Error::format(path, e))
}

pub fn read_screen_meta(path: &Path) -> Result<ScreenMeta> {
    read_json(path)
}
