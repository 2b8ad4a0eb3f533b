//! SGF architecture descriptions and their static shape checks.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

use super::ops::{conv_out_size, deconv_full_size, pool_out_size, Crop};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Sgf1,
    Sgf2,
    Sgf3,
    Sgfe,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Sgf1, Variant::Sgf2, Variant::Sgf3, Variant::Sgfe];

    pub fn deconv_count(self) -> usize {
        match self {
            Variant::Sgf1 => 2,
            Variant::Sgf2 | Variant::Sgfe => 3,
            Variant::Sgf3 => 4,
        }
    }

    pub fn input_channels(self) -> usize {
        match self {
            Variant::Sgfe => 4,
            _ => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Sgf1 => "SGF1",
            Variant::Sgf2 => "SGF2",
            Variant::Sgf3 => "SGF3",
            Variant::Sgfe => "SGFE",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['(', ')', '_', '-'], "").as_str() {
            "sgf1" | "1" => Ok(Variant::Sgf1),
            "sgf2" | "2" => Ok(Variant::Sgf2),
            "sgf3" | "3" => Ok(Variant::Sgf3),
            "sgfe" | "e" => Ok(Variant::Sgfe),
            _ => Err(invalid!("unknown variant {s:?}; expected sgf1, sgf2, sgf3 or sgfe")),
        }
    }
}

/// Input size and channel widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetScale {
    pub height: usize,
    pub width: usize,
    /// Output channels of every conv in each of the five blocks.
    pub block_widths: [usize; 5],
    /// Output channels of the intermediate deconvs.
    pub deconv_width: usize,
}

impl NetScale {
    pub fn desk(height: usize, width: usize) -> Self {
        NetScale { height, width, block_widths: [8, 16, 32, 32, 32], deconv_width: 16 }
    }
}

impl Default for NetScale {
    fn default() -> Self {
        NetScale::desk(64, 64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxInput {
    /// The per-frame object boundary map, entered in logit units (see [`super::model`]).
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum LayerKind {
    Conv { out_channels: usize, kernel: usize, stride: usize, pad: usize },
    Relu,
    MaxPool { kernel: usize, stride: usize },
    Deconv { out_channels: usize, kernel: usize, stride: usize, crop: Crop },
    Sigmoid,
    EltwiseMax { aux: AuxInput },
}

impl LayerKind {
    pub fn has_params(&self) -> bool {
        matches!(self, LayerKind::Conv { .. } | LayerKind::Deconv { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub variant: Variant,
    pub input_channels: usize,
    pub scale: NetScale,
    pub layers: Vec<LayerSpec>,
}

const BLOCK_DEPTHS: [usize; 5] = [2, 2, 3, 3, 3];

/// Splits the 2^5 upsampling over `n` deconvs as evenly as possible, larger strides first.
pub fn deconv_strides(n: usize) -> Vec<usize> {
    let total = BLOCK_DEPTHS.len();
    (0..n).map(|j| 1usize << (total / n + usize::from(j < total % n))).collect()
}

pub fn build_sgf(variant: Variant, scale: NetScale) -> Result<NetworkSpec> {
    if scale.height == 0 || scale.width == 0 {
        return Err(invalid!("input dims must be positive"));
    }
    if scale.block_widths.contains(&0) || scale.deconv_width == 0 {
        return Err(invalid!("channel widths must be positive"));
    }
    let mut layers = Vec::new();
    let (mut h, mut w) = (scale.height, scale.width);
    for (b, (&depth, &width)) in BLOCK_DEPTHS.iter().zip(&scale.block_widths).enumerate() {
        for i in 1..=depth {
            let id = format!("{}_{i}", b + 1);
            layers.push(LayerSpec {
                name: format!("conv{id}"),
                kind: LayerKind::Conv { out_channels: width, kernel: 3, stride: 1, pad: 1 },
            });
            layers.push(LayerSpec { name: format!("relu{id}"), kind: LayerKind::Relu });
        }
        layers.push(LayerSpec { name: format!("pool{}", b + 1), kind: LayerKind::MaxPool { kernel: 2, stride: 2 } });
        h = pool_out_size(h, 2, 2);
        w = pool_out_size(w, 2, 2);
    }

    let strides = deconv_strides(variant.deconv_count());
    let last = strides.len() - 1;
    for (j, &s) in strides.iter().enumerate() {
        let name = format!("deconv{}", j + 1);
        let k = 2 * s;
        let (out_channels, crop) = if j < last {
            (scale.deconv_width, Crop::uniform(s / 2))
        } else {
            let (top, bottom) = solve_crop(h, s, scale.height, &name)?;
            let (left, right) = solve_crop(w, s, scale.width, &name)?;
            (1, Crop { top, bottom, left, right })
        };
        layers.push(LayerSpec { name: name.clone(), kind: LayerKind::Deconv { out_channels, kernel: k, stride: s, crop } });
        let fh = deconv_full_size(h, k, s);
        let fw = deconv_full_size(w, k, s);
        if crop.top + crop.bottom >= fh || crop.left + crop.right >= fw {
            return Err(Error::Architecture { layer: name, reason: "crop exceeds the upsampled size".into() });
        }
        h = fh - crop.top - crop.bottom;
        w = fw - crop.left - crop.right;
        if j < last {
            layers.push(LayerSpec { name: format!("relu_d{}", j + 1), kind: LayerKind::Relu });
        }
    }
    if variant == Variant::Sgfe {
        layers.push(LayerSpec { name: "max_boundary".into(), kind: LayerKind::EltwiseMax { aux: AuxInput::Boundary } });
    }
    layers.push(LayerSpec { name: "sigmoid".into(), kind: LayerKind::Sigmoid });
    let spec = NetworkSpec { variant, input_channels: variant.input_channels(), scale, layers };
    spec.validate()?;
    Ok(spec)
}

/// Split of the final deconv's surplus so the output is exactly `target` long.
fn solve_crop(input: usize, stride: usize, target: usize, layer: &str) -> Result<(usize, usize)> {
    let full = deconv_full_size(input, 2 * stride, stride);
    if full <= target {
        return Err(Error::Architecture {
            layer: layer.into(),
            reason: format!("upsampled size {full} cannot be cropped to {target}"),
        });
    }
    let total = full - target;
    Ok((total / 2, total - total / 2))
}

impl NetworkSpec {
    /// Output `(C, H, W)` of every layer, in order.
    pub fn shapes(&self) -> Result<Vec<[usize; 3]>> {
        let mut cur = [self.input_channels, self.scale.height, self.scale.width];
        let mut out = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let arch = |reason: String| Error::Architecture { layer: l.name.clone(), reason };
            cur = match l.kind {
                LayerKind::Conv { out_channels, kernel, stride, pad } => {
                    match (conv_out_size(cur[1], kernel, stride, pad), conv_out_size(cur[2], kernel, stride, pad)) {
                        (Some(h), Some(w)) => [out_channels, h, w],
                        _ => return Err(arch(format!("kernel {kernel} does not fit {}x{}", cur[1], cur[2]))),
                    }
                }
                LayerKind::MaxPool { kernel, stride } => {
                    [cur[0], pool_out_size(cur[1], kernel, stride), pool_out_size(cur[2], kernel, stride)]
                }
                LayerKind::Deconv { out_channels, kernel, stride, crop } => {
                    let fh = deconv_full_size(cur[1], kernel, stride);
                    let fw = deconv_full_size(cur[2], kernel, stride);
                    if crop.top + crop.bottom >= fh || crop.left + crop.right >= fw {
                        return Err(arch(format!("crop {crop:?} exceeds {fh}x{fw}")));
                    }
                    [out_channels, fh - crop.top - crop.bottom, fw - crop.left - crop.right]
                }
                LayerKind::Relu | LayerKind::Sigmoid | LayerKind::EltwiseMax { .. } => cur,
            };
            out.push(cur);
        }
        Ok(out)
    }

    /// Channel count feeding each layer.
    pub fn input_channels_of(&self, index: usize) -> Result<usize> {
        Ok(if index == 0 { self.input_channels } else { self.shapes()?[index - 1][0] })
    }

    pub fn validate(&self) -> Result<()> {
        let arch = |layer: &str, reason: &str| Error::Architecture { layer: layer.into(), reason: reason.into() };
        if self.input_channels != self.variant.input_channels() {
            return Err(arch("input", &format!("{} takes {} input channels", self.variant, self.variant.input_channels())));
        }
        for l in &self.layers {
            let ok = match l.kind {
                LayerKind::Conv { out_channels, kernel, stride, .. }
                | LayerKind::Deconv { out_channels, kernel, stride, .. } => out_channels >= 1 && kernel >= 1 && stride >= 1,
                LayerKind::MaxPool { kernel, stride } => kernel >= 1 && stride >= 1,
                _ => true,
            };
            if !ok {
                return Err(arch(&l.name, "kernel, stride and channel counts must be positive"));
            }
        }
        let mut names: Vec<&str> = self.layers.iter().map(|l| l.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(arch(w[0], "duplicate layer name"));
        }
        let n = self.layers.len();
        if n == 0 || self.layers[n - 1].kind != LayerKind::Sigmoid {
            return Err(arch("output", "network must end in a sigmoid"));
        }
        let maxes: Vec<usize> = (0..n).filter(|&i| matches!(self.layers[i].kind, LayerKind::EltwiseMax { .. })).collect();
        let want_max = self.variant == Variant::Sgfe;
        match (&maxes[..], want_max) {
            ([], false) => {}
            ([i], true) if *i + 2 == n => {}
            _ => return Err(arch("max_boundary", "SGFE needs exactly one eltwise max right before the sigmoid; other variants none")),
        }
        let deconvs = self.layers.iter().filter(|l| matches!(l.kind, LayerKind::Deconv { .. })).count();
        if deconvs != self.variant.deconv_count() {
            return Err(arch("deconv", &format!("{} has {} deconvs, found {deconvs}", self.variant, self.variant.deconv_count())));
        }
        let shapes = self.shapes()?;
        let last = shapes[n - 1];
        if last != [1, self.scale.height, self.scale.width] {
            return Err(arch(&self.layers[n - 1].name, &format!("output {last:?} does not match the 1-channel input size")));
        }
        Ok(())
    }

    /// Output shape of the last pooling layer, i.e. the input to the deconv stack.
    pub fn bottleneck(&self) -> Result<[usize; 3]> {
        let shapes = self.shapes()?;
        let i = self
            .layers
            .iter()
            .rposition(|l| matches!(l.kind, LayerKind::MaxPool { .. }))
            .ok_or_else(|| invalid!("network has no pooling layer"))?;
        Ok(shapes[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strides_per_variant() {
        assert_eq!(deconv_strides(2), vec![8, 4]);
        assert_eq!(deconv_strides(3), vec![4, 4, 2]);
        assert_eq!(deconv_strides(4), vec![4, 2, 2, 2]);
        for n in 1..=5 {
            assert_eq!(deconv_strides(n).iter().product::<usize>(), 32);
        }
    }

    #[test]
    fn every_variant_restores_input_size() {
        for v in Variant::ALL {
            for (h, w) in [(64, 64), (16, 16), (48, 80), (50, 37), (1, 1)] {
                let spec = build_sgf(v, NetScale::desk(h, w)).unwrap();
                assert_eq!(*spec.shapes().unwrap().last().unwrap(), [1, h, w], "{v} at {h}x{w}");
                let deconvs = spec.layers.iter().filter(|l| matches!(l.kind, LayerKind::Deconv { .. })).count();
                assert_eq!(deconvs, v.deconv_count());
            }
        }
    }

    #[test]
    fn downsample_is_32() {
        for v in Variant::ALL {
            let spec = build_sgf(v, NetScale::desk(64, 64)).unwrap();
            assert_eq!(spec.bottleneck().unwrap()[1..], [2, 2]);
            let convs = spec.layers.iter().filter(|l| matches!(l.kind, LayerKind::Conv { .. })).count();
            assert_eq!(convs, 13);
        }
    }

    #[test]
    fn sgfe_layout() {
        let spec = build_sgf(Variant::Sgfe, NetScale::default()).unwrap();
        assert_eq!(spec.input_channels, 4);
        let n = spec.layers.len();
        assert!(matches!(spec.layers[n - 2].kind, LayerKind::EltwiseMax { aux: AuxInput::Boundary }));
        assert_eq!(spec.layers[n - 1].kind, LayerKind::Sigmoid);
        for v in [Variant::Sgf1, Variant::Sgf2, Variant::Sgf3] {
            let s = build_sgf(v, NetScale::default()).unwrap();
            assert_eq!(s.input_channels, 3);
            assert!(!s.layers.iter().any(|l| matches!(l.kind, LayerKind::EltwiseMax { .. })));
        }
    }

    #[test]
    fn tampered_specs_rejected() {
        let mut spec = build_sgf(Variant::Sgf2, NetScale::default()).unwrap();
        let i = spec.layers.iter().rposition(|l| matches!(l.kind, LayerKind::Deconv { .. })).unwrap();
        if let LayerKind::Deconv { ref mut crop, .. } = spec.layers[i].kind {
            crop.top += 1;
        }
        match spec.validate() {
            Err(Error::Architecture { layer, .. }) => assert_eq!(layer, "sigmoid"),
            other => panic!("unexpected {other:?}"),
        }
        let mut spec = build_sgf(Variant::Sgf1, NetScale::default()).unwrap();
        spec.input_channels = 4;
        assert!(spec.validate().is_err());
        assert!(build_sgf(Variant::Sgf1, NetScale::desk(0, 8)).is_err());
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("SGF(E)".parse::<Variant>().unwrap(), Variant::Sgfe);
        assert_eq!("sgf3".parse::<Variant>().unwrap(), Variant::Sgf3);
        assert!("sgf9".parse::<Variant>().is_err());
    }
}
