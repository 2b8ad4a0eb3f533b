//! Named parameter tensors, their momentum buffers, and the on-disk format: a JSON manifest
//! next to a raw little-endian binary64 blob holding the tensors in manifest order.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Error, Result};

use super::arch::{build_sgf, LayerKind, NetScale, NetworkSpec, Variant};
use super::tensor::Tensor;

pub const FORMAT_VERSION: u32 = 1;
/// Std of the Gaussian for a deconv: each output pixel sums `in_channels · (kernel/stride)²`
/// taps, scaled as He init so the upsampling stack neither shrinks nor blows up the signal.
pub fn deconv_init_std(in_channels: usize, kernel: usize, stride: usize) -> f64 {
    let taps = kernel.div_ceil(stride).pow(2);
    (2.0 / (in_channels * taps) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub momentum: Tensor,
}

impl Param {
    fn new(name: String, value: Tensor) -> Self {
        let momentum = Tensor::zeros(value.shape());
        Param { name, value, momentum }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    pub variant: Variant,
    pub scale: NetScale,
    params: Vec<Param>,
}

/// Per-parameter gradients aligned with a [`ParamStore`]'s order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(params: &ParamStore) -> Self {
        Gradients { tensors: params.iter().map(|p| Tensor::zeros(p.value.shape())).collect() }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.tensors.iter_mut().for_each(|t| t.scale(k));
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    pub fn norm(&self) -> f64 {
        self.tensors.iter().map(|t| t.dot(t)).sum::<f64>().sqrt()
    }
}

/// Weight and bias shapes of a parameterized layer given its input channel count.
pub fn layer_param_shapes(kind: &LayerKind, in_channels: usize) -> Option<(Vec<usize>, Vec<usize>)> {
    match *kind {
        LayerKind::Conv { out_channels, kernel, .. } => {
            Some((vec![out_channels, in_channels, kernel, kernel], vec![out_channels]))
        }
        LayerKind::Deconv { out_channels, kernel, .. } => {
            Some((vec![in_channels, out_channels, kernel, kernel], vec![out_channels]))
        }
        _ => None,
    }
}

pub fn weight_name(layer: &str) -> String {
    format!("{layer}.w")
}

pub fn bias_name(layer: &str) -> String {
    format!("{layer}.b")
}

fn gaussian(shape: &[usize], std: f64, rng: &mut impl Rng) -> Tensor {
    let normal = Normal::new(0.0, std).expect("std is finite and positive");
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| normal.sample(rng)).collect()).expect("shape is positive")
}

/// Fresh weights for one layer: He-scaled Gaussians for convs and deconvs, zero
/// biases.
pub fn init_layer(kind: &LayerKind, in_channels: usize, rng: &mut impl Rng) -> Option<(Tensor, Tensor)> {
    let (ws, bs) = layer_param_shapes(kind, in_channels)?;
    let std = match kind {
        LayerKind::Conv { kernel, .. } => (2.0 / (in_channels * kernel * kernel) as f64).sqrt(),
        LayerKind::Deconv { kernel, stride, .. } => deconv_init_std(in_channels, *kernel, *stride),
        _ => return None,
    };
    Some((gaussian(&ws, std, rng), Tensor::zeros(&bs)))
}

impl ParamStore {
    pub fn init(spec: &NetworkSpec, rng: &mut impl Rng) -> Result<Self> {
        let shapes = spec.shapes()?;
        let mut params = Vec::new();
        for (i, l) in spec.layers.iter().enumerate() {
            let cin = if i == 0 { spec.input_channels } else { shapes[i - 1][0] };
            if let Some((w, b)) = init_layer(&l.kind, cin, rng) {
                params.push(Param::new(weight_name(&l.name), w));
                params.push(Param::new(bias_name(&l.name), b));
            }
        }
        Ok(ParamStore { variant: spec.variant, scale: spec.scale, params })
    }

    pub fn from_params(variant: Variant, scale: NetScale, params: Vec<Param>) -> Self {
        ParamStore { variant, scale, params }
    }

    pub fn spec(&self) -> Result<NetworkSpec> {
        build_sgf(self.variant, self.scale)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> std::slice::IterMut<'_, Param> {
        self.params.iter_mut()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.iter_mut().find(|p| p.name == name).map(|p| &mut p.value)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name).ok_or_else(|| invalid!("missing parameter {name}"))
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn reset_momentum(&mut self) {
        for p in &mut self.params {
            p.momentum = Tensor::zeros(p.value.shape());
        }
    }

    /// Checks names and shapes against `spec`.
    pub fn check_against(&self, spec: &NetworkSpec) -> Result<()> {
        let shapes = spec.shapes()?;
        let mut expected = Vec::new();
        for (i, l) in spec.layers.iter().enumerate() {
            let cin = if i == 0 { spec.input_channels } else { shapes[i - 1][0] };
            if let Some((ws, bs)) = layer_param_shapes(&l.kind, cin) {
                expected.push((weight_name(&l.name), ws));
                expected.push((bias_name(&l.name), bs));
            }
        }
        if expected.len() != self.params.len() {
            return Err(mismatch!("{} parameters for a network needing {}", self.params.len(), expected.len()));
        }
        for ((name, shape), p) in expected.iter().zip(&self.params) {
            if *name != p.name || shape[..] != *p.value.shape() {
                return Err(mismatch!(
                    "parameter {} {:?} where {name} {shape:?} is expected",
                    p.name,
                    p.value.shape()
                ));
            }
        }
        Ok(())
    }

    /// Writes `<path>` (manifest) and `<path>.bin`-style blob next to it. Returns the blob path.
    pub fn save(&self, manifest_path: &Path) -> Result<PathBuf> {
        let blob_path = blob_path_for(manifest_path);
        let blob_file = blob_path
            .file_name()
            .and_then(|s| s.to_str())
            .ok_or_else(|| invalid!("parameter path {} has no file name", manifest_path.display()))?
            .to_string();
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            variant: self.variant,
            input_channels: self.variant.input_channels(),
            scale: self.scale,
            dtype: "f64-le".into(),
            blob: blob_file,
            tensors: self.params.iter().map(|p| TensorEntry { name: p.name.clone(), shape: p.value.shape().to_vec() }).collect(),
        };
        let mut bytes = Vec::with_capacity(self.param_count() * 8);
        for p in &self.params {
            for v in p.value.data() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        if let Some(dir) = manifest_path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(&blob_path, bytes).map_err(|e| Error::io(&blob_path, e))?;
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::format(manifest_path, e))?;
        fs::write(manifest_path, json + "\n").map_err(|e| Error::io(manifest_path, e))?;
        Ok(blob_path)
    }

    pub fn load(manifest_path: &Path) -> Result<Self> {
        let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::format(manifest_path, e))?;
        if m.format_version != FORMAT_VERSION {
            return Err(Error::format(manifest_path, format!("unsupported format version {}", m.format_version)));
        }
        if m.dtype != "f64-le" {
            return Err(Error::format(manifest_path, format!("unsupported dtype {}", m.dtype)));
        }
        let blob_path = manifest_path.with_file_name(&m.blob);
        let bytes = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
        let total: usize = m.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
        if bytes.len() != total * 8 {
            return Err(Error::format(&blob_path, format!("{} bytes for {total} values", bytes.len())));
        }
        let mut values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")));
        let mut params = Vec::with_capacity(m.tensors.len());
        for t in &m.tensors {
            let n = t.shape.iter().product();
            let data: Vec<f64> = values.by_ref().take(n).collect();
            let tensor = Tensor::from_vec(&t.shape, data).map_err(|e| Error::format(manifest_path, e))?;
            params.push(Param::new(t.name.clone(), tensor));
        }
        let store = ParamStore { variant: m.variant, scale: m.scale, params };
        store.check_against(&store.spec()?).map_err(|e| Error::format(manifest_path, e))?;
        Ok(store)
    }
}

/// Blob location for a manifest: same stem, `.bin` extension.
pub fn blob_path_for(manifest_path: &Path) -> PathBuf {
    manifest_path.with_extension("bin")
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    variant: Variant,
    input_channels: usize,
    scale: NetScale,
    dtype: String,
    blob: String,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn init_matches_spec_and_is_seeded() {
        for v in Variant::ALL {
            let spec = build_sgf(v, NetScale::default()).unwrap();
            let a = ParamStore::init(&spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
            let b = ParamStore::init(&spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
            a.check_against(&spec).unwrap();
            assert_eq!(a, b);
            let convs = spec.layers.iter().filter(|l| matches!(l.kind, LayerKind::Conv { .. })).count();
            assert_eq!(a.len(), 2 * (convs + v.deconv_count()));
        }
    }

    #[test]
    fn init_statistics() {
        let spec = build_sgf(Variant::Sgf2, NetScale::default()).unwrap();
        let p = ParamStore::init(&spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let w = p.get("conv3_1.w").unwrap();
        let fan_in = 16.0 * 9.0;
        let var = w.dot(w) / w.len() as f64;
        assert!((var / (2.0 / fan_in) - 1.0).abs() < 0.1, "{var}");
        let d = p.get("deconv1.w").unwrap();
        let sd = (d.dot(d) / d.len() as f64).sqrt();
        // 32 input channels, kernel twice the stride: 4 taps per channel
        assert!((sd - 0.125).abs() < 0.005, "{sd}");
        assert!(p.iter().filter(|q| q.name.ends_with(".b")).all(|q| q.value.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn save_load_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let spec = build_sgf(Variant::Sgfe, NetScale::desk(32, 48)).unwrap();
        let mut p = ParamStore::init(&spec, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        // awkward values must survive too
        p.get_mut("conv1_1.b").unwrap().data_mut()[..4].copy_from_slice(&[f64::MIN_POSITIVE, -0.0, 1e300, 0.1 + 0.2]);
        let path = dir.path().join("model.json");
        let blob = p.save(&path).unwrap();
        assert_eq!(blob, dir.path().join("model.bin"));
        assert_eq!(fs::metadata(&blob).unwrap().len() as usize, p.param_count() * 8);
        let q = ParamStore::load(&path).unwrap();
        for (a, b) in p.iter().zip(q.iter()) {
            assert_eq!(a.name, b.name);
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.value), bits(&b.value));
        }
    }

    #[test]
    fn truncated_blob_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let spec = build_sgf(Variant::Sgf1, NetScale::desk(16, 16)).unwrap();
        let p = ParamStore::init(&spec, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let path = dir.path().join("m.json");
        let blob = p.save(&path).unwrap();
        let bytes = fs::read(&blob).unwrap();
        fs::write(&blob, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(ParamStore::load(&path), Err(Error::Format { .. })));
    }
}
