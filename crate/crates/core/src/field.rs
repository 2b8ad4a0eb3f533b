//! Image-plane containers shared by every stage: scalar maps and RGB frames.

use crate::error::{invalid, mismatch, Result};

/// A dense 2-D grid of reals stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(height: usize, width: usize) -> Self {
        assert!(height * width > 0, "empty field");
        ScalarField { height, width, values: vec![0.0; height * width] }
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        let mut f = Self::zeros(height, width);
        f.values.fill(value);
        f
    }

    pub fn from_vec(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(invalid!("field dimensions must be positive, got {height}x{width}"));
        }
        if values.len() != height * width {
            return Err(mismatch!(
                "{} values for a {height}x{width} field",
                values.len()
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid!("field contains non-finite values"));
        }
        Ok(ScalarField { height, width, values })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                values.push(f(r, c));
            }
        }
        ScalarField { height, width, values }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.width + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.values[r * self.width + c] = v;
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            height: self.height,
            width: self.width,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn ensure_same_dims(&self, other: &ScalarField, what: &str) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(mismatch!(
                "{what}: {}x{} vs {}x{}",
                self.height,
                self.width,
                other.height,
                other.width
            ));
        }
        Ok(())
    }

    /// Elementwise sum; dims must agree.
    pub fn add(&self, other: &ScalarField) -> Result<ScalarField> {
        self.ensure_same_dims(other, "add")?;
        Ok(ScalarField {
            height: self.height,
            width: self.width,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        })
    }

    /// Divides by the maximum so the field peaks at 1; an all-zero (or non-positive) field is
    /// returned unchanged.
    pub fn normalized_by_max(&self) -> ScalarField {
        let m = self.max();
        if m > 0.0 {
            self.map(|v| v / m)
        } else {
            self.clone()
        }
    }
}

/// Three-channel frame with values in [0, 1], stored planar (R, G, B planes).
#[derive(Debug, Clone, PartialEq)]
pub struct RgbFrame {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl RgbFrame {
    pub fn from_planar(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(invalid!("frame dimensions must be positive, got {height}x{width}"));
        }
        if data.len() != 3 * height * width {
            return Err(mismatch!("{} values for a {height}x{width}x3 frame", data.len()));
        }
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(invalid!("frame values must lie in [0, 1]"));
        }
        Ok(RgbFrame { height, width, data })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        assert!(height * width > 0, "empty frame");
        let plane = height * width;
        let mut data = vec![0.0; 3 * plane];
        for r in 0..height {
            for c in 0..width {
                let px = f(r, c);
                for (ch, v) in px.iter().enumerate() {
                    data[ch * plane + r * width + c] = v.clamp(0.0, 1.0);
                }
            }
        }
        RgbFrame { height, width, data }
    }

    pub fn uniform(height: usize, width: usize, rgb: [f64; 3]) -> Self {
        Self::from_fn(height, width, |_, _| rgb)
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn pixel(&self, r: usize, c: usize) -> [f64; 3] {
        let plane = self.height * self.width;
        let i = r * self.width + c;
        [self.data[i], self.data[plane + i], self.data[2 * plane + i]]
    }

    /// Planar storage: channel `ch` occupies `data[ch*h*w .. (ch+1)*h*w]`.
    #[inline]
    pub fn planar(&self) -> &[f64] {
        &self.data
    }

    pub fn channel(&self, ch: usize) -> &[f64] {
        let plane = self.height * self.width;
        &self.data[ch * plane..(ch + 1) * plane]
    }

    /// Rec. 601 luma.
    pub fn luminance(&self) -> ScalarField {
        let (r, g, b) = (self.channel(0), self.channel(1), self.channel(2));
        ScalarField {
            height: self.height,
            width: self.width,
            values: (0..r.len()).map(|i| 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i]).collect(),
        }
    }

    pub fn ensure_same_dims(&self, other: &RgbFrame, what: &str) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(mismatch!(
                "{what}: {}x{} vs {}x{}",
                self.height,
                self.width,
                other.height,
                other.width
            ));
        }
        Ok(())
    }
}
