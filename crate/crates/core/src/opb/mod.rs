//! Moving-object boundary maps from consecutive frames.
//!
//! Superpixel color structure of the current frame is gated by the spatial gradient of the
//! optical flow, so only contours that move survive; an optional previous boundary map carries
//! contours forward in time.

pub mod boundary;
pub mod flow;
pub mod slic;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::field::{RgbFrame, ScalarField};

pub use boundary::{color_gradient, flow_gradient_magnitude, flow_gradient_raw, fuse_boundary};
pub use flow::{optical_flow, optical_flow_with, FlowField, FlowParams};
pub use slic::{slic_superpixels, SuperpixelLabeling};

/// How the flow-gradient threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    Fixed(f64),
    /// `factor` times the 99th percentile of the frame's flow-gradient magnitude.
    Quantile(f64),
}

impl Threshold {
    pub fn resolve(&self, raw_magnitude: &ScalarField) -> f64 {
        match *self {
            Threshold::Fixed(t) => t,
            Threshold::Quantile(q) => q * boundary::percentile(raw_magnitude.values(), 0.99),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpbParams {
    pub theta: Threshold,
    pub alpha: f64,
    pub mu: f64,
    pub lambda: f64,
    pub sigma: f64,
    pub superpixel_count: usize,
    pub compactness: f64,
    pub flow: FlowParams,
}

impl Default for OpbParams {
    fn default() -> Self {
        OpbParams {
            theta: Threshold::Quantile(0.1),
            alpha: 0.75,
            mu: 0.5,
            lambda: 0.5,
            sigma: 0.3,
            superpixel_count: 100,
            compactness: 10.0,
            flow: FlowParams::default(),
        }
    }
}

impl OpbParams {
    pub fn validate(&self) -> Result<()> {
        let theta_ok = match self.theta {
            Threshold::Fixed(t) | Threshold::Quantile(t) => t >= 0.0,
        };
        if !theta_ok {
            return Err(invalid!("theta must be non-negative"));
        }
        if !(self.alpha > 0.0) {
            return Err(invalid!("alpha must be positive"));
        }
        if !(self.mu >= 0.0 && self.lambda >= 0.0 && self.sigma >= 0.0) {
            return Err(invalid!("mu, lambda and sigma must be non-negative"));
        }
        Ok(())
    }
}

/// Every intermediate of one boundary computation.
#[derive(Debug, Clone)]
pub struct OpbStages {
    pub superpixels: SuperpixelLabeling,
    pub color_gradient: ScalarField,
    pub flow: FlowField,
    pub theta: f64,
    pub motion: ScalarField,
    pub boundary: ScalarField,
}

pub fn opb_stages(
    prev: &RgbFrame,
    cur: &RgbFrame,
    prev_b: Option<&ScalarField>,
    p: &OpbParams,
) -> Result<OpbStages> {
    p.validate()?;
    prev.ensure_same_dims(cur, "OPB frames")?;
    let superpixels = slic_superpixels(cur, p.superpixel_count, p.compactness)?;
    let cg = color_gradient(&superpixels);
    let flow = optical_flow_with(prev, cur, &p.flow)?;
    let theta = p.theta.resolve(&flow_gradient_raw(&flow));
    let motion = flow_gradient_magnitude(&flow, theta);
    let boundary = fuse_boundary(&cg, &motion, prev_b, p)?;
    Ok(OpbStages { superpixels, color_gradient: cg, flow, theta, motion, boundary })
}

/// Boundary map of `cur` given the preceding frame and, after the first pair, the previous map.
pub fn opb_pipeline(
    prev: &RgbFrame,
    cur: &RgbFrame,
    prev_b: Option<&ScalarField>,
    p: &OpbParams,
) -> Result<ScalarField> {
    Ok(opb_stages(prev, cur, prev_b, p)?.boundary)
}

/// Boundary maps for a whole clip; index 0 has no predecessor and gets an all-zero map. The
/// recursion state starts empty for every clip.
pub fn clip_boundaries(frames: &[RgbFrame], p: &OpbParams) -> Result<Vec<ScalarField>> {
    let Some(first) = frames.first() else { return Ok(Vec::new()) };
    let (h, w) = first.dims();
    let mut out = vec![ScalarField::zeros(h, w)];
    let mut prev_b: Option<ScalarField> = None;
    for pair in frames.windows(2) {
        let b = opb_pipeline(&pair[0], &pair[1], prev_b.as_ref(), p)?;
        prev_b = Some(b.clone());
        out.push(b);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_uniform_frames() {
        let f = RgbFrame::uniform(32, 32, [0.4, 0.4, 0.4]);
        let b = opb_pipeline(&f, &f, None, &OpbParams::default()).unwrap();
        assert!(b.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pipeline_is_the_composition() {
        let p = OpbParams { superpixel_count: 40, ..Default::default() };
        let mk = |dx: usize| {
            RgbFrame::from_fn(40, 40, |r, c| {
                let inside = (12..26).contains(&r) && (10 + dx..24 + dx).contains(&c);
                if inside { [0.9, 0.8, 0.2] } else { [0.1, 0.2, 0.3 + 0.01 * (r % 3) as f64] }
            })
        };
        let (a, b) = (mk(0), mk(2));
        let got = opb_pipeline(&a, &b, None, &p).unwrap();

        let sp = slic_superpixels(&b, p.superpixel_count, p.compactness).unwrap();
        let cg = color_gradient(&sp);
        let flow = optical_flow_with(&a, &b, &p.flow).unwrap();
        let theta = p.theta.resolve(&flow_gradient_raw(&flow));
        let m = flow_gradient_magnitude(&flow, theta);
        let want = fuse_boundary(&cg, &m, None, &p).unwrap();
        assert_eq!(got, want);
        assert!(got.max() > 0.0);

        // recursion: second pair consumes the first map and stays deterministic
        let c = mk(4);
        let b1 = opb_pipeline(&b, &c, Some(&got), &p).unwrap();
        let b2 = opb_pipeline(&b, &c, Some(&got), &p).unwrap();
        assert_eq!(b1, b2);
    }

    #[test]
    fn negative_parameters_rejected() {
        let f = RgbFrame::uniform(8, 8, [0.0; 3]);
        let p = OpbParams { alpha: 0.0, ..Default::default() };
        assert!(opb_pipeline(&f, &f, None, &p).is_err());
        let p = OpbParams { theta: Threshold::Fixed(-1.0), ..Default::default() };
        assert!(opb_pipeline(&f, &f, None, &p).is_err());
    }
}
