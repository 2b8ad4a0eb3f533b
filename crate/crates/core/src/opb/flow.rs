//! Dense optical flow: coarse-to-fine Horn–Schunck with backward warping.
//!
//! The flow lives on the current frame's grid: `cur(x, y) ≈ prev(x − u, y − v)`, so a pattern
//! moving right by two pixels has `u = +2` at its new position.

use crate::error::{invalid, Result};
use crate::field::{RgbFrame, ScalarField};

#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub u: ScalarField,
    pub v: ScalarField,
}

impl FlowField {
    pub fn zeros(height: usize, width: usize) -> Self {
        FlowField { u: ScalarField::zeros(height, width), v: ScalarField::zeros(height, width) }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.u.dims()
    }

    /// Largest per-pixel displacement norm.
    pub fn max_norm(&self) -> f64 {
        self.u
            .values()
            .iter()
            .zip(self.v.values())
            .map(|(a, b)| a.hypot(*b))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FlowParams {
    /// Jacobi sweeps per warp.
    pub iterations: usize,
    /// Weight of the smoothness term (squared Horn–Schunck alpha, intensities in [0, 1]).
    pub smoothness: f64,
    pub levels: usize,
    pub warps: usize,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams { iterations: 60, smoothness: 0.01, levels: 3, warps: 3 }
    }
}

/// Grid with replicated borders; small helper around a flat buffer.
#[derive(Clone)]
struct Plane {
    h: usize,
    w: usize,
    d: Vec<f64>,
}

impl Plane {
    fn zeros(h: usize, w: usize) -> Self {
        Plane { h, w, d: vec![0.0; h * w] }
    }

    #[inline]
    fn at(&self, r: isize, c: isize) -> f64 {
        let r = r.clamp(0, self.h as isize - 1) as usize;
        let c = c.clamp(0, self.w as isize - 1) as usize;
        self.d[r * self.w + c]
    }

    /// Bilinear sample with border clamping; exact at integer positions.
    fn sample(&self, y: f64, x: f64) -> f64 {
        let y = y.clamp(0.0, (self.h - 1) as f64);
        let x = x.clamp(0.0, (self.w - 1) as f64);
        let (y0, x0) = (y.floor(), x.floor());
        let (fy, fx) = (y - y0, x - x0);
        let (y0, x0) = (y0 as isize, x0 as isize);
        let a = self.at(y0, x0);
        let top = if fx > 0.0 { a + fx * (self.at(y0, x0 + 1) - a) } else { a };
        if fy > 0.0 {
            let b = self.at(y0 + 1, x0);
            let bot = if fx > 0.0 { b + fx * (self.at(y0 + 1, x0 + 1) - b) } else { b };
            top + fy * (bot - top)
        } else {
            top
        }
    }

    fn downsample(&self) -> Plane {
        let (h2, w2) = (self.h.div_ceil(2), self.w.div_ceil(2));
        let mut out = Plane::zeros(h2, w2);
        for r in 0..h2 {
            for c in 0..w2 {
                let (r0, c0) = (2 * r as isize, 2 * c as isize);
                out.d[r * w2 + c] = 0.25
                    * (self.at(r0, c0) + self.at(r0, c0 + 1) + self.at(r0 + 1, c0) + self.at(r0 + 1, c0 + 1));
            }
        }
        out
    }

    /// Resample onto an `h`x`w` grid (bilinear), scaling values by `gain`.
    fn upsample(&self, h: usize, w: usize, gain: f64) -> Plane {
        let (sy, sx) = (self.h as f64 / h as f64, self.w as f64 / w as f64);
        let mut out = Plane::zeros(h, w);
        for r in 0..h {
            for c in 0..w {
                let y = (r as f64 + 0.5) * sy - 0.5;
                let x = (c as f64 + 0.5) * sx - 0.5;
                out.d[r * w + c] = gain * self.sample(y, x);
            }
        }
        out
    }

    fn gradients(&self) -> (Plane, Plane) {
        let mut gx = Plane::zeros(self.h, self.w);
        let mut gy = Plane::zeros(self.h, self.w);
        for r in 0..self.h as isize {
            for c in 0..self.w as isize {
                let i = r as usize * self.w + c as usize;
                gx.d[i] = 0.5 * (self.at(r, c + 1) - self.at(r, c - 1));
                gy.d[i] = 0.5 * (self.at(r + 1, c) - self.at(r - 1, c));
            }
        }
        (gx, gy)
    }

    /// Horn–Schunck neighborhood average (1/6 edge neighbors, 1/12 diagonals).
    #[inline]
    fn local_mean(&self, r: isize, c: isize) -> f64 {
        (self.at(r - 1, c) + self.at(r + 1, c) + self.at(r, c - 1) + self.at(r, c + 1)) / 6.0
            + (self.at(r - 1, c - 1) + self.at(r - 1, c + 1) + self.at(r + 1, c - 1) + self.at(r + 1, c + 1))
                / 12.0
    }
}

fn warp_backward(img: &Plane, u: &Plane, v: &Plane) -> Plane {
    let mut out = Plane::zeros(img.h, img.w);
    for r in 0..img.h {
        for c in 0..img.w {
            let i = r * img.w + c;
            out.d[i] = img.sample(r as f64 - v.d[i], c as f64 - u.d[i]);
        }
    }
    out
}

fn refine(prev: &Plane, cur: &Plane, u: &mut Plane, v: &mut Plane, p: &FlowParams) {
    for _ in 0..p.warps {
        let warped = warp_backward(prev, u, v);
        let (wx, wy) = warped.gradients();
        let (cx, cy) = cur.gradients();
        let n = cur.d.len();
        let ix: Vec<f64> = (0..n).map(|i| 0.5 * (wx.d[i] + cx.d[i])).collect();
        let iy: Vec<f64> = (0..n).map(|i| 0.5 * (wy.d[i] + cy.d[i])).collect();
        let it: Vec<f64> = (0..n).map(|i| cur.d[i] - warped.d[i]).collect();
        let (u0, v0) = (u.clone(), v.clone());
        let mut nu = u.clone();
        let mut nv = v.clone();
        for _ in 0..p.iterations {
            for r in 0..cur.h {
                for c in 0..cur.w {
                    let i = r * cur.w + c;
                    let ub = u.local_mean(r as isize, c as isize);
                    let vb = v.local_mean(r as isize, c as isize);
                    let rho = it[i] + ix[i] * (ub - u0.d[i]) + iy[i] * (vb - v0.d[i]);
                    let denom = p.smoothness + ix[i] * ix[i] + iy[i] * iy[i];
                    nu.d[i] = ub - ix[i] * rho / denom;
                    nv.d[i] = vb - iy[i] * rho / denom;
                }
            }
            std::mem::swap(u, &mut nu);
            std::mem::swap(v, &mut nv);
        }
    }
}

/// Coarse-to-fine Horn–Schunck on luminance.
pub fn optical_flow_with(prev: &RgbFrame, cur: &RgbFrame, p: &FlowParams) -> Result<FlowField> {
    prev.ensure_same_dims(cur, "optical flow frames")?;
    if p.iterations == 0 || p.levels == 0 || p.warps == 0 {
        return Err(invalid!("flow iterations, levels and warps must be at least 1"));
    }
    if !(p.smoothness > 0.0 && p.smoothness.is_finite()) {
        return Err(invalid!("flow smoothness must be positive"));
    }
    let (h, w) = prev.dims();
    let to_plane = |f: &RgbFrame| Plane { h, w, d: f.luminance().into_values() };

    let mut pyramid = vec![(to_plane(prev), to_plane(cur))];
    while pyramid.len() < p.levels {
        let (a, b) = pyramid.last().unwrap();
        if a.h.min(a.w) < 16 {
            break;
        }
        let next = (a.downsample(), b.downsample());
        pyramid.push(next);
    }

    let (top_prev, _) = pyramid.last().unwrap();
    let mut u = Plane::zeros(top_prev.h, top_prev.w);
    let mut v = Plane::zeros(top_prev.h, top_prev.w);
    for (lp, lc) in pyramid.iter().rev() {
        if u.h != lp.h || u.w != lp.w {
            u = u.upsample(lp.h, lp.w, lp.w as f64 / u.w as f64);
            v = v.upsample(lp.h, lp.w, lp.h as f64 / v.h as f64);
        }
        refine(lp, lc, &mut u, &mut v, p);
    }

    Ok(FlowField {
        u: ScalarField::from_vec(h, w, u.d)?,
        v: ScalarField::from_vec(h, w, v.d)?,
    })
}

/// Flow with the given sweep count and smoothness and default pyramid settings.
pub fn optical_flow(prev: &RgbFrame, cur: &RgbFrame, iterations: usize, smoothness: f64) -> Result<FlowField> {
    optical_flow_with(prev, cur, &FlowParams { iterations, smoothness, ..FlowParams::default() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn median(mut v: Vec<f64>) -> f64 {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v[v.len() / 2]
    }

    fn square(h: usize, w: usize, top: usize, left: usize, side: usize) -> RgbFrame {
        RgbFrame::from_fn(h, w, |r, c| {
            if (top..top + side).contains(&r) && (left..left + side).contains(&c) {
                [0.9, 0.9, 0.9]
            } else {
                [0.05, 0.05, 0.05]
            }
        })
    }

    #[test]
    fn identical_frames_give_zero_flow() {
        let f = RgbFrame::from_fn(40, 50, |r, c| [(r * c % 7) as f64 / 7.0, 0.2, (c % 5) as f64 / 5.0]);
        let flow = optical_flow(&f, &f, 50, 0.01).unwrap();
        assert!(flow.max_norm() <= 1e-6);
    }

    #[test]
    fn translated_square() {
        let prev = square(64, 64, 24, 20, 16);
        let cur = square(64, 64, 24, 22, 16);
        let flow = optical_flow_with(&prev, &cur, &FlowParams::default()).unwrap();
        let mut us = Vec::new();
        let mut vs = Vec::new();
        for r in 24..40 {
            for c in 22..38 {
                us.push(flow.u.get(r, c));
                vs.push(flow.v.get(r, c));
            }
        }
        let (mu, mv) = (median(us), median(vs));
        assert!((mu - 2.0).abs() <= 0.5, "median u = {mu}");
        assert!(mv.abs() <= 0.5, "median v = {mv}");
    }

    #[test]
    fn global_shift_of_smooth_image() {
        let img = |shift: f64| {
            RgbFrame::from_fn(48, 48, |r, c| {
                let x = c as f64 - shift;
                let v = 0.5 + 0.25 * (x / 6.0).sin() + 0.2 * (r as f64 / 9.0).cos();
                [v, v, v]
            })
        };
        let flow = optical_flow_with(&img(0.0), &img(1.0), &FlowParams::default()).unwrap();
        let mean_u = flow.u.sum() / flow.u.len() as f64;
        assert!((mean_u - 1.0).abs() <= 0.25, "mean u = {mean_u}");
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let a = RgbFrame::uniform(8, 8, [0.0; 3]);
        let b = RgbFrame::uniform(8, 9, [0.0; 3]);
        assert!(optical_flow(&a, &b, 10, 0.01).is_err());
        assert!(optical_flow(&a, &a, 0, 0.01).is_err());
    }
}
