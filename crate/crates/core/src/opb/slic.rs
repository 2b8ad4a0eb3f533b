//! SLIC superpixels in CIELAB with grid seeding and a connectivity pass.

use crate::error::{invalid, Result};
use crate::field::RgbFrame;

#[derive(Debug, Clone, PartialEq)]
pub struct SuperpixelLabeling {
    height: usize,
    width: usize,
    labels: Vec<u32>,
    count: usize,
    /// Mean RGB of each region.
    mean_color: Vec<[f64; 3]>,
}

impl SuperpixelLabeling {
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Builds a labeling from an explicit label grid; region means are taken from `frame`.
    /// Labels must be dense in `0..count`.
    pub fn from_labels(frame: &RgbFrame, labels: Vec<u32>) -> Result<Self> {
        let (h, w) = frame.dims();
        if labels.len() != h * w {
            return Err(crate::error::mismatch!("{} labels for a {h}x{w} frame", labels.len()));
        }
        let count = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
        let mut sums = vec![[0.0f64; 4]; count];
        for (i, &l) in labels.iter().enumerate() {
            let px = frame.pixel(i / w, i % w);
            let s = &mut sums[l as usize];
            s[0] += px[0];
            s[1] += px[1];
            s[2] += px[2];
            s[3] += 1.0;
        }
        if sums.iter().any(|s| s[3] == 0.0) {
            return Err(invalid!("labels are not dense in 0..{count}"));
        }
        let mean_color = sums.iter().map(|s| [s[0] / s[3], s[1] / s[3], s[2] / s[3]]).collect();
        Ok(SuperpixelLabeling { height: h, width: w, labels, count, mean_color })
    }


    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn label(&self, r: usize, c: usize) -> u32 {
        self.labels[r * self.width + c]
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean_color(&self) -> &[[f64; 3]] {
        &self.mean_color
    }

    /// Each pixel replaced by the mean color of its region, planar R/G/B.
    pub fn mean_color_image(&self) -> [Vec<f64>; 3] {
        let mut out = [
            Vec::with_capacity(self.labels.len()),
            Vec::with_capacity(self.labels.len()),
            Vec::with_capacity(self.labels.len()),
        ];
        for &l in &self.labels {
            let c = self.mean_color[l as usize];
            for ch in 0..3 {
                out[ch].push(c[ch]);
            }
        }
        out
    }
}

fn srgb_to_linear(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// sRGB in [0,1] to CIELAB under D65.
pub fn rgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let [r, g, b] = rgb.map(srgb_to_linear);
    let x = (0.4124564 * r + 0.3575761 * g + 0.1804375 * b) / 0.95047;
    let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    let z = (0.0193339 * r + 0.1191920 * g + 0.9503041 * b) / 1.08883;
    let (fx, fy, fz) = (lab_f(x), lab_f(y), lab_f(z));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

#[derive(Debug, Clone, Copy)]
struct Center {
    lab: [f64; 3],
    r: f64,
    c: f64,
}

const ITERATIONS: usize = 10;

/// Grid-seeded SLIC. `k` is the requested region count; the returned labeling reports the
/// exact count after connectivity enforcement. The result is a pure function of the inputs.
pub fn slic_superpixels(frame: &RgbFrame, k: usize, compactness: f64) -> Result<SuperpixelLabeling> {
    let (h, w) = frame.dims();
    let n = h * w;
    if k == 0 || k > n {
        return Err(invalid!("superpixel count {k} outside 1..={n}"));
    }
    if !(compactness.is_finite() && compactness >= 0.0) {
        return Err(invalid!("compactness must be finite and non-negative"));
    }

    let lab: Vec<[f64; 3]> = (0..n).map(|i| rgb_to_lab(frame.pixel(i / w, i % w))).collect();

    let nx = ((k as f64 * w as f64 / h as f64).sqrt().round() as usize).clamp(1, w);
    let ny = ((k as f64 / nx as f64).round() as usize).clamp(1, h);
    let (sx, sy) = (w as f64 / nx as f64, h as f64 / ny as f64);
    let step = ((n as f64) / (nx * ny) as f64).sqrt();

    let grad = |r: usize, c: usize| -> f64 {
        let at = |rr: usize, cc: usize| lab[rr * w + cc];
        let (l, rt) = (at(r, c.saturating_sub(1)), at(r, (c + 1).min(w - 1)));
        let (u, d) = (at(r.saturating_sub(1), c), at((r + 1).min(h - 1), c));
        (0..3).map(|i| (rt[i] - l[i]).powi(2) + (d[i] - u[i]).powi(2)).sum()
    };

    let mut centers = Vec::with_capacity(nx * ny);
    for gy in 0..ny {
        for gx in 0..nx {
            let r0 = (((gy as f64 + 0.5) * sy) as usize).min(h - 1);
            let c0 = (((gx as f64 + 0.5) * sx) as usize).min(w - 1);
            // move the seed to the lowest-gradient pixel of its 3x3 neighborhood
            let (mut br, mut bc, mut bg) = (r0, c0, grad(r0, c0));
            for r in r0.saturating_sub(1)..=(r0 + 1).min(h - 1) {
                for c in c0.saturating_sub(1)..=(c0 + 1).min(w - 1) {
                    let g = grad(r, c);
                    if g < bg {
                        (br, bc, bg) = (r, c, g);
                    }
                }
            }
            centers.push(Center { lab: lab[br * w + bc], r: br as f64, c: bc as f64 });
        }
    }

    let spatial_weight = (compactness / step).powi(2);
    let radius = sx.max(sy).ceil() as i64;
    let mut labels = vec![u32::MAX; n];
    let mut dist = vec![f64::INFINITY; n];

    for _ in 0..ITERATIONS {
        dist.fill(f64::INFINITY);
        for (ci, ctr) in centers.iter().enumerate() {
            let (cr, cc) = (ctr.r.round() as i64, ctr.c.round() as i64);
            let r0 = (cr - radius).max(0) as usize;
            let r1 = ((cr + radius) as usize).min(h - 1);
            let c0 = (cc - radius).max(0) as usize;
            let c1 = ((cc + radius) as usize).min(w - 1);
            for r in r0..=r1 {
                for c in c0..=c1 {
                    let i = r * w + c;
                    let p = lab[i];
                    let dc = (p[0] - ctr.lab[0]).powi(2)
                        + (p[1] - ctr.lab[1]).powi(2)
                        + (p[2] - ctr.lab[2]).powi(2);
                    let ds = (r as f64 - ctr.r).powi(2) + (c as f64 - ctr.c).powi(2);
                    let d = dc + ds * spatial_weight;
                    if d < dist[i] {
                        dist[i] = d;
                        labels[i] = ci as u32;
                    }
                }
            }
        }
        // pixels outside every window fall back to the spatially nearest center
        for i in 0..n {
            if labels[i] == u32::MAX || dist[i].is_infinite() {
                let (r, c) = ((i / w) as f64, (i % w) as f64);
                let best = centers
                    .iter()
                    .enumerate()
                    .map(|(ci, ctr)| (ci, (r - ctr.r).powi(2) + (c - ctr.c).powi(2)))
                    .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
                labels[i] = best.0 as u32;
            }
        }
        let mut acc = vec![[0.0f64; 6]; centers.len()];
        for i in 0..n {
            let a = &mut acc[labels[i] as usize];
            a[0] += lab[i][0];
            a[1] += lab[i][1];
            a[2] += lab[i][2];
            a[3] += (i / w) as f64;
            a[4] += (i % w) as f64;
            a[5] += 1.0;
        }
        for (ctr, a) in centers.iter_mut().zip(&acc) {
            if a[5] > 0.0 {
                ctr.lab = [a[0] / a[5], a[1] / a[5], a[2] / a[5]];
                ctr.r = a[3] / a[5];
                ctr.c = a[4] / a[5];
            }
        }
    }

    let min_size = ((step * step) / 4.0) as usize;
    let (labels, _) = enforce_connectivity(&labels, h, w, min_size);
    SuperpixelLabeling::from_labels(frame, labels)
}

/// Relabels 4-connected components in raster order; components smaller than `min_size` are
/// absorbed by the already-labeled neighbor of their first pixel.
fn enforce_connectivity(labels: &[u32], h: usize, w: usize, min_size: usize) -> (Vec<u32>, usize) {
    let n = h * w;
    let mut out = vec![u32::MAX; n];
    let mut next = 0u32;
    let mut stack = Vec::new();
    let mut component = Vec::new();

    let neighbors = |i: usize| {
        let (r, c) = (i / w, i % w);
        let mut v = [usize::MAX; 4];
        if c > 0 {
            v[0] = i - 1;
        }
        if r > 0 {
            v[1] = i - w;
        }
        if c + 1 < w {
            v[2] = i + 1;
        }
        if r + 1 < h {
            v[3] = i + w;
        }
        v
    };

    for start in 0..n {
        if out[start] != u32::MAX {
            continue;
        }
        let adjacent = neighbors(start)
            .into_iter()
            .filter(|&j| j != usize::MAX && out[j] != u32::MAX)
            .map(|j| out[j])
            .next();

        component.clear();
        stack.push(start);
        out[start] = next;
        while let Some(i) = stack.pop() {
            component.push(i);
            for j in neighbors(i) {
                if j != usize::MAX && out[j] == u32::MAX && labels[j] == labels[start] {
                    out[j] = next;
                    stack.push(j);
                }
            }
        }
        match adjacent {
            Some(adj) if component.len() < min_size => {
                for &i in &component {
                    out[i] = adj;
                }
            }
            _ => next += 1,
        }
    }
    (out, next as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn is_connected(sp: &SuperpixelLabeling, label: u32) -> bool {
        let (h, w) = sp.dims();
        let members: Vec<usize> = (0..h * w).filter(|&i| sp.labels()[i] == label).collect();
        if members.is_empty() {
            return false;
        }
        let mut seen = vec![false; h * w];
        let mut stack = vec![members[0]];
        seen[members[0]] = true;
        let mut reached = 0;
        while let Some(i) = stack.pop() {
            reached += 1;
            let (r, c) = (i / w, i % w);
            let mut push = |j: usize| {
                if !seen[j] && sp.labels()[j] == label {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if c > 0 {
                push(i - 1);
            }
            if c + 1 < w {
                push(i + 1);
            }
            if r > 0 {
                push(i - w);
            }
            if r + 1 < h {
                push(i + w);
            }
        }
        reached == members.len()
    }

    fn check_invariants(sp: &SuperpixelLabeling) {
        for l in 0..sp.count() as u32 {
            assert!(is_connected(sp, l), "label {l} absent or disconnected");
        }
        assert!(sp.labels().iter().all(|&l| (l as usize) < sp.count()));
    }

    #[test]
    fn uniform_frame_gives_grid_regions() {
        let f = RgbFrame::uniform(64, 64, [0.3, 0.6, 0.2]);
        let sp = slic_superpixels(&f, 4, 10.0).unwrap();
        assert_eq!(sp.count(), 4);
        check_invariants(&sp);
        let mut sizes = vec![0usize; 4];
        for &l in sp.labels() {
            sizes[l as usize] += 1;
        }
        for s in sizes {
            assert!((900..=1200).contains(&s), "region size {s}");
        }
    }

    #[test]
    fn two_color_split_is_exact() {
        let (h, w) = (40, 60);
        let f = RgbFrame::from_fn(h, w, |_, c| if c < 30 { [0.9, 0.1, 0.1] } else { [0.1, 0.2, 0.9] });
        let sp = slic_superpixels(&f, 2, 10.0).unwrap();
        assert_eq!(sp.count(), 2);
        // every region is color-pure and the two colors land in different regions
        let left = sp.label(0, 0);
        for r in 0..h {
            for c in 0..w {
                assert_eq!(sp.label(r, c) == left, c < 30, "pixel ({r},{c})");
            }
        }
    }

    #[test]
    fn single_region() {
        let f = RgbFrame::from_fn(9, 13, |r, c| [r as f64 / 9.0, c as f64 / 13.0, 0.5]);
        let sp = slic_superpixels(&f, 1, 10.0).unwrap();
        assert_eq!(sp.count(), 1);
        assert!(sp.labels().iter().all(|&l| l == 0));
    }

    #[test]
    fn too_many_regions_rejected() {
        let f = RgbFrame::uniform(4, 4, [0.0; 3]);
        assert!(slic_superpixels(&f, 17, 10.0).is_err());
        assert!(slic_superpixels(&f, 0, 10.0).is_err());
        assert!(slic_superpixels(&f, 16, 10.0).is_ok());
    }

    #[test]
    fn textured_frame_regions_are_connected_and_deterministic() {
        let f = RgbFrame::from_fn(48, 40, |r, c| {
            let v = ((r * 7 + c * 13) % 17) as f64 / 17.0;
            [v, (v * 3.0).fract(), 1.0 - v]
        });
        let a = slic_superpixels(&f, 30, 10.0).unwrap();
        check_invariants(&a);
        let b = slic_superpixels(&f, 30, 10.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lab_reference_points() {
        let white = rgb_to_lab([1.0, 1.0, 1.0]);
        assert!((white[0] - 100.0).abs() < 1e-3 && white[1].abs() < 1e-2 && white[2].abs() < 1e-2);
        let black = rgb_to_lab([0.0, 0.0, 0.0]);
        assert!(black[0].abs() < 1e-9);
    }
}
