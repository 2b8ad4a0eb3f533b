//! Color gradient, thresholded flow-gradient magnitude and their temporal fusion.

use crate::error::Result;
use crate::field::ScalarField;

use super::flow::FlowField;
use super::slic::SuperpixelLabeling;
use super::OpbParams;

/// Central difference with replicated borders along columns (`dx`) and rows (`dy`).
fn central_diffs(values: &[f64], h: usize, w: usize, r: usize, c: usize) -> (f64, f64) {
    let at = |rr: usize, cc: usize| values[rr * w + cc];
    let dx = 0.5 * (at(r, (c + 1).min(w - 1)) - at(r, c.saturating_sub(1)));
    let dy = 0.5 * (at((r + 1).min(h - 1), c) - at(r.saturating_sub(1), c));
    (dx, dy)
}

fn gradient_norm(values: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let (dx, dy) = central_diffs(values, h, w, r, c);
            out.push(dx.hypot(dy));
        }
    }
    out
}

/// Gradient magnitude of the superpixel mean-color image, normalized by its maximum.
pub fn color_gradient(sp: &SuperpixelLabeling) -> ScalarField {
    let (h, w) = sp.dims();
    let planes = sp.mean_color_image();
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let mut sq = 0.0;
            for plane in &planes {
                let (dx, dy) = central_diffs(plane, h, w, r, c);
                sq += dx * dx + dy * dy;
            }
            out[r * w + c] = sq.sqrt();
        }
    }
    ScalarField::from_fn(h, w, |r, c| out[r * w + c]).normalized_by_max()
}

/// Unthresholded flow-gradient magnitude `sqrt(|∇u|² + |∇v|²)`.
pub fn flow_gradient_raw(flow: &FlowField) -> ScalarField {
    let (h, w) = flow.dims();
    let gu = gradient_norm(flow.u.values(), h, w);
    let gv = gradient_norm(flow.v.values(), h, w);
    ScalarField::from_fn(h, w, |r, c| {
        let i = r * w + c;
        gu[i].hypot(gv[i])
    })
}

/// Flow-gradient magnitude with everything at or below `theta` zeroed.
pub fn flow_gradient_magnitude(flow: &FlowField, theta: f64) -> ScalarField {
    flow_gradient_raw(flow).map(|m| if m > theta { m } else { 0.0 })
}

/// Nearest-rank percentile, `q` in [0, 1].
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Per-pixel weight from the previous boundary map: the smallest gradient norm in the 3x3
/// neighborhood, divided by the map's largest gradient norm.
pub fn previous_boundary_weight(prev_b: &ScalarField) -> ScalarField {
    let (h, w) = prev_b.dims();
    let g = gradient_norm(prev_b.values(), h, w);
    let gmax = g.iter().copied().fold(0.0, f64::max);
    if gmax <= 0.0 {
        return ScalarField::zeros(h, w);
    }
    ScalarField::from_fn(h, w, |r, c| {
        let mut m = f64::INFINITY;
        for rr in r.saturating_sub(1)..=(r + 1).min(h - 1) {
            for cc in c.saturating_sub(1)..=(c + 1).min(w - 1) {
                m = m.min(g[rr * w + cc]);
            }
        }
        m / gmax
    })
}

/// Fuses color structure with motion. Without a previous map this is the first-frame rule
/// `cg·(1 − e^{−α·m})`; with one, pixels whose previous boundary exceeds `sigma` blend the
/// previous value with the gradient-weighted current evidence.
pub fn fuse_boundary(
    cg: &ScalarField,
    m: &ScalarField,
    prev_b: Option<&ScalarField>,
    p: &OpbParams,
) -> Result<ScalarField> {
    cg.ensure_same_dims(m, "boundary fusion (color vs motion)")?;
    let base: Vec<f64> = cg
        .values()
        .iter()
        .zip(m.values())
        .map(|(&c, &mv)| c * (1.0 - (-p.alpha * mv).exp()))
        .collect();
    let (h, w) = cg.dims();
    let fused = match prev_b {
        None => base,
        Some(prev) => {
            cg.ensure_same_dims(prev, "boundary fusion (previous map)")?;
            let weight = previous_boundary_weight(prev);
            base.iter()
                .zip(prev.values())
                .zip(weight.values())
                .map(|((&b, &pb), &wt)| if pb > p.sigma { p.mu * pb + p.lambda * b * wt } else { b })
                .collect()
        }
    };
    ScalarField::from_vec(h, w, fused.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::RgbFrame;

    fn params() -> OpbParams {
        OpbParams::default()
    }

    /// Independent oracle: gradient of the mean-color image computed pixel by pixel from the
    /// label grid and the region colors.
    fn cg_oracle(frame: &RgbFrame, labels: &[u32], ncolors: usize) -> Vec<f64> {
        let (h, w) = frame.dims();
        let mut mean = vec![[0.0; 3]; ncolors];
        let mut cnt = vec![0.0; ncolors];
        for r in 0..h {
            for c in 0..w {
                let l = labels[r * w + c] as usize;
                let px = frame.pixel(r, c);
                for k in 0..3 {
                    mean[l][k] += px[k];
                }
                cnt[l] += 1.0;
            }
        }
        for l in 0..ncolors {
            for k in 0..3 {
                mean[l][k] /= cnt[l];
            }
        }
        let s = |r: i64, c: i64, k: usize| {
            let r = r.clamp(0, h as i64 - 1) as usize;
            let c = c.clamp(0, w as i64 - 1) as usize;
            mean[labels[r * w + c] as usize][k]
        };
        let mut out = vec![0.0; h * w];
        for r in 0..h as i64 {
            for c in 0..w as i64 {
                let mut sq = 0.0;
                for k in 0..3 {
                    let dx = (s(r, c + 1, k) - s(r, c - 1, k)) / 2.0;
                    let dy = (s(r + 1, c, k) - s(r - 1, c, k)) / 2.0;
                    sq += dx * dx + dy * dy;
                }
                out[(r as usize) * w + c as usize] = sq.sqrt();
            }
        }
        let mx = out.iter().copied().fold(0.0, f64::max);
        if mx > 0.0 {
            out.iter_mut().for_each(|v| *v /= mx);
        }
        out
    }

    #[test]
    fn single_superpixel_has_no_gradient() {
        let f = RgbFrame::from_fn(10, 10, |r, c| [r as f64 / 10.0, c as f64 / 10.0, 0.3]);
        let sp = SuperpixelLabeling::from_labels(&f, vec![0; 100]).unwrap();
        assert!(color_gradient(&sp).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn vertical_split_gradient_is_two_columns_wide() {
        let (h, w, split) = (8, 12, 5);
        let f = RgbFrame::from_fn(h, w, |_, c| if c < split { [0.2, 0.4, 0.6] } else { [0.9, 0.1, 0.0] });
        let labels: Vec<u32> = (0..h * w).map(|i| u32::from(i % w >= split)).collect();
        let sp = SuperpixelLabeling::from_labels(&f, labels.clone()).unwrap();
        let cg = color_gradient(&sp);
        let oracle = cg_oracle(&f, &labels, 2);
        for r in 0..h {
            for c in 0..w {
                assert!((cg.get(r, c) - oracle[r * w + c]).abs() < 1e-15);
                assert_eq!(cg.get(r, c) > 0.0, c == split - 1 || c == split, "({r},{c})");
            }
        }
    }

    #[test]
    fn checkerboard_maxima_on_borders() {
        let (h, w) = (10, 10);
        let colors = [[0.1, 0.1, 0.1], [0.9, 0.2, 0.2], [0.2, 0.9, 0.2], [0.2, 0.2, 0.9]];
        let quad = |r: usize, c: usize| (2 * usize::from(r >= 5) + usize::from(c >= 5)) as u32;
        let f = RgbFrame::from_fn(h, w, |r, c| colors[quad(r, c) as usize]);
        let labels: Vec<u32> = (0..h * w).map(|i| quad(i / w, i % w)).collect();
        let sp = SuperpixelLabeling::from_labels(&f, labels.clone()).unwrap();
        let cg = color_gradient(&sp);
        let oracle = cg_oracle(&f, &labels, 4);
        let mut max_at = Vec::new();
        for r in 0..h {
            for c in 0..w {
                assert!((cg.get(r, c) - oracle[r * w + c]).abs() < 1e-15);
                if cg.get(r, c) == 1.0 {
                    max_at.push((r, c));
                }
                // strictly inside a region (3x3 single label) the gradient vanishes
                let interior = (r.saturating_sub(1)..=(r + 1).min(h - 1))
                    .all(|rr| (c.saturating_sub(1)..=(c + 1).min(w - 1)).all(|cc| quad(rr, cc) == quad(r, c)));
                if interior {
                    assert_eq!(cg.get(r, c), 0.0);
                }
            }
        }
        assert!(!max_at.is_empty());
        for (r, c) in max_at {
            assert!(r == 4 || r == 5 || c == 4 || c == 5);
        }
    }

    #[test]
    fn constant_flow_has_no_gradient() {
        let flow = FlowField {
            u: ScalarField::filled(6, 7, 1.5),
            v: ScalarField::filled(6, 7, -0.5),
        };
        assert!(flow_gradient_magnitude(&flow, 0.0).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn step_flow_gives_band_of_two() {
        let (h, w) = (5, 8);
        let u = ScalarField::from_fn(h, w, |_, c| if c < 4 { 0.0 } else { 4.0 });
        let flow = FlowField { u, v: ScalarField::zeros(h, w) };
        let m = flow_gradient_magnitude(&flow, 1.0);
        for r in 0..h {
            for c in 0..w {
                let want = if c == 3 || c == 4 { 2.0 } else { 0.0 };
                assert_eq!(m.get(r, c), want);
            }
        }
        // threshold above the maximum removes everything
        assert!(flow_gradient_magnitude(&flow, 2.0).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn first_frame_fusion_values() {
        let p = OpbParams { alpha: 0.75, ..params() };
        let cg = ScalarField::filled(1, 1, 1.0);
        let m = ScalarField::filled(1, 1, 2.0);
        let b = fuse_boundary(&cg, &m, None, &p).unwrap();
        assert!((b.get(0, 0) - (1.0 - (-1.5f64).exp())).abs() < 1e-15);
        assert!((b.get(0, 0) - 0.7769).abs() < 1e-4);

        let zero = ScalarField::zeros(4, 4);
        let cg = ScalarField::filled(4, 4, 0.8);
        assert!(fuse_boundary(&cg, &zero, None, &p).unwrap().values().iter().all(|&v| v == 0.0));
        let m = ScalarField::filled(4, 4, 3.0);
        assert!(fuse_boundary(&zero, &m, None, &p).unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn recursive_branch() {
        let p = OpbParams { mu: 0.5, lambda: 0.5, sigma: 0.3, alpha: 0.75, ..params() };
        let (h, w) = (5, 5);
        let cg = ScalarField::filled(h, w, 1.0);
        let m = ScalarField::filled(h, w, 2.0);
        let prev = ScalarField::from_fn(h, w, |r, c| if c >= 2 { 0.9 } else { 0.1 } + 0.01 * r as f64);
        let b = fuse_boundary(&cg, &m, Some(&prev), &p).unwrap();
        let base = 1.0 - (-1.5f64).exp();
        let wt = previous_boundary_weight(&prev);
        for r in 0..h {
            for c in 0..w {
                let pb = prev.get(r, c);
                let want = if pb > 0.3 { 0.5 * pb + 0.5 * base * wt.get(r, c) } else { base };
                assert!((b.get(r, c) - want.clamp(0.0, 1.0)).abs() < 1e-15);
            }
        }
        // zero previous map reduces to the first-frame rule
        let z = ScalarField::zeros(h, w);
        assert_eq!(
            fuse_boundary(&cg, &m, Some(&z), &p).unwrap(),
            fuse_boundary(&cg, &m, None, &p).unwrap()
        );
        assert!(fuse_boundary(&cg, &m, Some(&ScalarField::zeros(4, 5)), &p).is_err());
    }

    #[test]
    fn percentile_nearest_rank() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&v, 0.99), 99.0);
        assert_eq!(percentile(&v, 1.0), 100.0);
        assert_eq!(percentile(&[5.0], 0.99), 5.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn fusion_bounds_and_monotonicity(
                cg in proptest::collection::vec(0.0..=1.0f64, 16),
                m in proptest::collection::vec(0.0..5.0f64, 16),
                dm in proptest::collection::vec(0.0..2.0f64, 16),
                prev in proptest::collection::vec(0.0..=1.0f64, 16),
            ) {
                let p = OpbParams::default();
                let cgf = ScalarField::from_vec(4, 4, cg).unwrap();
                let mf = ScalarField::from_vec(4, 4, m.clone()).unwrap();
                let m2: Vec<f64> = m.iter().zip(&dm).map(|(a, b)| a + b).collect();
                let mf2 = ScalarField::from_vec(4, 4, m2).unwrap();
                let pf = ScalarField::from_vec(4, 4, prev).unwrap();

                let b1 = fuse_boundary(&cgf, &mf, None, &p).unwrap();
                let b2 = fuse_boundary(&cgf, &mf2, None, &p).unwrap();
                for i in 0..16 {
                    prop_assert!(b1.values()[i] <= b2.values()[i]);
                    if m[i] == 0.0 {
                        prop_assert_eq!(b1.values()[i], 0.0);
                    }
                }
                let br = fuse_boundary(&cgf, &mf, Some(&pf), &p).unwrap();
                prop_assert!(br.values().iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }
}
