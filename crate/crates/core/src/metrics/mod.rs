//! Saliency evaluation: PR/ROC curves over 8-bit thresholds, shuffled AUC, NSS, CC, SIM and
//! EMD. Degenerate inputs follow fixed rules so every map gets a score: a constant prediction
//! has NSS 0, CC 0 and sAUC 0.5.

mod emd;

pub use emd::{downsample_mass, emd, transport_cost};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Result};
use crate::field::ScalarField;
use crate::fixmap::quantize_map;

/// Fixation points of one frame as `(row, col)` pixels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixationSet {
    pub frame_index: usize,
    pub points: Vec<(usize, usize)>,
}

impl FixationSet {
    pub fn validate(&self, height: usize, width: usize) -> Result<()> {
        match self.points.iter().find(|&&(r, c)| r >= height || c >= width) {
            Some(p) => Err(invalid!("fixation {p:?} outside a {height}x{width} frame")),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: u8,
    pub precision: f64,
    pub tpr: f64,
    pub fpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveData {
    /// One point per threshold 0..=255, ascending.
    pub points: Vec<CurvePoint>,
}

impl CurveData {
    /// Trapezoidal area under the ROC points closed with (0,0) and (1,1).
    pub fn roc_auc(&self) -> f64 {
        let mut pts: Vec<(f64, f64)> = self.points.iter().map(|p| (p.fpr, p.tpr)).collect();
        pts.push((0.0, 0.0));
        pts.push((1.0, 1.0));
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        pts.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum()
    }
}

/// Binarizes `pred >= t` for every t in 0..=255 and scores it against `gt`.
/// Precision of an empty prediction is 1.
pub fn pr_roc_curves(pred: &[u8], gt: &[bool]) -> Result<CurveData> {
    if pred.len() != gt.len() {
        return Err(mismatch!("{} prediction pixels against {} ground-truth pixels", pred.len(), gt.len()));
    }
    let mut hist_fg = [0usize; 256];
    let mut hist_bg = [0usize; 256];
    for (&p, &g) in pred.iter().zip(gt) {
        if g {
            hist_fg[p as usize] += 1;
        } else {
            hist_bg[p as usize] += 1;
        }
    }
    let (n_fg, n_bg): (usize, usize) = (hist_fg.iter().sum(), hist_bg.iter().sum());
    if n_fg == 0 || n_bg == 0 {
        return Err(invalid!("ground truth needs both foreground and background pixels"));
    }
    let mut points = Vec::with_capacity(256);
    let (mut tp, mut fp) = (0usize, 0usize);
    for t in (0..256).rev() {
        tp += hist_fg[t];
        fp += hist_bg[t];
        let precision = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
        points.push(CurvePoint { threshold: t as u8, precision, tpr: tp as f64 / n_fg as f64, fpr: fp as f64 / n_bg as f64 });
    }
    points.reverse();
    Ok(CurveData { points })
}

/// Mann–Whitney AUC of `pos` against `neg` with ties counted half.
pub fn rank_auc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(invalid!("AUC needs at least one positive and one negative"));
    }
    let mut sorted = neg.to_vec();
    sorted.sort_by(f64::total_cmp);
    // twice the win count keeps the tie halves integral
    let mut twice = 0u128;
    for &p in pos {
        let below = sorted.partition_point(|&n| n < p);
        let not_above = sorted.partition_point(|&n| n <= p);
        twice += 2 * below as u128 + (not_above - below) as u128;
    }
    Ok(twice as f64 / (2 * pos.len() * neg.len()) as f64)
}

/// Shuffled AUC: prediction values at this frame's fixations against values at fixation
/// locations borrowed from other frames.
pub fn shuffled_auc(pred: &ScalarField, fixations: &FixationSet, negatives: &[(usize, usize)]) -> Result<f64> {
    let (h, w) = pred.dims();
    fixations.validate(h, w)?;
    FixationSet { frame_index: fixations.frame_index, points: negatives.to_vec() }.validate(h, w)?;
    let pos: Vec<f64> = fixations.points.iter().map(|&(r, c)| pred.get(r, c)).collect();
    let neg: Vec<f64> = negatives.iter().map(|&(r, c)| pred.get(r, c)).collect();
    rank_auc(&pos, &neg)
}

/// Draws `count` points uniformly with replacement from `pool`.
pub fn sample_negatives(pool: &[(usize, usize)], count: usize, rng: &mut impl Rng) -> Result<Vec<(usize, usize)>> {
    if pool.is_empty() {
        return Err(invalid!("no fixations available in other frames for negatives"));
    }
    Ok((0..count).map(|_| pool[rng.random_range(0..pool.len())]).collect())
}

/// Exact test; a rounding-level spread in the mean would otherwise leave a tiny nonzero std.
fn is_constant(f: &ScalarField) -> bool {
    f.min() == f.max()
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean of the standardized prediction at the fixations; 0 for a constant prediction.
pub fn nss(pred: &ScalarField, fixations: &FixationSet) -> Result<f64> {
    if fixations.points.is_empty() {
        return Err(invalid!("NSS needs at least one fixation"));
    }
    fixations.validate(pred.height(), pred.width())?;
    if is_constant(pred) {
        return Ok(0.0);
    }
    let (mean, std) = mean_std(pred.values());
    let total: f64 = fixations.points.iter().map(|&(r, c)| (pred.get(r, c) - mean) / std).sum();
    Ok(total / fixations.points.len() as f64)
}

/// Pearson correlation over pixels; 0 when either map is constant.
pub fn cc(pred: &ScalarField, gt: &ScalarField) -> Result<f64> {
    pred.ensure_same_dims(gt, "ground truth")?;
    if is_constant(pred) || is_constant(gt) {
        return Ok(0.0);
    }
    let (mp, sp) = mean_std(pred.values());
    let (mg, sg) = mean_std(gt.values());
    let n = pred.len() as f64;
    let cov = pred.values().iter().zip(gt.values()).map(|(p, g)| (p - mp) * (g - mg)).sum::<f64>() / n;
    Ok((cov / (sp * sg)).clamp(-1.0, 1.0))
}

fn unit_mass(f: &ScalarField, what: &str) -> Result<Vec<f64>> {
    if f.values().iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(invalid!("{what} must be finite and non-negative"));
    }
    let s = f.sum();
    if !(s > 0.0) {
        return Err(invalid!("{what} has zero mass"));
    }
    Ok(f.values().iter().map(|v| v / s).collect())
}

/// Σ min of the two sum-normalized maps.
pub fn sim(pred: &ScalarField, gt: &ScalarField) -> Result<f64> {
    pred.ensure_same_dims(gt, "ground truth")?;
    let (p, g) = (unit_mass(pred, "prediction")?, unit_mass(gt, "ground truth")?);
    Ok(p.iter().zip(&g).map(|(a, b)| a.min(*b)).sum::<f64>().min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub emd_grid: usize,
    /// Shuffled negatives drawn per positive fixation.
    pub negatives_per_positive: usize,
    pub seed: u64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig { emd_grid: 16, negatives_per_positive: 100, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub s_auc: f64,
    pub nss: f64,
    pub cc: f64,
    pub sim: f64,
    pub emd: f64,
    pub curves: CurveData,
}

/// All five scores plus the curves for one frame. `gt_binary` marks fixated pixels.
pub fn evaluate(
    pred: &ScalarField,
    gt_density: &ScalarField,
    gt_binary: &[bool],
    fixations: &FixationSet,
    negatives: &[(usize, usize)],
    cfg: &MetricConfig,
) -> Result<MetricReport> {
    pred.ensure_same_dims(gt_density, "ground truth")?;
    Ok(MetricReport {
        s_auc: shuffled_auc(pred, fixations, negatives)?,
        nss: nss(pred, fixations)?,
        cc: cc(pred, gt_density)?,
        sim: sim(pred, gt_density)?,
        emd: emd(pred, gt_density, cfg.emd_grid)?,
        curves: pr_roc_curves(&quantize_map(pred), gt_binary)?,
    })
}

/// Pixels covered by any splat.
pub fn binarize_density(gt: &ScalarField) -> Vec<bool> {
    gt.values().iter().map(|&v| v > 0.0).collect()
}

/// The five scalar scores, without curves.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricMeans {
    pub s_auc: f64,
    pub nss: f64,
    pub cc: f64,
    pub sim: f64,
    pub emd: f64,
}

impl MetricMeans {
    pub fn of(r: &MetricReport) -> Self {
        MetricMeans { s_auc: r.s_auc, nss: r.nss, cc: r.cc, sim: r.sim, emd: r.emd }
    }

    /// Arithmetic mean in the given order; `None` when empty.
    pub fn mean(items: &[MetricMeans]) -> Option<MetricMeans> {
        if items.is_empty() {
            return None;
        }
        let n = items.len() as f64;
        let sum = |f: fn(&MetricMeans) -> f64| items.iter().map(f).sum::<f64>() / n;
        Some(MetricMeans {
            s_auc: sum(|m| m.s_auc),
            nss: sum(|m| m.nss),
            cc: sum(|m| m.cc),
            sim: sum(|m| m.sim),
            emd: sum(|m| m.emd),
        })
    }
}
