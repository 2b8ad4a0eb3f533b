//! Ablation over the held-out clips: each SGF variant, the OPB boundary alone, SGFE with the
//! boundary forced to zero, and the full SGFE flow, scored on every frame that has a
//! predecessor.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{invalid, Result};
use crate::field::ScalarField;
use crate::metrics::{cc, emd, nss, sample_negatives, shuffled_auc, sim, FixationSet, MetricConfig, MetricMeans};
use crate::opb::{clip_boundaries, OpbParams};
use crate::pipeline::{run_video_with_boundaries, LoadedModel};
use crate::seed::rng_for;

pub const COLUMNS: [&str; 6] = ["SGF(1)", "SGF(2)", "SGF(3)", "OPB", "SGF_nb", "SGF(E)"];
pub const ROWS: [&str; 5] = ["sAUC", "SIM", "CC", "NSS", "EMD"];
/// First scored frame: frame 0 has neither motion nor a previous map.
pub const EVAL_FROM: usize = 1;

#[derive(Debug, Default)]
pub struct AblationModels {
    pub sgf1: Option<LoadedModel>,
    pub sgf2: Option<LoadedModel>,
    pub sgf3: Option<LoadedModel>,
    pub sgfe: Option<LoadedModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnResult {
    pub name: String,
    /// `None` when the column's parameters were missing.
    pub means: Option<MetricMeans>,
    pub frames_scored: usize,
    /// Per metric, in [`ROWS`] order: frames where the metric was undefined.
    pub excluded: [usize; 5],
    /// Frames whose SGFE input had an all-zero boundary.
    pub zero_boundary_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub clips: Vec<String>,
    pub eval_from: usize,
    pub columns: Vec<ColumnResult>,
}

impl AblationTable {
    pub fn column(&self, name: &str) -> Option<&ColumnResult> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Metric rows by model columns; missing columns read `absent`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric");
        for c in &self.columns {
            s.push(',');
            s.push_str(&c.name);
        }
        s.push('\n');
        for (ri, row) in ROWS.iter().enumerate() {
            s.push_str(row);
            for c in &self.columns {
                s.push(',');
                match &c.means {
                    Some(m) => s.push_str(&format!("{:.6}", [m.s_auc, m.sim, m.cc, m.nss, m.emd][ri])),
                    None => s.push_str("absent"),
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Per-frame metric values (None when undefined) grouped by video.
#[derive(Default)]
struct Scores {
    videos: Vec<Vec<[Option<f64>; 5]>>,
    zero_boundary: usize,
}

impl Scores {
    fn summarize(&self, name: &str) -> ColumnResult {
        let mut excluded = [0usize; 5];
        let mut frames = 0;
        let mut per_video: Vec<[Option<f64>; 5]> = Vec::new();
        for v in &self.videos {
            frames += v.len();
            let mut row = [None; 5];
            for m in 0..5 {
                let vals: Vec<f64> = v.iter().filter_map(|f| f[m]).collect();
                excluded[m] += v.len() - vals.len();
                if !vals.is_empty() {
                    row[m] = Some(vals.iter().sum::<f64>() / vals.len() as f64);
                }
            }
            per_video.push(row);
        }
        let mean = |m: usize| {
            let vals: Vec<f64> = per_video.iter().filter_map(|r| r[m]).collect();
            if vals.is_empty() { f64::NAN } else { vals.iter().sum::<f64>() / vals.len() as f64 }
        };
        ColumnResult {
            name: name.into(),
            means: Some(MetricMeans { s_auc: mean(0), sim: mean(1), cc: mean(2), nss: mean(3), emd: mean(4) }),
            frames_scored: frames,
            excluded,
            zero_boundary_frames: self.zero_boundary,
        }
    }
}

fn absent(name: &str) -> ColumnResult {
    ColumnResult { name: name.into(), means: None, frames_scored: 0, excluded: [0; 5], zero_boundary_frames: 0 }
}

/// Shuffled-AUC negatives for every scored frame, shared by all columns. The pool holds the
/// fixations of every other clip in the dataset: neighbouring frames of the same clip put
/// their fixations next to the positives and would penalize a correct prediction.
fn negatives_for(dataset: &Dataset, clips: &[usize], cfg: &MetricConfig) -> Result<Vec<Vec<Vec<(usize, usize)>>>> {
    let mut out = Vec::with_capacity(clips.len());
    for &ci in clips {
        let pool: Vec<(usize, usize)> = (0..dataset.clips.len())
            .filter(|&cj| cj != ci)
            .flat_map(|cj| dataset.clips[cj].fixations.iter().flatten().copied())
            .collect();
        let mut per_frame = Vec::new();
        for (k, fix) in dataset.clips[ci].fixations.iter().enumerate() {
            if k < EVAL_FROM || fix.is_empty() {
                per_frame.push(Vec::new());
                continue;
            }
            let mut rng = rng_for(cfg.seed, &format!("negatives/{}/{k}", dataset.clips[ci].name));
            per_frame.push(sample_negatives(&pool, cfg.negatives_per_positive * fix.len(), &mut rng)?);
        }
        out.push(per_frame);
    }
    Ok(out)
}

fn score_frame(pred: &ScalarField, gt: &ScalarField, fix: &[(usize, usize)], neg: &[(usize, usize)], k: usize, cfg: &MetricConfig) -> [Option<f64>; 5] {
    let fx = FixationSet { frame_index: k, points: fix.to_vec() };
    [
        shuffled_auc(pred, &fx, neg).ok(),
        sim(pred, gt).ok(),
        cc(pred, gt).ok(),
        nss(pred, &fx).ok(),
        emd(pred, gt, cfg.emd_grid).ok(),
    ]
}

pub fn run_ablation(
    dataset: &Dataset,
    clips: &[usize],
    models: &AblationModels,
    opb: &OpbParams,
    cfg: &MetricConfig,
) -> Result<AblationTable> {
    if clips.is_empty() {
        return Err(invalid!("ablation needs at least one held-out clip"));
    }
    if let Some(&bad) = clips.iter().find(|&&c| c >= dataset.clips.len()) {
        return Err(invalid!("clip index {bad} out of range"));
    }
    let negatives = negatives_for(dataset, clips, cfg)?;
    let mut scores: Vec<Scores> = (0..COLUMNS.len()).map(|_| Scores::default()).collect();
    let singles = [&models.sgf1, &models.sgf2, &models.sgf3];
    let temporal = models.sgf3.as_ref().zip(models.sgfe.as_ref());

    for (vi, &ci) in clips.iter().enumerate() {
        let clip = &dataset.clips[ci];
        let boundaries = clip_boundaries(&clip.frames, opb)?;
        let zeros: Vec<ScalarField> = boundaries.iter().map(|b| ScalarField::zeros(b.height(), b.width())).collect();
        let full = temporal.map(|(m3, me)| run_video_with_boundaries(&clip.frames, m3, me, &boundaries)).transpose()?;
        let nb = temporal.map(|(m3, me)| run_video_with_boundaries(&clip.frames, m3, me, &zeros)).transpose()?;
        for s in scores.iter_mut() {
            s.videos.push(Vec::new());
        }
        for k in EVAL_FROM..clip.frames.len() {
            if clip.fixations[k].is_empty() {
                continue;
            }
            let (gt, fix, neg) = (&clip.gt[k], &clip.fixations[k], &negatives[vi][k]);
            let mut preds: Vec<Option<ScalarField>> = Vec::with_capacity(COLUMNS.len());
            for m in singles {
                preds.push(m.as_ref().map(|m| m.predict_frame(&clip.frames[k])).transpose()?);
            }
            preds.push(Some(boundaries[k].clone()));
            preds.push(nb.as_ref().map(|o| o.maps[k].clone()));
            preds.push(full.as_ref().map(|o| o.maps[k].clone()));
            for (col, pred) in preds.iter().enumerate() {
                if let Some(p) = pred {
                    scores[col].videos[vi].push(score_frame(p, gt, fix, neg, k, cfg));
                }
            }
            if let Some(o) = &nb {
                scores[4].zero_boundary += usize::from(o.trace[k].boundary_zero);
            }
            if let Some(o) = &full {
                scores[5].zero_boundary += usize::from(o.trace[k].boundary_zero);
            }
        }
    }

    let present = [models.sgf1.is_some(), models.sgf2.is_some(), models.sgf3.is_some(), true, temporal.is_some(), temporal.is_some()];
    let columns = COLUMNS
        .iter()
        .zip(present)
        .zip(&scores)
        .map(|((name, ok), s)| if ok { s.summarize(name) } else { absent(name) })
        .collect();
    Ok(AblationTable { clips: clips.iter().map(|&c| dataset.clips[c].name.clone()).collect(), eval_from: EVAL_FROM, columns })
}
