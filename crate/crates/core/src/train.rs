//! Losses, SGD with momentum, parameter transfer between variants and the two staged
//! training schedules.
//!
//! Stage one trains SGF1, SGF2 and SGF3 in turn, each conv trunk starting from the previous
//! model's trained trunk and each deconv stack drawn fresh. Stage two fine-tunes a chain of
//! variants (SGF3 then SGFE by default) with the cross-entropy augmented loss, again handing
//! the trunk forward and redrawing the deconvs.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Error, Result};
use crate::field::ScalarField;
use crate::net::{backward, build_sgf, forward, Gradients, LayerKind, NetScale, NetworkSpec, Param, ParamStore, Tensor, Variant};
use crate::seed::rng_for;

/// Clamp keeping the log terms finite.
pub const CE_EPS: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub eta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub stage: u8,
    /// Use every n-th frame of each training clip.
    #[serde(default = "one")]
    pub frame_stride: usize,
    /// Cross-validation fold held out from training.
    #[serde(default)]
    pub test_fold: usize,
    /// Stage-two fine-tuning chain; must end with SGFE.
    #[serde(default = "default_chain")]
    pub stage_two_variants: Vec<Variant>,
}

fn one() -> usize {
    1
}

fn default_chain() -> Vec<Variant> {
    vec![Variant::Sgf3, Variant::Sgfe]
}

impl TrainConfig {
    /// Desk-scale defaults. Losses are summed over pixels, so the step is small; stage two
    /// trains longer on every frame because the temporal variant starts from fresh deconvolutions.
    pub fn desk(stage: u8) -> Self {
        TrainConfig {
            learning_rate: 1e-5,
            momentum: 0.9,
            weight_decay: 5e-4,
            eta: 1.0,
            epochs: if stage == 1 { 10 } else { 30 },
            batch_size: 8,
            seed: 0,
            stage,
            frame_stride: if stage == 1 { 2 } else { 1 },
            test_fold: 0,
            stage_two_variants: default_chain(),
        }
    }

    /// The full-scale settings verbatim: lr 1e-10 / momentum 0.99 / decay 5e-4 in stage one,
    /// lr 1e-11 / momentum 0.999 / decay 5e-5 in stage two.
    pub fn paper(stage: u8) -> Self {
        let mut c = TrainConfig::desk(stage);
        c.apply_paper_hparams();
        c
    }

    pub fn apply_paper_hparams(&mut self) {
        let (lr, m, wd) = if self.stage == 1 { (1e-10, 0.99, 5e-4) } else { (1e-11, 0.999, 5e-5) };
        self.learning_rate = lr;
        self.momentum = m;
        self.weight_decay = wd;
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(invalid!("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(invalid!("momentum must lie in [0, 1)"));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(invalid!("weight_decay must be non-negative"));
        }
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return Err(invalid!("eta must be non-negative"));
        }
        if self.batch_size == 0 || self.frame_stride == 0 {
            return Err(invalid!("batch_size and frame_stride must be positive"));
        }
        if self.stage != 1 && self.stage != 2 {
            return Err(invalid!("stage must be 1 or 2, got {}", self.stage));
        }
        if self.test_fold >= FOLDS {
            return Err(invalid!("test_fold must be below {FOLDS}"));
        }
        let chain = &self.stage_two_variants;
        if chain.last() != Some(&Variant::Sgfe) || chain[..chain.len() - 1].contains(&Variant::Sgfe) {
            return Err(invalid!("stage_two_variants must end with sgfe and contain it once"));
        }
        Ok(())
    }
}

/// ½Σ(G−P)² and its gradient P−G.
pub fn loss_l1(p: &ScalarField, g: &ScalarField) -> Result<(f64, ScalarField)> {
    p.ensure_same_dims(g, "ground truth")?;
    let mut value = 0.0;
    let grad: Vec<f64> = p
        .values()
        .iter()
        .zip(g.values())
        .map(|(&pv, &gv)| {
            let d = pv - gv;
            value += 0.5 * d * d;
            d
        })
        .collect();
    Ok((value, ScalarField::from_vec(p.height(), p.width(), grad)?))
}

/// Quadratic term plus η times the cross-entropy −Σ[G log P + (1−G) log(1−P)], with P clamped
/// to [ε, 1−ε] inside the logs.
pub fn loss_l2(p: &ScalarField, g: &ScalarField, eta: f64) -> Result<(f64, ScalarField)> {
    let (mut value, mut grad) = loss_l1(p, g)?;
    if eta == 0.0 {
        return Ok((value, grad));
    }
    for ((gr, &pv), &gv) in grad.values_mut().iter_mut().zip(p.values()).zip(g.values()) {
        let pc = pv.clamp(CE_EPS, 1.0 - CE_EPS);
        value -= eta * (gv * pc.ln() + (1.0 - gv) * (1.0 - pc).ln());
        if pv > CE_EPS && pv < 1.0 - CE_EPS {
            *gr += eta * ((1.0 - gv) / (1.0 - pc) - gv / pc);
        }
    }
    Ok((value, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Loss {
    Quadratic,
    QuadraticCe { eta: f64 },
}

impl Loss {
    pub fn eval(&self, p: &ScalarField, g: &ScalarField) -> Result<(f64, ScalarField)> {
        match *self {
            Loss::Quadratic => loss_l1(p, g),
            Loss::QuadraticCe { eta } => loss_l2(p, g, eta),
        }
    }
}

/// `v ← m·v − lr·(g + wd·w); w ← w + v`.
pub fn sgd_step(params: &mut ParamStore, grads: &Gradients, cfg: &TrainConfig) -> Result<()> {
    if grads.tensors.len() != params.len() {
        return Err(mismatch!("{} gradients for {} parameters", grads.tensors.len(), params.len()));
    }
    for (p, g) in params.iter().zip(&grads.tensors) {
        if p.value.shape() != g.shape() {
            return Err(mismatch!("gradient {:?} for parameter {} {:?}", g.shape(), p.name, p.value.shape()));
        }
    }
    let (lr, m, wd) = (cfg.learning_rate, cfg.momentum, cfg.weight_decay);
    for (p, g) in params.iter_mut().zip(&grads.tensors) {
        let Param { value, momentum, .. } = p;
        for ((w, v), &gv) in value.data_mut().iter_mut().zip(momentum.data_mut()).zip(g.data()) {
            *v = m * *v - lr * (gv + wd * *w);
            *w += *v;
        }
    }
    Ok(())
}

/// Fresh parameters for `dst` whose conv trunk is copied from `src`. A 3→4 channel first conv
/// keeps the colour slices and zeroes the extra one; deconvs are drawn fresh from `rng`.
pub fn transfer_params(src: &ParamStore, dst: &NetworkSpec, rng: &mut impl Rng) -> Result<ParamStore> {
    let mut out = ParamStore::init(dst, rng)?;
    let mut problems = Vec::new();
    let convs = dst.layers.iter().filter(|l| matches!(l.kind, LayerKind::Conv { .. }));
    for (ci, layer) in convs.enumerate() {
        for suffix in ["w", "b"] {
            let name = format!("{}.{suffix}", layer.name);
            let Some(s) = src.get(&name) else {
                problems.push(format!("{name} missing from source"));
                continue;
            };
            let d = out.get_mut(&name).expect("init created every conv parameter");
            if s.shape() == d.shape() {
                d.data_mut().copy_from_slice(s.data());
            } else if ci == 0 && suffix == "w" && widened_input(s.shape(), d.shape()) {
                copy_widened(s, d);
            } else {
                problems.push(format!("{name}: source {:?} vs destination {:?}", s.shape(), d.shape()));
            }
        }
    }
    if !problems.is_empty() {
        return Err(Error::Incompatible(problems.join("; ")));
    }
    Ok(out)
}

fn widened_input(s: &[usize], d: &[usize]) -> bool {
    s.len() == 4 && d.len() == 4 && s[0] == d[0] && s[2..] == d[2..] && s[1] < d[1]
}

/// Copies the leading input-channel slices, leaving the rest zero.
fn copy_widened(s: &Tensor, d: &mut Tensor) {
    let (o, si, di) = (s.shape()[0], s.shape()[1], d.shape()[1]);
    let kk = s.shape()[2] * s.shape()[3];
    let dd = d.data_mut();
    dd.fill(0.0);
    for oc in 0..o {
        dd[oc * di * kk..(oc * di + si) * kk].copy_from_slice(&s.data()[oc * si * kk..(oc + 1) * si * kk]);
    }
}

pub const FOLDS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub folds: Vec<Vec<usize>>,
    pub test_fold: usize,
}

impl SplitPlan {
    pub fn test_indices(&self) -> Vec<usize> {
        let mut v = self.folds[self.test_fold].clone();
        v.sort_unstable();
        v
    }

    pub fn train_indices(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != self.test_fold)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        v.sort_unstable();
        v
    }

    pub fn with_test_fold(mut self, k: usize) -> Result<Self> {
        if k >= self.folds.len() {
            return Err(invalid!("test fold {k} out of range"));
        }
        self.test_fold = k;
        Ok(self)
    }
}

/// Seeded permutation of `0..n` cut into ten folds whose sizes differ by at most one.
pub fn cross_validation_split(n: usize, seed: u64) -> Result<SplitPlan> {
    if n < FOLDS {
        return Err(invalid!("cross-validation needs at least {FOLDS} items, got {n}"));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng_for(seed, "cv-split"));
    let (base, extra) = (n / FOLDS, n % FOLDS);
    let mut folds = Vec::with_capacity(FOLDS);
    let mut start = 0;
    for f in 0..FOLDS {
        let len = base + usize::from(f < extra);
        folds.push(perm[start..start + len].to_vec());
        start += len;
    }
    Ok(SplitPlan { folds, test_fold: 0 })
}

/// One training example.
#[derive(Debug, Clone)]
pub struct SamplePair {
    pub input: Tensor,
    pub target: ScalarField,
    /// Boundary map, SGFE only.
    pub aux: Option<ScalarField>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub model: Variant,
    pub epoch: usize,
    pub loss: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub model: Variant,
    /// Mean per-sample loss before the first update.
    pub initial_loss: f64,
    /// Mean per-sample loss after the last update.
    pub final_loss: f64,
    pub epochs: Vec<EpochLog>,
}

/// Parameters at the start and end of one model's training.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub variant: Variant,
    pub initial: ParamStore,
    pub trained: ParamStore,
    pub report: TrainReport,
}

fn sample_loss_grad(spec: &NetworkSpec, params: &ParamStore, s: &SamplePair, loss: Loss) -> Result<(f64, Gradients)> {
    let cache = forward(spec, params, &s.input, s.aux.as_ref())?;
    let (value, gp) = loss.eval(&cache.prediction(), &s.target)?;
    Ok((value, backward(spec, params, &cache, &gp)?))
}

/// Mean per-sample loss without updating anything.
pub fn evaluate_loss(spec: &NetworkSpec, params: &ParamStore, samples: &[SamplePair], loss: Loss) -> Result<f64> {
    if samples.is_empty() {
        return Err(invalid!("no samples to evaluate"));
    }
    let losses: Vec<f64> = samples
        .par_iter()
        .map(|s| -> Result<f64> {
            let p = forward(spec, params, &s.input, s.aux.as_ref())?.prediction();
            Ok(loss.eval(&p, &s.target)?.0)
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Mini-batch SGD over `samples` for `cfg.epochs` epochs. Per-sample gradients are computed in
/// parallel but reduced in sample order, so results do not depend on the thread count.
pub fn train_model(
    spec: &NetworkSpec,
    params: &mut ParamStore,
    samples: &[SamplePair],
    loss: Loss,
    cfg: &TrainConfig,
    label: &str,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainReport> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(invalid!("no training samples"));
    }
    params.check_against(spec)?;
    let initial_loss = evaluate_loss(spec, params, samples, loss)?;
    if !initial_loss.is_finite() {
        return Err(Error::Diverged { epoch: 0, detail: "initial loss is not finite".into() });
    }
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let t0 = Instant::now();
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut rng_for(cfg.seed, &format!("{label}/epoch{epoch}")));
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let results: Vec<(f64, Gradients)> = batch
                .par_iter()
                .map(|&i| sample_loss_grad(spec, params, &samples[i], loss))
                .collect::<Result<_>>()?;
            let mut grads = Gradients::zeros_like(params);
            for (l, g) in &results {
                total += l;
                grads.add_assign(g);
            }
            grads.scale(1.0 / batch.len() as f64);
            if !total.is_finite() || !grads.is_finite() {
                return Err(Error::Diverged { epoch, detail: format!("{label}: non-finite loss or gradient") });
            }
            sgd_step(params, &grads, cfg)?;
        }
        let log = EpochLog {
            model: spec.variant,
            epoch,
            loss: total / samples.len() as f64,
            wall_ms: t0.elapsed().as_millis() as u64,
        };
        on_epoch(&log);
        epochs.push(log);
    }
    let final_loss = evaluate_loss(spec, params, samples, loss)?;
    if !final_loss.is_finite() {
        return Err(Error::Diverged { epoch: cfg.epochs, detail: format!("{label}: final loss is not finite") });
    }
    Ok(TrainReport { model: spec.variant, initial_loss, final_loss, epochs })
}

/// Stage one: SGF1 → SGF2 → SGF3 on the quadratic loss with trunk hand-over.
pub fn run_stage_one(
    samples: &[SamplePair],
    scale: NetScale,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Vec<TrainedModel>> {
    if samples.is_empty() {
        return Err(invalid!("stage one needs a nonempty dataset"));
    }
    let mut out: Vec<TrainedModel> = Vec::with_capacity(3);
    for variant in [Variant::Sgf1, Variant::Sgf2, Variant::Sgf3] {
        let spec = build_sgf(variant, scale)?;
        let mut rng = rng_for(cfg.seed, &format!("stage1/{variant}/init"));
        let mut params = match out.last() {
            None => ParamStore::init(&spec, &mut rng)?,
            Some(prev) => transfer_params(&prev.trained, &spec, &mut rng)?,
        };
        let initial = params.clone();
        let report = train_model(&spec, &mut params, samples, Loss::Quadratic, cfg, &format!("stage1/{variant}"), &mut on_epoch)?;
        out.push(TrainedModel { variant, initial, trained: params, report });
    }
    Ok(out)
}

/// Samples for stage two: colour-only inputs for the single-frame variants and four-channel
/// inputs with boundary maps for SGFE.
#[derive(Debug, Clone, Default)]
pub struct StageTwoData {
    pub rgb: Vec<SamplePair>,
    pub temporal: Vec<SamplePair>,
}

/// Stage two: fine-tunes each variant of `cfg.stage_two_variants` in order with the
/// cross-entropy loss. The first model's trunk comes from the stage-one model of the same
/// variant (SGF3 when the chain starts with SGFE), later ones from their predecessor.
pub fn run_stage_two(
    data: &StageTwoData,
    stage_one: &[ParamStore],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Vec<TrainedModel>> {
    cfg.validate()?;
    let mut out: Vec<TrainedModel> = Vec::new();
    for &variant in &cfg.stage_two_variants {
        let src = match out.last() {
            Some(prev) => &prev.trained,
            None => {
                let want = if variant == Variant::Sgfe { Variant::Sgf3 } else { variant };
                stage_one
                    .iter()
                    .find(|p| p.variant == want)
                    .ok_or_else(|| invalid!("stage two needs stage-one {want} parameters"))?
            }
        };
        let spec = build_sgf(variant, src.scale)?;
        let samples = if variant == Variant::Sgfe { &data.temporal } else { &data.rgb };
        if samples.is_empty() {
            return Err(invalid!("no stage-two samples for {variant}"));
        }
        let mut params = transfer_params(src, &spec, &mut rng_for(cfg.seed, &format!("stage2/{variant}/init")))?;
        let initial = params.clone();
        let report = train_model(
            &spec,
            &mut params,
            samples,
            Loss::QuadraticCe { eta: cfg.eta },
            cfg,
            &format!("stage2/{variant}"),
            &mut on_epoch,
        )?;
        out.push(TrainedModel { variant, initial, trained: params, report });
    }
    Ok(out)
}

/// Names and values of the conv parameters, in layer order.
pub fn conv_trunk(params: &ParamStore) -> Vec<(&str, &Tensor)> {
    params.iter().filter(|p| p.name.starts_with("conv")).map(|p| (p.name.as_str(), &p.value)).collect()
}
