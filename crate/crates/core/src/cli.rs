//! Command-line front end. Every subcommand writes a `manifest.json` at its output root and
//! reports failures as one JSON line on stderr.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::ablation::{run_ablation, AblationModels};
use crate::dataset::{clip_dirs, fixation_pixels, Dataset};
use crate::error::{invalid, mismatch, Error, Result};
use crate::fixmap::{fixations_by_frame, quantize_map, video_fixation_maps, GaussianSplatParams};
use crate::io;
use crate::metrics::{binarize_density, evaluate, sample_negatives, FixationSet, MetricConfig, MetricMeans};
use crate::net::params::FORMAT_VERSION;
use crate::net::{NetScale, ParamStore, Variant};
use crate::opb::{clip_boundaries, OpbParams, Threshold};
use crate::pipeline::{run_video, write_video_output, BoundaryMode, LoadedModel};
use crate::seed::rng_for;
use crate::synth::{generate_synthetic, SyntheticSpec};
use crate::train::{cross_validation_split, run_stage_one, run_stage_two, EpochLog, TrainConfig, TrainedModel};

#[derive(Debug, Parser)]
#[command(name = "sgfcn", version, about = "Video eye-fixation prediction toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ground-truth fixation maps from a gaze log.
    Fixmap(FixmapArgs),
    /// Moving-object boundary maps for a frame directory.
    Opb(OpbArgs),
    /// Stage-one or stage-two training on a dataset directory.
    Train(TrainArgs),
    /// Single-frame saliency maps from one SGF1/SGF2/SGF3 parameter file.
    Infer(InferArgs),
    /// Scores predicted maps against ground truth and fixations.
    Eval(EvalArgs),
    /// Generates the synthetic moving-object benchmark.
    Synth(SynthArgs),
    /// Six-column ablation table on the held-out clips.
    Ablate(AblateArgs),
    /// Full per-video flow: SGF3 on the first frame, SGFE with OPB afterwards.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct FixmapArgs {
    /// Gaze log CSV (video_id,subject_id,x,y,timestamp_us).
    #[arg(long)]
    pub gaze: PathBuf,
    /// Video metadata JSON: one object or an array of them.
    #[arg(long)]
    pub meta: PathBuf,
    /// Screen resolution JSON ({sr_x, sr_y}).
    #[arg(long)]
    pub screen: PathBuf,
    /// Output directory; one gt_%06d.pgm per frame (a video_<id> subdirectory per video when
    /// the metadata lists several).
    #[arg(long)]
    pub out: PathBuf,
    /// Splat window W in pixels.
    #[arg(long, default_value_t = 35)]
    pub window: usize,
    /// Splat amplitude.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Splat falloff.
    #[arg(long, default_value_t = 3.0)]
    pub beta: f64,
}

#[derive(Debug, Args)]
pub struct OpbArgs {
    /// Directory of frame_%06d.ppm (or .pgm) frames.
    #[arg(long)]
    pub frames: PathBuf,
    /// Output directory for boundary_%06d.pgm maps.
    #[arg(long)]
    pub out: PathBuf,
    /// Flow-gradient threshold as a factor of the frame's 99th percentile.
    #[arg(long = "theta-q")]
    pub theta_q: Option<f64>,
    /// Weight of the flow-gated colour gradient.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Weight of the colour gradient inside the fusion.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Weight of the previous boundary map.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Smoothing of the fused map.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Target superpixel count.
    #[arg(long)]
    pub superpixels: Option<usize>,
    /// Recorded in the manifest; the boundary computation itself is deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// 1: SGF1 -> SGF2 -> SGF3 on the quadratic loss; 2: fine-tuning chain ending in SGFE.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub stage: u8,
    /// Dataset root (clip_*/frames, clip_*/gt, clip_*/video.json, gaze.csv, screen.json).
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for <variant>.json/.bin parameter files, train_log.csv and report.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Training configuration JSON; desk defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Replace learning rate, momentum and weight decay with the full-scale settings.
    #[arg(long)]
    pub paper_hparams: bool,
    /// Root seed; overrides the config's.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Stage-one output directory (required for stage 2).
    #[arg(long)]
    pub init: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    /// Parameter manifest (.json) of an SGF1, SGF2 or SGF3 model.
    #[arg(long)]
    pub params: PathBuf,
    /// Directory of input frames.
    #[arg(long)]
    pub frames: PathBuf,
    /// Output directory for map_%06d.pgm.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory of predicted maps (*.pgm, sorted by name).
    #[arg(long)]
    pub pred: PathBuf,
    /// Directory of gt_%06d.pgm ground-truth maps.
    #[arg(long)]
    pub gt: PathBuf,
    /// Gaze log CSV holding the video's fixations.
    #[arg(long)]
    pub fixations: PathBuf,
    /// Video metadata JSON of the evaluated video.
    #[arg(long)]
    pub meta: PathBuf,
    /// Screen resolution JSON.
    #[arg(long)]
    pub screen: PathBuf,
    /// Report path (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Optional CSV of per-threshold precision, TPR and FPR pooled over frames.
    #[arg(long)]
    pub curves: Option<PathBuf>,
    /// EMD histogram grid side.
    #[arg(long, default_value_t = 16)]
    pub emd_grid: usize,
    /// Seed for the shuffled-AUC negatives.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output dataset root.
    #[arg(long)]
    pub out: PathBuf,
    /// Generator spec JSON; defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed; overrides the spec's.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Dataset root.
    #[arg(long)]
    pub data: PathBuf,
    /// Directories searched for sgf1/sgf2/sgf3/sgfe.json; the first match wins.
    #[arg(long, required = true, num_args = 1..)]
    pub params: Vec<PathBuf>,
    /// Output directory for ablation.csv and ablation.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Seed of the train/test split and of the shuffled-AUC negatives.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Held-out cross-validation fold.
    #[arg(long, default_value_t = 0)]
    pub test_fold: usize,
    /// EMD histogram grid side.
    #[arg(long, default_value_t = 16)]
    pub emd_grid: usize,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// SGF3 parameter manifest, used for the first frame.
    #[arg(long)]
    pub sgf3: PathBuf,
    /// SGFE parameter manifest, used for every later frame.
    #[arg(long)]
    pub sgfe: PathBuf,
    /// A single video's frame directory.
    #[arg(long, conflicts_with = "data", required_unless_present = "data")]
    pub frames: Option<PathBuf>,
    /// A dataset root; every clip_*/frames directory is processed.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory (one subdirectory per clip with --data).
    #[arg(long)]
    pub out: PathBuf,
    /// Force the boundary input to zero.
    #[arg(long)]
    pub no_boundary: bool,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    param_format_version: u32,
    command: &'a str,
    seed: Option<u64>,
    inputs: Value,
    config: Value,
}

fn write_manifest(dir: &Path, command: &str, seed: Option<u64>, inputs: Value, config: Value) -> Result<()> {
    let m = Manifest {
        tool: "sgfcn",
        version: env!("CARGO_PKG_VERSION"),
        param_format_version: FORMAT_VERSION,
        command,
        seed,
        inputs,
        config,
    };
    io::write_json(&dir.join("manifest.json"), &m)
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("plain data serializes")
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

/// Parses `args`, runs the subcommand and returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("{}", json!({ "error": "usage", "message": first }));
            return 2;
        }
    };
    let name = command_name(&cli.command);
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "command": name, "message": e.to_string() }));
            1
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Fixmap(_) => "fixmap",
        Command::Opb(_) => "opb",
        Command::Train(_) => "train",
        Command::Infer(_) => "infer",
        Command::Eval(_) => "eval",
        Command::Synth(_) => "synth",
        Command::Ablate(_) => "ablate",
        Command::Pipeline(_) => "pipeline",
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Fixmap(a) => fixmap(a),
        Command::Opb(a) => opb(a),
        Command::Train(a) => train(a),
        Command::Infer(a) => infer(a),
        Command::Eval(a) => eval(a),
        Command::Synth(a) => synth(a),
        Command::Ablate(a) => ablate(a),
        Command::Pipeline(a) => pipeline(a),
    }
}

fn fixmap(a: FixmapArgs) -> Result<()> {
    let splat = GaussianSplatParams { window_w: a.window, alpha: a.alpha, beta: a.beta };
    splat.validate()?;
    let gaze = io::read_gaze_csv(&a.gaze)?;
    let metas = io::read_video_meta(&a.meta)?;
    let screen = io::read_screen_meta(&a.screen)?;
    io::create_dir(&a.out)?;
    let mut clamped = Vec::new();
    for v in &metas {
        v.validate()?;
        let dir = if metas.len() == 1 { a.out.clone() } else { a.out.join(format!("video_{}", v.video_id)) };
        io::create_dir(&dir)?;
        let fx = fixations_by_frame(&gaze, v, &screen)?;
        for (k, m) in video_fixation_maps(&fx, v, &splat)?.iter().enumerate() {
            io::write_pgm(&dir.join(io::gt_name(k)), m.height(), m.width(), &quantize_map(m))?;
        }
        clamped.push(json!({ "video_id": v.video_id, "clamped_samples": fx.clamped }));
    }
    let inputs = json!({ "gaze": path_str(&a.gaze), "meta": path_str(&a.meta), "screen": path_str(&a.screen) });
    write_manifest(&a.out, "fixmap", None, inputs, json!({ "splat": splat, "videos": clamped }))
}

fn opb(a: OpbArgs) -> Result<()> {
    let mut p = OpbParams::default();
    if let Some(q) = a.theta_q {
        p.theta = Threshold::Quantile(q);
    }
    p.alpha = a.alpha.unwrap_or(p.alpha);
    p.mu = a.mu.unwrap_or(p.mu);
    p.lambda = a.lambda.unwrap_or(p.lambda);
    p.sigma = a.sigma.unwrap_or(p.sigma);
    p.superpixel_count = a.superpixels.unwrap_or(p.superpixel_count);
    p.validate()?;
    let frames = io::read_frames(&a.frames)?;
    if frames.is_empty() {
        return Err(invalid!("no frames in {}", a.frames.display()));
    }
    io::create_dir(&a.out)?;
    for (k, b) in clip_boundaries(&frames, &p)?.iter().enumerate() {
        io::write_map_pgm(&a.out.join(io::map_name("boundary", k)), b)?;
    }
    write_manifest(&a.out, "opb", Some(a.seed), json!({ "frames": path_str(&a.frames) }), to_value(&p))
}

pub fn params_file(dir: &Path, v: Variant) -> PathBuf {
    dir.join(format!("{}.json", v.name().to_ascii_lowercase()))
}

#[derive(Serialize)]
struct ModelReport {
    model: Variant,
    initial_loss: f64,
    final_loss: f64,
    epoch_losses: Vec<f64>,
}

fn model_reports(models: &[TrainedModel]) -> Vec<ModelReport> {
    models
        .iter()
        .map(|m| ModelReport {
            model: m.variant,
            initial_loss: m.report.initial_loss,
            final_loss: m.report.final_loss,
            epoch_losses: m.report.epochs.iter().map(|e| e.loss).collect(),
        })
        .collect()
}

/// `base` with the top-level fields of the JSON object at `path` replaced.
fn overlay<T: Serialize + DeserializeOwned>(base: &T, path: &Path) -> Result<T> {
    let mut v = to_value(base);
    match io::read_json::<Value>(path)? {
        Value::Object(o) => {
            for (k, x) in o {
                v[k.as_str()] = x;
            }
        }
        _ => return Err(Error::format(path, "expected a JSON object")),
    }
    serde_json::from_value(v).map_err(|e| Error::format(path, e))
}

fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => overlay(&TrainConfig::desk(a.stage), p)?,
        None => TrainConfig::desk(a.stage),
    };
    if cfg.stage != a.stage {
        return Err(invalid!("config is for stage {} but --stage is {}", cfg.stage, a.stage));
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if a.paper_hparams {
        cfg.apply_paper_hparams();
    }
    cfg.validate()?;
    let ds = Dataset::load(&a.data)?;
    let split = cross_validation_split(ds.clips.len(), cfg.seed)?.with_test_fold(cfg.test_fold)?;
    let train_idx = split.train_indices();
    if train_idx.is_empty() {
        return Err(invalid!("the split leaves no training clips"));
    }
    io::create_dir(&a.out)?;
    let log_path = a.out.join("train_log.csv");
    let mut log = File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    writeln!(log, "model,epoch,loss,wall_ms").map_err(|e| Error::io(&log_path, e))?;
    let mut log_err = None;
    let mut on_epoch = |l: &EpochLog| {
        let line = format!("{},{},{:.17e},{}", l.model, l.epoch, l.loss, l.wall_ms);
        if let Err(e) = writeln!(log, "{line}").and_then(|_| log.flush()) {
            log_err.get_or_insert(e);
        }
    };
    let (h, w) = ds.frame_dims();
    let models = if a.stage == 1 {
        let samples = ds.stage_one_samples(&train_idx, cfg.frame_stride);
        run_stage_one(&samples, NetScale::desk(h, w), &cfg, &mut on_epoch)?
    } else {
        let init = a.init.as_ref().ok_or_else(|| invalid!("stage 2 needs --init with the stage-one parameters"))?;
        let stage_one = [Variant::Sgf1, Variant::Sgf2, Variant::Sgf3]
            .iter()
            .map(|&v| params_file(init, v))
            .filter(|p| p.exists())
            .map(|p| ParamStore::load(&p))
            .collect::<Result<Vec<_>>>()?;
        let data = ds.stage_two_data(&train_idx, cfg.frame_stride, &OpbParams::default())?;
        run_stage_two(&data, &stage_one, &cfg, &mut on_epoch)?
    };
    if let Some(e) = log_err {
        return Err(Error::io(&log_path, e));
    }
    for m in &models {
        m.trained.save(&params_file(&a.out, m.variant))?;
    }
    let names = |idx: &[usize]| idx.iter().map(|&i| ds.clips[i].name.clone()).collect::<Vec<_>>();
    let report = json!({
        "stage": a.stage,
        "train_clips": names(&train_idx),
        "test_clips": names(&split.test_indices()),
        "models": model_reports(&models),
    });
    io::write_json(&a.out.join("report.json"), &report)?;
    let mut inputs = json!({ "data": path_str(&a.data) });
    if let Some(c) = &a.config {
        inputs["config"] = json!(path_str(c));
    }
    if let Some(i) = &a.init {
        inputs["init"] = json!(path_str(i));
    }
    write_manifest(&a.out, "train", Some(cfg.seed), inputs, to_value(&cfg))
}

fn infer(a: InferArgs) -> Result<()> {
    let model = LoadedModel::load(&a.params)?;
    if model.variant() == Variant::Sgfe {
        return Err(invalid!("SGFE needs the previous map and a boundary; use the pipeline subcommand"));
    }
    let frames = io::read_frames(&a.frames)?;
    if frames.is_empty() {
        return Err(invalid!("no frames in {}", a.frames.display()));
    }
    io::create_dir(&a.out)?;
    for (k, f) in frames.iter().enumerate() {
        if f.dims() != model.dims() {
            return Err(mismatch!("frame {k} is {:?} but the model expects {:?}", f.dims(), model.dims()));
        }
        io::write_map_pgm(&a.out.join(io::map_name("map", k)), &model.predict_frame(f)?)?;
    }
    let inputs = json!({ "params": path_str(&a.params), "frames": path_str(&a.frames) });
    write_manifest(&a.out, "infer", None, inputs, json!({ "variant": model.variant(), "scale": model.spec.scale }))
}

#[derive(Serialize)]
struct FrameScore {
    frame: usize,
    fixations: usize,
    s_auc: Option<f64>,
    nss: Option<f64>,
    cc: f64,
    sim: f64,
    emd: f64,
}

fn eval(a: EvalArgs) -> Result<()> {
    let metas = io::read_video_meta(&a.meta)?;
    let [meta] = metas[..] else {
        return Err(invalid!("eval scores one video; {} lists {}", a.meta.display(), metas.len()));
    };
    let screen = io::read_screen_meta(&a.screen)?;
    let gaze = io::read_gaze_csv(&a.fixations)?;
    let preds = io::list_matching(&a.pred, "")?;
    let gts = io::list_matching(&a.gt, "gt_")?;
    if preds.len() != gts.len() || preds.is_empty() {
        return Err(mismatch!("{} predicted maps for {} ground-truth maps", preds.len(), gts.len()));
    }
    let fix = fixation_pixels(&gaze, &meta, &screen)?;
    let cfg = MetricConfig { emd_grid: a.emd_grid, seed: a.seed, ..MetricConfig::default() };
    let mut per_frame = Vec::with_capacity(preds.len());
    let mut pooled = vec![0u64; 256 * 2];
    let mut means = Vec::new();
    for (k, (pp, gp)) in preds.iter().zip(&gts).enumerate() {
        let pred = io::read_map_pgm(pp)?;
        let gt = io::read_map_pgm(gp)?;
        let points = fix.get(k).cloned().unwrap_or_default();
        let fs = FixationSet { frame_index: k, points };
        let score = if fs.points.is_empty() {
            let (cc, sim, emd) =
                (crate::metrics::cc(&pred, &gt)?, crate::metrics::sim(&pred, &gt)?, crate::metrics::emd(&pred, &gt, cfg.emd_grid)?);
            FrameScore { frame: k, fixations: 0, s_auc: None, nss: None, cc, sim, emd }
        } else {
            // negatives: this video's fixations on every other frame
            let pool: Vec<(usize, usize)> =
                fix.iter().enumerate().filter(|&(j, _)| j != k).flat_map(|(_, f)| f.iter().copied()).collect();
            let mut rng = rng_for(cfg.seed, &format!("eval/negatives/{k}"));
            let neg = sample_negatives(&pool, cfg.negatives_per_positive * fs.points.len(), &mut rng)?;
            let r = evaluate(&pred, &gt, &binarize_density(&gt), &fs, &neg, &cfg)?;
            means.push(MetricMeans::of(&r));
            FrameScore { frame: k, fixations: fs.points.len(), s_auc: Some(r.s_auc), nss: Some(r.nss), cc: r.cc, sim: r.sim, emd: r.emd }
        };
        if a.curves.is_some() {
            let q = quantize_map(&pred);
            for (v, g) in q.iter().zip(binarize_density(&gt)) {
                pooled[*v as usize * 2 + usize::from(g)] += 1;
            }
        }
        per_frame.push(score);
    }
    let mean = MetricMeans::mean(&means);
    let report = json!({ "frames": per_frame.len(), "scored_frames": means.len(), "per_frame": per_frame, "mean": mean });
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        io::create_dir(parent)?;
    }
    io::write_json(&a.out, &report)?;
    if let Some(path) = &a.curves {
        write_pooled_curves(path, &pooled)?;
    }
    let inputs = json!({
        "pred": path_str(&a.pred),
        "gt": path_str(&a.gt),
        "fixations": path_str(&a.fixations),
        "meta": path_str(&a.meta),
        "screen": path_str(&a.screen),
    });
    let dir = a.out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    write_manifest(dir, "eval", Some(a.seed), inputs, to_value(&cfg))
}

/// Threshold sweep over the pixel counts pooled across frames: `counts[v*2 + g]` counts pixels
/// of quantized value `v` with ground-truth label `g`.
fn write_pooled_curves(path: &Path, counts: &[u64]) -> Result<()> {
    let pos: u64 = (0..256).map(|v| counts[v * 2 + 1]).sum();
    let neg: u64 = (0..256).map(|v| counts[v * 2]).sum();
    let mut text = String::from("threshold,precision,tpr,fpr\n");
    for t in 0..256usize {
        let tp: u64 = (t..256).map(|v| counts[v * 2 + 1]).sum();
        let fp: u64 = (t..256).map(|v| counts[v * 2]).sum();
        let precision = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
        let tpr = if pos == 0 { 0.0 } else { tp as f64 / pos as f64 };
        let fpr = if neg == 0 { 0.0 } else { fp as f64 / neg as f64 };
        text.push_str(&format!("{t},{precision},{tpr},{fpr}\n"));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut spec = match &a.config {
        Some(p) => overlay(&SyntheticSpec::default(), p)?,
        None => SyntheticSpec::default(),
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    generate_synthetic(&spec, &a.out)?;
    let inputs = a.config.as_ref().map_or(json!({}), |c| json!({ "config": path_str(c) }));
    write_manifest(&a.out, "synth", Some(spec.seed), inputs, to_value(&spec))
}

fn find_params(dirs: &[PathBuf], v: Variant) -> Result<Option<(PathBuf, LoadedModel)>> {
    for d in dirs {
        let p = params_file(d, v);
        if p.exists() {
            let m = LoadedModel::load(&p)?;
            if m.variant() != v {
                return Err(Error::format(&p, format!("holds {} parameters", m.variant())));
            }
            return Ok(Some((p, m)));
        }
    }
    Ok(None)
}

fn ablate(a: AblateArgs) -> Result<()> {
    let ds = Dataset::load(&a.data)?;
    let split = cross_validation_split(ds.clips.len(), a.seed)?.with_test_fold(a.test_fold)?;
    let test = split.test_indices();
    let mut models = AblationModels::default();
    let mut sources = serde_json::Map::new();
    for v in Variant::ALL {
        let found = find_params(&a.params, v)?;
        let key = v.name().to_ascii_lowercase();
        match &found {
            Some((p, _)) => sources.insert(key, json!(path_str(p))),
            None => {
                eprintln!("{}", json!({ "warning": "absent", "command": "ablate", "message": format!("no {key}.json in the parameter directories") }));
                sources.insert(key, Value::Null)
            }
        };
        let slot = match v {
            Variant::Sgf1 => &mut models.sgf1,
            Variant::Sgf2 => &mut models.sgf2,
            Variant::Sgf3 => &mut models.sgf3,
            Variant::Sgfe => &mut models.sgfe,
        };
        *slot = found.map(|(_, m)| m);
    }
    let cfg = MetricConfig { emd_grid: a.emd_grid, seed: a.seed, ..MetricConfig::default() };
    let table = run_ablation(&ds, &test, &models, &OpbParams::default(), &cfg)?;
    io::create_dir(&a.out)?;
    let csv = a.out.join("ablation.csv");
    fs::write(&csv, table.to_csv()).map_err(|e| Error::io(&csv, e))?;
    io::write_json(&a.out.join("ablation.json"), &table)?;
    let inputs = json!({ "data": path_str(&a.data), "params": sources });
    let config = json!({ "metrics": cfg, "test_fold": a.test_fold, "opb": OpbParams::default() });
    write_manifest(&a.out, "ablate", Some(a.seed), inputs, config)
}

fn pipeline(a: PipelineArgs) -> Result<()> {
    let sgf3 = LoadedModel::load(&a.sgf3)?;
    let sgfe = LoadedModel::load(&a.sgfe)?;
    if sgf3.dims() != sgfe.dims() {
        return Err(mismatch!("SGF3 is {:?} but SGFE is {:?}", sgf3.dims(), sgfe.dims()));
    }
    let mode = if a.no_boundary { BoundaryMode::Zero } else { BoundaryMode::Opb };
    let opb = OpbParams::default();
    let videos: Vec<(PathBuf, PathBuf)> = match (&a.frames, &a.data) {
        (Some(f), _) => vec![(f.clone(), a.out.clone())],
        (None, Some(d)) => clip_dirs(d)?
            .into_iter()
            .map(|c| {
                let name = c.file_name().map(PathBuf::from).unwrap_or_default();
                (c.join("frames"), a.out.join(name))
            })
            .collect(),
        (None, None) => return Err(invalid!("pass --frames or --data")),
    };
    io::create_dir(&a.out)?;
    let mut failures = Vec::new();
    for (frames_dir, out) in &videos {
        let result = io::read_frames(frames_dir).and_then(|frames| {
            let output = run_video(&frames, &sgf3, &sgfe, &opb, mode)?;
            write_video_output(out, &output)
        });
        if let Err(e) = result {
            eprintln!("{}", json!({ "error": e.kind(), "command": "pipeline", "video": path_str(frames_dir), "message": e.to_string() }));
            failures.push(json!({ "video": path_str(frames_dir), "error": e.kind(), "message": e.to_string() }));
        }
    }
    let mut inputs = json!({ "sgf3": path_str(&a.sgf3), "sgfe": path_str(&a.sgfe) });
    if let Some(f) = &a.frames {
        inputs["frames"] = json!(path_str(f));
    }
    if let Some(d) = &a.data {
        inputs["data"] = json!(path_str(d));
    }
    let config = json!({ "boundary": mode, "opb": opb, "videos": videos.len(), "failures": failures });
    write_manifest(&a.out, "pipeline", None, inputs, config)?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(invalid!("{} of {} videos failed", failures.len(), videos.len()))
    }
}
