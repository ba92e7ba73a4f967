//! Command-line surface. The binary only parses arguments and maps errors
//! to exit codes; every subcommand lives here so it can be driven in-process.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::boundary::{
    boundaries_from_masks, boundary_loss_ta, refine_boundary_counted, BoundaryMap, RefineConfig,
};
use crate::error::{Error, Result};
use crate::fusion::fuse_window;
use crate::grid::ClassCatalog;
use crate::io::config::{read_config, PipelineConfig};
use crate::io::npy::{
    read_boundary, read_labels, read_logits, read_weights, write_boundary, write_labels, write_logits,
    write_weights,
};
use crate::io::rle::{read_masks, write_masks};
use crate::io::{create_dir, read_json, unix_timestamp, write_json, InputDigest, RunManifest};
use crate::losses::{compute_losses, LossInputs, WindowTargets};
use crate::metrics::evaluate;
use crate::pipeline::{run_pipeline, PipelineInputs};
use crate::synth::{generate, SceneSpec};
use crate::window::{plan_nonoverlapping, plan_overlapping, WindowPlan};

/// Environment variable that overrides `--threads`.
pub const THREADS_ENV: &str = "PANODAR_THREADS";

#[derive(Debug, Parser)]
#[command(name = "panodar", version, about = "Panoramic mask/logit fusion toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the sliding-window plan for a canvas.
    PlanWindows(PlanArgs),
    /// Fuse instance masks with TA logits for one window.
    Fuse(FuseArgs),
    /// Refine an overlap-region boundary map.
    RefineBoundary(RefineArgs),
    /// Evaluate the full loss stack.
    Losses(LossesArgs),
    /// Per-class IoU and mIoU of a prediction.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic scene directory.
    Synth(SynthArgs),
    /// Run plan, fuse, refine, losses, stitch and evaluate on a scene.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub width: usize,
    #[arg(long)]
    pub height: usize,
    #[arg(long)]
    pub win_w: usize,
    /// Required unless --non-overlapping.
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub non_overlapping: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    #[arg(long)]
    pub ta_logits: PathBuf,
    #[arg(long)]
    pub masks: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    #[arg(long)]
    pub ta_i: PathBuf,
    #[arg(long)]
    pub ta_j: PathBuf,
    /// Boundary map (.npy) or instance masks (.json).
    #[arg(long)]
    pub sam: PathBuf,
    #[arg(long)]
    pub logits_i: PathBuf,
    #[arg(long)]
    pub logits_j: PathBuf,
    #[arg(long, default_value_t = 0.3)]
    pub alpha: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LossesArgs {
    /// Window plan JSON as printed by `plan-windows`.
    #[arg(long)]
    pub plan: PathBuf,
    /// Directory of `window_NNN.npy` TA logits.
    #[arg(long)]
    pub ta_windows: PathBuf,
    /// Whole-canvas student logits.
    #[arg(long)]
    pub student: PathBuf,
    /// Directory of `window_NNN.npy` ensemble label maps.
    #[arg(long)]
    pub ensemble: PathBuf,
    /// Directory of `window_NNN.npy` weight maps.
    #[arg(long)]
    pub weights: PathBuf,
    /// Whole-canvas instance masks supplying the SAM boundaries.
    #[arg(long)]
    pub masks: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    /// JSON array of class names; defaults to `class_0 ..` up to the largest label.
    #[arg(long)]
    pub classes: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; the PANODAR_THREADS environment variable wins.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Also write per-window TA logits, ensemble labels and weights.
    #[arg(long)]
    pub save_windows: bool,
}

/// Scene directory file names, shared by `synth` and `pipeline`.
pub mod scene_files {
    pub const GT: &str = "gt_labels.npy";
    pub const TA: &str = "ta_logits.npy";
    pub const STUDENT: &str = "student_logits.npy";
    pub const MASKS: &str = "masks.json";
    pub const SAM: &str = "sam_boundaries.npy";
    pub const SPEC: &str = "scene.json";
}

pub fn window_file(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("window_{index:03}.npy"))
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("input {} does not exist", path.display())))
    }
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        None => Ok(PipelineConfig::default()),
        Some(p) => {
            require(p)?;
            let loaded = read_config(p)?;
            for w in &loaded.warnings {
                log::warn!("{w}");
            }
            Ok(loaded.config)
        }
    }
}

fn emit(out: Option<&Path>, report: Value) -> Result<Value> {
    if let Some(path) = out {
        write_json(path, &report)?;
    }
    Ok(report)
}

/// Runs one command and returns the JSON report it prints.
pub fn run(cli: Cli) -> Result<Value> {
    match cli.command {
        Command::PlanWindows(a) => cmd_plan_windows(&a),
        Command::Fuse(a) => cmd_fuse(&a),
        Command::RefineBoundary(a) => cmd_refine_boundary(&a),
        Command::Losses(a) => cmd_losses(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::Pipeline(a) => cmd_pipeline(&a),
    }
}

pub fn cmd_plan_windows(a: &PlanArgs) -> Result<Value> {
    let plan = if a.non_overlapping {
        plan_nonoverlapping(a.width, a.height, a.win_w)?
    } else {
        let stride = a
            .stride
            .ok_or_else(|| Error::InvalidInput("--stride is required without --non-overlapping".into()))?;
        plan_overlapping(a.width, a.height, a.win_w, stride)?
    };
    emit(a.out.as_deref(), serde_json::to_value(plan).expect("plan serialises"))
}

pub fn cmd_fuse(a: &FuseArgs) -> Result<Value> {
    require(&a.ta_logits)?;
    require(&a.masks)?;
    let cfg = load_config(a.config.as_deref())?;
    let logits = read_logits(&a.ta_logits)?;
    let masks = read_masks(&a.masks)?;
    let fused = fuse_window(&masks, &logits, &cfg.fusion)?;

    let report = json!({
        "height": logits.height(),
        "width": logits.width(),
        "classes": logits.classes(),
        "weighted_pixels": fused.weight_map.weights().iter().filter(|&&w| w > 0.0).count(),
        "masks": fused.per_mask_report,
    });
    create_dir(&a.out)?;
    write_labels(&fused.ensemble_labels, &a.out.join("ensemble_labels.npy"))?;
    write_weights(&fused.weight_map, &a.out.join("weight_map.npy"))?;
    write_logits(&fused.ensemble_logits, &a.out.join("ensemble_logits.npy"))?;
    emit(Some(&a.out.join("fusion_report.json")), report)
}

fn read_sam(path: &Path) -> Result<BoundaryMap> {
    if path.extension().is_some_and(|e| e == "json") {
        Ok(boundaries_from_masks(&read_masks(path)?))
    } else {
        read_boundary(path)
    }
}

pub fn cmd_refine_boundary(a: &RefineArgs) -> Result<Value> {
    for p in [&a.ta_i, &a.ta_j, &a.sam, &a.logits_i, &a.logits_j] {
        require(p)?;
    }
    let cfg = RefineConfig::new(a.alpha)?;
    let (b_i, b_j, b_sam) = (read_boundary(&a.ta_i)?, read_boundary(&a.ta_j)?, read_sam(&a.sam)?);
    let (l_i, l_j) = (read_logits(&a.logits_i)?, read_logits(&a.logits_j)?);
    let refinement = refine_boundary_counted(&b_i, &b_j, &b_sam, &l_i, &l_j, &cfg)?;
    let loss = match boundary_loss_ta(&refinement.refined, &b_i, &b_j) {
        Ok(v) => Some(v),
        Err(Error::Degenerate(_)) => None,
        Err(e) => return Err(e),
    };
    let report = json!({
        "alpha": a.alpha,
        "boundary_pixels": refinement.refined.count(),
        "counts": refinement.counts,
        "l_bd_t_ta": loss,
    });
    create_dir(&a.out)?;
    write_boundary(&refinement.refined, &a.out.join("refined_boundary.npy"))?;
    emit(Some(&a.out.join("refine_report.json")), report)
}

pub fn cmd_losses(a: &LossesArgs) -> Result<Value> {
    for p in [&a.plan, &a.ta_windows, &a.student, &a.ensemble, &a.weights, &a.masks] {
        require(p)?;
    }
    let cfg = load_config(a.config.as_deref())?;
    let plan: WindowPlan = read_json(&a.plan)?;
    plan.validate()?;
    let n = plan.window_count();
    let mut ta_windows = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for i in 0..n {
        for dir in [&a.ta_windows, &a.ensemble, &a.weights] {
            require(&window_file(dir, i))?;
        }
        ta_windows.push(read_logits(&window_file(&a.ta_windows, i))?);
        targets.push(WindowTargets {
            labels: read_labels(&window_file(&a.ensemble, i))?,
            weights: read_weights(&window_file(&a.weights, i))?,
        });
    }
    let student = read_logits(&a.student)?;
    let masks = read_masks(&a.masks)?;
    let inputs = LossInputs {
        plan: &plan,
        ta_windows: &ta_windows,
        student: &student,
        targets: &targets,
        masks: &masks,
    };
    let breakdown = compute_losses(&inputs, &cfg.losses)?;
    for (name, value) in breakdown.report.components() {
        log::info!("{name} = {value}");
    }
    emit(a.out.as_deref(), serde_json::to_value(&breakdown.report).expect("report serialises"))
}

fn read_catalog(path: &Path) -> Result<ClassCatalog> {
    require(path)?;
    let names: Vec<String> = read_json(path)?;
    ClassCatalog::new(names).map_err(|e| Error::config("classes", e.to_string()))
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<Value> {
    require(&a.gt)?;
    require(&a.pred)?;
    let gt = read_labels(&a.gt)?;
    let pred = read_labels(&a.pred)?;
    let catalog = match &a.classes {
        Some(p) => read_catalog(p)?,
        None => {
            let max = gt
                .labels()
                .iter()
                .chain(pred.labels())
                .filter(|&&l| l != crate::grid::IGNORE_LABEL)
                .max()
                .copied()
                .unwrap_or(0);
            ClassCatalog::numbered((max as usize + 1).max(2))?
        }
    };
    let report = evaluate(&gt, &pred, &catalog)?;
    emit(a.out.as_deref(), serde_json::to_value(report).expect("report serialises"))
}

pub fn cmd_synth(a: &SynthArgs) -> Result<Value> {
    require(&a.spec)?;
    let spec: SceneSpec = read_json(&a.spec).map_err(|e| match e {
        Error::Format { message, .. } => Error::InvalidInput(message),
        other => other,
    })?;
    let scene = generate(&spec)?;
    create_dir(&a.out)?;
    write_labels(&scene.gt_labels, &a.out.join(scene_files::GT))?;
    write_logits(&scene.ta_logits, &a.out.join(scene_files::TA))?;
    write_masks(&scene.masks, &a.out.join(scene_files::MASKS))?;
    write_boundary(&scene.sam_boundaries, &a.out.join(scene_files::SAM))?;
    write_json(&a.out.join(scene_files::SPEC), &spec)?;
    Ok(json!({
        "width": spec.width,
        "height": spec.height,
        "classes": spec.classes,
        "masks": scene.masks.len(),
    }))
}

/// Thread count from the environment override, the flag, or the CPU count.
pub fn resolve_threads(flag: Option<usize>) -> Result<usize> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        return v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::InvalidInput(format!("{THREADS_ENV}={v} is not a positive integer")));
    }
    Ok(flag
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1))
}

pub fn cmd_pipeline(a: &PipelineArgs) -> Result<Value> {
    let files = [scene_files::GT, scene_files::TA, scene_files::MASKS];
    for f in files {
        require(&a.scene.join(f))?;
    }
    let threads = resolve_threads(a.threads)?;
    let cfg = load_config(a.config.as_deref())?;

    let read = |stage: &'static str| move |e: Error| e.in_stage(stage);
    let student_path = a.scene.join(scene_files::STUDENT);
    let inputs = PipelineInputs {
        gt_labels: read_labels(&a.scene.join(scene_files::GT)).map_err(read("load"))?,
        ta_logits: read_logits(&a.scene.join(scene_files::TA)).map_err(read("load"))?,
        student_logits: if student_path.exists() {
            Some(read_logits(&student_path).map_err(read("load"))?)
        } else {
            None
        },
        masks: read_masks(&a.scene.join(scene_files::MASKS)).map_err(read("load"))?,
    };
    log::info!("pipeline: {threads} threads");
    let out = run_pipeline(&inputs, &cfg, threads)?;

    let mut digests = Vec::new();
    for f in files.iter().chain([&scene_files::STUDENT]) {
        let p = a.scene.join(f);
        if p.exists() {
            digests.push(InputDigest::of_file(&p)?);
        }
    }
    if let Some(c) = &a.config {
        digests.push(InputDigest::of_file(c)?);
    }
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp: unix_timestamp(),
        config: cfg.to_json(),
        inputs: digests,
        windows: out.window_reports(),
        overlaps: out.losses.overlaps.clone(),
        losses: out.losses.report.clone(),
        metrics: out.metrics.clone(),
    };

    create_dir(&a.out)?;
    if a.save_windows {
        let dirs = ["ta_windows", "ensemble", "weights"].map(|d| a.out.join(d));
        for d in &dirs {
            create_dir(d)?;
        }
        for (w, f) in out.plan.windows.iter().zip(&out.fused) {
            write_logits(&crate::window::extract(&inputs.ta_logits, w)?, &window_file(&dirs[0], w.index))?;
            write_labels(&f.ensemble_labels, &window_file(&dirs[1], w.index))?;
            write_weights(&f.weight_map, &window_file(&dirs[2], w.index))?;
        }
        write_json(&a.out.join("plan.json"), &out.plan)?;
    }
    write_labels(&out.ensemble_labels, &a.out.join("ensemble_labels.npy"))?;
    write_json(&a.out.join("manifest.json"), &manifest)?;
    Ok(json!({
        "miou_ta": out.metrics.ta.miou,
        "miou_ensemble": out.metrics.ensemble.miou,
        "losses": out.losses.report,
    }))
}
