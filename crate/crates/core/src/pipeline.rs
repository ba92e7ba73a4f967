//! End-to-end run over one panorama: plan, fuse per window, refine and
//! evaluate losses per overlap, stitch and score.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fusion::{fuse_window, FusedWindow};
use crate::grid::{argmax_map, LabelMap, LogitsGrid};
use crate::io::config::PipelineConfig;
use crate::io::{RunMetrics, WindowFusionReport};
use crate::losses::{compute_losses_parallel, LossBreakdown, LossInputs, WindowTargets};
use crate::masks::InstanceMaskSet;
use crate::metrics::{ConfusionMatrix, MetricsReport};
use crate::window::{extract, plan_overlapping, stitch, StitchMode, WindowPlan};

/// Canvas-wide inputs of a run.
#[derive(Clone, Debug)]
pub struct PipelineInputs {
    pub gt_labels: LabelMap,
    pub ta_logits: LogitsGrid,
    /// Defaults to the TA logits when no student prediction is available.
    pub student_logits: Option<LogitsGrid>,
    pub masks: InstanceMaskSet,
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub plan: WindowPlan,
    pub fused: Vec<FusedWindow>,
    pub ensemble_labels: LabelMap,
    pub losses: LossBreakdown,
    pub metrics: RunMetrics,
}

impl PipelineOutput {
    pub fn window_reports(&self) -> Vec<WindowFusionReport> {
        self.plan
            .windows
            .iter()
            .zip(&self.fused)
            .map(|(w, f)| WindowFusionReport {
                window: w.index,
                x_start: w.x_start,
                masks: f.per_mask_report.clone(),
            })
            .collect()
    }
}

fn check_inputs(inputs: &PipelineInputs, cfg: &PipelineConfig) -> Result<()> {
    let ta = &inputs.ta_logits;
    let (h, w) = (ta.height(), ta.width());
    if !inputs.gt_labels.same_shape(h, w) {
        return Err(Error::ShapeMismatch(format!(
            "ground truth is {}x{}, TA logits are {h}x{w}",
            inputs.gt_labels.height(),
            inputs.gt_labels.width()
        )));
    }
    if inputs.masks.height() != h || inputs.masks.width() != w {
        return Err(Error::ShapeMismatch(format!(
            "masks are {}x{}, TA logits are {h}x{w}",
            inputs.masks.height(),
            inputs.masks.width()
        )));
    }
    if let Some(s) = &inputs.student_logits {
        if !s.same_shape(ta) {
            return Err(Error::ShapeMismatch("student and TA logits differ in shape".into()));
        }
    }
    if cfg.window.height != h {
        return Err(Error::InvalidGeometry(format!(
            "window.height {} does not match canvas height {h}",
            cfg.window.height
        )));
    }
    inputs.gt_labels.check_classes(ta.classes(), true)
}

/// Runs every stage with `threads` worker threads. Discrete outputs and loss
/// scalars do not depend on the thread count.
pub fn run_pipeline(inputs: &PipelineInputs, cfg: &PipelineConfig, threads: usize) -> Result<PipelineOutput> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start {threads} threads: {e}")))?;
    pool.install(|| run_stages(inputs, cfg))
}

fn run_stages(inputs: &PipelineInputs, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    check_inputs(inputs, cfg).map_err(|e| e.in_stage("plan"))?;
    let ta = &inputs.ta_logits;
    let catalog = cfg.catalog_for(ta.classes()).map_err(|e| e.in_stage("plan"))?;
    let plan = plan_overlapping(ta.width(), ta.height(), cfg.window.width, cfg.window.stride)
        .map_err(|e| e.in_stage("plan"))?;
    log::info!(
        "plan: {} windows, {} overlaps",
        plan.window_count(),
        plan.overlaps.len()
    );

    let per_window = plan
        .windows
        .par_iter()
        .map(|w| {
            let ta_w = extract(ta, w)?;
            let masks_w = inputs.masks.crop_columns(w.x_start, w.width)?;
            let fused = fuse_window(&masks_w, &ta_w, &cfg.fusion)?;
            Ok((ta_w, fused))
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("fuse"))?;
    let (ta_windows, fused): (Vec<LogitsGrid>, Vec<FusedWindow>) = per_window.into_iter().unzip();
    log::info!("fuse: {} windows fused", fused.len());

    let targets: Vec<WindowTargets> = fused
        .iter()
        .map(|f| WindowTargets {
            labels: f.ensemble_labels.clone(),
            weights: f.weight_map.clone(),
        })
        .collect();
    let student = inputs.student_logits.as_ref().unwrap_or(ta);
    let loss_inputs = LossInputs {
        plan: &plan,
        ta_windows: &ta_windows,
        student,
        targets: &targets,
        masks: &inputs.masks,
    };
    let losses = compute_losses_parallel(&loss_inputs, &cfg.losses).map_err(|e| e.in_stage("losses"))?;
    log::info!(
        "losses: student total {:.6}, TA total {:.6}",
        losses.report.l_student_total,
        losses.report.l_ta_total
    );

    let parts: Vec<LogitsGrid> = fused.iter().map(|f| f.ensemble_logits.clone()).collect();
    let ensemble_labels = argmax_map(
        &stitch(&plan, &parts, StitchMode::Concat).map_err(|e| e.in_stage("stitch"))?,
    );

    let evaluate = |pred: &LabelMap| -> Result<MetricsReport> {
        let mut cm = ConfusionMatrix::new(ta.classes());
        cm.accumulate(&inputs.gt_labels, pred)?;
        MetricsReport::from_matrix(&cm, &catalog)
    };
    let metrics = RunMetrics {
        ta: evaluate(&argmax_map(ta)).map_err(|e| e.in_stage("evaluate"))?,
        ensemble: evaluate(&ensemble_labels).map_err(|e| e.in_stage("evaluate"))?,
    };
    log::info!(
        "evaluate: mIoU TA {:.4}, ensemble {:.4}",
        metrics.ta.miou,
        metrics.ensemble.miou
    );

    Ok(PipelineOutput {
        plan,
        fused,
        ensemble_labels,
        losses,
        metrics,
    })
}
