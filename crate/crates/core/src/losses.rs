//! Scalar evaluation of the adaptation loss stack.
//!
//! Nothing here is differentiated; every loss is a monitoring value computed
//! with `f64` accumulation in a fixed left-to-right order.

use serde::{Deserialize, Serialize};

use crate::boundary::{
    boundaries_from_labels, boundaries_from_masks, boundary_loss_student, boundary_loss_ta,
    refine_boundary_counted, RefineConfig, RefineCounts,
};
use crate::error::{Error, Result};
use crate::fusion::WeightMap;
use crate::grid::{argmax_map, LabelMap, LogitsGrid};
use crate::masks::InstanceMaskSet;
use crate::window::{extract, stitch, StitchMode, WindowPlan};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    #[default]
    Sum,
    Mean,
}

/// Every loss component plus the two totals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_cc: f64,
    pub l_ce_ta_s: f64,
    pub l_ce_t_s: f64,
    pub l_ce_t_ta: f64,
    pub l_bd_t_ta: f64,
    pub l_bd_t_s: f64,
    pub l_student_total: f64,
    pub l_ta_total: f64,
    pub lambda: f64,
}

impl LossReport {
    /// Assembles a report, deriving both totals from the components.
    #[allow(clippy::too_many_arguments)]
    pub fn from_components(
        l_cc: f64,
        l_ce_ta_s: f64,
        l_ce_t_s: f64,
        l_ce_t_ta: f64,
        l_bd_t_ta: f64,
        l_bd_t_s: f64,
        lambda: f64,
    ) -> Self {
        Self {
            l_cc,
            l_ce_ta_s,
            l_ce_t_s,
            l_ce_t_ta,
            l_bd_t_ta,
            l_bd_t_s,
            l_student_total: student_total(l_ce_ta_s, l_ce_t_s, l_bd_t_s),
            l_ta_total: ta_total(l_ce_t_ta, l_cc, l_bd_t_ta),
            lambda,
        }
    }

    /// `(name, value)` for every field, in declaration order.
    pub fn components(&self) -> [(&'static str, f64); 9] {
        [
            ("l_cc", self.l_cc),
            ("l_ce_ta_s", self.l_ce_ta_s),
            ("l_ce_t_s", self.l_ce_t_s),
            ("l_ce_t_ta", self.l_ce_t_ta),
            ("l_bd_t_ta", self.l_bd_t_ta),
            ("l_bd_t_s", self.l_bd_t_s),
            ("l_student_total", self.l_student_total),
            ("l_ta_total", self.l_ta_total),
            ("lambda", self.lambda),
        ]
    }
}

/// Mean squared difference over all `C*H*W` elements.
pub fn consistency_mse(pred_i: &LogitsGrid, pred_j: &LogitsGrid) -> Result<f64> {
    consistency_error(pred_i, pred_j, Reduction::Mean)
}

pub fn consistency_error(pred_i: &LogitsGrid, pred_j: &LogitsGrid, reduction: Reduction) -> Result<f64> {
    if !pred_i.same_shape(pred_j) {
        return Err(Error::ShapeMismatch(format!(
            "overlap crops differ: {}x{}x{} vs {}x{}x{}",
            pred_i.classes(),
            pred_i.height(),
            pred_i.width(),
            pred_j.classes(),
            pred_j.height(),
            pred_j.width()
        )));
    }
    let sum: f64 = pred_i
        .values()
        .iter()
        .zip(pred_j.values())
        .map(|(&a, &b)| {
            let d = f64::from(a) - f64::from(b);
            d * d
        })
        .sum();
    Ok(match reduction {
        Reduction::Sum => sum,
        Reduction::Mean => sum / pred_i.values().len() as f64,
    })
}

/// Hard-label cross-entropy, optionally up-weighted by `lambda` on pixels
/// whose confidence weight is set: `sum_k CE_k + lambda * M_k * CE_k`.
pub fn cross_entropy(
    pred: &LogitsGrid,
    target: &LabelMap,
    weights: Option<&WeightMap>,
    lambda: f64,
    reduction: Reduction,
) -> Result<f64> {
    let (h, w, classes) = (pred.height(), pred.width(), pred.classes());
    if !target.same_shape(h, w) {
        return Err(Error::ShapeMismatch(format!(
            "target is {}x{}, prediction is {h}x{w}",
            target.height(),
            target.width()
        )));
    }
    if let Some(m) = weights {
        if m.height() != h || m.width() != w {
            return Err(Error::ShapeMismatch(format!(
                "weight map is {}x{}, prediction is {h}x{w}",
                m.height(),
                m.width()
            )));
        }
    }
    target.check_classes(classes, false)?;

    // Plane-by-plane passes keep memory access contiguous; each pixel still
    // sums its classes in index order.
    let plane = h * w;
    let values = pred.values();
    let mut max = values[..plane].to_vec();
    for c in 1..classes {
        for (m, &v) in max.iter_mut().zip(&values[c * plane..(c + 1) * plane]) {
            *m = m.max(v);
        }
    }
    let mut sums = vec![0.0f64; plane];
    for c in 0..classes {
        for ((s, &m), &v) in sums.iter_mut().zip(&max).zip(&values[c * plane..(c + 1) * plane]) {
            *s += (f64::from(v) - f64::from(m)).exp();
        }
    }
    let mut total = 0.0f64;
    for (k, &t) in target.labels().iter().enumerate() {
        let max = f64::from(max[k]);
        let ce = (max - f64::from(values[t as usize * plane + k])) + sums[k].ln();
        total += match weights {
            Some(m) => ce + lambda * f64::from(m.weights()[k]) * ce,
            None => ce,
        };
    }
    Ok(match reduction {
        Reduction::Sum => total,
        Reduction::Mean => total / plane as f64,
    })
}

/// Student objective: whole-image CE + window CE + boundary loss.
pub fn student_total(l_ce_ta_s: f64, l_ce_t_s: f64, l_bd_t_s: f64) -> f64 {
    l_ce_ta_s + l_ce_t_s + l_bd_t_s
}

/// TA objective: window CE + consistency + boundary loss.
pub fn ta_total(l_ce_t_ta: f64, l_cc: f64, l_bd_t_ta: f64) -> f64 {
    l_ce_t_ta + l_cc + l_bd_t_ta
}

/// Hyper-parameters of the loss stack.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda: f64,
    pub ce_reduction: Reduction,
    pub refine: RefineConfig,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: 0.2,
            ce_reduction: Reduction::Sum,
            refine: RefineConfig::default(),
        }
    }
}

/// Fusion targets for one window: ensemble labels and confidence weights.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowTargets {
    pub labels: LabelMap,
    pub weights: WeightMap,
}

/// Everything needed to evaluate the loss stack over one panorama.
pub struct LossInputs<'a> {
    pub plan: &'a WindowPlan,
    /// TA logits per window of `plan`.
    pub ta_windows: &'a [LogitsGrid],
    /// Student logits for the whole canvas.
    pub student: &'a LogitsGrid,
    /// Fusion output per window of `plan`.
    pub targets: &'a [WindowTargets],
    /// Canvas-wide instance masks; each overlap sees them cropped.
    pub masks: &'a InstanceMaskSet,
}

/// Per-overlap intermediate values of a loss evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapLosses {
    pub left_window: usize,
    pub right_window: usize,
    pub l_cc: f64,
    /// `None` when the refined map has no boundary pixel.
    pub l_bd_t_ta: Option<f64>,
    pub l_bd_t_s: Option<f64>,
    pub refined_pixels: usize,
    pub counts: RefineCounts,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossBreakdown {
    pub report: LossReport,
    pub overlaps: Vec<OverlapLosses>,
    pub window_ce_student: Vec<f64>,
    pub window_ce_ta: Vec<f64>,
}

/// Whole-image TA prediction: the concat cover of the plan's windows.
pub fn whole_image_ta(plan: &WindowPlan, ta_windows: &[LogitsGrid]) -> Result<LogitsGrid> {
    let cover = plan.concat_cover();
    let parts: Vec<LogitsGrid> = cover.iter().map(|&i| ta_windows[i].clone()).collect();
    stitch(&plan.subset(&cover), &parts, StitchMode::Concat)
}

fn check_inputs(inputs: &LossInputs<'_>) -> Result<()> {
    let plan = inputs.plan;
    plan.validate()?;
    let n = plan.window_count();
    if inputs.ta_windows.len() != n || inputs.targets.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "plan has {n} windows, got {} TA windows and {} targets",
            inputs.ta_windows.len(),
            inputs.targets.len()
        )));
    }
    let s = inputs.student;
    if s.height() != plan.canvas_height || s.width() != plan.canvas_width {
        return Err(Error::ShapeMismatch(format!(
            "student is {}x{}, canvas is {}x{}",
            s.height(),
            s.width(),
            plan.canvas_height,
            plan.canvas_width
        )));
    }
    if inputs.masks.height() != plan.canvas_height || inputs.masks.width() != plan.canvas_width {
        return Err(Error::ShapeMismatch("masks do not cover the canvas".into()));
    }
    for (w, (ta, t)) in plan.windows.iter().zip(inputs.ta_windows.iter().zip(inputs.targets)) {
        if ta.classes() != s.classes() || ta.height() != w.height || ta.width() != w.width {
            return Err(Error::ShapeMismatch(format!(
                "TA window {} is {}x{}x{}, expected {}x{}x{}",
                w.index,
                ta.classes(),
                ta.height(),
                ta.width(),
                s.classes(),
                w.height,
                w.width
            )));
        }
        if !t.labels.same_shape(w.height, w.width)
            || t.weights.height() != w.height
            || t.weights.width() != w.width
        {
            return Err(Error::ShapeMismatch(format!(
                "targets of window {} do not match its size",
                w.index
            )));
        }
    }
    Ok(())
}

/// Losses of one window: `(CE student vs ensemble, CE TA vs ensemble)`.
pub fn window_losses(
    inputs: &LossInputs<'_>,
    window: usize,
    cfg: &LossConfig,
) -> Result<(f64, f64)> {
    let w = &inputs.plan.windows[window];
    let t = &inputs.targets[window];
    let student = extract(inputs.student, w)?;
    let ce_s = cross_entropy(&student, &t.labels, Some(&t.weights), cfg.lambda, cfg.ce_reduction)?;
    let ce_ta = cross_entropy(
        &inputs.ta_windows[window],
        &t.labels,
        Some(&t.weights),
        cfg.lambda,
        cfg.ce_reduction,
    )?;
    Ok((ce_s, ce_ta))
}

/// Consistency, refinement and boundary losses of one overlap.
pub fn overlap_losses(inputs: &LossInputs<'_>, overlap: usize, cfg: &LossConfig) -> Result<OverlapLosses> {
    let plan = inputs.plan;
    let o = &plan.overlaps[overlap];
    let (li, lj) = (o.left_window, o.right_window);
    let crop_i = inputs.ta_windows[li].crop_columns(plan.overlap_in_window(o, li), o.width)?;
    let crop_j = inputs.ta_windows[lj].crop_columns(plan.overlap_in_window(o, lj), o.width)?;
    let l_cc = consistency_mse(&crop_i, &crop_j)?;

    let b_ta_i = boundaries_from_labels(&argmax_map(&crop_i));
    let b_ta_j = boundaries_from_labels(&argmax_map(&crop_j));
    let b_sam = boundaries_from_masks(&inputs.masks.crop_columns(o.x_start, o.width)?);
    let refinement = refine_boundary_counted(&b_ta_i, &b_ta_j, &b_sam, &crop_i, &crop_j, &cfg.refine)?;
    let b_ref = &refinement.refined;
    let b_s = boundaries_from_labels(&argmax_map(&inputs.student.crop_columns(o.x_start, o.width)?));

    let degenerate_to_none = |r: Result<f64>| match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::Degenerate(_)) => Ok(None),
        Err(e) => Err(e),
    };
    Ok(OverlapLosses {
        left_window: li,
        right_window: lj,
        l_cc,
        l_bd_t_ta: degenerate_to_none(boundary_loss_ta(b_ref, &b_ta_i, &b_ta_j))?,
        l_bd_t_s: degenerate_to_none(boundary_loss_student(b_ref, &b_s))?,
        refined_pixels: b_ref.count(),
        counts: refinement.counts,
    })
}

/// Assembles the report from per-window and per-overlap parts, summing in
/// window/overlap order.
pub fn assemble_report(
    inputs: &LossInputs<'_>,
    windows: &[(f64, f64)],
    overlaps: Vec<OverlapLosses>,
    cfg: &LossConfig,
) -> Result<LossBreakdown> {
    let ta_whole = whole_image_ta(inputs.plan, inputs.ta_windows)?;
    let pseudo = argmax_map(&ta_whole);
    let l_ce_ta_s = cross_entropy(inputs.student, &pseudo, None, cfg.lambda, cfg.ce_reduction)?;

    let l_ce_t_s = windows.iter().map(|w| w.0).sum();
    let l_ce_t_ta = windows.iter().map(|w| w.1).sum();
    let l_cc = overlaps.iter().map(|o| o.l_cc).sum();
    let l_bd_t_ta = overlaps.iter().filter_map(|o| o.l_bd_t_ta).sum();
    let l_bd_t_s = overlaps.iter().filter_map(|o| o.l_bd_t_s).sum();

    Ok(LossBreakdown {
        report: LossReport::from_components(
            l_cc, l_ce_ta_s, l_ce_t_s, l_ce_t_ta, l_bd_t_ta, l_bd_t_s, cfg.lambda,
        ),
        overlaps,
        window_ce_student: windows.iter().map(|w| w.0).collect(),
        window_ce_ta: windows.iter().map(|w| w.1).collect(),
    })
}

/// Evaluates the full loss stack sequentially.
///
/// Window terms are summed over windows; overlap terms are summed over
/// overlaps, skipping boundary terms of overlaps whose refined map is empty.
pub fn compute_losses(inputs: &LossInputs<'_>, cfg: &LossConfig) -> Result<LossBreakdown> {
    check_inputs(inputs)?;
    let windows = (0..inputs.plan.window_count())
        .map(|i| window_losses(inputs, i, cfg))
        .collect::<Result<Vec<_>>>()?;
    let overlaps = (0..inputs.plan.overlaps.len())
        .map(|i| overlap_losses(inputs, i, cfg))
        .collect::<Result<Vec<_>>>()?;
    assemble_report(inputs, &windows, overlaps, cfg)
}

/// Parallel variant of [`compute_losses`]; reductions stay in the same order,
/// so the result is identical.
pub fn compute_losses_parallel(inputs: &LossInputs<'_>, cfg: &LossConfig) -> Result<LossBreakdown> {
    use rayon::prelude::*;
    check_inputs(inputs)?;
    let windows = (0..inputs.plan.window_count())
        .into_par_iter()
        .map(|i| window_losses(inputs, i, cfg))
        .collect::<Result<Vec<_>>>()?;
    let overlaps = (0..inputs.plan.overlaps.len())
        .into_par_iter()
        .map(|i| overlap_losses(inputs, i, cfg))
        .collect::<Result<Vec<_>>>()?;
    assemble_report(inputs, &windows, overlaps, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SATURATED_LOGIT;

    #[test]
    fn mse_examples() {
        let a = LogitsGrid::new(2, 1, 1, vec![1.0, 0.0]).unwrap();
        let b = LogitsGrid::new(2, 1, 1, vec![0.0, 1.0]).unwrap();
        assert_eq!(consistency_mse(&a, &a).unwrap(), 0.0);
        assert_eq!(consistency_mse(&a, &b).unwrap(), 1.0);
        assert_eq!(consistency_error(&a, &b, Reduction::Sum).unwrap(), 2.0);
        let c = LogitsGrid::new(2, 1, 2, vec![0.0; 4]).unwrap();
        assert!(matches!(consistency_mse(&a, &c), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn ce_examples() {
        let target = LabelMap::new(1, 1, vec![0]).unwrap();
        let g = LogitsGrid::new(2, 1, 1, vec![0.0, 0.0]).unwrap();
        let plain = cross_entropy(&g, &target, None, 0.2, Reduction::Sum).unwrap();
        assert!((plain - 2f64.ln()).abs() < 1e-12);

        let m = WeightMap::new(1, 1, vec![1.0]).unwrap();
        let weighted = cross_entropy(&g, &target, Some(&m), 0.2, Reduction::Sum).unwrap();
        assert!((weighted - 1.2 * 2f64.ln()).abs() < 1e-12);
        assert!((weighted - 0.8318).abs() < 1e-4);

        let confident = LogitsGrid::new(2, 1, 1, vec![SATURATED_LOGIT, 0.0]).unwrap();
        assert_eq!(cross_entropy(&confident, &target, None, 0.2, Reduction::Sum).unwrap(), 0.0);
    }

    #[test]
    fn ce_errors() {
        let g = LogitsGrid::new(2, 1, 1, vec![0.0, 0.0]).unwrap();
        let bad = LabelMap::new(1, 1, vec![2]).unwrap();
        assert!(matches!(
            cross_entropy(&g, &bad, None, 0.0, Reduction::Sum),
            Err(Error::InvalidInput(_))
        ));
        let wrong = LabelMap::new(1, 2, vec![0, 0]).unwrap();
        assert!(matches!(
            cross_entropy(&g, &wrong, None, 0.0, Reduction::Sum),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn ce_mean_divides_by_pixels() {
        let g = LogitsGrid::filled(2, 2, 2, 0.0).unwrap();
        let t = LabelMap::filled(2, 2, 1).unwrap();
        let sum = cross_entropy(&g, &t, None, 0.0, Reduction::Sum).unwrap();
        let mean = cross_entropy(&g, &t, None, 0.0, Reduction::Mean).unwrap();
        assert!((sum / 4.0 - mean).abs() < 1e-15);
    }

    #[test]
    fn totals() {
        assert_eq!(student_total(0.0, 0.0, 0.0), 0.0);
        assert_eq!(student_total(0.5, 0.25, 0.25), 1.0);
        assert_eq!(ta_total(0.5, 0.25, 0.25), 1.0);
        let r = LossReport::from_components(1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 0.2);
        assert_eq!(r.l_student_total, 2.0 + 3.0 + 6.0);
        assert_eq!(r.l_ta_total, 4.0 + 1.0 + 5.0);
    }

    #[test]
    fn report_field_names() {
        let r = LossReport::from_components(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.2);
        let v = serde_json::to_value(&r).unwrap();
        let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort_unstable();
        assert_eq!(
            keys,
            [
                "l_bd_t_s",
                "l_bd_t_ta",
                "l_cc",
                "l_ce_t_s",
                "l_ce_t_ta",
                "l_ce_ta_s",
                "l_student_total",
                "l_ta_total",
                "lambda"
            ]
        );
    }
}
