//! Cross-task fusion of class-agnostic instance masks with semantic logits.
//!
//! Each mask receives one semantic label from the TA prediction underneath
//! it. If the most frequent label covers at least `theta` of the mask it is
//! taken directly (the coverage rule). Otherwise the top-k most frequent
//! labels compete on mean Shannon entropy of the TA softmax over their own
//! pixels, and the least uncertain wins (the entropy rule). The size
//! dependent `theta` is stricter for medium masks.
//!
//! Pixels owned by a coverage-rule mask get weight 1 in the confidence map;
//! everything else gets 0.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{argmax_map, entropy_of, softmax_into, Label, LabelMap, LogitsGrid, SATURATED_LOGIT};
use crate::masks::{BinaryMask, InstanceMaskSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub theta_default: f64,
    pub theta_medium: f64,
    pub medium_area_min: usize,
    pub medium_area_max: usize,
    pub top_k: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            theta_default: 0.5,
            theta_medium: 0.7,
            medium_area_min: 100,
            medium_area_max: 1000,
            top_k: 3,
        }
    }
}

impl FusionConfig {
    /// Thresholds of zero reduce fusion to plain most-frequent-label voting.
    pub fn majority_vote() -> Self {
        Self {
            theta_default: 0.0,
            theta_medium: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.theta_default) {
            return Err(Error::config("theta_default", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.theta_medium) {
            return Err(Error::config("theta_medium", "must lie in [0, 1]"));
        }
        if self.theta_default > self.theta_medium {
            return Err(Error::config(
                "theta_medium",
                "must be at least theta_default",
            ));
        }
        if self.medium_area_min >= self.medium_area_max {
            return Err(Error::config("medium_area", "min must be below max"));
        }
        if self.top_k == 0 {
            return Err(Error::config("top_k", "must be positive"));
        }
        Ok(())
    }
}

/// Which branch assigned a mask's label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssignmentRule {
    Lcr,
    Entropy,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskAssignment {
    pub label: Label,
    pub rule: AssignmentRule,
    /// Coverage rate of the most frequent label.
    pub lcr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskReport {
    pub mask_index: usize,
    pub area: usize,
    pub label: Label,
    pub rule: AssignmentRule,
    pub lcr: f64,
}

/// Per-pixel confidence weights in `{0, 1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMap {
    height: usize,
    width: usize,
    weights: Vec<f32>,
}

impl WeightMap {
    pub fn new(height: usize, width: usize, weights: Vec<f32>) -> Result<Self> {
        if weights.len() != height * width {
            return Err(Error::InvalidInput(format!(
                "weight map length {} does not match {height}x{width}",
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidInput(format!("invalid weight {w}")));
        }
        Ok(Self {
            height,
            width,
            weights,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            weights: vec![0.0; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.weights[y * self.width + x]
    }

    pub fn crop_columns(&self, x_start: usize, width: usize) -> Result<WeightMap> {
        crate::grid::check_column_range(x_start, width, self.width)?;
        let weights = self
            .weights
            .chunks_exact(self.width)
            .flat_map(|row| row[x_start..x_start + width].iter().copied())
            .collect();
        Ok(WeightMap {
            height: self.height,
            width,
            weights,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusedWindow {
    pub ensemble_labels: LabelMap,
    /// Saturated one-hot scores inside masks, raw TA logits elsewhere.
    pub ensemble_logits: LogitsGrid,
    pub weight_map: WeightMap,
    pub per_mask_report: Vec<MaskReport>,
}

/// Label counts over the pixels of one mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelHistogram {
    counts: BTreeMap<Label, u64>,
    total: u64,
}

impl LabelHistogram {
    pub fn from_counts(counts: BTreeMap<Label, u64>) -> Self {
        let counts: BTreeMap<_, _> = counts.into_iter().filter(|&(_, n)| n > 0).collect();
        let total = counts.values().sum();
        Self { counts, total }
    }

    pub fn count(&self, label: Label) -> u64 {
        self.counts.get(&label).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn counts(&self) -> &BTreeMap<Label, u64> {
        &self.counts
    }

    /// Up to `k` labels by descending count, ties to the lower label.
    pub fn top_k(&self, k: usize) -> Vec<(Label, u64)> {
        let mut ranked: Vec<(Label, u64)> = self.counts.iter().map(|(&l, &n)| (l, n)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.truncate(k);
        ranked
    }
}

fn check_mask_frame(mask: &BinaryMask, height: usize, width: usize, what: &str) -> Result<()> {
    if mask.height() != height || mask.width() != width {
        return Err(Error::ShapeMismatch(format!(
            "mask is {}x{}, {what} is {height}x{width}",
            mask.height(),
            mask.width()
        )));
    }
    Ok(())
}

pub fn label_histogram(mask: &BinaryMask, labels: &LabelMap) -> Result<LabelHistogram> {
    check_mask_frame(mask, labels.height(), labels.width(), "label map")?;
    let mut counts = BTreeMap::new();
    for k in mask.pixels() {
        *counts.entry(labels.labels()[k]).or_insert(0u64) += 1;
    }
    Ok(LabelHistogram::from_counts(counts))
}

/// Fraction of the histogram carrying `label`.
pub fn label_coverage_rate(hist: &LabelHistogram, label: Label) -> Result<f64> {
    if hist.total == 0 {
        return Err(Error::InvalidInput(
            "coverage rate of an empty mask".into(),
        ));
    }
    Ok(hist.count(label) as f64 / hist.total as f64)
}

/// Mean softmax entropy over the mask pixels whose TA argmax is `label`.
pub fn entropy_score(mask: &BinaryMask, label: Label, ta_logits: &LogitsGrid) -> Result<f64> {
    check_mask_frame(mask, ta_logits.height(), ta_logits.width(), "logits")?;
    let argmax = argmax_map(ta_logits);
    let mut scratch = Scratch::new(ta_logits.classes());
    entropy_score_with(mask, label, &argmax, ta_logits, &mut scratch)
}

struct Scratch {
    scores: Vec<f32>,
    probs: Vec<f64>,
}

impl Scratch {
    fn new(classes: usize) -> Self {
        Self {
            scores: Vec::with_capacity(classes),
            probs: vec![0.0; classes],
        }
    }

    fn entropy_at(&mut self, logits: &LogitsGrid, k: usize) -> f64 {
        logits.flat_pixel_into(k, &mut self.scores);
        softmax_into(self.scores.iter().map(|&v| f64::from(v)), &mut self.probs);
        entropy_of(&self.probs)
    }
}

fn entropy_score_with(
    mask: &BinaryMask,
    label: Label,
    argmax: &LabelMap,
    logits: &LogitsGrid,
    scratch: &mut Scratch,
) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for k in mask.pixels() {
        if argmax.labels()[k] == label {
            sum += scratch.entropy_at(logits, k);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::UndefinedScore(format!(
            "label {label} has no supporting pixel in the mask"
        )));
    }
    Ok(sum / n as f64)
}

/// Coverage threshold for a mask of `area` pixels.
pub fn select_theta(area: usize, cfg: &FusionConfig) -> f64 {
    if (cfg.medium_area_min..=cfg.medium_area_max).contains(&area) {
        cfg.theta_medium
    } else {
        cfg.theta_default
    }
}

pub fn assign_mask_label(
    mask: &BinaryMask,
    ta_logits: &LogitsGrid,
    cfg: &FusionConfig,
) -> Result<MaskAssignment> {
    check_mask_frame(mask, ta_logits.height(), ta_logits.width(), "logits")?;
    let argmax = argmax_map(ta_logits);
    let mut scratch = Scratch::new(ta_logits.classes());
    assign_with(mask, &argmax, ta_logits, cfg, &mut scratch)
}

fn assign_with(
    mask: &BinaryMask,
    argmax: &LabelMap,
    logits: &LogitsGrid,
    cfg: &FusionConfig,
    scratch: &mut Scratch,
) -> Result<MaskAssignment> {
    if mask.area() == 0 {
        return Err(Error::InvalidInput("cannot assign a label to an empty mask".into()));
    }
    let hist = label_histogram(mask, argmax)?;
    let ranked = hist.top_k(cfg.top_k);
    let (y_max, _) = ranked[0];
    let lcr = label_coverage_rate(&hist, y_max)?;
    if lcr >= select_theta(mask.area(), cfg) {
        return Ok(MaskAssignment {
            label: y_max,
            rule: AssignmentRule::Lcr,
            lcr,
        });
    }

    let mut best: Option<(f64, Label)> = None;
    for &(label, _) in &ranked {
        let score = entropy_score_with(mask, label, argmax, logits, scratch)?;
        let better = match best {
            None => true,
            Some((s, l)) => score < s || (score == s && label < l),
        };
        if better {
            best = Some((score, label));
        }
    }
    let (_, label) = best.expect("histogram of a non-empty mask has a label");
    Ok(MaskAssignment {
        label,
        rule: AssignmentRule::Entropy,
        lcr,
    })
}

/// Fuses one window.
///
/// Masks are painted largest first so that smaller masks overwrite the
/// larger ones they sit on; equal areas paint in index order. Pixels without
/// a mask keep the TA argmax label and raw TA logits.
pub fn fuse_window(
    masks: &InstanceMaskSet,
    ta_logits: &LogitsGrid,
    cfg: &FusionConfig,
) -> Result<FusedWindow> {
    if masks.height() != ta_logits.height() || masks.width() != ta_logits.width() {
        return Err(Error::ShapeMismatch(format!(
            "masks are {}x{}, logits are {}x{}",
            masks.height(),
            masks.width(),
            ta_logits.height(),
            ta_logits.width()
        )));
    }
    cfg.validate()?;

    let argmax = argmax_map(ta_logits);
    let mut scratch = Scratch::new(ta_logits.classes());
    let assignments = masks
        .iter()
        .map(|m| assign_with(m, &argmax, ta_logits, cfg, &mut scratch))
        .collect::<Result<Vec<_>>>()?;

    let mut order: Vec<usize> = (0..masks.len()).collect();
    order.sort_by(|&a, &b| {
        masks.masks()[b]
            .area()
            .cmp(&masks.masks()[a].area())
            .then(a.cmp(&b))
    });
    let mut owner: Vec<Option<usize>> = vec![None; argmax.len()];
    for &i in &order {
        for k in masks.masks()[i].pixels() {
            owner[k] = Some(i);
        }
    }

    let (h, w, classes) = (ta_logits.height(), ta_logits.width(), ta_logits.classes());
    let plane = h * w;
    let mut labels = argmax.into_labels();
    let mut weights = vec![0.0f32; plane];
    let mut values = ta_logits.values().to_vec();
    for (k, o) in owner.iter().enumerate() {
        let Some(i) = *o else { continue };
        let a = assignments[i];
        labels[k] = a.label;
        if a.rule == AssignmentRule::Lcr {
            weights[k] = 1.0;
        }
        for c in 0..classes {
            values[c * plane + k] = if c == a.label as usize { SATURATED_LOGIT } else { 0.0 };
        }
    }

    let per_mask_report = assignments
        .iter()
        .enumerate()
        .map(|(i, a)| MaskReport {
            mask_index: i,
            area: masks.masks()[i].area(),
            label: a.label,
            rule: a.rule,
            lcr: a.lcr,
        })
        .collect();

    Ok(FusedWindow {
        ensemble_labels: LabelMap::new(h, w, labels)?,
        ensemble_logits: LogitsGrid::new(classes, h, w, values)?,
        weight_map: WeightMap::new(h, w, weights)?,
        per_mask_report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::LogitsGrid;

    /// Logits whose argmax is `labels[k]`; `confident[k]` selects a saturated
    /// one-hot vector, otherwise a near-uniform vector with a tiny lead.
    fn logits_for(labels: &[Label], confident: &[bool], classes: usize, h: usize, w: usize) -> LogitsGrid {
        let plane = h * w;
        let mut values = vec![0.0f32; classes * plane];
        for k in 0..plane {
            let l = labels[k] as usize;
            values[l * plane + k] = if confident[k] { SATURATED_LOGIT } else { 1e-3 };
        }
        LogitsGrid::new(classes, h, w, values).unwrap()
    }

    #[test]
    fn histogram_counts() {
        let labels = LabelMap::new(2, 5, vec![3, 3, 3, 7, 7, 3, 3, 3, 7, 7]).unwrap();
        let mask = BinaryMask::new(2, 5, vec![true; 10]).unwrap();
        let hist = label_histogram(&mask, &labels).unwrap();
        assert_eq!(hist.count(3), 6);
        assert_eq!(hist.count(7), 4);
        assert_eq!(hist.total(), 10);
        assert!((label_coverage_rate(&hist, 3).unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(label_coverage_rate(&hist, 5).unwrap(), 0.0);

        let uniform = LabelMap::filled(2, 5, 3).unwrap();
        let hist = label_histogram(&mask, &uniform).unwrap();
        assert_eq!(hist.counts().len(), 1);
        assert_eq!(label_coverage_rate(&hist, 3).unwrap(), 1.0);
    }

    #[test]
    fn coverage_of_empty_histogram_fails() {
        let hist = LabelHistogram::from_counts(BTreeMap::new());
        assert!(label_coverage_rate(&hist, 0).is_err());
    }

    #[test]
    fn histogram_shape_mismatch() {
        let labels = LabelMap::filled(2, 2, 0).unwrap();
        let mask = BinaryMask::rect(2, 3, 0, 1, 0, 1);
        assert!(matches!(
            label_histogram(&mask, &labels),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn entropy_score_examples() {
        // one-hot support
        let g = logits_for(&[1, 1], &[true, true], 2, 1, 2);
        let mask = BinaryMask::new(1, 2, vec![true, true]).unwrap();
        assert!(entropy_score(&mask, 1, &g).unwrap() < 1e-20);

        // uniform support over 19 classes
        let g = LogitsGrid::filled(19, 1, 2, 0.0).unwrap();
        let s = entropy_score(&mask, 0, &g).unwrap();
        assert!((s - 19f64.ln()).abs() < 1e-4);

        // one saturated pixel and one uniform pixel, both argmax 0
        let g = LogitsGrid::new(2, 1, 2, vec![SATURATED_LOGIT, 0.0, 0.0, 0.0]).unwrap();
        let s = entropy_score(&mask, 0, &g).unwrap();
        assert!((s - 0.3466).abs() < 1e-4, "{s}");

        assert!(matches!(
            entropy_score(&mask, 1, &g),
            Err(Error::UndefinedScore(_))
        ));
    }

    #[test]
    fn theta_selection() {
        let cfg = FusionConfig::default();
        assert_eq!(select_theta(50, &cfg), 0.5);
        assert_eq!(select_theta(100, &cfg), 0.7);
        assert_eq!(select_theta(500, &cfg), 0.7);
        assert_eq!(select_theta(1000, &cfg), 0.7);
        assert_eq!(select_theta(1001, &cfg), 0.5);
    }

    #[test]
    fn coverage_rule_small_mask() {
        // area 10: road(0) x6, car(13) x4
        let labels: Vec<Label> = [0; 6].into_iter().chain([13; 4]).collect();
        let g = logits_for(&labels, &[false; 10], 19, 1, 10);
        let mask = BinaryMask::new(1, 10, vec![true; 10]).unwrap();
        let a = assign_mask_label(&mask, &g, &FusionConfig::default()).unwrap();
        assert_eq!(a.label, 0);
        assert_eq!(a.rule, AssignmentRule::Lcr);
        assert!((a.lcr - 0.6).abs() < 1e-12);
    }

    #[test]
    fn entropy_rule_medium_mask() {
        // area 500: road(0) x300 near-uniform, sidewalk(1) x150 confident, car(13) x50 near-uniform
        let mut labels = vec![0 as Label; 300];
        labels.extend([1; 150]);
        labels.extend([13; 50]);
        let confident: Vec<bool> = labels.iter().map(|&l| l == 1).collect();
        let g = logits_for(&labels, &confident, 19, 10, 50);
        let mask = BinaryMask::new(10, 50, vec![true; 500]).unwrap();
        let a = assign_mask_label(&mask, &g, &FusionConfig::default()).unwrap();
        assert_eq!(a.label, 1);
        assert_eq!(a.rule, AssignmentRule::Entropy);
        assert!((a.lcr - 0.6).abs() < 1e-12);
    }

    #[test]
    fn entropy_ties_go_to_lower_label() {
        // lcr 0.5 < 0.7 for medium area, both labels equally confident
        let mut labels = vec![4 as Label; 100];
        labels.extend([2; 100]);
        let g = logits_for(&labels, &[true; 200], 5, 10, 20);
        let mask = BinaryMask::new(10, 20, vec![true; 200]).unwrap();
        let a = assign_mask_label(&mask, &g, &FusionConfig::default()).unwrap();
        assert_eq!((a.label, a.rule), (2, AssignmentRule::Entropy));
    }

    #[test]
    fn zero_masks_fall_back_to_ta() {
        let labels: Vec<Label> = (0..12).map(|k| (k % 3) as Label).collect();
        let g = logits_for(&labels, &[true; 12], 3, 3, 4);
        let fused = fuse_window(&InstanceMaskSet::empty(3, 4), &g, &FusionConfig::default()).unwrap();
        assert_eq!(fused.ensemble_labels.labels(), labels.as_slice());
        assert!(fused.weight_map.weights().iter().all(|&w| w == 0.0));
        assert_eq!(fused.ensemble_logits, g);
        assert!(fused.per_mask_report.is_empty());
    }

    #[test]
    fn full_single_label_mask() {
        let g = logits_for(&[2; 12], &[true; 12], 3, 3, 4);
        let set = InstanceMaskSet::new(3, 4, vec![BinaryMask::rect(3, 4, 0, 3, 0, 4)]).unwrap();
        let fused = fuse_window(&set, &g, &FusionConfig::default()).unwrap();
        assert!(fused.ensemble_labels.labels().iter().all(|&l| l == 2));
        assert!(fused.weight_map.weights().iter().all(|&w| w == 1.0));
        assert_eq!(argmax_map(&fused.ensemble_logits), fused.ensemble_labels);
    }

    #[test]
    fn smaller_mask_overwrites_larger() {
        let mut labels = vec![0 as Label; 16];
        labels[5] = 1;
        labels[6] = 1;
        let g = logits_for(&labels, &[true; 16], 2, 4, 4);
        let big = BinaryMask::rect(4, 4, 0, 4, 0, 4);
        let small = BinaryMask::rect(4, 4, 1, 2, 1, 3);
        let set = InstanceMaskSet::new(4, 4, vec![small, big]).unwrap();
        let fused = fuse_window(&set, &g, &FusionConfig::default()).unwrap();
        assert_eq!(fused.ensemble_labels.get(1, 1), 1);
        assert_eq!(fused.ensemble_labels.get(1, 2), 1);
        assert_eq!(fused.ensemble_labels.get(0, 0), 0);
        assert_eq!(fused.per_mask_report[0].label, 1);
        assert_eq!(fused.per_mask_report[1].label, 0);
    }

    #[test]
    fn fuse_rejects_shape_mismatch() {
        let g = LogitsGrid::filled(2, 3, 4, 0.0).unwrap();
        let set = InstanceMaskSet::empty(4, 4);
        assert!(matches!(
            fuse_window(&set, &g, &FusionConfig::default()),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn config_validation() {
        assert!(FusionConfig::default().validate().is_ok());
        assert!(FusionConfig::majority_vote().validate().is_ok());
        let bad = FusionConfig {
            theta_default: 0.8,
            ..FusionConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = FusionConfig {
            medium_area_min: 1000,
            medium_area_max: 100,
            ..FusionConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
