//! Confusion-matrix based segmentation metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ClassCatalog, Label, LabelMap, IGNORE_LABEL};

/// `C x C` pixel counts, rows ground truth, columns prediction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
    ignore: Option<Label>,
}

impl ConfusionMatrix {
    /// Empty matrix skipping ground-truth pixels labelled [`IGNORE_LABEL`].
    pub fn new(classes: usize) -> Self {
        Self::with_ignore(classes, Some(IGNORE_LABEL))
    }

    pub fn with_ignore(classes: usize, ignore: Option<Label>) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
            ignore,
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn accumulate(&mut self, gt: &LabelMap, pred: &LabelMap) -> Result<()> {
        if !gt.same_shape(pred.height(), pred.width()) {
            return Err(Error::ShapeMismatch(format!(
                "ground truth is {}x{}, prediction is {}x{}",
                gt.height(),
                gt.width(),
                pred.height(),
                pred.width()
            )));
        }
        let c = self.classes;
        // validate first so a bad pixel leaves the matrix untouched
        for (&g, &p) in gt.labels().iter().zip(pred.labels()) {
            if Some(g) == self.ignore {
                continue;
            }
            if g as usize >= c || p as usize >= c {
                return Err(Error::InvalidInput(format!(
                    "label pair ({g}, {p}) outside {c} classes"
                )));
            }
        }
        for (&g, &p) in gt.labels().iter().zip(pred.labels()) {
            if Some(g) != self.ignore {
                self.counts[g as usize * c + p as usize] += 1;
            }
        }
        Ok(())
    }

    /// Element-wise sum of two matrices over the same classes.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::ShapeMismatch(format!(
                "cannot merge {}-class matrix into {}-class matrix",
                other.classes, self.classes
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// `TP / (TP + FP + FN)` per class; `None` when the class never occurs.
    pub fn iou_per_class(&self) -> Vec<Option<f64>> {
        let c = self.classes;
        (0..c)
            .map(|k| {
                let tp = self.get(k, k);
                let gt_total: u64 = (0..c).map(|p| self.get(k, p)).sum();
                let pred_total: u64 = (0..c).map(|g| self.get(g, k)).sum();
                let denom = gt_total + pred_total - tp;
                (denom > 0).then(|| tp as f64 / denom as f64)
            })
            .collect()
    }

    pub fn mean_iou(&self) -> Result<f64> {
        let defined: Vec<f64> = self.iou_per_class().into_iter().flatten().collect();
        if defined.is_empty() {
            return Err(Error::Degenerate("no class has a defined IoU".into()));
        }
        Ok(defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassIou {
    pub name: String,
    pub iou: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class: Vec<ClassIou>,
    pub miou: f64,
    pub pixel_count: u64,
}

impl MetricsReport {
    pub fn from_matrix(cm: &ConfusionMatrix, catalog: &ClassCatalog) -> Result<Self> {
        catalog.check_channels(cm.classes())?;
        let per_class = cm
            .iou_per_class()
            .into_iter()
            .zip(catalog.names())
            .map(|(iou, name)| ClassIou {
                name: name.clone(),
                iou,
            })
            .collect();
        Ok(Self {
            per_class,
            miou: cm.mean_iou()?,
            pixel_count: cm.total(),
        })
    }
}

/// One-shot evaluation of a single prediction.
pub fn evaluate(gt: &LabelMap, pred: &LabelMap, catalog: &ClassCatalog) -> Result<MetricsReport> {
    let mut cm = ConfusionMatrix::new(catalog.len());
    cm.accumulate(gt, pred)?;
    MetricsReport::from_matrix(&cm, catalog)
}
