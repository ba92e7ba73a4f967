//! Dense grid value types and per-pixel numeric primitives.
//!
//! Logits are stored class-major (`c, y, x`) as `f32`; every reduction
//! accumulates in `f64`.

use std::collections::HashSet;

use crate::error::{Error, Result};

/// Class id type used by label maps.
pub type Label = u16;

/// Ground-truth value excluded from evaluation.
pub const IGNORE_LABEL: Label = 255;

/// Logit assigned to the winning class when a label is encoded as a
/// "one-hot" score vector.
///
/// At this margin the softmax of the winning class rounds to exactly `1.0`
/// in `f64`, so cross-entropy against the encoded label is exactly zero.
pub const SATURATED_LOGIT: f32 = 64.0;

/// Dense `C x H x W` class scores.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitsGrid {
    classes: usize,
    height: usize,
    width: usize,
    values: Vec<f32>,
}

impl LogitsGrid {
    pub fn new(classes: usize, height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidInput(format!(
                "logits need at least 2 classes, got {classes}"
            )));
        }
        if height == 0 || width == 0 {
            return Err(Error::InvalidInput(format!(
                "logits grid must be non-empty, got {height}x{width}"
            )));
        }
        let expected = classes * height * width;
        if values.len() != expected {
            return Err(Error::InvalidInput(format!(
                "logits length {} does not match {classes}x{height}x{width} = {expected}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite logit {} at flat index {pos}",
                values[pos]
            )));
        }
        Ok(Self {
            classes,
            height,
            width,
            values,
        })
    }

    /// Grid filled with `value`.
    pub fn filled(classes: usize, height: usize, width: usize, value: f32) -> Result<Self> {
        Self::new(classes, height, width, vec![value; classes * height * width])
    }

    /// Saturated one-hot encoding of a label map.
    pub fn one_hot(labels: &LabelMap, classes: usize) -> Result<Self> {
        labels.check_classes(classes, false)?;
        let plane = labels.height() * labels.width();
        let mut values = vec![0.0f32; classes * plane];
        for (k, &label) in labels.labels().iter().enumerate() {
            values[label as usize * plane + k] = SATURATED_LOGIT;
        }
        Self::new(classes, labels.height(), labels.width(), values)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn get(&self, class: usize, y: usize, x: usize) -> f32 {
        self.values[class * self.plane() + y * self.width + x]
    }

    /// Copies the `C` scores of pixel `(y, x)` into `out`.
    pub fn pixel_into(&self, y: usize, x: usize, out: &mut Vec<f32>) {
        out.clear();
        let plane = self.plane();
        let offset = y * self.width + x;
        out.extend((0..self.classes).map(|c| self.values[c * plane + offset]));
    }

    /// Scores of pixel `(y, x)` at flat pixel index `k = y * W + x`.
    pub(crate) fn flat_pixel_into(&self, k: usize, out: &mut Vec<f32>) {
        out.clear();
        let plane = self.plane();
        out.extend((0..self.classes).map(|c| self.values[c * plane + k]));
    }

    pub fn same_shape(&self, other: &LogitsGrid) -> bool {
        self.classes == other.classes && self.height == other.height && self.width == other.width
    }

    /// Copy of columns `x_start .. x_start + width`.
    pub fn crop_columns(&self, x_start: usize, width: usize) -> Result<LogitsGrid> {
        check_column_range(x_start, width, self.width)?;
        let mut values = Vec::with_capacity(self.classes * self.height * width);
        for c in 0..self.classes {
            for y in 0..self.height {
                let row = c * self.plane() + y * self.width;
                values.extend_from_slice(&self.values[row + x_start..row + x_start + width]);
            }
        }
        Ok(LogitsGrid {
            classes: self.classes,
            height: self.height,
            width,
            values,
        })
    }

    /// Overwrites columns starting at `x_start` with the contents of `part`.
    pub fn paste_columns(&mut self, x_start: usize, part: &LogitsGrid) -> Result<()> {
        if part.classes != self.classes || part.height != self.height {
            return Err(Error::ShapeMismatch(format!(
                "cannot paste {}x{}x{} into {}x{}x{}",
                part.classes, part.height, part.width, self.classes, self.height, self.width
            )));
        }
        check_column_range(x_start, part.width, self.width)?;
        let plane = self.plane();
        for c in 0..self.classes {
            for y in 0..self.height {
                let dst = c * plane + y * self.width + x_start;
                let src = c * part.plane() + y * part.width;
                self.values[dst..dst + part.width]
                    .copy_from_slice(&part.values[src..src + part.width]);
            }
        }
        Ok(())
    }
}

pub(crate) fn check_column_range(x_start: usize, width: usize, canvas: usize) -> Result<()> {
    if width == 0 || x_start.checked_add(width).is_none_or(|end| end > canvas) {
        return Err(Error::InvalidGeometry(format!(
            "columns {x_start}..{} exceed width {canvas}",
            x_start.saturating_add(width)
        )));
    }
    Ok(())
}

/// Dense `H x W` class-id grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    labels: Vec<Label>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, labels: Vec<Label>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidInput(format!(
                "label map must be non-empty, got {height}x{width}"
            )));
        }
        if labels.len() != height * width {
            return Err(Error::InvalidInput(format!(
                "label map length {} does not match {height}x{width}",
                labels.len()
            )));
        }
        Ok(Self {
            height,
            width,
            labels,
        })
    }

    pub fn filled(height: usize, width: usize, label: Label) -> Result<Self> {
        Self::new(height, width, vec![label; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn into_labels(self) -> Vec<Label> {
        self.labels
    }

    pub fn get(&self, y: usize, x: usize) -> Label {
        self.labels[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, label: Label) {
        self.labels[y * self.width + x] = label;
    }

    pub fn same_shape(&self, height: usize, width: usize) -> bool {
        self.height == height && self.width == width
    }

    /// Checks every label is below `classes`, optionally admitting
    /// [`IGNORE_LABEL`].
    pub fn check_classes(&self, classes: usize, allow_ignore: bool) -> Result<()> {
        let bad = self
            .labels
            .iter()
            .position(|&l| (l as usize) >= classes && !(allow_ignore && l == IGNORE_LABEL));
        match bad {
            Some(k) => Err(Error::InvalidInput(format!(
                "label {} at ({}, {}) is not below class count {classes}",
                self.labels[k],
                k / self.width,
                k % self.width
            ))),
            None => Ok(()),
        }
    }

    pub fn crop_columns(&self, x_start: usize, width: usize) -> Result<LabelMap> {
        check_column_range(x_start, width, self.width)?;
        let labels = self
            .labels
            .chunks_exact(self.width)
            .flat_map(|row| row[x_start..x_start + width].iter().copied())
            .collect();
        Ok(LabelMap {
            height: self.height,
            width,
            labels,
        })
    }
}

/// Softmax probabilities of one pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidInput("empty probability vector".into()));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidInput(
                "probabilities must lie in [0, 1]".into(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidInput(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(Self(probs))
    }

    /// Uniform distribution over `classes` entries.
    pub fn uniform(classes: usize) -> Self {
        Self(vec![1.0 / classes as f64; classes])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Ordered, duplicate-free class names.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassCatalog {
    names: Vec<String>,
}

const CITYSCAPES_19: [&str; 19] = [
    "road",
    "sidewalk",
    "building",
    "wall",
    "fence",
    "pole",
    "traffic light",
    "traffic sign",
    "vegetation",
    "terrain",
    "sky",
    "person",
    "rider",
    "car",
    "truck",
    "bus",
    "train",
    "motorcycle",
    "bicycle",
];

impl ClassCatalog {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "class catalog needs at least 2 names, got {}",
                names.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate class name `{name}`")));
            }
        }
        Ok(Self { names })
    }

    /// The 19-class street-scene vocabulary used by panoramic benchmarks.
    pub fn cityscapes() -> Self {
        Self {
            names: CITYSCAPES_19.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Catalog named `class_0 .. class_{n-1}`.
    pub fn numbered(classes: usize) -> Result<Self> {
        Self::new((0..classes).map(|c| format!("class_{c}")))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, class: usize) -> Option<&str> {
        self.names.get(class).map(String::as_str)
    }

    /// Fails unless the catalog has exactly `classes` entries.
    pub fn check_channels(&self, classes: usize) -> Result<()> {
        if self.names.len() != classes {
            return Err(Error::ShapeMismatch(format!(
                "catalog has {} classes but data has {classes} channels",
                self.names.len()
            )));
        }
        Ok(())
    }
}

/// Numerically stable softmax of one pixel's logits.
pub fn softmax_pixel(logits: &[f64]) -> Result<ProbVector> {
    if logits.is_empty() {
        return Err(Error::InvalidInput("empty logit vector".into()));
    }
    if let Some(v) = logits.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite logit {v}")));
    }
    let mut probs = vec![0.0; logits.len()];
    softmax_into(logits.iter().copied(), &mut probs);
    Ok(ProbVector(probs))
}

/// Max-subtracted softmax written into `out`; inputs are assumed finite.
pub(crate) fn softmax_into(logits: impl Iterator<Item = f64> + Clone, out: &mut [f64]) {
    let max = logits.clone().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (slot, v) in out.iter_mut().zip(logits) {
        *slot = (v - max).exp();
        sum += *slot;
    }
    for slot in out.iter_mut() {
        *slot /= sum;
    }
}

/// Per-pixel argmax of a logits grid, ties to the lowest class.
pub fn argmax_map(grid: &LogitsGrid) -> LabelMap {
    let plane = grid.plane();
    let mut best = grid.values[..plane].to_vec();
    let mut labels = vec![0 as Label; plane];
    for c in 1..grid.classes {
        let scores = &grid.values[c * plane..(c + 1) * plane];
        for ((b, l), &v) in best.iter_mut().zip(labels.iter_mut()).zip(scores) {
            if v > *b {
                *b = v;
                *l = c as Label;
            }
        }
    }
    LabelMap {
        height: grid.height,
        width: grid.width,
        labels,
    }
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn shannon_entropy(p: &ProbVector) -> f64 {
    entropy_of(&p.0)
}

pub(crate) fn entropy_of(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// Largest probability minus the second largest.
pub fn top2_gap(p: &ProbVector) -> f64 {
    gap_of(&p.0)
}

pub(crate) fn gap_of(probs: &[f64]) -> f64 {
    let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &v in probs {
        if v > first {
            second = first;
            first = v;
        } else if v > second {
            second = v;
        }
    }
    if second == f64::NEG_INFINITY {
        return 0.0;
    }
    first - second
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn softmax_symmetric_pair() {
        let p = softmax_pixel(&[0.0, 0.0]).unwrap();
        assert_eq!(p.as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_three_way() {
        let p = softmax_pixel(&[1.0, 1.0, 2.0]).unwrap();
        let expected = [0.2119, 0.2119, 0.5761];
        for (a, b) in p.as_slice().iter().zip(expected) {
            assert!(close(*a, b, 1e-3), "{a} vs {b}");
        }
    }

    #[test]
    fn softmax_large_logit_does_not_overflow() {
        let p = softmax_pixel(&[1000.0, 0.0]).unwrap();
        assert_eq!(p.as_slice()[0], 1.0);
        assert!(p.as_slice()[1] < 1e-300);
    }

    #[test]
    fn softmax_rejects_non_finite() {
        assert!(matches!(
            softmax_pixel(&[f64::NAN, 0.0]),
            Err(Error::InvalidInput(_))
        ));
        assert!(softmax_pixel(&[f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn argmax_simple_and_tie() {
        let g = LogitsGrid::new(2, 1, 1, vec![0.1, 0.9]).unwrap();
        assert_eq!(argmax_map(&g).labels(), &[1]);
        let g = LogitsGrid::new(2, 1, 1, vec![0.5, 0.5]).unwrap();
        assert_eq!(argmax_map(&g).labels(), &[0]);
    }

    #[test]
    fn entropy_examples() {
        let uniform = ProbVector::uniform(19);
        assert!(close(shannon_entropy(&uniform), 19f64.ln(), 1e-4));
        assert!(close(shannon_entropy(&uniform), 2.9444, 1e-4));
        let one_hot = ProbVector::new(vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(shannon_entropy(&one_hot), 0.0);
        let p = ProbVector::new(vec![0.5, 0.3, 0.2]).unwrap();
        assert!(close(shannon_entropy(&p), 1.0297, 1e-3));
    }

    #[test]
    fn gap_examples() {
        let p = ProbVector::new(vec![0.5, 0.3, 0.2]).unwrap();
        assert!(close(top2_gap(&p), 0.2, 1e-12));
        assert_eq!(top2_gap(&ProbVector::uniform(4)), 0.0);
        let p = ProbVector::new(vec![0.7, 0.2, 0.1]).unwrap();
        assert!(close(top2_gap(&p), 0.5, 1e-12));
        let p = ProbVector::new(vec![0.1, 0.45, 0.45]).unwrap();
        assert_eq!(top2_gap(&p), 0.0);
    }

    #[test]
    fn grid_rejects_bad_construction() {
        assert!(LogitsGrid::new(1, 1, 1, vec![0.0]).is_err());
        assert!(LogitsGrid::new(2, 1, 1, vec![0.0]).is_err());
        assert!(LogitsGrid::new(2, 1, 1, vec![0.0, f32::NAN]).is_err());
        assert!(LogitsGrid::new(2, 0, 1, vec![]).is_err());
    }

    #[test]
    fn one_hot_round_trips_through_argmax() {
        let labels = LabelMap::new(2, 3, vec![0, 1, 2, 2, 1, 0]).unwrap();
        let g = LogitsGrid::one_hot(&labels, 3).unwrap();
        assert_eq!(argmax_map(&g), labels);
        assert!(LogitsGrid::one_hot(&labels, 2).is_err());
    }

    #[test]
    fn catalog_rules() {
        assert_eq!(ClassCatalog::cityscapes().len(), 19);
        assert!(ClassCatalog::new(["a", "a"]).is_err());
        assert!(ClassCatalog::new(["a"]).is_err());
        let cat = ClassCatalog::new(["a", "b"]).unwrap();
        assert!(cat.check_channels(2).is_ok());
        assert!(cat.check_channels(3).is_err());
    }

    #[test]
    fn label_class_check_honours_ignore() {
        let m = LabelMap::new(1, 2, vec![1, IGNORE_LABEL]).unwrap();
        assert!(m.check_classes(2, true).is_ok());
        assert!(m.check_classes(2, false).is_err());
    }

    #[test]
    fn crop_and_paste_round_trip() {
        let values: Vec<f32> = (0..2 * 3 * 5).map(|v| v as f32).collect();
        let g = LogitsGrid::new(2, 3, 5, values).unwrap();
        let part = g.crop_columns(1, 3).unwrap();
        assert_eq!(part.get(1, 2, 0), g.get(1, 2, 1));
        let mut canvas = LogitsGrid::filled(2, 3, 5, 0.0).unwrap();
        canvas.paste_columns(0, &g.crop_columns(0, 5).unwrap()).unwrap();
        assert_eq!(canvas, g);
        assert!(g.crop_columns(3, 3).is_err());
    }
}
