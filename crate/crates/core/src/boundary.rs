//! Boundary maps, overlap-region boundary refinement and the boundary losses.
//!
//! Refinement walks every boundary pixel `p` of the left window's TA map:
//!
//! * (a) `p` is also a boundary in the right window's TA map and in the SAM
//!   map: keep `p`.
//! * (b) otherwise look up the nearest SAM boundary pixel `q` in `p`'s column
//!   (ties prefer the upper one). If the top-2 softmax gap at `q` is below
//!   `alpha` in either window, `q` replaces `p`.
//! * (c) otherwise, or if the column has no SAM boundary, keep `p`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{check_column_range, gap_of, softmax_into, LabelMap, LogitsGrid};
use crate::masks::InstanceMaskSet;

/// Binary boundary grid, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundaryMap {
    height: usize,
    width: usize,
    on: Vec<bool>,
}

impl BoundaryMap {
    pub fn new(height: usize, width: usize, on: Vec<bool>) -> Result<Self> {
        if on.len() != height * width {
            return Err(Error::InvalidInput(format!(
                "boundary map length {} does not match {height}x{width}",
                on.len()
            )));
        }
        Ok(Self { height, width, on })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            on: vec![false; height * width],
        }
    }

    /// Map with the listed `(y, x)` pixels set.
    pub fn from_points(height: usize, width: usize, points: &[(usize, usize)]) -> Result<Self> {
        let mut map = Self::empty(height, width);
        for &(y, x) in points {
            if y >= height || x >= width {
                return Err(Error::InvalidInput(format!(
                    "point ({y}, {x}) outside {height}x{width}"
                )));
            }
            map.on[y * width + x] = true;
        }
        Ok(map)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.on
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.on[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, on: bool) {
        self.on[y * self.width + x] = on;
    }

    /// Number of boundary pixels.
    pub fn count(&self) -> usize {
        self.on.iter().filter(|&&b| b).count()
    }

    pub fn points(&self) -> Vec<(usize, usize)> {
        self.on
            .iter()
            .enumerate()
            .filter_map(|(k, &b)| b.then_some((k / self.width, k % self.width)))
            .collect()
    }

    pub fn crop_columns(&self, x_start: usize, width: usize) -> Result<BoundaryMap> {
        check_column_range(x_start, width, self.width)?;
        let on = self
            .on
            .chunks_exact(self.width)
            .flat_map(|row| row[x_start..x_start + width].iter().copied())
            .collect();
        Ok(BoundaryMap {
            height: self.height,
            width,
            on,
        })
    }

    fn same_frame(&self, other: &BoundaryMap) -> bool {
        self.height == other.height && self.width == other.width
    }
}

fn four_neighbors(y: usize, x: usize, h: usize, w: usize) -> impl Iterator<Item = (usize, usize)> {
    let up = (y > 0).then(|| (y - 1, x));
    let down = (y + 1 < h).then(|| (y + 1, x));
    let left = (x > 0).then(|| (y, x - 1));
    let right = (x + 1 < w).then(|| (y, x + 1));
    [up, down, left, right].into_iter().flatten()
}

/// A pixel is a boundary iff an in-bounds 4-neighbour has another label.
pub fn boundaries_from_labels(labels: &LabelMap) -> BoundaryMap {
    let (h, w) = (labels.height(), labels.width());
    let l = labels.labels();
    let on = (0..h * w)
        .map(|k| {
            let (y, x) = (k / w, k % w);
            four_neighbors(y, x, h, w).any(|(ny, nx)| l[ny * w + nx] != l[k])
        })
        .collect();
    BoundaryMap {
        height: h,
        width: w,
        on,
    }
}

/// Union over masks of mask pixels with an in-bounds 4-neighbour outside
/// the same mask.
pub fn boundaries_from_masks(masks: &InstanceMaskSet) -> BoundaryMap {
    let (h, w) = (masks.height(), masks.width());
    let mut on = vec![false; h * w];
    for mask in masks.iter() {
        let bits = mask.bits();
        for k in mask.pixels() {
            let (y, x) = (k / w, k % w);
            if four_neighbors(y, x, h, w).any(|(ny, nx)| !bits[ny * w + nx]) {
                on[k] = true;
            }
        }
    }
    BoundaryMap {
        height: h,
        width: w,
        on,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    pub alpha: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self { alpha: 0.3 }
    }
}

impl RefineConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        let cfg = Self { alpha };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `alpha = 0` disables relocation entirely and is accepted.
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::config("alpha", "must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Which branch decided a TA boundary pixel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RefineCounts {
    pub agreed: usize,
    pub relocated: usize,
    pub retained: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Refinement {
    pub refined: BoundaryMap,
    pub counts: RefineCounts,
}

/// Nearest set pixel to row `y` in column `x`, preferring the upper one on
/// a tie.
/// For every pixel, the row of the nearest `map` pixel in the same column;
/// equal distances resolve upward.
fn nearest_in_columns(map: &BoundaryMap) -> Vec<Option<usize>> {
    let (h, w) = (map.height, map.width);
    let mut nearest = vec![None; h * w];
    for x in 0..w {
        let mut above = None;
        for y in 0..h {
            if map.get(y, x) {
                above = Some(y);
            }
            nearest[y * w + x] = above;
        }
        let mut below: Option<usize> = None;
        for y in (0..h).rev() {
            if map.get(y, x) {
                below = Some(y);
            }
            let k = y * w + x;
            if let Some(b) = below {
                nearest[k] = match nearest[k] {
                    Some(a) if y - a <= b - y => Some(a),
                    _ => Some(b),
                };
            }
        }
    }
    nearest
}

pub fn refine_boundary(
    b_ta_i: &BoundaryMap,
    b_ta_j: &BoundaryMap,
    b_sam: &BoundaryMap,
    logits_i: &LogitsGrid,
    logits_j: &LogitsGrid,
    cfg: &RefineConfig,
) -> Result<BoundaryMap> {
    refine_boundary_counted(b_ta_i, b_ta_j, b_sam, logits_i, logits_j, cfg).map(|r| r.refined)
}

/// [`refine_boundary`] that also reports how each TA pixel was resolved.
pub fn refine_boundary_counted(
    b_ta_i: &BoundaryMap,
    b_ta_j: &BoundaryMap,
    b_sam: &BoundaryMap,
    logits_i: &LogitsGrid,
    logits_j: &LogitsGrid,
    cfg: &RefineConfig,
) -> Result<Refinement> {
    cfg.validate()?;
    let (h, w) = (b_ta_i.height, b_ta_i.width);
    if !b_ta_i.same_frame(b_ta_j) || !b_ta_i.same_frame(b_sam) {
        return Err(Error::ShapeMismatch(format!(
            "boundary maps differ: {}x{}, {}x{}, {}x{}",
            h, w, b_ta_j.height, b_ta_j.width, b_sam.height, b_sam.width
        )));
    }
    for (name, g) in [("logits_i", logits_i), ("logits_j", logits_j)] {
        if g.height() != h || g.width() != w {
            return Err(Error::ShapeMismatch(format!(
                "{name} is {}x{}, boundary maps are {h}x{w}",
                g.height(),
                g.width()
            )));
        }
    }
    if logits_i.classes() != logits_j.classes() {
        return Err(Error::ShapeMismatch("logits class counts differ".into()));
    }

    let classes = logits_i.classes();
    let mut scores = Vec::with_capacity(classes);
    let mut probs = vec![0.0; classes];
    let mut gap_at = |g: &LogitsGrid, k: usize| {
        g.flat_pixel_into(k, &mut scores);
        softmax_into(scores.iter().map(|&v| f64::from(v)), &mut probs);
        gap_of(&probs)
    };

    let nearest = nearest_in_columns(b_sam);
    let mut min_gap = vec![f64::NAN; h * w];
    let mut refined = BoundaryMap::empty(h, w);
    let mut counts = RefineCounts::default();
    for (y, x) in b_ta_i.points() {
        if b_ta_j.get(y, x) && b_sam.get(y, x) {
            refined.set(y, x, true);
            counts.agreed += 1;
            continue;
        }
        if let Some(qy) = nearest[y * w + x] {
            let q = qy * w + x;
            if min_gap[q].is_nan() {
                min_gap[q] = gap_at(logits_i, q).min(gap_at(logits_j, q));
            }
            if min_gap[q] < cfg.alpha {
                refined.set(qy, x, true);
                counts.relocated += 1;
                continue;
            }
        }
        refined.set(y, x, true);
        counts.retained += 1;
    }
    Ok(Refinement { refined, counts })
}

fn mismatches(a: &BoundaryMap, b: &BoundaryMap) -> usize {
    a.on.iter().zip(&b.on).filter(|(x, y)| x != y).count()
}

fn check_loss_frames(b_ref: &BoundaryMap, others: &[&BoundaryMap]) -> Result<f64> {
    if others.iter().any(|o| !b_ref.same_frame(o)) {
        return Err(Error::ShapeMismatch(
            "boundary maps for the loss differ in size".into(),
        ));
    }
    let c_o = b_ref.count();
    if c_o == 0 {
        return Err(Error::Degenerate(
            "refined boundary map has no boundary pixels".into(),
        ));
    }
    Ok(c_o as f64)
}

/// Per-pixel disagreement of both TA maps with the refined map, normalised
/// by the refined boundary count.
pub fn boundary_loss_ta(b_ref: &BoundaryMap, b_ta_i: &BoundaryMap, b_ta_j: &BoundaryMap) -> Result<f64> {
    let c_o = check_loss_frames(b_ref, &[b_ta_i, b_ta_j])?;
    Ok((mismatches(b_ref, b_ta_i) + mismatches(b_ref, b_ta_j)) as f64 / c_o)
}

pub fn boundary_loss_student(b_ref: &BoundaryMap, b_s: &BoundaryMap) -> Result<f64> {
    let c_o = check_loss_frames(b_ref, &[b_s])?;
    Ok(mismatches(b_ref, b_s) as f64 / c_o)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masks::BinaryMask;

    #[test]
    fn label_boundaries() {
        let flat = LabelMap::filled(3, 3, 4).unwrap();
        assert_eq!(boundaries_from_labels(&flat).count(), 0);
        let row = LabelMap::new(1, 4, vec![0, 0, 1, 1]).unwrap();
        assert_eq!(
            boundaries_from_labels(&row).bits(),
            &[false, true, true, false]
        );
    }

    #[test]
    fn mask_boundaries() {
        let full = InstanceMaskSet::new(3, 3, vec![BinaryMask::rect(3, 3, 0, 3, 0, 3)]).unwrap();
        assert_eq!(boundaries_from_masks(&full).count(), 0);

        let centered = InstanceMaskSet::new(5, 5, vec![BinaryMask::rect(5, 5, 1, 4, 1, 4)]).unwrap();
        let b = boundaries_from_masks(&centered);
        assert_eq!(b.count(), 8);
        assert!(!b.get(2, 2));
        assert!(b.get(1, 1) && b.get(3, 3) && b.get(1, 2));

        let a = BinaryMask::rect(6, 6, 0, 2, 0, 2);
        let c = BinaryMask::rect(6, 6, 3, 6, 3, 6);
        let ba = boundaries_from_masks(&InstanceMaskSet::new(6, 6, vec![a.clone()]).unwrap());
        let bc = boundaries_from_masks(&InstanceMaskSet::new(6, 6, vec![c.clone()]).unwrap());
        let both = boundaries_from_masks(&InstanceMaskSet::new(6, 6, vec![a, c]).unwrap());
        let union: Vec<bool> = ba.bits().iter().zip(bc.bits()).map(|(x, y)| *x || *y).collect();
        assert_eq!(both.bits(), union.as_slice());
    }

    /// Logits with top-2 softmax gap `gap` over two classes at every pixel.
    fn gap_grid(h: usize, w: usize, gap: f64) -> LogitsGrid {
        // p0 - p1 = gap with p0 + p1 = 1 -> logit difference ln(p0 / p1)
        let p0 = (1.0 + gap) / 2.0;
        let diff = (p0 / (1.0 - p0)).ln() as f32;
        let mut values = vec![diff; h * w];
        values.extend(vec![0.0; h * w]);
        LogitsGrid::new(2, h, w, values).unwrap()
    }

    #[test]
    fn triple_agreement_keeps_everything() {
        let b = BoundaryMap::from_points(6, 6, &[(1, 1), (2, 3), (4, 5)]).unwrap();
        let g = gap_grid(6, 6, 0.0);
        let r = refine_boundary(&b, &b, &b, &g, &g, &RefineConfig::default()).unwrap();
        assert_eq!(r, b);
    }

    #[test]
    fn relocation_when_gap_is_small() {
        let ta_i = BoundaryMap::from_points(8, 6, &[(2, 3)]).unwrap();
        let ta_j = BoundaryMap::empty(8, 6);
        let sam = BoundaryMap::from_points(8, 6, &[(5, 3)]).unwrap();
        let li = gap_grid(8, 6, 0.1);
        let lj = gap_grid(8, 6, 0.5);
        let out = refine_boundary_counted(&ta_i, &ta_j, &sam, &li, &lj, &RefineConfig::default()).unwrap();
        assert!(out.refined.get(5, 3));
        assert!(!out.refined.get(2, 3));
        assert_eq!(out.counts.relocated, 1);
    }

    #[test]
    fn retention_when_gaps_are_large() {
        let ta_i = BoundaryMap::from_points(8, 6, &[(2, 3)]).unwrap();
        let ta_j = BoundaryMap::empty(8, 6);
        let sam = BoundaryMap::from_points(8, 6, &[(5, 3)]).unwrap();
        let li = gap_grid(8, 6, 0.5);
        let lj = gap_grid(8, 6, 0.4);
        let out = refine_boundary(&ta_i, &ta_j, &sam, &li, &lj, &RefineConfig::default()).unwrap();
        assert_eq!(out.points(), vec![(2, 3)]);
    }

    #[test]
    fn no_sam_pixel_in_column_retains() {
        let ta_i = BoundaryMap::from_points(4, 4, &[(1, 1)]).unwrap();
        let sam = BoundaryMap::from_points(4, 4, &[(1, 2)]).unwrap();
        let g = gap_grid(4, 4, 0.0);
        let out = refine_boundary(&ta_i, &BoundaryMap::empty(4, 4), &sam, &g, &g, &RefineConfig::default()).unwrap();
        assert_eq!(out.points(), vec![(1, 1)]);
    }

    #[test]
    fn vertical_tie_prefers_upper() {
        let ta_i = BoundaryMap::from_points(7, 1, &[(3, 0)]).unwrap();
        let sam = BoundaryMap::from_points(7, 1, &[(1, 0), (5, 0)]).unwrap();
        let g = gap_grid(7, 1, 0.0);
        let out = refine_boundary(&ta_i, &BoundaryMap::empty(7, 1), &sam, &g, &g, &RefineConfig::default()).unwrap();
        assert_eq!(out.points(), vec![(1, 0)]);
    }

    #[test]
    fn alpha_zero_is_identity_on_ta_i() {
        let ta_i = BoundaryMap::from_points(5, 5, &[(0, 0), (2, 2), (4, 1)]).unwrap();
        let sam = BoundaryMap::from_points(5, 5, &[(3, 0), (0, 2), (1, 1)]).unwrap();
        let g = gap_grid(5, 5, 0.0);
        let cfg = RefineConfig::new(0.0).unwrap();
        let out = refine_boundary(&ta_i, &BoundaryMap::empty(5, 5), &sam, &g, &g, &cfg).unwrap();
        assert_eq!(out, ta_i);
    }

    #[test]
    fn refine_rejects_mismatch_and_bad_alpha() {
        let a = BoundaryMap::empty(3, 3);
        let b = BoundaryMap::empty(3, 4);
        let g = gap_grid(3, 3, 0.0);
        assert!(matches!(
            refine_boundary(&a, &b, &a, &g, &g, &RefineConfig::default()),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(RefineConfig::new(1.5).is_err());
        assert!(RefineConfig::new(-0.1).is_err());
    }

    #[test]
    fn ta_loss_examples() {
        let pts = [(0, 0), (0, 1), (1, 0), (1, 1)];
        let b_ref = BoundaryMap::from_points(10, 10, &pts).unwrap();
        assert_eq!(boundary_loss_ta(&b_ref, &b_ref, &b_ref).unwrap(), 0.0);

        let one_off = BoundaryMap::from_points(10, 10, &pts[..3]).unwrap();
        let two_off = BoundaryMap::from_points(10, 10, &[(0, 0), (0, 1), (1, 0), (1, 1), (5, 5), (6, 6)]).unwrap();
        assert!((boundary_loss_ta(&b_ref, &one_off, &two_off).unwrap() - 0.75).abs() < 1e-12);

        let empty = BoundaryMap::empty(10, 10);
        assert_eq!(boundary_loss_ta(&b_ref, &empty, &empty).unwrap(), 2.0);
        assert!(matches!(
            boundary_loss_ta(&empty, &b_ref, &b_ref),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn student_loss_examples() {
        let pts = [(0, 0), (0, 1), (1, 0), (1, 1)];
        let b_ref = BoundaryMap::from_points(10, 10, &pts).unwrap();
        assert_eq!(boundary_loss_student(&b_ref, &b_ref).unwrap(), 0.0);
        let two_off = BoundaryMap::from_points(10, 10, &pts[..2]).unwrap();
        assert_eq!(boundary_loss_student(&b_ref, &two_off).unwrap(), 0.5);
        let all = BoundaryMap::new(10, 10, vec![true; 100]).unwrap();
        assert_eq!(boundary_loss_student(&b_ref, &all).unwrap(), 24.0);
    }
}
