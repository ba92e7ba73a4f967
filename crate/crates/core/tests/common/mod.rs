//! Independent reference implementations used by the integration and
//! acceptance tests. Nothing here calls into the crate's algorithms; only the
//! plain data types are shared.

#![allow(dead_code)]

use panodar::masks::{BinaryMask, InstanceMaskSet};
use panodar::synth::SplitMix64;
use panodar::{LabelMap, LogitsGrid};

pub fn random_logits(rng: &mut SplitMix64, classes: usize, h: usize, w: usize, spread: f64) -> LogitsGrid {
    let values = (0..classes * h * w)
        .map(|_| ((rng.next_f64() * 2.0 - 1.0) * spread) as f32)
        .collect();
    LogitsGrid::new(classes, h, w, values).unwrap()
}

pub fn random_labels(rng: &mut SplitMix64, classes: usize, h: usize, w: usize) -> LabelMap {
    let labels = (0..h * w).map(|_| rng.below(classes as u64) as u16).collect();
    LabelMap::new(h, w, labels).unwrap()
}

/// Rectangles, blobs and scattered pixel sets, all non-empty.
pub fn random_masks(rng: &mut SplitMix64, h: usize, w: usize, max_masks: usize) -> InstanceMaskSet {
    let n = rng.below(max_masks as u64 + 1) as usize;
    let mut masks = Vec::with_capacity(n);
    while masks.len() < n {
        let mut bits = vec![false; h * w];
        match rng.below(3) {
            0 => {
                let y0 = rng.below(h as u64) as usize;
                let x0 = rng.below(w as u64) as usize;
                let y1 = y0 + 1 + rng.below((h - y0) as u64) as usize;
                let x1 = x0 + 1 + rng.below((w - x0) as u64) as usize;
                for y in y0..y1 {
                    for x in x0..x1 {
                        bits[y * w + x] = true;
                    }
                }
            }
            1 => {
                let cy = rng.below(h as u64) as f64;
                let cx = rng.below(w as u64) as f64;
                let r = 1.0 + rng.next_f64() * (h.max(w) as f64 / 2.0);
                for y in 0..h {
                    for x in 0..w {
                        let d = ((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)).sqrt();
                        bits[y * w + x] = d <= r;
                    }
                }
            }
            _ => {
                let p = rng.next_f64() * 0.5;
                for b in bits.iter_mut() {
                    *b = rng.next_f64() < p;
                }
            }
        }
        if bits.iter().any(|&b| b) {
            masks.push(BinaryMask::new(h, w, bits).unwrap());
        }
    }
    InstanceMaskSet::new(h, w, masks).unwrap()
}

fn pixel_scores(logits: &LogitsGrid, y: usize, x: usize) -> Vec<f64> {
    (0..logits.classes()).map(|c| logits.get(c, y, x) as f64).collect()
}

fn first_max(scores: &[f64]) -> usize {
    let mut best = 0;
    for c in 0..scores.len() {
        if scores[c] > scores[best] {
            best = c;
        }
    }
    best
}

fn entropy_nats(scores: &[f64]) -> f64 {
    let m = scores.iter().cloned().fold(f64::MIN, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter()
        .map(|e| e / z)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum()
}

pub struct OracleFusion {
    pub labels: Vec<u16>,
    pub weights: Vec<f32>,
    /// Per mask: assigned label and whether the coverage rule fired.
    pub assignments: Vec<(u16, bool)>,
}

/// Brute-force mask fusion written from the prose description:
/// per mask, the most frequent TA label wins if its coverage rate reaches
/// the area-dependent threshold; otherwise the lowest mean entropy among
/// the three most frequent labels wins. Each pixel belongs to the smallest
/// mask covering it (ties: the later mask).
pub fn oracle_fuse(
    masks: &InstanceMaskSet,
    logits: &LogitsGrid,
    theta_default: f64,
    theta_medium: f64,
    medium: (usize, usize),
) -> OracleFusion {
    let (h, w) = (logits.height(), logits.width());
    let mut assignments = Vec::new();
    for m in masks.iter() {
        let mut counts = vec![0usize; logits.classes()];
        let mut area = 0;
        for y in 0..h {
            for x in 0..w {
                if m.get(y, x) {
                    counts[first_max(&pixel_scores(logits, y, x))] += 1;
                    area += 1;
                }
            }
        }
        let mut ranked: Vec<usize> = (0..counts.len()).filter(|&c| counts[c] > 0).collect();
        ranked.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
        let top = ranked[0];
        let theta = if area >= medium.0 && area <= medium.1 {
            theta_medium
        } else {
            theta_default
        };
        if counts[top] as f64 / area as f64 >= theta {
            assignments.push((top as u16, true));
            continue;
        }
        let mut best: Option<(f64, usize)> = None;
        for &label in ranked.iter().take(3) {
            let mut sum = 0.0;
            let mut n = 0;
            for y in 0..h {
                for x in 0..w {
                    let s = pixel_scores(logits, y, x);
                    if m.get(y, x) && first_max(&s) == label {
                        sum += entropy_nats(&s);
                        n += 1;
                    }
                }
            }
            let mean = sum / n as f64;
            if best.is_none_or(|(b, l)| mean < b || (mean == b && label < l)) {
                best = Some((mean, label));
            }
        }
        assignments.push((best.unwrap().1 as u16, false));
    }

    let mut labels = Vec::with_capacity(h * w);
    let mut weights = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let mut owner: Option<usize> = None;
            for (i, m) in masks.iter().enumerate() {
                if !m.get(y, x) {
                    continue;
                }
                owner = match owner {
                    Some(o) if masks.masks()[o].area() < m.area() => Some(o),
                    _ => Some(i),
                };
            }
            match owner {
                Some(o) => {
                    labels.push(assignments[o].0);
                    weights.push(if assignments[o].1 { 1.0 } else { 0.0 });
                }
                None => {
                    labels.push(first_max(&pixel_scores(logits, y, x)) as u16);
                    weights.push(0.0);
                }
            }
        }
    }
    OracleFusion {
        labels,
        weights,
        assignments,
    }
}

/// Most frequent TA argmax label of a mask, ties to the lower label.
pub fn majority_label(mask: &BinaryMask, logits: &LogitsGrid) -> u16 {
    let mut counts = vec![0usize; logits.classes()];
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(y, x) {
                counts[first_max(&pixel_scores(logits, y, x))] += 1;
            }
        }
    }
    let mut best = 0;
    for c in 0..counts.len() {
        if counts[c] > counts[best] {
            best = c;
        }
    }
    best as u16
}

/// mIoU by direct set counting per class; classes absent from both maps are
/// skipped, gt pixels labelled 255 are ignored.
pub fn oracle_miou(gt: &[u16], pred: &[u16], classes: usize) -> f64 {
    let mut sum = 0.0;
    let mut n = 0;
    for c in 0..classes as u16 {
        let mut inter = 0u64;
        let mut union = 0u64;
        for (&g, &p) in gt.iter().zip(pred) {
            if g == 255 {
                continue;
            }
            let (a, b) = (g == c, p == c);
            inter += (a && b) as u64;
            union += (a || b) as u64;
        }
        if union > 0 {
            sum += inter as f64 / union as f64;
            n += 1;
        }
    }
    sum / n as f64
}

/// Boundary pixels of a label map by direct neighbour comparison.
pub fn oracle_boundaries(labels: &LabelMap) -> Vec<bool> {
    let (h, w) = (labels.height(), labels.width());
    let mut out = vec![false; h * w];
    for y in 0..h {
        for x in 0..w {
            let l = labels.get(y, x);
            let diff = (y > 0 && labels.get(y - 1, x) != l)
                || (y + 1 < h && labels.get(y + 1, x) != l)
                || (x > 0 && labels.get(y, x - 1) != l)
                || (x + 1 < w && labels.get(y, x + 1) != l);
            out[y * w + x] = diff;
        }
    }
    out
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
