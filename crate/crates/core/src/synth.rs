//! Deterministic synthetic panoramas for end-to-end checks.
//!
//! A scene is a labelled partition of the canvas, TA logits obtained by
//! corrupting the ground truth, instance masks taken from the connected
//! components of the ground truth, and the boundary map of those masks.
//!
//! All randomness comes from [`SplitMix64`], so a [`SceneSpec`] yields the
//! same scene on every platform.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::boundary::{boundaries_from_labels, boundaries_from_masks, BoundaryMap};
use crate::error::{Error, Result};
use crate::fusion::{fuse_window, FusionConfig};
use crate::grid::{argmax_map, ClassCatalog, Label, LabelMap, LogitsGrid, SATURATED_LOGIT};
use crate::masks::{BinaryMask, InstanceMaskSet};
use crate::metrics::ConfusionMatrix;

/// SplitMix64 (Steele, Lea, Flood 2014) with the reference constants.
///
/// `state += 0x9E3779B97F4A7C15`, then the output is mixed with
/// multipliers `0xBF58476D1CE4E5B9` and `0x94D049BB133111EB` and shifts
/// 30, 27, 31.
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` from the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform-ish integer in `0..n` by 128-bit multiply-shift.
    pub fn below(&mut self, n: u64) -> u64 {
        ((u128::from(self.next_u64()) * u128::from(n)) >> 64) as u64
    }
}

// Independent generator streams per generation phase.
const STREAM_LAYOUT: u64 = 0x6c61_796f_7574;
const STREAM_NOISE: u64 = 0x006e_6f69_7365;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    /// Flip the argmax of sampled non-boundary pixels to another class.
    #[default]
    InteriorFlip,
    /// Mix sampled pixels' probabilities toward a random distribution.
    LogitBlur,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    /// Nearest-seed partition with irregular boundaries.
    #[default]
    Voronoi,
    /// Equal-width vertical stripes, one region each; easy to check by hand.
    Stripes,
}

fn default_jitter() -> i32 {
    0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub classes: usize,
    pub region_count: usize,
    pub seed: u64,
    #[serde(default)]
    pub noise_rate: f64,
    #[serde(default)]
    pub noise_mode: NoiseMode,
    /// Positive values dilate each mask by that many pixels, negative erode.
    #[serde(default = "default_jitter")]
    pub mask_jitter: i32,
    /// Extra corruption toward the left and right canvas edges:
    /// `rate * (1 + gradient * d)` with `d` from 0 at the centre to 1 at the
    /// edges.
    #[serde(default)]
    pub distortion_gradient: f64,
    #[serde(default)]
    pub layout: Layout,
}

impl SceneSpec {
    /// Noise-free scene with the given geometry.
    pub fn clean(width: usize, height: usize, classes: usize, region_count: usize, seed: u64) -> Self {
        Self {
            width,
            height,
            classes,
            region_count,
            seed,
            noise_rate: 0.0,
            noise_mode: NoiseMode::InteriorFlip,
            mask_jitter: 0,
            distortion_gradient: 0.0,
            layout: Layout::Voronoi,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.width == 0 || self.height == 0 {
            return bad(format!("scene must be non-empty, got {}x{}", self.width, self.height));
        }
        if !(2..=255).contains(&self.classes) {
            return bad(format!("classes must be in 2..=255, got {}", self.classes));
        }
        if self.region_count == 0 {
            return bad("region_count must be at least 1".into());
        }
        if self.region_count > self.width || self.region_count > self.width * self.height {
            return bad(format!(
                "{} regions do not fit a {}x{} canvas",
                self.region_count, self.width, self.height
            ));
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return bad(format!("noise_rate {} must lie in [0, 1)", self.noise_rate));
        }
        if !self.distortion_gradient.is_finite() || self.distortion_gradient < 0.0 {
            return bad("distortion_gradient must be finite and non-negative".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene {
    pub spec: SceneSpec,
    pub gt_labels: LabelMap,
    pub ta_logits: LogitsGrid,
    pub masks: InstanceMaskSet,
    pub sam_boundaries: BoundaryMap,
}

impl SyntheticScene {
    pub fn catalog(&self) -> ClassCatalog {
        ClassCatalog::numbered(self.spec.classes).expect("validated class count")
    }
}

pub fn generate(spec: &SceneSpec) -> Result<SyntheticScene> {
    spec.validate()?;
    let gt_labels = layout_labels(spec);
    let ta_logits = corrupt(spec, &gt_labels)?;
    let components = connected_components(&gt_labels);
    let masks = components
        .into_iter()
        .map(|m| jitter(&m, spec.mask_jitter))
        .filter(|m| m.area() > 0)
        .collect();
    let masks = InstanceMaskSet::new(spec.height, spec.width, masks)?;
    let sam_boundaries = boundaries_from_masks(&masks);
    Ok(SyntheticScene {
        spec: spec.clone(),
        gt_labels,
        ta_logits,
        masks,
        sam_boundaries,
    })
}

fn layout_labels(spec: &SceneSpec) -> LabelMap {
    let (w, h) = (spec.width, spec.height);
    let mut rng = SplitMix64::new(spec.seed ^ STREAM_LAYOUT);
    let region_class: Vec<Label> = (0..spec.region_count)
        .map(|_| rng.below(spec.classes as u64) as Label)
        .collect();
    let labels = match spec.layout {
        Layout::Stripes => (0..h * w)
            .map(|k| region_class[(k % w) * spec.region_count / w])
            .collect(),
        Layout::Voronoi => {
            let seeds: Vec<(i64, i64)> = (0..spec.region_count)
                .map(|_| (rng.below(h as u64) as i64, rng.below(w as u64) as i64))
                .collect();
            (0..h * w)
                .map(|k| {
                    let (y, x) = ((k / w) as i64, (k % w) as i64);
                    let mut best = (i64::MAX, 0);
                    for (r, &(sy, sx)) in seeds.iter().enumerate() {
                        let d = (y - sy).pow(2) + (x - sx).pow(2);
                        if d < best.0 {
                            best = (d, r);
                        }
                    }
                    region_class[best.1]
                })
                .collect()
        }
    };
    LabelMap::new(h, w, labels).expect("size matches by construction")
}

/// Corruption probability at column `x`.
fn noise_probability(spec: &SceneSpec, x: usize) -> f64 {
    let centre_distance = ((2.0 * (x as f64 + 0.5) / spec.width as f64) - 1.0).abs();
    (spec.noise_rate * (1.0 + spec.distortion_gradient * centre_distance)).min(1.0)
}

// Logits of a flipped pixel: the wrong class leads the true class by one nat.
const FLIP_WRONG_LOGIT: f32 = 2.0;
const FLIP_TRUE_LOGIT: f32 = 1.0;

fn corrupt(spec: &SceneSpec, gt: &LabelMap) -> Result<LogitsGrid> {
    let (w, h, c) = (spec.width, spec.height, spec.classes);
    let plane = w * h;
    let mut values = vec![0.0f32; c * plane];
    for (k, &l) in gt.labels().iter().enumerate() {
        values[l as usize * plane + k] = SATURATED_LOGIT;
    }
    if spec.noise_rate == 0.0 {
        return LogitsGrid::new(c, h, w, values);
    }

    let mut rng = SplitMix64::new(spec.seed ^ STREAM_NOISE);
    match spec.noise_mode {
        NoiseMode::InteriorFlip => {
            let boundary = boundaries_from_labels(gt);
            for (k, &l) in gt.labels().iter().enumerate() {
                if boundary.bits()[k] {
                    continue;
                }
                if rng.next_f64() < noise_probability(spec, k % w) {
                    let wrong = (l as usize + 1 + rng.below(c as u64 - 1) as usize) % c;
                    values[l as usize * plane + k] = FLIP_TRUE_LOGIT;
                    values[wrong * plane + k] = FLIP_WRONG_LOGIT;
                }
            }
        }
        NoiseMode::LogitBlur => {
            let mut mix = vec![0.0f64; c];
            for (k, &l) in gt.labels().iter().enumerate() {
                if rng.next_f64() >= noise_probability(spec, k % w) {
                    continue;
                }
                let beta = rng.next_f64();
                for m in mix.iter_mut() {
                    *m = rng.next_f64();
                }
                let total: f64 = mix.iter().sum();
                for (ch, m) in mix.iter().enumerate() {
                    let one_hot = if ch == l as usize { 1.0 } else { 0.0 };
                    let p = (1.0 - beta) * one_hot + beta * m / total;
                    values[ch * plane + k] = p.max(1e-6).ln() as f32;
                }
            }
        }
    }
    LogitsGrid::new(c, h, w, values)
}

/// 4-connected components of equal labels, in row-major discovery order.
pub fn connected_components(labels: &LabelMap) -> Vec<BinaryMask> {
    let (h, w) = (labels.height(), labels.width());
    let l = labels.labels();
    let mut seen = vec![false; h * w];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut members = Vec::new();
        while let Some(k) = queue.pop_front() {
            members.push(k);
            let (y, x) = (k / w, k % w);
            let neighbors = [
                (y > 0).then(|| k - w),
                (y + 1 < h).then(|| k + w),
                (x > 0).then(|| k - 1),
                (x + 1 < w).then(|| k + 1),
            ];
            for n in neighbors.into_iter().flatten() {
                if !seen[n] && l[n] == l[k] {
                    seen[n] = true;
                    queue.push_back(n);
                }
            }
        }
        out.push(BinaryMask::from_indices(h, w, &members).expect("indices are in range"));
    }
    out
}

fn jitter(mask: &BinaryMask, amount: i32) -> BinaryMask {
    let (h, w) = (mask.height(), mask.width());
    let mut bits = mask.bits().to_vec();
    for _ in 0..amount.unsigned_abs() {
        let prev = bits.clone();
        for (k, b) in bits.iter_mut().enumerate() {
            let (y, x) = (k / w, k % w);
            let mut neighbors = [
                (y > 0).then(|| k - w),
                (y + 1 < h).then(|| k + w),
                (x > 0).then(|| k - 1),
                (x + 1 < w).then(|| k + 1),
            ]
            .into_iter()
            .flatten();
            *b = if amount > 0 {
                prev[k] || neighbors.any(|n| prev[n])
            } else {
                prev[k] && neighbors.all(|n| prev[n])
            };
        }
    }
    BinaryMask::new(h, w, bits).expect("same size as input")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub miou_ta: f64,
    pub miou_ensemble: f64,
}

impl Improvement {
    pub fn gain(&self) -> f64 {
        self.miou_ensemble - self.miou_ta
    }
}

/// mIoU of the raw TA argmax and of the fused ensemble, treating the whole
/// canvas as one window.
pub fn measure_improvement(scene: &SyntheticScene, cfg: &FusionConfig) -> Result<Improvement> {
    measure_with_masks(scene, &scene.masks, cfg)
}

/// [`measure_improvement`] with a substitute mask set.
pub fn measure_with_masks(
    scene: &SyntheticScene,
    masks: &InstanceMaskSet,
    cfg: &FusionConfig,
) -> Result<Improvement> {
    let classes = scene.spec.classes;
    let ta = argmax_map(&scene.ta_logits);
    let fused = fuse_window(masks, &scene.ta_logits, cfg)?;

    let mut cm_ta = ConfusionMatrix::new(classes);
    cm_ta.accumulate(&scene.gt_labels, &ta)?;
    let mut cm_ens = ConfusionMatrix::new(classes);
    cm_ens.accumulate(&scene.gt_labels, &fused.ensemble_labels)?;
    Ok(Improvement {
        miou_ta: cm_ta.mean_iou()?,
        miou_ensemble: cm_ens.mean_iou()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_values() {
        // First outputs for seed 0 from the reference C implementation.
        let mut rng = SplitMix64::new(0);
        assert_eq!(rng.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(rng.next_u64(), 0x6E78_9E6A_A1B9_65F4);
        assert_eq!(rng.next_u64(), 0x06C4_5D18_8009_454F);
    }

    #[test]
    fn below_stays_in_range() {
        let mut rng = SplitMix64::new(7);
        assert!((0..1000).all(|_| rng.below(5) < 5));
        assert!((0..1000).all(|_| (0.0..1.0).contains(&rng.next_f64())));
    }

    #[test]
    fn clean_scene_is_identity() {
        let scene = generate(&SceneSpec::clean(64, 32, 5, 6, 3)).unwrap();
        assert_eq!(argmax_map(&scene.ta_logits), scene.gt_labels);
        assert_eq!(scene.sam_boundaries, boundaries_from_labels(&scene.gt_labels));
    }

    #[test]
    fn same_seed_same_scene() {
        let mut spec = SceneSpec::clean(48, 24, 4, 5, 11);
        spec.noise_rate = 0.2;
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        spec.seed = 12;
        assert_ne!(generate(&spec).unwrap().ta_logits, generate(&SceneSpec { seed: 11, ..spec.clone() }).unwrap().ta_logits);
    }

    #[test]
    fn stripes_layout() {
        let spec = SceneSpec {
            layout: Layout::Stripes,
            ..SceneSpec::clean(12, 3, 4, 3, 1)
        };
        let scene = generate(&spec).unwrap();
        for y in 0..3 {
            for x in 0..12 {
                assert_eq!(scene.gt_labels.get(y, x), scene.gt_labels.get(0, (x / 4) * 4));
            }
        }
    }

    #[test]
    fn masks_cover_components() {
        let scene = generate(&SceneSpec::clean(40, 20, 3, 8, 5)).unwrap();
        let total: usize = scene.masks.iter().map(|m| m.area()).sum();
        assert_eq!(total, 40 * 20);
        for m in scene.masks.iter() {
            let first = scene.gt_labels.labels()[m.pixels().next().unwrap()];
            assert!(m.pixels().all(|k| scene.gt_labels.labels()[k] == first));
        }
    }

    #[test]
    fn jitter_dilates_and_erodes() {
        let m = BinaryMask::rect(7, 7, 2, 5, 2, 5);
        assert_eq!(jitter(&m, 1).area(), 9 + 12);
        assert_eq!(jitter(&m, -1).area(), 1);
        assert_eq!(jitter(&m, 0), m);
    }

    #[test]
    fn infeasible_specs_rejected() {
        assert!(generate(&SceneSpec::clean(4, 4, 3, 5, 0)).is_err());
        assert!(generate(&SceneSpec::clean(4, 4, 1, 2, 0)).is_err());
        let spec = SceneSpec {
            noise_rate: 1.0,
            ..SceneSpec::clean(8, 8, 3, 2, 0)
        };
        assert!(generate(&spec).is_err());
    }

    #[test]
    fn logit_blur_changes_confidence() {
        let spec = SceneSpec {
            noise_rate: 0.5,
            noise_mode: NoiseMode::LogitBlur,
            ..SceneSpec::clean(32, 16, 4, 4, 9)
        };
        let scene = generate(&spec).unwrap();
        let clean = generate(&SceneSpec::clean(32, 16, 4, 4, 9)).unwrap();
        assert_eq!(scene.gt_labels, clean.gt_labels);
        assert_ne!(scene.ta_logits, clean.ta_logits);
    }

    #[test]
    fn distortion_raises_edge_noise() {
        let spec = SceneSpec {
            noise_rate: 0.2,
            distortion_gradient: 2.0,
            ..SceneSpec::clean(100, 1, 2, 1, 0)
        };
        assert!((noise_probability(&spec, 50) - 0.2).abs() < 0.01);
        assert!(noise_probability(&spec, 0) > 0.55);
        assert!(noise_probability(&spec, 99) > 0.55);
    }
}
