//! Compares fusion rules as TA noise, mask quality and edge distortion get
//! worse: the TA alone, majority voting, and coverage-plus-entropy fusion.
//!
//!     cargo run --release --example fusion_ablation

use panodar::fusion::{fuse_window, FusionConfig};
use panodar::masks::{BinaryMask, InstanceMaskSet};
use panodar::synth::{generate, measure_improvement, NoiseMode, SceneSpec};
use panodar::LogitsGrid;

fn main() -> panodar::Result<()> {
    let rows = [
        (NoiseMode::InteriorFlip, 0.3, 0, 0.0),
        (NoiseMode::InteriorFlip, 0.3, 0, 2.0),
        (NoiseMode::InteriorFlip, 0.3, 2, 0.0),
        (NoiseMode::InteriorFlip, 0.3, -2, 2.0),
        (NoiseMode::InteriorFlip, 0.9, 0, 0.0),
        (NoiseMode::LogitBlur, 0.5, 0, 0.0),
        (NoiseMode::LogitBlur, 0.9, 0, 0.0),
        (NoiseMode::LogitBlur, 0.9, 2, 1.0),
    ];
    println!(
        "{:>13} {:>5} {:>6} {:>8} {:>7} {:>9} {:>7}",
        "noise", "rate", "jitter", "gradient", "TA", "majority", "fusion"
    );
    for (mode, rate, jitter, gradient) in rows {
        let (mut ta, mut vote, mut fusion) = (0.0, 0.0, 0.0);
        let seeds = 4;
        for seed in 0..seeds {
            let scene = generate(&SceneSpec {
                noise_rate: rate,
                noise_mode: mode,
                mask_jitter: jitter,
                distortion_gradient: gradient,
                ..SceneSpec::clean(1024, 200, 19, 20, seed)
            })?;
            let full = measure_improvement(&scene, &FusionConfig::default())?;
            let majority = measure_improvement(&scene, &FusionConfig::majority_vote())?;
            ta += full.miou_ta;
            fusion += full.miou_ensemble;
            vote += majority.miou_ensemble;
        }
        let n = seeds as f64;
        println!(
            "{:>13} {:>5.1} {:>6} {:>8.1} {:>7.4} {:>9.4} {:>7.4}",
            format!("{mode:?}"),
            rate,
            jitter,
            gradient,
            ta / n,
            vote / n,
            fusion / n
        );
    }

    // The synthetic noise spreads wrong labels over every class, so the
    // mask majority is always right. A systematic confusion breaks that:
    // 60% of a sidewalk mask is predicted road with low confidence.
    let (h, w) = (10, 50);
    let mut values = vec![0.0f32; 3 * h * w];
    for k in 0..h * w {
        if k % 5 < 3 {
            values[k] = 1.0;
            values[h * w + k] = 0.8;
        } else {
            values[h * w + k] = 64.0;
        }
    }
    let logits = LogitsGrid::new(3, h, w, values)?;
    let masks = InstanceMaskSet::new(h, w, vec![BinaryMask::rect(h, w, 0, h, 0, w)])?;
    let names = ["road", "sidewalk", "car"];
    for (name, cfg) in [("majority", FusionConfig::majority_vote()), ("fusion", FusionConfig::default())] {
        let fused = fuse_window(&masks, &logits, &cfg)?;
        let r = &fused.per_mask_report[0];
        println!(
            "confused sidewalk mask, {name}: {} ({:?}, lcr {:.2})",
            names[r.label as usize], r.rule, r.lcr
        );
    }
    Ok(())
}
