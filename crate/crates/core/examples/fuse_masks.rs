//! Fuses instance masks with noisy TA logits for one window and prints
//! how each mask got its label.
//!
//!     cargo run --example fuse_masks

use panodar::fusion::{fuse_window, AssignmentRule, FusionConfig};
use panodar::grid::argmax_map;
use panodar::metrics::evaluate;
use panodar::synth::{generate, NoiseMode, SceneSpec};

fn main() -> panodar::Result<()> {
    let spec = SceneSpec {
        noise_rate: 0.35,
        noise_mode: NoiseMode::InteriorFlip,
        ..SceneSpec::clean(512, 400, 19, 8, 2024)
    };
    let scene = generate(&spec)?;
    let catalog = scene.catalog();

    let fused = fuse_window(&scene.masks, &scene.ta_logits, &FusionConfig::default())?;
    println!("{:>4} {:>7} {:>14} {:>8} {:>6}", "mask", "area", "label", "rule", "lcr");
    for r in &fused.per_mask_report {
        let rule = match r.rule {
            AssignmentRule::Lcr => "lcr",
            AssignmentRule::Entropy => "entropy",
        };
        let name = catalog.name(r.label as usize).unwrap_or("?");
        println!("{:>4} {:>7} {:>14} {:>8} {:>6.3}", r.mask_index, r.area, name, rule, r.lcr);
    }

    let weighted = fused.weight_map.weights().iter().filter(|&&w| w > 0.0).count();
    println!("high-confidence pixels: {weighted} of {}", scene.gt_labels.len());

    let ta = evaluate(&scene.gt_labels, &argmax_map(&scene.ta_logits), &catalog)?;
    let ens = evaluate(&scene.gt_labels, &fused.ensemble_labels, &catalog)?;
    println!("mIoU TA {:.4} -> ensemble {:.4}", ta.miou, ens.miou);

    let vote = fuse_window(&scene.masks, &scene.ta_logits, &FusionConfig::majority_vote())?;
    let vote_miou = evaluate(&scene.gt_labels, &vote.ensemble_labels, &catalog)?.miou;
    println!("majority voting baseline: {vote_miou:.4}");
    Ok(())
}
