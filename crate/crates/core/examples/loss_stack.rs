//! Evaluates the full adaptation loss stack on a noisy synthetic panorama,
//! with a student that is a softened copy of the TA.
//!
//!     cargo run --example loss_stack

use panodar::fusion::{fuse_window, FusionConfig};
use panodar::losses::{compute_losses, LossConfig, LossInputs, WindowTargets};
use panodar::synth::{generate, SceneSpec};
use panodar::window::{extract, plan_overlapping};
use panodar::LogitsGrid;

fn main() -> panodar::Result<()> {
    let spec = SceneSpec {
        noise_rate: 0.2,
        ..SceneSpec::clean(1024, 200, 19, 16, 7)
    };
    let scene = generate(&spec)?;
    let plan = plan_overlapping(1024, 200, 256, 128)?;

    let mut ta_windows = Vec::new();
    let mut targets = Vec::new();
    for w in &plan.windows {
        let ta = extract(&scene.ta_logits, w)?;
        let masks = scene.masks.crop_columns(w.x_start, w.width)?;
        let fused = fuse_window(&masks, &ta, &FusionConfig::default())?;
        targets.push(WindowTargets {
            labels: fused.ensemble_labels,
            weights: fused.weight_map,
        });
        ta_windows.push(ta);
    }

    let t = &scene.ta_logits;
    let student = LogitsGrid::new(t.classes(), t.height(), t.width(), t.values().iter().map(|v| v * 0.5).collect())?;
    let inputs = LossInputs {
        plan: &plan,
        ta_windows: &ta_windows,
        student: &student,
        targets: &targets,
        masks: &scene.masks,
    };

    for lambda in [0.0, 0.2, 1.0] {
        let cfg = LossConfig {
            lambda,
            ..LossConfig::default()
        };
        let breakdown = compute_losses(&inputs, &cfg)?;
        println!("lambda = {lambda}");
        for (name, value) in breakdown.report.components() {
            println!("  {name:<16} {value:>16.4}");
        }
    }

    let breakdown = compute_losses(&inputs, &LossConfig::default())?;
    println!("per overlap:");
    for o in &breakdown.overlaps {
        println!(
            "  {}|{}: l_cc {:.4}, refined pixels {}, relocated {}",
            o.left_window, o.right_window, o.l_cc, o.refined_pixels, o.counts.relocated
        );
    }
    Ok(())
}
