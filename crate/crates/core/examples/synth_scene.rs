//! Generates a synthetic scene directory that the `panodar` binary can
//! consume, then checks that a rerun is identical.
//!
//!     cargo run --example synth_scene -- /tmp/scene

use std::path::PathBuf;

use panodar::io::npy::{write_boundary, write_labels, write_logits};
use panodar::io::rle::write_masks;
use panodar::io::{create_dir, write_json};
use panodar::synth::{generate, Layout, NoiseMode, SceneSpec};

fn main() -> panodar::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("panodar_scene"));
    let spec = SceneSpec {
        noise_rate: 0.3,
        noise_mode: NoiseMode::InteriorFlip,
        mask_jitter: 1,
        distortion_gradient: 1.0,
        layout: Layout::Voronoi,
        ..SceneSpec::clean(2048, 400, 19, 30, 99)
    };
    let scene = generate(&spec)?;

    create_dir(&out)?;
    write_labels(&scene.gt_labels, &out.join("gt_labels.npy"))?;
    write_logits(&scene.ta_logits, &out.join("ta_logits.npy"))?;
    write_masks(&scene.masks, &out.join("masks.json"))?;
    write_boundary(&scene.sam_boundaries, &out.join("sam_boundaries.npy"))?;
    write_json(&out.join("scene.json"), &spec)?;

    println!("wrote {}", out.display());
    println!("  {} instance masks", scene.masks.len());
    println!("  {} SAM boundary pixels", scene.sam_boundaries.count());
    println!("same spec, same scene: {}", generate(&spec)?.ta_logits == scene.ta_logits);
    println!("next: panodar pipeline --scene {} --out <dir>", out.display());
    Ok(())
}
