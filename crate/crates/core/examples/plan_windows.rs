//! Plans overlapping and non-overlapping windows over a 400x2048 panorama,
//! then cuts a canvas into windows and stitches it back.
//!
//!     cargo run --example plan_windows

use panodar::synth::SplitMix64;
use panodar::window::{extract, plan_nonoverlapping, plan_overlapping, stitch, StitchMode};
use panodar::LogitsGrid;

fn main() -> panodar::Result<()> {
    let plan = plan_overlapping(2048, 400, 512, 256)?;
    println!("overlapping plan: {} windows", plan.window_count());
    for w in &plan.windows {
        println!("  window {} covers columns {}..{}", w.index, w.x_start, w.x_end());
    }
    for o in &plan.overlaps {
        println!(
            "  overlap {}|{} at columns {}..{}",
            o.left_window,
            o.right_window,
            o.x_start,
            o.x_start + o.width
        );
    }

    let flat = plan_nonoverlapping(2048, 400, 512)?;
    println!("non-overlapping plan: {} windows, {} overlaps", flat.window_count(), flat.overlaps.len());

    // A plan whose last window has to be clamped to the canvas edge.
    let clamped = plan_overlapping(2000, 400, 512, 300)?;
    let starts: Vec<usize> = clamped.windows.iter().map(|w| w.x_start).collect();
    println!("2000 px canvas, stride 300: starts {starts:?}");

    let mut rng = SplitMix64::new(1);
    let values = (0..3 * 8 * 2048).map(|_| rng.next_f64() as f32).collect();
    let canvas = LogitsGrid::new(3, 8, 2048, values)?;
    let small = plan_overlapping(2048, 8, 512, 256)?;
    let parts = small
        .windows
        .iter()
        .map(|w| extract(&canvas, w))
        .collect::<panodar::Result<Vec<_>>>()?;
    let concat = stitch(&small, &parts, StitchMode::Concat)?;
    let average = stitch(&small, &parts, StitchMode::Average)?;
    let max_diff = average
        .values()
        .iter()
        .zip(canvas.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f32, f32::max);
    println!("concat stitch restores the canvas: {}", concat == canvas);
    println!("average stitch max deviation: {max_diff:e}");
    Ok(())
}
