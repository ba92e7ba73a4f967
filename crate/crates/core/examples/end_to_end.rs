//! Runs the whole pipeline on synthetic panoramas of increasing noise and
//! compares the TA against the fused ensemble.
//!
//!     cargo run --release --example end_to_end

use std::time::Instant;

use panodar::io::config::PipelineConfig;
use panodar::pipeline::{run_pipeline, PipelineInputs};
use panodar::synth::{generate, SceneSpec};

fn main() -> panodar::Result<()> {
    let cfg = PipelineConfig::default();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    println!("{:>6} {:>8} {:>10} {:>14} {:>10} {:>8}", "noise", "TA", "ensemble", "student loss", "TA loss", "secs");
    for noise in [0.0, 0.1, 0.2, 0.3, 0.4] {
        let scene = generate(&SceneSpec {
            noise_rate: noise,
            ..SceneSpec::clean(2048, 400, 19, 24, 11)
        })?;
        let inputs = PipelineInputs {
            gt_labels: scene.gt_labels,
            ta_logits: scene.ta_logits,
            student_logits: None,
            masks: scene.masks,
        };
        let start = Instant::now();
        let out = run_pipeline(&inputs, &cfg, threads)?;
        println!(
            "{:>6.2} {:>8.4} {:>10.4} {:>14.1} {:>10.1} {:>8.2}",
            noise,
            out.metrics.ta.miou,
            out.metrics.ensemble.miou,
            out.losses.report.l_student_total,
            out.losses.report.l_ta_total,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
