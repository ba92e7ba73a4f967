//! Walks through the three boundary refinement cases on a tiny overlap
//! region and reports the boundary losses.
//!
//!     cargo run --example refine_boundary

use panodar::boundary::{
    boundary_loss_student, boundary_loss_ta, refine_boundary_counted, BoundaryMap, RefineConfig,
};
use panodar::LogitsGrid;

const H: usize = 8;
const W: usize = 6;

/// Two-class logits whose softmax top-2 gap at `at` equals `gap`, and 0
/// (a tie) elsewhere.
fn logits_with_gap(at: (usize, usize), gap: f64) -> panodar::Result<LogitsGrid> {
    let mut values = vec![0.0f32; 2 * H * W];
    values[at.0 * W + at.1] = ((1.0 + gap) / (1.0 - gap)).ln() as f32;
    LogitsGrid::new(2, H, W, values)
}

fn show(name: &str, map: &BoundaryMap) {
    println!("{name}:");
    for y in 0..map.height() {
        let row: String = (0..map.width()).map(|x| if map.get(y, x) { '#' } else { '.' }).collect();
        println!("  {row}");
    }
}

fn main() -> panodar::Result<()> {
    let cfg = RefineConfig::default();
    // (1,1) is a boundary everywhere; (2,3) only in TA-i, with a SAM pixel
    // three rows below it; (4,0) only in TA-i with no SAM pixel in column 0.
    let b_i = BoundaryMap::from_points(H, W, &[(1, 1), (2, 3), (4, 0)])?;
    let b_j = BoundaryMap::from_points(H, W, &[(1, 1)])?;
    let b_sam = BoundaryMap::from_points(H, W, &[(1, 1), (5, 3)])?;
    show("TA window i", &b_i);
    show("SAM", &b_sam);

    for (label, gap_i) in [("unsure TA (gap 0.1)", 0.1), ("confident TA (gap 0.5)", 0.5)] {
        let l_i = logits_with_gap((5, 3), gap_i)?;
        let l_j = logits_with_gap((5, 3), 0.9)?;
        let r = refine_boundary_counted(&b_i, &b_j, &b_sam, &l_i, &l_j, &cfg)?;
        println!("\n{label}, alpha {}", cfg.alpha);
        show("refined", &r.refined);
        println!(
            "agreed {}, relocated {}, retained {}",
            r.counts.agreed, r.counts.relocated, r.counts.retained
        );
        println!("TA boundary loss {:.4}", boundary_loss_ta(&r.refined, &b_i, &b_j)?);
        println!("student boundary loss vs TA-j {:.4}", boundary_loss_student(&r.refined, &b_j)?);
    }
    Ok(())
}
