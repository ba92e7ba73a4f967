//! Per-class IoU and mIoU, including ignored pixels and classes that never
//! appear.
//!
//!     cargo run --example evaluate_miou

use panodar::metrics::{evaluate, ConfusionMatrix};
use panodar::{ClassCatalog, LabelMap};

fn main() -> panodar::Result<()> {
    let gt = LabelMap::new(2, 2, vec![0, 0, 1, 1])?;
    let pred = LabelMap::new(2, 2, vec![0, 1, 1, 1])?;
    let catalog = ClassCatalog::new(["road", "car"])?;
    let report = evaluate(&gt, &pred, &catalog)?;
    println!("2x2 toy:");
    for c in &report.per_class {
        println!("  {:<6} {:?}", c.name, c.iou);
    }
    println!("  mIoU {:.4}", report.miou);

    // 255 marks unlabelled ground truth; class 2 never appears anywhere.
    let gt = LabelMap::new(2, 3, vec![0, 255, 1, 1, 255, 0])?;
    let pred = LabelMap::new(2, 3, vec![0, 2, 1, 0, 2, 0])?;
    let mut cm = ConfusionMatrix::new(4);
    cm.accumulate(&gt, &pred)?;
    println!("with ignored pixels: {} counted", cm.total());
    for (c, iou) in cm.iou_per_class().iter().enumerate() {
        match iou {
            Some(v) => println!("  class {c}: {v:.4}"),
            None => println!("  class {c}: undefined"),
        }
    }
    println!("  mIoU {:.4}", cm.mean_iou()?);
    Ok(())
}
