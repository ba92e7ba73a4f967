//! Horizontal sliding windows over an equirectangular canvas.
//!
//! Windows always span the full canvas height and slide left to right with
//! no wrap-around at the seam. When the last stride would overrun the
//! canvas, the final window is clamped so that it ends on the last column.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::LogitsGrid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowRegion {
    pub index: usize,
    pub x_start: usize,
    pub width: usize,
    pub height: usize,
}

impl WindowRegion {
    pub fn x_end(&self) -> usize {
        self.x_start + self.width
    }

    pub fn contains_column(&self, x: usize) -> bool {
        (self.x_start..self.x_end()).contains(&x)
    }
}

/// Columns shared by two horizontally adjacent windows, in canvas coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapRegion {
    pub left_window: usize,
    pub right_window: usize,
    pub x_start: usize,
    pub width: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowPlan {
    pub canvas_width: usize,
    pub canvas_height: usize,
    pub window_width: usize,
    pub stride: usize,
    pub windows: Vec<WindowRegion>,
    pub overlaps: Vec<OverlapRegion>,
}

/// How [`stitch`] resolves columns covered by more than one window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StitchMode {
    /// The right-most covering window owns the column.
    Concat,
    /// Arithmetic mean of every covering window.
    Average,
}

fn window_starts(canvas_w: usize, win_w: usize, stride: usize) -> Vec<usize> {
    let last = canvas_w - win_w;
    let mut starts = Vec::new();
    let mut s = 0;
    loop {
        starts.push(s.min(last));
        if s >= last {
            break;
        }
        s += stride;
    }
    starts
}

fn check_geometry(canvas_w: usize, canvas_h: usize, win_w: usize, stride: usize) -> Result<()> {
    if canvas_h == 0 || canvas_w == 0 {
        return Err(Error::InvalidGeometry(format!(
            "canvas must be non-empty, got {canvas_w}x{canvas_h}"
        )));
    }
    if win_w == 0 || win_w > canvas_w {
        return Err(Error::InvalidGeometry(format!(
            "window width {win_w} must be in 1..={canvas_w}"
        )));
    }
    if stride == 0 || stride > win_w {
        return Err(Error::InvalidGeometry(format!(
            "stride {stride} must be in 1..={win_w}"
        )));
    }
    Ok(())
}

fn build_plan(canvas_w: usize, canvas_h: usize, win_w: usize, stride: usize) -> WindowPlan {
    let windows: Vec<WindowRegion> = window_starts(canvas_w, win_w, stride)
        .into_iter()
        .enumerate()
        .map(|(index, x_start)| WindowRegion {
            index,
            x_start,
            width: win_w,
            height: canvas_h,
        })
        .collect();
    WindowPlan {
        canvas_width: canvas_w,
        canvas_height: canvas_h,
        window_width: win_w,
        stride,
        windows,
        overlaps: Vec::new(),
    }
}

/// Overlapping windows at `0, stride, 2*stride, ...`, with one
/// [`OverlapRegion`] per adjacent pair that shares columns.
pub fn plan_overlapping(
    canvas_w: usize,
    canvas_h: usize,
    win_w: usize,
    stride: usize,
) -> Result<WindowPlan> {
    check_geometry(canvas_w, canvas_h, win_w, stride)?;
    let mut plan = build_plan(canvas_w, canvas_h, win_w, stride);
    plan.overlaps = plan
        .windows
        .windows(2)
        .filter(|pair| pair[1].x_start < pair[0].x_end())
        .map(|pair| OverlapRegion {
            left_window: pair[0].index,
            right_window: pair[1].index,
            x_start: pair[1].x_start,
            width: pair[0].x_end() - pair[1].x_start,
        })
        .collect();
    Ok(plan)
}

/// Tiles with `stride == win_w`. A clamped final tile may repeat columns of
/// its neighbour; those are not reported as overlaps and [`stitch`] resolves
/// them by its mode.
pub fn plan_nonoverlapping(canvas_w: usize, canvas_h: usize, win_w: usize) -> Result<WindowPlan> {
    check_geometry(canvas_w, canvas_h, win_w, win_w.max(1))?;
    Ok(build_plan(canvas_w, canvas_h, win_w, win_w))
}

impl WindowPlan {
    pub fn window_count(&self) -> usize {
        self.windows.len()
    }

    /// Checks the structural invariants of a plan, e.g. one read from disk.
    pub fn validate(&self) -> Result<()> {
        check_geometry(
            self.canvas_width,
            self.canvas_height,
            self.window_width,
            self.stride,
        )?;
        if self.windows.is_empty() {
            return Err(Error::InvalidGeometry("plan has no windows".into()));
        }
        for (i, w) in self.windows.iter().enumerate() {
            if w.index != i
                || w.width != self.window_width
                || w.height != self.canvas_height
                || w.x_end() > self.canvas_width
            {
                return Err(Error::InvalidGeometry(format!(
                    "window {i} does not fit the canvas"
                )));
            }
        }
        if self.windows.windows(2).any(|p| p[1].x_start <= p[0].x_start) {
            return Err(Error::InvalidGeometry(
                "window starts must be strictly increasing".into(),
            ));
        }
        if self.coverage().contains(&0) {
            return Err(Error::InvalidGeometry("plan leaves columns uncovered".into()));
        }
        for o in &self.overlaps {
            let (l, r) = (self.windows.get(o.left_window), self.windows.get(o.right_window));
            let ok = match (l, r) {
                (Some(l), Some(r)) => {
                    o.width > 0
                        && l.contains_column(o.x_start)
                        && r.contains_column(o.x_start)
                        && l.contains_column(o.x_start + o.width - 1)
                        && r.contains_column(o.x_start + o.width - 1)
                }
                _ => false,
            };
            if !ok {
                return Err(Error::InvalidGeometry(format!(
                    "overlap {}-{} is not inside both windows",
                    o.left_window, o.right_window
                )));
            }
        }
        Ok(())
    }

    /// Number of windows covering each canvas column.
    pub fn coverage(&self) -> Vec<usize> {
        let mut counts = vec![0; self.canvas_width];
        for w in &self.windows {
            for c in &mut counts[w.x_start..w.x_end().min(self.canvas_width)] {
                *c += 1;
            }
        }
        counts
    }

    /// Indices of a chain of windows that covers the canvas with as little
    /// overlap as the plan allows: each next window is the right-most one
    /// starting no later than the end of the previous. For a stride dividing
    /// the window width this picks exactly the non-overlapping tiles.
    pub fn concat_cover(&self) -> Vec<usize> {
        let mut chosen = vec![0];
        let mut end = self.windows[0].x_end();
        while end < self.canvas_width {
            let next = self
                .windows
                .iter()
                .rposition(|w| w.x_start <= end)
                .expect("first window starts at zero");
            chosen.push(next);
            end = self.windows[next].x_end();
        }
        chosen
    }

    /// The plan restricted to the given windows, re-indexed from zero.
    pub fn subset(&self, indices: &[usize]) -> WindowPlan {
        let windows = indices
            .iter()
            .enumerate()
            .map(|(i, &src)| WindowRegion {
                index: i,
                ..self.windows[src]
            })
            .collect();
        WindowPlan {
            windows,
            overlaps: Vec::new(),
            ..self.clone()
        }
    }

    /// Window-local column range of an overlap inside window `window`.
    pub fn overlap_in_window(&self, overlap: &OverlapRegion, window: usize) -> usize {
        overlap.x_start - self.windows[window].x_start
    }
}

/// Copy of the window's columns.
pub fn extract(grid: &LogitsGrid, window: &WindowRegion) -> Result<LogitsGrid> {
    if window.height != grid.height() {
        return Err(Error::InvalidGeometry(format!(
            "window height {} differs from grid height {}",
            window.height,
            grid.height()
        )));
    }
    grid.crop_columns(window.x_start, window.width)
}

/// Reassembles a canvas-wide grid from per-window grids.
pub fn stitch(plan: &WindowPlan, parts: &[LogitsGrid], mode: StitchMode) -> Result<LogitsGrid> {
    if parts.len() != plan.windows.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} parts for {} windows",
            parts.len(),
            plan.windows.len()
        )));
    }
    let classes = parts[0].classes();
    for (w, part) in plan.windows.iter().zip(parts) {
        if part.classes() != classes || part.height() != w.height || part.width() != w.width {
            return Err(Error::ShapeMismatch(format!(
                "part {} is {}x{}x{}, window expects {classes}x{}x{}",
                w.index,
                part.classes(),
                part.height(),
                part.width(),
                w.height,
                w.width
            )));
        }
    }

    let (cw, ch) = (plan.canvas_width, plan.canvas_height);
    match mode {
        StitchMode::Concat => {
            let mut canvas = LogitsGrid::filled(classes, ch, cw, 0.0)?;
            for (w, part) in plan.windows.iter().zip(parts) {
                canvas.paste_columns(w.x_start, part)?;
            }
            Ok(canvas)
        }
        StitchMode::Average => {
            let coverage = plan.coverage();
            let mut sums = vec![0.0f64; classes * ch * cw];
            for (w, part) in plan.windows.iter().zip(parts) {
                let pv = part.values();
                for c in 0..classes {
                    for y in 0..ch {
                        let dst = (c * ch + y) * cw + w.x_start;
                        let src = (c * ch + y) * w.width;
                        for (d, s) in sums[dst..dst + w.width].iter_mut().zip(&pv[src..src + w.width])
                        {
                            *d += f64::from(*s);
                        }
                    }
                }
            }
            let values = sums
                .iter()
                .enumerate()
                .map(|(k, &s)| {
                    let n = coverage[k % cw];
                    if n == 1 {
                        s as f32
                    } else {
                        (s / n as f64) as f32
                    }
                })
                .collect();
            LogitsGrid::new(classes, ch, cw, values)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn starts(plan: &WindowPlan) -> Vec<usize> {
        plan.windows.iter().map(|w| w.x_start).collect()
    }

    #[test]
    fn default_panorama_configuration() {
        let plan = plan_overlapping(2048, 400, 512, 256).unwrap();
        assert_eq!(starts(&plan), vec![0, 256, 512, 768, 1024, 1280, 1536]);
        assert_eq!(plan.overlaps.len(), 6);
        assert!(plan.overlaps.iter().all(|o| o.width == 256));
        plan.validate().unwrap();
    }

    #[test]
    fn clamped_final_window() {
        let plan = plan_overlapping(2048, 400, 512, 300).unwrap();
        assert_eq!(starts(&plan), vec![0, 300, 600, 900, 1200, 1500, 1536]);
        assert_eq!(plan.overlaps.last().unwrap().width, 1500 + 512 - 1536);
        plan.validate().unwrap();
    }

    #[test]
    fn single_window() {
        let plan = plan_overlapping(512, 400, 512, 256).unwrap();
        assert_eq!(plan.windows.len(), 1);
        assert!(plan.overlaps.is_empty());
    }

    #[test]
    fn non_overlapping_plans() {
        assert_eq!(plan_nonoverlapping(2048, 400, 512).unwrap().windows.len(), 4);
        assert_eq!(plan_nonoverlapping(2048, 400, 1024).unwrap().windows.len(), 2);
        let plan = plan_nonoverlapping(1000, 400, 512).unwrap();
        assert_eq!(starts(&plan), vec![0, 488]);
        assert!(plan.overlaps.is_empty());
        assert_eq!(plan.stride, 512);
    }

    #[test]
    fn geometry_errors() {
        assert!(matches!(
            plan_overlapping(2048, 400, 4096, 256),
            Err(Error::InvalidGeometry(_))
        ));
        assert!(plan_overlapping(2048, 400, 512, 0).is_err());
        assert!(plan_overlapping(2048, 400, 512, 513).is_err());
        assert!(plan_nonoverlapping(100, 400, 101).is_err());
    }

    #[test]
    fn half_stride_double_coverage() {
        let plan = plan_overlapping(2048, 4, 512, 256).unwrap();
        let cov = plan.coverage();
        assert!(cov[256..1792].iter().all(|&n| n == 2));
        assert!(cov[..256].iter().chain(&cov[1792..]).all(|&n| n == 1));
    }

    #[test]
    fn concat_cover_picks_tiles() {
        let plan = plan_overlapping(2048, 4, 512, 256).unwrap();
        assert_eq!(plan.concat_cover(), vec![0, 2, 4, 6]);
        let plan = plan_overlapping(2048, 4, 512, 300).unwrap();
        let cover = plan.concat_cover();
        let sub = plan.subset(&cover);
        assert!(sub.coverage().iter().all(|&n| n >= 1));
    }

    #[test]
    fn stitch_average_of_two() {
        let plan = plan_overlapping(4, 1, 3, 1).unwrap();
        // windows at 0 and 1, overlap columns 1..3
        let a = LogitsGrid::filled(2, 1, 3, 0.0).unwrap();
        let b = LogitsGrid::filled(2, 1, 3, 1.0).unwrap();
        let out = stitch(&plan, &[a.clone(), b.clone()], StitchMode::Average).unwrap();
        for c in 0..2 {
            assert_eq!(out.get(c, 0, 0), 0.0);
            assert_eq!(out.get(c, 0, 1), 0.5);
            assert_eq!(out.get(c, 0, 2), 0.5);
            assert_eq!(out.get(c, 0, 3), 1.0);
        }
        let out = stitch(&plan, &[a, b], StitchMode::Concat).unwrap();
        assert_eq!(out.get(0, 0, 1), 1.0);
        assert_eq!(out.get(0, 0, 0), 0.0);
    }

    #[test]
    fn stitch_constant_tiles() {
        let plan = plan_nonoverlapping(8, 2, 4).unwrap();
        let part = LogitsGrid::filled(3, 2, 4, 7.0).unwrap();
        let out = stitch(&plan, &[part.clone(), part], StitchMode::Concat).unwrap();
        assert!(out.values().iter().all(|&v| v == 7.0));
    }

    #[test]
    fn stitch_rejects_mismatch() {
        let plan = plan_nonoverlapping(8, 2, 4).unwrap();
        let part = LogitsGrid::filled(3, 2, 4, 0.0).unwrap();
        assert!(matches!(
            stitch(&plan, std::slice::from_ref(&part), StitchMode::Concat),
            Err(Error::ShapeMismatch(_))
        ));
        let bad = LogitsGrid::filled(3, 2, 5, 0.0).unwrap();
        assert!(stitch(&plan, &[part, bad], StitchMode::Average).is_err());
    }

    #[test]
    fn extract_full_canvas_is_identity() {
        let g = LogitsGrid::new(2, 1, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let plan = plan_overlapping(3, 1, 3, 3).unwrap();
        assert_eq!(extract(&g, &plan.windows[0]).unwrap(), g);
        let oob = WindowRegion {
            index: 0,
            x_start: 2,
            width: 3,
            height: 1,
        };
        assert!(matches!(extract(&g, &oob), Err(Error::InvalidGeometry(_))));
    }
}
