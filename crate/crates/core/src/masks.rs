//! Binary instance masks as produced by a class-agnostic segmenter.

use crate::error::{Error, Result};
use crate::grid::check_column_range;

/// One binary `H x W` mask, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
    area: usize,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::InvalidInput(format!(
                "mask length {} does not match {height}x{width}",
                bits.len()
            )));
        }
        let area = bits.iter().filter(|&&b| b).count();
        Ok(Self {
            height,
            width,
            bits,
            area,
        })
    }

    /// Mask with the given flat pixel indices set.
    pub fn from_indices(height: usize, width: usize, indices: &[usize]) -> Result<Self> {
        let mut bits = vec![false; height * width];
        for &k in indices {
            let slot = bits.get_mut(k).ok_or_else(|| {
                Error::InvalidInput(format!("pixel index {k} outside {height}x{width} mask"))
            })?;
            *slot = true;
        }
        Self::new(height, width, bits)
    }

    /// Axis-aligned rectangle `[y0, y1) x [x0, x1)`.
    pub fn rect(height: usize, width: usize, y0: usize, y1: usize, x0: usize, x1: usize) -> Self {
        let bits = (0..height * width)
            .map(|k| {
                let (y, x) = (k / width, k % width);
                (y0..y1).contains(&y) && (x0..x1).contains(&x)
            })
            .collect();
        Self::new(height, width, bits).expect("length matches by construction")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn area(&self) -> usize {
        self.area
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Flat indices of set pixels in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(k, &b)| b.then_some(k))
    }

    pub fn crop_columns(&self, x_start: usize, width: usize) -> Result<BinaryMask> {
        check_column_range(x_start, width, self.width)?;
        let bits = self
            .bits
            .chunks_exact(self.width)
            .flat_map(|row| row[x_start..x_start + width].iter().copied())
            .collect();
        BinaryMask::new(self.height, width, bits)
    }
}

/// Ordered, possibly overlapping, non-empty masks sharing one frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstanceMaskSet {
    height: usize,
    width: usize,
    masks: Vec<BinaryMask>,
}

impl InstanceMaskSet {
    pub fn new(height: usize, width: usize, masks: Vec<BinaryMask>) -> Result<Self> {
        for (i, m) in masks.iter().enumerate() {
            if m.height != height || m.width != width {
                return Err(Error::ShapeMismatch(format!(
                    "mask {i} is {}x{}, set is {height}x{width}",
                    m.height, m.width
                )));
            }
            if m.area == 0 {
                return Err(Error::InvalidInput(format!("mask {i} is empty")));
            }
        }
        Ok(Self {
            height,
            width,
            masks,
        })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            masks: Vec::new(),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn masks(&self) -> &[BinaryMask] {
        &self.masks
    }

    pub fn iter(&self) -> std::slice::Iter<'_, BinaryMask> {
        self.masks.iter()
    }

    /// Crops every mask to the column range, dropping masks left empty.
    pub fn crop_columns(&self, x_start: usize, width: usize) -> Result<InstanceMaskSet> {
        check_column_range(x_start, width, self.width)?;
        let mut masks = Vec::new();
        for m in &self.masks {
            let cropped = m.crop_columns(x_start, width)?;
            if cropped.area > 0 {
                masks.push(cropped);
            }
        }
        Ok(InstanceMaskSet {
            height: self.height,
            width,
            masks,
        })
    }
}
