//! Instance masks as JSON with uncompressed COCO run-length encoding.
//!
//! Counts alternate zero-runs and one-runs over the column-major flattening
//! of the mask, always starting with a (possibly empty) zero-run.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masks::{BinaryMask, InstanceMaskSet};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleCounts {
    pub counts: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskRecord {
    pub id: u64,
    pub area: u64,
    pub rle: RleCounts,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskSetDocument {
    pub height: usize,
    pub width: usize,
    pub masks: Vec<MaskRecord>,
}

/// Run lengths of a column-major bit sequence.
pub fn encode_bits(column_major: impl IntoIterator<Item = bool>) -> Vec<u64> {
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u64;
    for bit in column_major {
        if bit != current {
            counts.push(run);
            run = 0;
            current = bit;
        }
        run += 1;
    }
    counts.push(run);
    counts
}

/// Expands run lengths into `len` column-major bits.
pub fn decode_bits(counts: &[u64], len: usize) -> Result<Vec<bool>> {
    let total: u64 = counts.iter().sum();
    if total != len as u64 {
        return Err(Error::format(
            None,
            format!("RLE counts sum to {total}, mask has {len} pixels"),
        ));
    }
    let mut bits = Vec::with_capacity(len);
    for (i, &run) in counts.iter().enumerate() {
        bits.extend(std::iter::repeat_n(i % 2 == 1, run as usize));
    }
    Ok(bits)
}

pub fn encode_mask(mask: &BinaryMask) -> Vec<u64> {
    let (h, w) = (mask.height(), mask.width());
    encode_bits((0..w).flat_map(|x| (0..h).map(move |y| mask.get(y, x))))
}

pub fn decode_mask(counts: &[u64], height: usize, width: usize) -> Result<BinaryMask> {
    let column_major = decode_bits(counts, height * width)?;
    let mut bits = vec![false; height * width];
    for (k, b) in column_major.into_iter().enumerate() {
        let (x, y) = (k / height, k % height);
        bits[y * width + x] = b;
    }
    BinaryMask::new(height, width, bits)
}

impl MaskSetDocument {
    pub fn from_set(set: &InstanceMaskSet) -> Self {
        Self {
            height: set.height(),
            width: set.width(),
            masks: set
                .iter()
                .enumerate()
                .map(|(i, m)| MaskRecord {
                    id: i as u64,
                    area: m.area() as u64,
                    rle: RleCounts {
                        counts: encode_mask(m),
                    },
                })
                .collect(),
        }
    }

    pub fn to_set(&self) -> Result<InstanceMaskSet> {
        let mut masks = Vec::with_capacity(self.masks.len());
        for rec in &self.masks {
            let mask = decode_mask(&rec.rle.counts, self.height, self.width).map_err(|e| match e {
                Error::Format { message, .. } => Error::format(None, format!("mask {}: {message}", rec.id)),
                other => other,
            })?;
            if mask.area() as u64 != rec.area {
                return Err(Error::Consistency(format!(
                    "mask {} declares area {} but decodes to {}",
                    rec.id,
                    rec.area,
                    mask.area()
                )));
            }
            if mask.area() == 0 {
                return Err(Error::Consistency(format!("mask {} is empty", rec.id)));
            }
            masks.push(mask);
        }
        InstanceMaskSet::new(self.height, self.width, masks)
    }
}

pub fn read_masks(path: &Path) -> Result<InstanceMaskSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: MaskSetDocument = serde_json::from_str(&text)
        .map_err(|e| Error::format(None, format!("{}: {e}", path.display())))?;
    doc.to_set()
}

pub fn write_masks(set: &InstanceMaskSet, path: &Path) -> Result<()> {
    super::write_json(path, &MaskSetDocument::from_set(set))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leading_zero_run() {
        assert_eq!(encode_bits([false, false, true, true, false]), vec![2, 2, 1]);
        assert_eq!(encode_bits([true; 6]), vec![0, 6]);
        assert_eq!(encode_bits([false; 3]), vec![3]);
    }

    #[test]
    fn column_major_order() {
        // 2x3, set pixels (0,1) and (1,1): column-major 0 0 1 1 0 0
        let m = BinaryMask::rect(2, 3, 0, 2, 1, 2);
        assert_eq!(encode_mask(&m), vec![2, 2, 2]);
        assert_eq!(decode_mask(&[2, 2, 2], 2, 3).unwrap(), m);
    }

    #[test]
    fn bad_counts_and_area() {
        assert!(matches!(decode_bits(&[1, 2], 4), Err(Error::Format { .. })));
        let doc = MaskSetDocument {
            height: 2,
            width: 2,
            masks: vec![MaskRecord {
                id: 0,
                area: 3,
                rle: RleCounts { counts: vec![0, 4] },
            }],
        };
        assert!(matches!(doc.to_set(), Err(Error::Consistency(_))));
    }
}
