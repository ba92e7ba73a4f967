//! Reads and writes the interchange formats: NPY tensors and COCO-style
//! run-length mask documents.
//!
//!     cargo run --example npy_and_rle

use panodar::io::npy::{decode, encode, read_tensor, write_tensor, Dtype, NpyArray, NpyData, Tensor};
use panodar::io::rle::{encode_bits, read_masks, write_masks, MaskSetDocument};
use panodar::masks::{BinaryMask, InstanceMaskSet};
use panodar::LabelMap;

fn main() -> panodar::Result<()> {
    let array = NpyArray::new(vec![2, 3], NpyData::U16(vec![0, 1, 2, 300, 400, 500]))?;
    let bytes = encode(&array);
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    println!("npy header: {}", String::from_utf8_lossy(&bytes[10..10 + header_len]).trim_end());
    println!("payload starts at byte {}", 10 + header_len);
    assert_eq!(decode(&bytes)?, array);

    let mut corrupt = bytes.clone();
    corrupt[6] = 9;
    match decode(&corrupt) {
        Err(e) => println!("corrupt version rejected: {e} (exit code {})", e.exit_code()),
        Ok(_) => unreachable!(),
    }

    let dir = std::env::temp_dir().join("panodar_io_example");
    std::fs::create_dir_all(&dir).map_err(|e| panodar::Error::InvalidInput(e.to_string()))?;
    let labels = LabelMap::new(2, 2, vec![0, 1, 1, 300])?;
    let path = dir.join("labels.npy");
    write_tensor(&Tensor::Labels(labels, Dtype::U16), &path)?;
    println!("read back: {:?}", read_tensor(&path)?);

    println!("column-major [0,0,1,1,0] -> counts {:?}", encode_bits([false, false, true, true, false]));
    let masks = InstanceMaskSet::new(
        4,
        5,
        vec![BinaryMask::rect(4, 5, 1, 3, 1, 4), BinaryMask::rect(4, 5, 0, 4, 0, 5)],
    )?;
    let path = dir.join("masks.json");
    write_masks(&masks, &path)?;
    let doc = MaskSetDocument::from_set(&masks);
    for m in &doc.masks {
        println!("mask {} area {} counts {:?}", m.id, m.area, m.rle.counts);
    }
    assert_eq!(read_masks(&path)?, masks);
    Ok(())
}
