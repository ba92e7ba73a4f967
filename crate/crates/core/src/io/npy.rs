//! NPY version 1.0 reader and writer.
//!
//! Only little-endian, C-ordered arrays of `float32`, `uint8` and `uint16`
//! are accepted. Anything else is rejected with the byte offset of the
//! offending header element.

use std::path::Path;

use crate::boundary::BoundaryMap;
use crate::error::{Error, Result};
use crate::fusion::WeightMap;
use crate::grid::{Label, LabelMap, LogitsGrid};

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const PREAMBLE: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    F32,
    U8,
    U16,
}

impl Dtype {
    fn descr(self) -> &'static str {
        match self {
            Dtype::F32 => "<f4",
            Dtype::U8 => "|u1",
            Dtype::U16 => "<u2",
        }
    }

    fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::U8 => 1,
            Dtype::U16 => 2,
        }
    }

    fn parse(descr: &str, offset: u64) -> Result<Self> {
        match descr {
            "<f4" => Ok(Dtype::F32),
            "|u1" | "<u1" | "u1" => Ok(Dtype::U8),
            "<u2" => Ok(Dtype::U16),
            d if d.starts_with('>') => Err(Error::format(
                offset,
                format!("big-endian dtype '{d}' is not supported; expected little-endian"),
            )),
            d => Err(Error::format(
                offset,
                format!("unsupported dtype '{d}'; expected '<f4', '|u1' or '<u2'"),
            )),
        }
    }
}

/// Decoded payload of an NPY file.
#[derive(Clone, Debug, PartialEq)]
pub enum NpyData {
    F32(Vec<f32>),
    U8(Vec<u8>),
    U16(Vec<u16>),
}

impl NpyData {
    pub fn dtype(&self) -> Dtype {
        match self {
            NpyData::F32(_) => Dtype::F32,
            NpyData::U8(_) => Dtype::U8,
            NpyData::U16(_) => Dtype::U16,
        }
    }

    fn len(&self) -> usize {
        match self {
            NpyData::F32(v) => v.len(),
            NpyData::U8(v) => v.len(),
            NpyData::U16(v) => v.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub data: NpyData,
}

impl NpyArray {
    pub fn new(shape: Vec<usize>, data: NpyData) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::InvalidInput(format!(
                "shape {shape:?} holds {n} elements, data has {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }
}

fn header_dict(dtype: Dtype, shape: &[usize]) -> String {
    let dims = match shape {
        [one] => format!("({one},)"),
        _ => format!(
            "({})",
            shape.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
        ),
    };
    format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {dims}, }}",
        dtype.descr()
    )
}

pub fn encode(array: &NpyArray) -> Vec<u8> {
    let mut header = header_dict(array.data.dtype(), &array.shape);
    // pad so that the payload starts on a 64-byte boundary, newline last
    let unpadded = PREAMBLE + header.len() + 1;
    header.extend(std::iter::repeat_n(' ', (64 - unpadded % 64) % 64));
    header.push('\n');

    let mut out = Vec::with_capacity(PREAMBLE + header.len() + array.data.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    match &array.data {
        NpyData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        NpyData::U8(v) => out.extend_from_slice(v),
        NpyData::U16(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
    }
    out
}

/// Minimal reader for the Python dict literal in an NPY header.
struct HeaderParser<'a> {
    text: &'a [u8],
    pos: usize,
    base: u64,
}

impl<'a> HeaderParser<'a> {
    fn offset(&self) -> u64 {
        self.base + self.pos as u64
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::format(self.offset(), message))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.text.len() && self.text[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        self.skip_ws();
        if self.text.get(self.pos) != Some(&c) {
            return self.err(format!("expected '{}'", c as char));
        }
        self.pos += 1;
        Ok(())
    }

    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.text.get(self.pos) == Some(&c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn string(&mut self) -> Result<String> {
        self.skip_ws();
        let quote = match self.text.get(self.pos) {
            Some(&q @ (b'\'' | b'"')) => q,
            _ => return self.err("expected a quoted string"),
        };
        let start = self.pos + 1;
        let Some(len) = self.text[start..].iter().position(|&b| b == quote) else {
            return self.err("unterminated string");
        };
        self.pos = start + len + 1;
        Ok(String::from_utf8_lossy(&self.text[start..start + len]).into_owned())
    }

    fn word(&mut self) -> &'a [u8] {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.text.len() && self.text[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        &self.text[start..self.pos]
    }

    fn shape(&mut self) -> Result<Vec<usize>> {
        self.expect(b'(')?;
        let mut dims = Vec::new();
        loop {
            if self.eat(b')') {
                return Ok(dims);
            }
            let at = self.offset();
            let word = self.word();
            let dim = std::str::from_utf8(word)
                .ok()
                .and_then(|s| s.trim_end_matches('L').parse::<usize>().ok())
                .ok_or_else(|| Error::format(at, "shape entries must be non-negative integers"))?;
            dims.push(dim);
            if !self.eat(b',') {
                self.expect(b')')?;
                return Ok(dims);
            }
        }
    }
}

struct Header {
    dtype: Dtype,
    shape: Vec<usize>,
    data_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < PREAMBLE || &bytes[..6] != MAGIC {
        return Err(Error::format(0, "missing NPY magic string"));
    }
    if bytes[6] != 1 || bytes[7] != 0 {
        return Err(Error::format(
            6,
            format!("NPY version {}.{} is not supported; expected 1.0", bytes[6], bytes[7]),
        ));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let data_start = PREAMBLE + header_len;
    if bytes.len() < data_start {
        return Err(Error::format(8, "header length runs past end of file"));
    }

    let mut p = HeaderParser {
        text: &bytes[PREAMBLE..data_start],
        pos: 0,
        base: PREAMBLE as u64,
    };
    let (mut dtype, mut fortran, mut shape) = (None, None, None);
    p.expect(b'{')?;
    loop {
        if p.eat(b'}') {
            break;
        }
        let key_offset = p.offset();
        let key = p.string()?;
        p.expect(b':')?;
        let value_offset = {
            p.skip_ws();
            p.offset()
        };
        match key.as_str() {
            "descr" => dtype = Some(Dtype::parse(&p.string()?, value_offset)?),
            "fortran_order" => match p.word() {
                b"False" => fortran = Some(false),
                b"True" => {
                    return Err(Error::format(
                        value_offset,
                        "fortran_order arrays are not supported; expected C order",
                    ))
                }
                _ => return Err(Error::format(value_offset, "fortran_order must be True or False")),
            },
            "shape" => shape = Some(p.shape()?),
            other => return Err(Error::format(key_offset, format!("unexpected header key '{other}'"))),
        }
        if !p.eat(b',') {
            p.expect(b'}')?;
            break;
        }
    }
    let missing = |k: &str| Error::format(PREAMBLE as u64, format!("header is missing '{k}'"));
    let dtype = dtype.ok_or_else(|| missing("descr"))?;
    fortran.ok_or_else(|| missing("fortran_order"))?;
    let shape = shape.ok_or_else(|| missing("shape"))?;
    Ok(Header {
        dtype,
        shape,
        data_start,
    })
}

pub fn decode(bytes: &[u8]) -> Result<NpyArray> {
    let header = parse_header(bytes)?;
    let count: usize = header.shape.iter().product();
    let payload = &bytes[header.data_start..];
    let expected = count * header.dtype.size();
    if payload.len() != expected {
        return Err(Error::format(
            header.data_start as u64,
            format!("payload is {} bytes, shape {:?} needs {expected}", payload.len(), header.shape),
        ));
    }
    let data = match header.dtype {
        Dtype::F32 => NpyData::F32(
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        ),
        Dtype::U8 => NpyData::U8(payload.to_vec()),
        Dtype::U16 => NpyData::U16(
            payload
                .chunks_exact(2)
                .map(|c| u16::from_le_bytes([c[0], c[1]]))
                .collect(),
        ),
    };
    Ok(NpyArray {
        shape: header.shape,
        data,
    })
}

pub fn read_npy(path: &Path) -> Result<NpyArray> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub fn write_npy(array: &NpyArray, path: &Path) -> Result<()> {
    super::write_atomic(path, &encode(array))
}

fn rank_error(what: &str, expected: &str, array: &NpyArray) -> Error {
    Error::format(
        None,
        format!(
            "{what}: expected {expected}, found {:?} with shape {:?}",
            array.data.dtype(),
            array.shape
        ),
    )
}

/// Tensor read from disk, typed by dtype and rank.
#[derive(Clone, Debug, PartialEq)]
pub enum Tensor {
    Logits(LogitsGrid),
    Labels(LabelMap, Dtype),
}

impl TryFrom<NpyArray> for Tensor {
    type Error = Error;

    fn try_from(array: NpyArray) -> Result<Self> {
        match (&array.data, array.shape.len()) {
            (NpyData::F32(_), 3) => Ok(Tensor::Logits(logits_from_array(array)?)),
            (NpyData::U8(_) | NpyData::U16(_), 2) => {
                let dtype = array.data.dtype();
                Ok(Tensor::Labels(labels_from_array(array)?, dtype))
            }
            _ => Err(rank_error(
                "tensor",
                "float32 (C,H,W) logits or uint8/uint16 (H,W) labels",
                &array,
            )),
        }
    }
}

impl Tensor {
    pub fn to_array(&self) -> NpyArray {
        match self {
            Tensor::Logits(g) => logits_to_array(g),
            Tensor::Labels(m, dtype) => labels_to_array(m, *dtype)
                .expect("labels were read with this dtype"),
        }
    }
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    Tensor::try_from(read_npy(path)?)
}

pub fn write_tensor(tensor: &Tensor, path: &Path) -> Result<()> {
    write_npy(&tensor.to_array(), path)
}

pub fn logits_from_array(array: NpyArray) -> Result<LogitsGrid> {
    match (array.data, array.shape.as_slice()) {
        (NpyData::F32(values), &[c, h, w]) => LogitsGrid::new(c, h, w, values).map_err(|e| match e {
            Error::InvalidInput(m) => Error::format(None, m),
            other => other,
        }),
        (data, _) => Err(rank_error(
            "logits",
            "float32 with shape (C,H,W)",
            &NpyArray {
                shape: array.shape,
                data,
            },
        )),
    }
}

pub fn logits_to_array(grid: &LogitsGrid) -> NpyArray {
    NpyArray {
        shape: vec![grid.classes(), grid.height(), grid.width()],
        data: NpyData::F32(grid.values().to_vec()),
    }
}

pub fn labels_from_array(array: NpyArray) -> Result<LabelMap> {
    let labels: Vec<Label> = match (&array.data, array.shape.as_slice()) {
        (NpyData::U8(v), &[_, _]) => v.iter().map(|&x| Label::from(x)).collect(),
        (NpyData::U16(v), &[_, _]) => v.clone(),
        _ => return Err(rank_error("labels", "uint8 or uint16 with shape (H,W)", &array)),
    };
    LabelMap::new(array.shape[0], array.shape[1], labels).map_err(|e| Error::format(None, e.to_string()))
}

/// Encodes labels as `dtype`; `uint8` fails if a label exceeds 255.
pub fn labels_to_array(map: &LabelMap, dtype: Dtype) -> Result<NpyArray> {
    let shape = vec![map.height(), map.width()];
    let data = match dtype {
        Dtype::U8 => NpyData::U8(
            map.labels()
                .iter()
                .map(|&l| u8::try_from(l))
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::InvalidInput("label exceeds uint8 range".into()))?,
        ),
        Dtype::U16 => NpyData::U16(map.labels().to_vec()),
        Dtype::F32 => return Err(Error::InvalidInput("labels cannot be stored as float32".into())),
    };
    Ok(NpyArray { shape, data })
}

/// `uint8` when every label fits, `uint16` otherwise.
pub fn labels_to_array_compact(map: &LabelMap) -> NpyArray {
    let dtype = if map.labels().iter().all(|&l| l <= 255) {
        Dtype::U8
    } else {
        Dtype::U16
    };
    labels_to_array(map, dtype).expect("dtype chosen to fit")
}

pub fn read_logits(path: &Path) -> Result<LogitsGrid> {
    logits_from_array(read_npy(path)?)
}

pub fn write_logits(grid: &LogitsGrid, path: &Path) -> Result<()> {
    write_npy(&logits_to_array(grid), path)
}

pub fn read_labels(path: &Path) -> Result<LabelMap> {
    labels_from_array(read_npy(path)?)
}

pub fn write_labels(map: &LabelMap, path: &Path) -> Result<()> {
    write_npy(&labels_to_array_compact(map), path)
}

/// Boundary maps are `uint8` `(H,W)` arrays of 0/1.
pub fn boundary_to_array(map: &BoundaryMap) -> NpyArray {
    NpyArray {
        shape: vec![map.height(), map.width()],
        data: NpyData::U8(map.bits().iter().map(|&b| u8::from(b)).collect()),
    }
}

pub fn boundary_from_array(array: NpyArray) -> Result<BoundaryMap> {
    match (&array.data, array.shape.as_slice()) {
        (NpyData::U8(v), &[h, w]) => {
            if let Some(bad) = v.iter().find(|&&b| b > 1) {
                return Err(Error::format(None, format!("boundary value {bad} is not 0 or 1")));
            }
            BoundaryMap::new(h, w, v.iter().map(|&b| b == 1).collect())
        }
        _ => Err(rank_error("boundary map", "uint8 with shape (H,W)", &array)),
    }
}

pub fn read_boundary(path: &Path) -> Result<BoundaryMap> {
    boundary_from_array(read_npy(path)?)
}

pub fn write_boundary(map: &BoundaryMap, path: &Path) -> Result<()> {
    write_npy(&boundary_to_array(map), path)
}

/// Weight maps are `float32` `(H,W)` arrays.
pub fn weights_to_array(map: &WeightMap) -> NpyArray {
    NpyArray {
        shape: vec![map.height(), map.width()],
        data: NpyData::F32(map.weights().to_vec()),
    }
}

pub fn weights_from_array(array: NpyArray) -> Result<WeightMap> {
    match (array.data, array.shape.as_slice()) {
        (NpyData::F32(v), &[h, w]) => WeightMap::new(h, w, v).map_err(|e| Error::format(None, e.to_string())),
        (data, _) => Err(rank_error(
            "weight map",
            "float32 with shape (H,W)",
            &NpyArray {
                shape: array.shape,
                data,
            },
        )),
    }
}

pub fn read_weights(path: &Path) -> Result<WeightMap> {
    weights_from_array(read_npy(path)?)
}

pub fn write_weights(map: &WeightMap, path: &Path) -> Result<()> {
    write_npy(&weights_to_array(map), path)
}
