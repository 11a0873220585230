//! Reading and writing the npy array container.
//!
//! Only version 1.0, little-endian, C-order files are supported. Sample
//! tensors are `<f4` with shape `(T, C, nz, ny, nx)`, label maps `|u1` with
//! shape `(nz, ny, nx)` and uncertainty maps `<f8` with shape `(nz, ny, nx)`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::{Dims, LabelMap, MapId, SampleTensor, Scope, UncertaintyMap};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 6] = *b"\x93NUMPY";
const ALIGN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F4,
    F8,
    U1,
}

impl Dtype {
    pub fn descr(self) -> &'static str {
        match self {
            Dtype::F4 => "<f4",
            Dtype::F8 => "<f8",
            Dtype::U1 => "|u1",
        }
    }

    fn size(self) -> usize {
        match self {
            Dtype::F4 => 4,
            Dtype::F8 => 8,
            Dtype::U1 => 1,
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "<f4" => Some(Dtype::F4),
            "<f8" => Some(Dtype::F8),
            "|u1" | "<u1" => Some(Dtype::U1),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NpyData {
    F4(Vec<f32>),
    F8(Vec<f64>),
    U1(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub data: NpyData,
}

impl NpyArray {
    pub fn dtype(&self) -> Dtype {
        match self.data {
            NpyData::F4(_) => Dtype::F4,
            NpyData::F8(_) => Dtype::F8,
            NpyData::U1(_) => Dtype::U1,
        }
    }
}

/// Builds the padded v1.0 header (magic through trailing newline).
pub fn header_bytes(dtype: Dtype, shape: &[usize]) -> Vec<u8> {
    let dims = match shape {
        [one] => format!("({one},)"),
        _ => format!(
            "({})",
            shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")
        ),
    };
    let mut dict = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {dims}, }}",
        dtype.descr()
    );
    let unpadded = MAGIC.len() + 2 + 2 + dict.len() + 1;
    let pad = (ALIGN - unpadded % ALIGN) % ALIGN;
    dict.extend(std::iter::repeat_n(' ', pad));
    dict.push('\n');

    let mut out = Vec::with_capacity(unpadded + pad);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(dict.len() as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out
}

pub fn write_npy(path: &Path, shape: &[usize], data: &NpyData) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let (dtype, len) = match data {
        NpyData::F4(v) => (Dtype::F4, v.len()),
        NpyData::F8(v) => (Dtype::F8, v.len()),
        NpyData::U1(v) => (Dtype::U1, v.len()),
    };
    if shape.iter().product::<usize>() != len {
        return Err(Error::Shape(format!("shape {shape:?} does not hold {len} values")));
    }
    w.write_all(&header_bytes(dtype, shape))?;
    match data {
        NpyData::F4(v) => {
            let mut buf = Vec::with_capacity(v.len() * 4);
            for x in v {
                buf.extend_from_slice(&x.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        NpyData::F8(v) => {
            let mut buf = Vec::with_capacity(v.len() * 8);
            for x in v {
                buf.extend_from_slice(&x.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        NpyData::U1(v) => w.write_all(v)?,
    }
    w.flush()?;
    Ok(())
}

struct Header {
    dtype: Dtype,
    shape: Vec<usize>,
}

fn bad_header(path: &Path, msg: impl Into<String>) -> Error {
    Error::BadHeader {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

/// Value following `'key':` in the header dict.
fn dict_value<'a>(dict: &'a str, key: &str) -> Option<&'a str> {
    let pat = format!("'{key}'");
    let start = dict.find(&pat)? + pat.len();
    let rest = dict[start..].trim_start().strip_prefix(':')?;
    Some(rest.trim_start())
}

fn parse_header(path: &Path, dict: &str) -> Result<Header> {
    let descr = dict_value(dict, "descr")
        .and_then(|v| v.strip_prefix('\''))
        .and_then(|v| v.split('\'').next())
        .ok_or_else(|| bad_header(path, "missing descr"))?;
    let dtype = Dtype::parse(descr).ok_or_else(|| Error::BadDtype {
        path: path.to_path_buf(),
        dtype: descr.to_string(),
    })?;

    let fortran = dict_value(dict, "fortran_order").ok_or_else(|| bad_header(path, "missing fortran_order"))?;
    if fortran.starts_with("True") {
        return Err(bad_header(path, "Fortran order is not supported"));
    } else if !fortran.starts_with("False") {
        return Err(bad_header(path, "malformed fortran_order"));
    }

    let shape_src = dict_value(dict, "shape")
        .and_then(|v| v.strip_prefix('('))
        .and_then(|v| v.split(')').next())
        .ok_or_else(|| bad_header(path, "missing shape"))?;
    let shape = shape_src
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| bad_header(path, format!("malformed shape ({shape_src})")))?;
    Ok(Header { dtype, shape })
}

pub fn read_npy(path: &Path) -> Result<NpyArray> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 6];
    if r.read_exact(&mut magic).is_err() || magic != MAGIC {
        return Err(Error::BadMagic(path.to_path_buf()));
    }
    let mut version = [0u8; 2];
    r.read_exact(&mut version)?;
    if version != [1, 0] {
        return Err(bad_header(path, format!("version {}.{} (only 1.0 is supported)", version[0], version[1])));
    }
    let mut len = [0u8; 2];
    r.read_exact(&mut len)?;
    let mut dict = vec![0u8; u16::from_le_bytes(len) as usize];
    r.read_exact(&mut dict)?;
    let dict = String::from_utf8(dict).map_err(|_| bad_header(path, "header is not text"))?;
    let header = parse_header(path, &dict)?;

    let count: usize = header.shape.iter().product();
    let mut payload = Vec::with_capacity(count * header.dtype.size());
    r.read_to_end(&mut payload)?;
    if payload.len() != count * header.dtype.size() {
        return Err(Error::Shape(format!(
            "{}: payload has {} bytes, shape {:?} needs {}",
            path.display(),
            payload.len(),
            header.shape,
            count * header.dtype.size()
        )));
    }
    let data = match header.dtype {
        Dtype::F4 => NpyData::F4(
            payload
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                .collect(),
        ),
        Dtype::F8 => NpyData::F8(
            payload
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect(),
        ),
        Dtype::U1 => NpyData::U1(payload),
    };
    Ok(NpyArray {
        shape: header.shape,
        data,
    })
}

fn expect_rank(path: &Path, arr: &NpyArray, rank: usize) -> Result<()> {
    if arr.shape.len() != rank {
        return Err(Error::BadRank {
            path: path.to_path_buf(),
            rank: arr.shape.len(),
            expected: rank,
        });
    }
    Ok(())
}

fn wrong_dtype(path: &Path, arr: &NpyArray) -> Error {
    Error::BadDtype {
        path: path.to_path_buf(),
        dtype: arr.dtype().descr().to_string(),
    }
}

/// Reads a `(T, C, nz, ny, nx)` `<f4` sample tensor and validates it.
pub fn read_samples(path: &Path) -> Result<SampleTensor> {
    let arr = read_npy(path)?;
    expect_rank(path, &arr, 5)?;
    let s = &arr.shape;
    let dims = Dims::new(s[4], s[3], s[2]);
    let (t, c) = (s[0], s[1]);
    match arr.data {
        NpyData::F4(data) => SampleTensor::new(dims, t, c, data),
        _ => Err(wrong_dtype(path, &arr)),
    }
}

pub fn write_samples(path: &Path, s: &SampleTensor) -> Result<()> {
    let d = s.dims();
    write_npy(
        path,
        &[s.samples(), s.classes(), d.nz, d.ny, d.nx],
        &NpyData::F4(s.as_slice().to_vec()),
    )
}

/// Reads a `(nz, ny, nx)` `|u1` label map with labels below `classes`.
pub fn read_labels(path: &Path, classes: usize) -> Result<LabelMap> {
    let arr = read_npy(path)?;
    expect_rank(path, &arr, 3)?;
    let dims = Dims::new(arr.shape[2], arr.shape[1], arr.shape[0]);
    match arr.data {
        NpyData::U1(data) => LabelMap::new(dims, classes, data),
        _ => Err(wrong_dtype(path, &arr)),
    }
}

pub fn write_labels(path: &Path, l: &LabelMap) -> Result<()> {
    let d = l.dims();
    write_npy(path, &[d.nz, d.ny, d.nx], &NpyData::U1(l.as_slice().to_vec()))
}

pub fn read_map(path: &Path, id: MapId, scope: Scope) -> Result<UncertaintyMap> {
    let arr = read_npy(path)?;
    expect_rank(path, &arr, 3)?;
    let dims = Dims::new(arr.shape[2], arr.shape[1], arr.shape[0]);
    match arr.data {
        NpyData::F8(data) => UncertaintyMap::new(id, scope, dims, data),
        _ => Err(wrong_dtype(path, &arr)),
    }
}

pub fn write_map(path: &Path, m: &UncertaintyMap) -> Result<()> {
    let d = m.dims();
    write_npy(path, &[d.nz, d.ny, d.nx], &NpyData::F8(m.values().to_vec()))
}
