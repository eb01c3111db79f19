//! Named parameter tensors and the little-endian `DNCW` weight format.
//!
//! Layout: magic `DNCW`, format version (u32), tensor count (u32), then per
//! tensor the name length (u32) and UTF-8 name, rank (u32), each dim (u32),
//! and the payload as IEEE-754 binary32 values in row-major order.

use std::io::{Read, Write};

use ndarray::{ArrayD, IxDyn};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"DNCW";
pub const FORMAT_VERSION: u32 = 1;

/// A named, row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub value: ArrayD<f64>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, value: ArrayD<f64>) -> Self {
        Self {
            name: name.into(),
            value: value.as_standard_layout().into_owned(),
        }
    }

    pub fn zeros(name: impl Into<String>, dims: &[usize]) -> Self {
        Self::new(name, ArrayD::zeros(IxDyn(dims)))
    }

    pub fn dims(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        self.value.as_slice().expect("standard layout")
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        self.value.as_slice_mut().expect("standard layout")
    }
}

/// Ordered collection of tensors sharing one layout, used for parameters,
/// gradients and optimizer moments alike.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn zeros_like(other: &ParamSet) -> Self {
        Self {
            tensors: other
                .tensors
                .iter()
                .map(|t| Tensor::zeros(t.name.clone(), t.dims()))
                .collect(),
        }
    }

    pub fn total_len(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn same_layout(&self, other: &ParamSet) -> bool {
        self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.dims() == b.dims())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Rounds every value to the nearest binary32, the storage precision.
    pub fn round_to_f32(&mut self) {
        for t in &mut self.tensors {
            t.value.mapv_inplace(|v| v as f32 as f64);
        }
    }
}

fn put_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{what} {v} exceeds u32")))
}

pub fn write_tensors<W: Write>(w: &mut W, tensors: &[Tensor]) -> Result<()> {
    w.write_all(MAGIC)?;
    put_u32(w, FORMAT_VERSION)?;
    put_u32(w, to_u32(tensors.len(), "tensor count")?)?;
    for t in tensors {
        let name = t.name.as_bytes();
        put_u32(w, to_u32(name.len(), "name length")?)?;
        w.write_all(name)?;
        put_u32(w, to_u32(t.dims().len(), "rank")?)?;
        for &d in t.dims() {
            put_u32(w, to_u32(d, "dimension")?)?;
        }
        let mut buf = Vec::with_capacity(t.len() * 4);
        for &v in t.data() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_tensors<R: Read>(r: &mut R) -> Result<Vec<Tensor>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let version = get_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let count = get_u32(r)? as usize;
    let mut out = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name_len = get_u32(r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| Error::Format(e.to_string()))?;
        let rank = get_u32(r)? as usize;
        let dims = (0..rank)
            .map(|_| get_u32(r).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let len: usize = dims.iter().product();
        let mut raw = vec![0u8; len * 4];
        r.read_exact(&mut raw)?;
        let data: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        let value = ArrayD::from_shape_vec(IxDyn(&dims), data)
            .map_err(|e| Error::Format(e.to_string()))?;
        out.push(Tensor { name, value });
    }
    Ok(out)
}
