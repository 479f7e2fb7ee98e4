//! Binary tensor file format.
//!
//! Layout: magic `AFDT`, one precision byte (`0` = f32, `1` = f64), four
//! little-endian `u32` dims `(N, C, H, W)`, then the values little-endian in
//! row-major order. Round trips are bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use super::{Dims, Real, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"AFDT";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 1 + 16;

/// A tensor read from disk whose precision is only known at runtime.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl AnyTensor {
    pub fn dims(&self) -> Dims {
        match self {
            AnyTensor::F32(t) => t.dims(),
            AnyTensor::F64(t) => t.dims(),
        }
    }

    /// Converts to the requested precision (lossy when narrowing).
    pub fn into_real<T: Real>(self) -> Tensor<T> {
        match self {
            AnyTensor::F32(t) => t.cast(),
            AnyTensor::F64(t) => t.cast(),
        }
    }
}

pub fn encode<T: Real>(tensor: &Tensor<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + tensor.len() * T::BYTES);
    out.extend_from_slice(MAGIC);
    out.push(T::PRECISION_FLAG);
    for d in tensor.dims().as_array() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in tensor.values() {
        v.write_le(&mut out);
    }
    out
}

fn decode_values<T: Real>(dims: Dims, payload: &[u8]) -> Result<Tensor<T>> {
    let expected = dims.len() * T::BYTES;
    if payload.len() != expected {
        return Err(Error::Decode(format!(
            "tensor payload is {} bytes, expected {expected}",
            payload.len()
        )));
    }
    let values = payload.chunks_exact(T::BYTES).map(T::read_le).collect();
    Tensor::new(dims, values)
}

pub fn decode(bytes: &[u8]) -> Result<AnyTensor> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Decode("tensor header truncated".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Decode("bad tensor magic".into()));
    }
    let flag = bytes[4];
    let mut dims = [0usize; 4];
    for (i, d) in dims.iter_mut().enumerate() {
        let at = 5 + 4 * i;
        *d = u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
    }
    let dims = Dims::new(dims[0], dims[1], dims[2], dims[3]);
    let payload = &bytes[HEADER_LEN..];
    match flag {
        0 => decode_values::<f32>(dims, payload).map(AnyTensor::F32),
        1 => decode_values::<f64>(dims, payload).map(AnyTensor::F64),
        other => Err(Error::Decode(format!("unknown precision flag {other}"))),
    }
}

pub fn write_to<T: Real>(tensor: &Tensor<T>, mut w: impl Write) -> Result<()> {
    w.write_all(&encode(tensor))?;
    Ok(())
}

pub fn read_from(mut r: impl Read) -> Result<AnyTensor> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode(&bytes)
}

pub fn save<T: Real>(tensor: &Tensor<T>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode(tensor))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<AnyTensor> {
    decode(&std::fs::read(path)?)
}
