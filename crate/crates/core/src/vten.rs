//! Binary tensor files.
//!
//! Layout: magic `VTEN`, one dtype byte (0 = f64, 1 = f32), one rank byte,
//! `rank` little-endian `u32` dimensions, then the values in row-major
//! order as little-endian IEEE-754.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{DType, Real, Tensor};

pub const MAGIC: &[u8; 4] = b"VTEN";

pub fn header_len(rank: usize) -> usize {
    6 + 4 * rank
}

/// Encode with the tensor's own element type.
pub fn encode<T: Real>(tensor: &Tensor<T>) -> Vec<u8> {
    encode_as(tensor, T::DTYPE)
}

/// Encode, converting values to `dtype` on the way out.
pub fn encode_as<T: Real>(tensor: &Tensor<T>, dtype: DType) -> Vec<u8> {
    let rank = tensor.rank();
    assert!(rank <= u8::MAX as usize, "rank too large for the format");
    let mut out = Vec::with_capacity(header_len(rank) + tensor.len() * dtype.size());
    out.extend_from_slice(MAGIC);
    out.push(dtype as u8);
    out.push(rank as u8);
    for &d in tensor.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    match dtype {
        DType::F64 => tensor.data().iter().for_each(|&x| x.as_f64().put_le(&mut out)),
        DType::F32 => tensor
            .data()
            .iter()
            .for_each(|&x| (x.as_f64() as f32).put_le(&mut out)),
    }
    out
}

/// `(rank, dtype)` from the fixed header prefix.
pub fn peek(bytes: &[u8], origin: &Path) -> Result<(usize, DType)> {
    if bytes.len() < 6 || &bytes[..4] != MAGIC {
        return Err(Error::format(origin, "missing VTEN magic"));
    }
    let dtype = DType::from_code(bytes[4]).ok_or_else(|| Error::format(origin, format!("unknown dtype code {}", bytes[4])))?;
    Ok((bytes[5] as usize, dtype))
}

/// Decode into element type `T`, converting from the stored dtype if needed.
pub fn decode<T: Real>(bytes: &[u8], origin: &Path) -> Result<Tensor<T>> {
    let bad = |msg: String| Error::format(origin, msg);
    let (rank, dtype) = peek(bytes, origin)?;
    let header = header_len(rank);
    if bytes.len() < header {
        return Err(bad("truncated header".into()));
    }
    let shape: Vec<usize> = (0..rank)
        .map(|i| u32::from_le_bytes(bytes[6 + 4 * i..10 + 4 * i].try_into().unwrap()) as usize)
        .collect();
    let count: usize = shape.iter().product();
    let body = &bytes[header..];
    if body.len() != count * dtype.size() {
        return Err(bad(format!(
            "expected {} value bytes for shape {shape:?}, found {}",
            count * dtype.size(),
            body.len()
        )));
    }
    let data: Vec<T> = match dtype {
        DType::F64 => body.chunks_exact(8).map(|c| T::of(f64::get_le(c))).collect(),
        DType::F32 => body
            .chunks_exact(4)
            .map(|c| T::of(f32::get_le(c) as f64))
            .collect(),
    };
    Tensor::new(shape, data).map_err(|e| bad(e.to_string()))
}

pub fn write<T: Real>(path: &Path, tensor: &Tensor<T>) -> Result<()> {
    write_as(path, tensor, T::DTYPE)
}

pub fn write_as<T: Real>(path: &Path, tensor: &Tensor<T>, dtype: DType) -> Result<()> {
    fs::write(path, encode_as(tensor, dtype)).map_err(|e| Error::io(path, e))
}

pub fn read<T: Real>(path: &Path) -> Result<Tensor<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}
