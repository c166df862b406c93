//! Flat little-endian tensor format: magic `DCAPT\0`, `u8` rank, `u32`
//! extents, then `f32` elements in row-major order.

use std::io::{Read, Write};

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

pub const TENSOR_MAGIC: &[u8; 6] = b"DCAPT\0";

pub fn write_tensor<S: Scalar, W: Write>(t: &Tensor<S>, out: &mut W) -> std::io::Result<()> {
    out.write_all(TENSOR_MAGIC)?;
    out.write_all(&[t.rank() as u8])?;
    for &e in t.shape() {
        out.write_all(&(e as u32).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(t.numel() * 4);
    for v in t.data() {
        buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    out.write_all(&buf)
}

pub fn tensor_to_bytes<S: Scalar>(t: &Tensor<S>) -> Vec<u8> {
    let mut out = Vec::new();
    write_tensor(t, &mut out).expect("writing to a Vec cannot fail");
    out
}

/// Reads one tensor. `offset` is the position of the reader within its
/// enclosing stream and is only used in error messages.
pub fn read_tensor<S: Scalar, R: Read>(input: &mut R, offset: usize) -> Result<(Tensor<S>, usize)> {
    let mut pos = offset;
    let mut read = |buf: &mut [u8], what: &str, pos: &mut usize| -> Result<()> {
        input
            .read_exact(buf)
            .map_err(|e| Error::parse(format!("byte {pos}"), format!("truncated tensor {what}: {e}")))?;
        *pos += buf.len();
        Ok(())
    };
    let mut magic = [0u8; 6];
    read(&mut magic, "magic", &mut pos)?;
    if &magic != TENSOR_MAGIC {
        return Err(Error::parse(format!("byte {offset}"), "bad tensor magic"));
    }
    let mut rank = [0u8; 1];
    read(&mut rank, "rank", &mut pos)?;
    if rank[0] > 4 {
        return Err(Error::parse(format!("byte {}", pos - 1), format!("rank {} exceeds 4", rank[0])));
    }
    let mut shape = Vec::with_capacity(rank[0] as usize);
    for _ in 0..rank[0] {
        let mut e = [0u8; 4];
        read(&mut e, "extent", &mut pos)?;
        shape.push(u32::from_le_bytes(e) as usize);
    }
    let numel: usize = shape.iter().product();
    let mut payload = vec![0u8; numel * 4];
    read(&mut payload, "payload", &mut pos)?;
    let data = payload
        .chunks_exact(4)
        .map(|c| S::of(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
        .collect();
    Ok((Tensor::new(shape, data)?, pos))
}

pub fn tensor_from_bytes<S: Scalar>(bytes: &[u8]) -> Result<Tensor<S>> {
    let mut cursor = bytes;
    let (t, used) = read_tensor(&mut cursor, 0)?;
    if used != bytes.len() {
        return Err(Error::parse(format!("byte {used}"), "trailing bytes after tensor"));
    }
    Ok(t)
}
