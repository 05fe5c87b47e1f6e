//! `RXT1` binary tensor container.
//!
//! Layout: the 4 magic bytes `RXT1`, a little-endian `u32` rank, `rank`
//! little-endian `u32` dimensions, then the row-major `f64` payload in
//! little-endian order. Tensors are always written with rank 4; ranks below 4
//! are accepted on read and padded with leading ones.

use std::io::{Read, Write};

use super::{Shape, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"RXT1";

pub fn write_tensor<W: Write>(mut w: W, tensor: &Tensor) -> Result<()> {
    w.write_all(MAGIC)?;
    let dims = tensor.shape().dims();
    w.write_all(&(dims.len() as u32).to_le_bytes())?;
    for d in dims {
        let d = u32::try_from(d).map_err(|_| Error::TensorFormat(format!("dimension {d} exceeds u32")))?;
        w.write_all(&d.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(tensor.len() * 8);
    for v in tensor.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_tensor<R: Read>(mut r: R) -> Result<Tensor> {
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(Error::TensorFormat(format!("bad magic {magic:?}")));
    }
    let rank = read_u32(&mut r, "rank")? as usize;
    if rank > 4 {
        return Err(Error::TensorFormat(format!("rank {rank} > 4 unsupported")));
    }
    let mut dims = [1usize; 4];
    for i in 0..rank {
        dims[4 - rank + i] = read_u32(&mut r, "dimension")? as usize;
    }
    let shape = Shape::new(dims[0], dims[1], dims[2], dims[3]);
    let mut bytes = vec![0u8; shape.numel() * 8];
    read_exact(&mut r, &mut bytes, "payload")?;
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Tensor::from_vec(shape, data)
}

pub fn to_bytes(tensor: &Tensor) -> Vec<u8> {
    let mut out = Vec::new();
    write_tensor(&mut out, tensor).expect("writing to a Vec cannot fail");
    out
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::TensorFormat(format!("truncated {what}: {e}")))
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}
