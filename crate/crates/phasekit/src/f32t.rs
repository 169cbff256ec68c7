//! `F32T` tensor files: magic `F32T`, a `u8` rank, `rank` little-endian `u32`
//! dimensions, then the little-endian `f32` payload in row-major order.

use std::path::Path;

use phasekit_core::Tensor;

use crate::error::{self, Error, Result};

pub const MAGIC: &[u8; 4] = b"F32T";

pub fn encode(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(5 + 4 * t.rank() + 4 * t.len());
    out.extend_from_slice(MAGIC);
    out.push(u8::try_from(t.rank()).expect("rank fits in a byte"));
    for &d in t.shape() {
        out.extend_from_slice(&u32::try_from(d).expect("dimension fits in u32").to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Tensor, String> {
    if bytes.len() < 5 || &bytes[..4] != MAGIC {
        return Err("not an F32T file".into());
    }
    let rank = bytes[4] as usize;
    let header = 5 + 4 * rank;
    if bytes.len() < header {
        return Err("truncated header".into());
    }
    let shape: Vec<usize> = bytes[5..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let n: usize = shape.iter().product();
    if bytes.len() - header != 4 * n {
        return Err(format!("payload is {} bytes, shape {shape:?} needs {}", bytes.len() - header, 4 * n));
    }
    let data = bytes[header..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor::new(shape, data).map_err(|e| e.to_string())
}

/// Writes the tensor and returns the CRC-64 of the bytes written.
pub fn write(path: &Path, t: &Tensor) -> Result<u64> {
    let bytes = encode(t);
    error::write(path, &bytes)?;
    Ok(phasekit_core::digest::crc64(&bytes))
}

/// Reads a tensor, checking the file digest when one is given.
pub fn read(path: &Path, expected: Option<u64>) -> Result<Tensor> {
    let bytes = error::read(path)?;
    if let Some(want) = expected {
        let got = phasekit_core::digest::crc64(&bytes);
        if got != want {
            return Err(Error::DigestMismatch {
                path: path.to_path_buf(),
                expected: phasekit_core::digest::hex(want),
                actual: phasekit_core::digest::hex(got),
            });
        }
    }
    decode(&bytes).map_err(|reason| Error::format(path, reason))
}
