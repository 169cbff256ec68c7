//! CRC-64 content digests used by manifests, checkpoints and traces.

use crc::{Crc, CRC_64_XZ};

use crate::Tensor;

pub const CRC64: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);

pub fn crc64(bytes: &[u8]) -> u64 {
    CRC64.checksum(bytes)
}

/// Digest of a float buffer's little-endian bytes.
pub fn f32_digest(values: &[f32]) -> u64 {
    let mut d = CRC64.digest();
    for v in values {
        d.update(&v.to_le_bytes());
    }
    d.finalize()
}

/// Digest of a tensor's shape and contents.
pub fn tensor_digest(t: &Tensor) -> u64 {
    let mut d = CRC64.digest();
    for &s in t.shape() {
        d.update(&(s as u64).to_le_bytes());
    }
    for v in t.data() {
        d.update(&v.to_le_bytes());
    }
    d.finalize()
}

/// Formats a digest the way manifests store it.
pub fn hex(d: u64) -> alloc::string::String {
    alloc::format!("{d:016x}")
}
