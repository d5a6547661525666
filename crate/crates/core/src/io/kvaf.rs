use std::path::Path;

use super::{atomic_write, io_err, FormatError};
use crate::field::{KvaField, CHANNELS};

pub const KVAF_MAGIC: &[u8; 4] = b"KVAF";
pub const KVAF_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 5 * 4;

/// Magic, then version, height, width, frame index and channel count as
/// little-endian `u32`, then channel-major little-endian `f32` values.
pub fn encode_field(field: &KvaField) -> Vec<u8> {
    let n = field.pixels();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * n * CHANNELS);
    out.extend_from_slice(KVAF_MAGIC);
    for v in [
        KVAF_VERSION,
        field.height() as u32,
        field.width() as u32,
        field.frame() as u32,
        CHANNELS as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for c in 0..CHANNELS {
        for i in 0..n {
            out.extend_from_slice(&(field.pixel(i)[c] as f32).to_le_bytes());
        }
    }
    out
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

pub fn decode_field(bytes: &[u8]) -> Result<KvaField, FormatError> {
    if bytes.len() < 4 {
        return Err(FormatError::TruncatedFile {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    if &bytes[..4] != KVAF_MAGIC {
        return Err(FormatError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(FormatError::TruncatedFile {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let version = u32_at(bytes, 4);
    if version != KVAF_VERSION {
        return Err(FormatError::VersionMismatch {
            found: version,
            expected: KVAF_VERSION,
        });
    }
    let (h, w, frame, channels) = (
        u32_at(bytes, 8) as usize,
        u32_at(bytes, 12) as usize,
        u32_at(bytes, 16) as usize,
        u32_at(bytes, 20) as usize,
    );
    if channels != CHANNELS {
        return Err(FormatError::InvariantViolation(format!(
            "{channels} channels, expected {CHANNELS}"
        )));
    }
    let n = h * w;
    let expected = HEADER_LEN + 4 * n * CHANNELS;
    if bytes.len() < expected {
        return Err(FormatError::TruncatedFile {
            expected,
            found: bytes.len(),
        });
    }
    let mut data = vec![0.0; n * CHANNELS];
    let payload = &bytes[HEADER_LEN..expected];
    for (k, chunk) in payload.chunks_exact(4).enumerate() {
        let (c, i) = (k / n, k % n);
        data[i * CHANNELS + c] = f64::from(f32::from_le_bytes(chunk.try_into().expect("4 bytes")));
    }
    KvaField::from_pixel_major(h, w, frame, data).map_err(|e| FormatError::InvariantViolation(e.to_string()))
}

pub fn write_field(path: &Path, field: &KvaField) -> crate::Result<()> {
    atomic_write(path, &encode_field(field))
}

pub fn read_field(path: &Path) -> crate::Result<KvaField> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    Ok(decode_field(&bytes)?)
}
