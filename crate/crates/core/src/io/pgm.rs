use std::path::Path;

use super::{atomic_write, io_err, FormatError};
use crate::metrics::MaskFrame;

/// Binary 8-bit PGM holding raw label values.
pub fn encode_pgm(mask: &MaskFrame) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width, mask.height).into_bytes();
    out.extend_from_slice(&mask.labels);
    out
}

fn parse_err(message: impl Into<String>) -> FormatError {
    FormatError::Parse {
        line: 0,
        message: message.into(),
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<MaskFrame, FormatError> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(FormatError::BadMagic);
    }
    let mut pos = 2;
    let mut header = [0usize; 3];
    for slot in &mut header {
        // whitespace and comments between header tokens
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        let token = std::str::from_utf8(&bytes[start..pos]).unwrap_or_default();
        *slot = token.parse().map_err(|_| parse_err("malformed PGM header"))?;
    }
    let [width, height, maxval] = header;
    if maxval == 0 || maxval > 255 {
        return Err(parse_err(format!("unsupported PGM maxval {maxval}")));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(parse_err("missing whitespace after PGM header"));
    }
    pos += 1;
    let expected = pos + width * height;
    if bytes.len() < expected {
        return Err(FormatError::TruncatedFile {
            expected,
            found: bytes.len(),
        });
    }
    MaskFrame::new(height, width, bytes[pos..expected].to_vec())
        .map_err(|e| FormatError::InvariantViolation(e.to_string()))
}

pub fn write_mask(path: &Path, mask: &MaskFrame) -> crate::Result<()> {
    atomic_write(path, &encode_pgm(mask))
}

pub fn read_mask(path: &Path) -> crate::Result<MaskFrame> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    Ok(decode_pgm(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let m = MaskFrame::new(2, 3, vec![0, 1, 2, 3, 0, 1]).unwrap();
        assert_eq!(decode_pgm(&encode_pgm(&m)).unwrap(), m);
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 0]);
        assert_eq!(decode_pgm(&bytes).unwrap().labels, vec![1, 0]);
    }

    #[test]
    fn errors() {
        assert_eq!(decode_pgm(b"P2\n1 1\n255\n0").unwrap_err(), FormatError::BadMagic);
        assert!(matches!(
            decode_pgm(b"P5\n4 4\n255\n\0"),
            Err(FormatError::TruncatedFile { .. })
        ));
        assert!(matches!(
            decode_pgm(b"P5\n1 1\n255\n\x09"),
            Err(FormatError::InvariantViolation(_))
        ));
    }
}
