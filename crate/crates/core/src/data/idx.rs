//! IDX binary format (the MNIST distribution format).
//!
//! Big-endian `u32` magic `0x0000 08 nd` (type byte `0x08` = unsigned byte,
//! `nd` = number of dimensions), `nd` big-endian `u32` extents, then the
//! payload in row-major order.

use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxHeader {
    pub magic: u32,
    pub dims: Vec<u32>,
}

impl IdxHeader {
    pub fn payload_len(&self) -> usize {
        self.dims.iter().map(|&d| d as usize).product()
    }

    fn byte_len(&self) -> usize {
        4 + 4 * self.dims.len()
    }
}

/// Decoded payload: image pixels scaled into `[0, 1]`, or class labels.
#[derive(Clone, Debug, PartialEq)]
pub enum IdxData {
    Images(Vec<f64>),
    Labels(Vec<usize>),
}

pub fn parse_idx(bytes: &[u8]) -> Result<(IdxHeader, IdxData)> {
    if bytes.len() < 8 {
        return Err(Error::Format(format!(
            "IDX stream of {} bytes is shorter than the 8-byte minimum",
            bytes.len()
        )));
    }
    let word = |i: usize| u32::from_be_bytes(bytes[i..i + 4].try_into().unwrap());
    let magic = word(0);
    let ndim = match magic {
        IMAGES_MAGIC => 3,
        LABELS_MAGIC => 1,
        other => return Err(Error::Format(format!("unsupported IDX magic 0x{other:08x}"))),
    };
    let header_len = 4 + 4 * ndim;
    if bytes.len() < header_len {
        return Err(Error::Format(format!(
            "IDX header truncated: expected {header_len} bytes, got {}",
            bytes.len()
        )));
    }
    let header = IdxHeader {
        magic,
        dims: (0..ndim).map(|d| word(4 + 4 * d)).collect(),
    };
    let payload = &bytes[header_len..];
    let expected = header.payload_len();
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "IDX payload size mismatch: header declares {expected} bytes, found {}",
            payload.len()
        )));
    }
    let data = if magic == IMAGES_MAGIC {
        IdxData::Images(payload.iter().map(|&b| b as f64 / 255.0).collect())
    } else {
        IdxData::Labels(payload.iter().map(|&b| b as usize).collect())
    };
    Ok((header, data))
}

/// Inverse of [`parse_idx`]. Pixels are mapped back to bytes by
/// `round(255 v)`, which recovers every value `parse_idx` can produce.
pub fn serialize_idx(header: &IdxHeader, data: &IdxData) -> Result<Vec<u8>> {
    let payload: Vec<u8> = match (header.magic, data) {
        (IMAGES_MAGIC, IdxData::Images(px)) if header.dims.len() == 3 => px
            .iter()
            .map(|&v| {
                if (0.0..=1.0).contains(&v) {
                    Ok((v * 255.0).round() as u8)
                } else {
                    Err(Error::Format(format!("pixel {v} outside [0, 1]")))
                }
            })
            .collect::<Result<_>>()?,
        (LABELS_MAGIC, IdxData::Labels(ls)) if header.dims.len() == 1 => ls
            .iter()
            .map(|&l| u8::try_from(l).map_err(|_| Error::Format(format!("label {l} does not fit a byte"))))
            .collect::<Result<_>>()?,
        _ => {
            return Err(Error::Format(format!(
                "header magic 0x{:08x} with {} dims does not match the payload kind",
                header.magic,
                header.dims.len()
            )))
        }
    };
    if payload.len() != header.payload_len() {
        return Err(Error::Format(format!(
            "payload has {} entries, header declares {}",
            payload.len(),
            header.payload_len()
        )));
    }
    let mut out = Vec::with_capacity(header.byte_len() + payload.len());
    out.extend_from_slice(&header.magic.to_be_bytes());
    for d in &header.dims {
        out.extend_from_slice(&d.to_be_bytes());
    }
    out.extend_from_slice(&payload);
    Ok(out)
}

/// Reads a file, transparently gunzipping names ending in `.gz`.
pub fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e == "gz") {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> Vec<u8> {
        let mut b = vec![0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2];
        b.extend_from_slice(&[0, 128, 255, 64]);
        b
    }

    #[test]
    fn crafted_image_fixture() {
        let (h, d) = parse_idx(&fixture()).unwrap();
        assert_eq!(h.dims, vec![1, 2, 2]);
        assert_eq!(d, IdxData::Images(vec![0.0, 128.0 / 255.0, 1.0, 64.0 / 255.0]));
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let bytes = fixture();
        let (h, d) = parse_idx(&bytes).unwrap();
        assert_eq!(serialize_idx(&h, &d).unwrap(), bytes);

        let labels = vec![0, 0, 8, 1, 0, 0, 0, 3, 5, 0, 9];
        let (h, d) = parse_idx(&labels).unwrap();
        assert_eq!(d, IdxData::Labels(vec![5, 0, 9]));
        assert_eq!(serialize_idx(&h, &d).unwrap(), labels);
    }

    #[test]
    fn every_byte_value_round_trips() {
        let mut bytes = vec![0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 16, 0, 0, 0, 16];
        bytes.extend(0..=255u8);
        let (h, d) = parse_idx(&bytes).unwrap();
        assert_eq!(serialize_idx(&h, &d).unwrap(), bytes);
    }

    #[test]
    fn bad_magic_names_the_value() {
        let mut b = fixture();
        b[3] = 2;
        match parse_idx(&b) {
            Err(Error::Format(msg)) => assert!(msg.contains("0x00000802"), "{msg}"),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn truncation_reports_expected_and_actual() {
        let b = fixture();
        match parse_idx(&b[..b.len() - 1]) {
            Err(Error::Format(msg)) => assert!(msg.contains("declares 4") && msg.contains("found 3"), "{msg}"),
            other => panic!("expected format error, got {other:?}"),
        }
        assert!(matches!(parse_idx(&b[..5]), Err(Error::Format(_))));
        assert!(matches!(parse_idx(&b[..10]), Err(Error::Format(_))));
    }
}
