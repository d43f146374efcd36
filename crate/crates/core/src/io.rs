//! `PTNSR01` tensor container and PGM export.
//!
//! Layout of a `.ptnsr` file:
//!
//! ```text
//! "PTNSR01\n"                      8-byte magic
//! u32 little-endian                header length in bytes
//! UTF-8 JSON header                {"shape":[...],"dtype":"f64","order":"row-major"}
//! f64 little-endian payload        product(shape) values, row-major
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"PTNSR01\n";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    shape: Vec<usize>,
    dtype: String,
    order: String,
}

pub fn encode_tensor(t: &Tensor) -> Vec<u8> {
    let header = Header {
        shape: t.shape().to_vec(),
        dtype: "f64".into(),
        order: "row-major".into(),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(12 + header.len() + 8 * t.numel());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for x in t.data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    if body.len() < header_len {
        return Err(Error::Format("truncated header".into()));
    }
    let header: Header = serde_json::from_slice(&body[..header_len])
        .map_err(|e| Error::Format(format!("header: {e}")))?;
    if header.dtype != "f64" {
        return Err(Error::Format(format!(
            "unsupported dtype {:?}",
            header.dtype
        )));
    }
    if header.order != "row-major" {
        return Err(Error::Format(format!(
            "unsupported order {:?}",
            header.order
        )));
    }
    if header.shape.is_empty() || header.shape.contains(&0) {
        return Err(Error::Format(format!("invalid shape {:?}", header.shape)));
    }
    let numel = header
        .shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format("shape overflows".into()))?;
    let payload = &body[header_len..];
    if payload.len() != numel * 8 {
        return Err(Error::Format(format!(
            "shape {:?} needs {} payload bytes, found {}",
            header.shape,
            numel * 8,
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor::new(header.shape, data).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_tensor(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    fs::write(path, encode_tensor(t))?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    decode_tensor(&fs::read(path)?)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PgmScaling {
    pub width: usize,
    pub height: usize,
    pub min: f64,
    pub max: f64,
}

/// Writes a single-channel `[1, h, w]` or `[h, w]` tensor as an 8-bit binary
/// PGM, min-max scaled to 0..=255, plus a JSON sidecar (`<path>.json`) holding
/// the scaling. A constant image maps to all zeros.
pub fn write_pgm(path: impl AsRef<Path>, t: &Tensor) -> Result<PgmScaling> {
    let (h, w) = match t.shape() {
        [1, h, w] | [h, w] => (*h, *w),
        s => {
            return Err(Error::UnsupportedShape(format!(
                "PGM export needs [1,h,w] or [h,w], got {s:?}"
            )))
        }
    };
    let min = t.data().iter().copied().fold(f64::INFINITY, f64::min);
    let max = t.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(t.data().iter().map(|x| {
        if span > 0.0 {
            (255.0 * (x - min) / span).round().clamp(0.0, 255.0) as u8
        } else {
            0
        }
    }));
    let path = path.as_ref();
    fs::write(path, out)?;
    let scaling = PgmScaling {
        width: w,
        height: h,
        min,
        max,
    };
    let mut sidecar = path.as_os_str().to_owned();
    sidecar.push(".json");
    fs::write(
        sidecar,
        serde_json::to_vec_pretty(&scaling).expect("scaling serializes"),
    )?;
    Ok(scaling)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn seeded(shape: &[usize], seed: u64) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), Rng::new(seed).uniform_vec(n, -10.0, 10.0)).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ptnsr");
        let t = seeded(&[3, 8, 8], 1);
        write_tensor(&path, &t).unwrap();
        let back = read_tensor(&path).unwrap();
        assert_eq!(back.shape(), t.shape());
        for (a, b) in t.data().iter().zip(back.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn header_layout_is_fixed() {
        let t = Tensor::new(vec![2, 1], vec![1.0, -2.0]).unwrap();
        let bytes = encode_tensor(&t);
        let header = br#"{"shape":[2,1],"dtype":"f64","order":"row-major"}"#;
        assert_eq!(&bytes[..8], b"PTNSR01\n");
        assert_eq!(&bytes[8..12], &(header.len() as u32).to_le_bytes());
        assert_eq!(&bytes[12..12 + header.len()], header);
        assert_eq!(&bytes[12 + header.len()..][..8], &1.0f64.to_le_bytes());
        assert_eq!(bytes.len(), 12 + header.len() + 16);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode_tensor(&seeded(&[4], 2));
        bytes[0] = b'X';
        assert!(matches!(decode_tensor(&bytes), Err(Error::Format(_))));
        assert!(matches!(decode_tensor(b"PTN"), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_payload() {
        let bytes = encode_tensor(&seeded(&[3, 4], 3));
        assert!(matches!(
            decode_tensor(&bytes[..bytes.len() - 3]),
            Err(Error::Format(_))
        ));
    }

    fn with_header(header: &str, values: &[f64]) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    #[test]
    fn shape_payload_mismatch() {
        let bytes = with_header(
            r#"{"shape":[2,2],"dtype":"f64","order":"row-major"}"#,
            &[1.0, 2.0, 3.0],
        );
        assert!(matches!(decode_tensor(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn unsupported_dtype() {
        let bytes = with_header(r#"{"shape":[1],"dtype":"f32","order":"row-major"}"#, &[1.0]);
        assert!(matches!(decode_tensor(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn pgm_export_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.pgm");
        let t = Tensor::new(vec![1, 2, 2], vec![-1.0, 0.0, 0.5, 1.0]).unwrap();
        let s = write_pgm(&path, &t).unwrap();
        assert_eq!((s.min, s.max), (-1.0, 1.0));
        let bytes = fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P5\n2 2\n255\n"));
        assert_eq!(&bytes[bytes.len() - 4..], &[0, 128, 191, 255]);
        let side: PgmScaling =
            serde_json::from_slice(&fs::read(dir.path().join("p.pgm.json")).unwrap()).unwrap();
        assert_eq!(side, s);
        assert!(write_pgm(&path, &seeded(&[3, 2, 2], 1)).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn decode_inverts_encode(
                shape in prop::collection::vec(1usize..5, 1..4),
                seed in any::<u64>(),
            ) {
                let t = seeded(&shape, seed);
                let back = decode_tensor(&encode_tensor(&t)).unwrap();
                prop_assert_eq!(back, t);
            }
        }
    }
}
