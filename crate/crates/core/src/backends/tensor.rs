//! Flat binary tensor format used by the artifact cache and model files.
//!
//! Layout, all little-endian:
//!   bytes 0..4   magic "IULK"
//!   byte  4      format version (1)
//!   byte  5      dtype: 0 = f32, 1 = u8
//!   byte  6      rank
//!   byte  7      reserved (0)
//!   bytes 8..16  element count (u64)
//!   then rank x u32 dims, then the payload.

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"IULK";
const VERSION: u8 = 1;

const DTYPE_F32: u8 = 0;
const DTYPE_U8: u8 = 1;

fn header(dtype: u8, dims: &[usize]) -> Vec<u8> {
    let count: usize = dims.iter().product();
    let mut out = Vec::with_capacity(16 + 4 * dims.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(dtype);
    out.push(dims.len() as u8);
    out.push(0);
    out.extend_from_slice(&(count as u64).to_le_bytes());
    for d in dims {
        out.extend_from_slice(&(*d as u32).to_le_bytes());
    }
    out
}

fn parse_header(bytes: &[u8], want_dtype: u8) -> Result<(Vec<usize>, usize, usize)> {
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(Error::Data("not an IULK tensor (bad magic)".into()));
    }
    if bytes[4] != VERSION {
        return Err(Error::Data(format!("unsupported IULK version {}", bytes[4])));
    }
    if bytes[5] != want_dtype {
        return Err(Error::Data(format!(
            "IULK dtype mismatch: file has {}, expected {}",
            bytes[5], want_dtype
        )));
    }
    let rank = bytes[6] as usize;
    let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let dims_end = 16 + 4 * rank;
    if bytes.len() < dims_end {
        return Err(Error::Data("truncated IULK dims".into()));
    }
    let dims: Vec<usize> = (0..rank)
        .map(|i| u32::from_le_bytes(bytes[16 + 4 * i..20 + 4 * i].try_into().unwrap()) as usize)
        .collect();
    if dims.iter().product::<usize>() != count {
        return Err(Error::Data("IULK dims inconsistent with element count".into()));
    }
    Ok((dims, count, dims_end))
}

pub fn encode_f32(dims: &[usize], data: &[f32]) -> Vec<u8> {
    assert_eq!(dims.iter().product::<usize>(), data.len());
    let mut out = header(DTYPE_F32, dims);
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_f32(bytes: &[u8]) -> Result<(Vec<usize>, Vec<f32>)> {
    let (dims, count, offset) = parse_header(bytes, DTYPE_F32)?;
    if bytes.len() < offset + 4 * count {
        return Err(Error::Data("truncated IULK f32 payload".into()));
    }
    let data = bytes[offset..offset + 4 * count]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((dims, data))
}

pub fn encode_u8(dims: &[usize], data: &[u8]) -> Vec<u8> {
    assert_eq!(dims.iter().product::<usize>(), data.len());
    let mut out = header(DTYPE_U8, dims);
    out.extend_from_slice(data);
    out
}

pub fn decode_u8(bytes: &[u8]) -> Result<(Vec<usize>, Vec<u8>)> {
    let (dims, count, offset) = parse_header(bytes, DTYPE_U8)?;
    if bytes.len() < offset + count {
        return Err(Error::Data("truncated IULK u8 payload".into()));
    }
    Ok((dims, bytes[offset..offset + count].to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_garbage() {
        assert!(decode_f32(b"nope").is_err());
        assert!(decode_f32(&encode_u8(&[2], &[1, 2])).is_err());
    }

    proptest! {
        #[test]
        fn f32_roundtrip(data in proptest::collection::vec(any::<f32>(), 0..64)) {
            let dims = vec![data.len()];
            let (d2, out) = decode_f32(&encode_f32(&dims, &data)).unwrap();
            prop_assert_eq!(d2, dims);
            prop_assert_eq!(out.len(), data.len());
            for (a, b) in out.iter().zip(&data) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }

        #[test]
        fn u8_roundtrip(h in 1usize..5, w in 1usize..5) {
            let data: Vec<u8> = (0..h * w * 3).map(|i| (i % 251) as u8).collect();
            let dims = vec![h, w, 3];
            let (d2, out) = decode_u8(&encode_u8(&dims, &data)).unwrap();
            prop_assert_eq!(d2, dims);
            prop_assert_eq!(out, data);
        }
    }
}
