//! `GEBT` binary tensor container.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size      | content                    |
//! |--------|-----------|----------------------------|
//! | 0      | 4         | magic `b"GEBT"`            |
//! | 4      | 1         | version (1)                |
//! | 5      | 1         | dtype (1 = f32)            |
//! | 6      | 1         | ndim, 1..=5                |
//! | 7      | 4 * ndim  | dims, u32 each, all >= 1   |
//! | ...    | 4 * prod  | row-major f32 payload      |

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"GEBT";
pub const VERSION: u8 = 1;
pub const DTYPE_F32: u8 = 1;
pub const MAX_DIMS: usize = 5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TensorError {
    #[error("not a GEBT file")]
    BadMagic,
    #[error("unsupported GEBT version {0}")]
    UnsupportedVersion(u8),
    #[error("unsupported GEBT dtype {0}")]
    UnsupportedDtype(u8),
    #[error("invalid rank {0} (expected 1..=5)")]
    BadRank(usize),
    #[error("dimension {0} is zero")]
    ZeroDim(usize),
    #[error("dims {dims:?} hold {expected} elements but data has {actual}")]
    DimMismatch {
        dims: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("payload length mismatch: expected {expected} bytes, found {actual}")]
    PayloadLength { expected: usize, actual: usize },
    #[error("truncated header")]
    TruncatedHeader,
    #[error("dimension {0} does not fit in u32")]
    DimTooLarge(usize),
}

/// Decoded tensor: shape plus row-major values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self, TensorError> {
        check_dims(&dims, data.len())?;
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let n = dims.iter().product();
        Self { dims, data: vec![0.0; n] }
    }
}

fn check_dims(dims: &[usize], len: usize) -> Result<usize, TensorError> {
    if dims.is_empty() || dims.len() > MAX_DIMS {
        return Err(TensorError::BadRank(dims.len()));
    }
    if let Some(i) = dims.iter().position(|&d| d == 0) {
        return Err(TensorError::ZeroDim(i));
    }
    if let Some(&d) = dims.iter().find(|&&d| d > u32::MAX as usize) {
        return Err(TensorError::DimTooLarge(d));
    }
    let expected: usize = dims.iter().product();
    if expected != len {
        return Err(TensorError::DimMismatch {
            dims: dims.to_vec(),
            expected,
            actual: len,
        });
    }
    Ok(expected)
}

pub fn header_len(ndim: usize) -> usize {
    7 + 4 * ndim
}

pub fn write_tensor(dims: &[usize], data: &[f32]) -> Result<Vec<u8>, TensorError> {
    let n = check_dims(dims, data.len())?;
    let mut out = Vec::with_capacity(header_len(dims.len()) + 4 * n);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(DTYPE_F32);
    out.push(dims.len() as u8);
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn read_tensor(bytes: &[u8]) -> Result<Tensor, TensorError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(TensorError::BadMagic);
    }
    if bytes.len() < 7 {
        return Err(TensorError::TruncatedHeader);
    }
    if bytes[4] != VERSION {
        return Err(TensorError::UnsupportedVersion(bytes[4]));
    }
    if bytes[5] != DTYPE_F32 {
        return Err(TensorError::UnsupportedDtype(bytes[5]));
    }
    let ndim = bytes[6] as usize;
    if ndim == 0 || ndim > MAX_DIMS {
        return Err(TensorError::BadRank(ndim));
    }
    let header = header_len(ndim);
    if bytes.len() < header {
        return Err(TensorError::TruncatedHeader);
    }
    let dims: Vec<usize> = bytes[7..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    if let Some(i) = dims.iter().position(|&d| d == 0) {
        return Err(TensorError::ZeroDim(i));
    }
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .and_then(|n| n.checked_mul(4));
    let payload = &bytes[header..];
    let expected = count.ok_or(TensorError::PayloadLength {
        expected: usize::MAX,
        actual: payload.len(),
    })?;
    if payload.len() != expected {
        return Err(TensorError::PayloadLength {
            expected,
            actual: payload.len(),
        });
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(Tensor { dims, data })
}

/// Writes to a sibling temp file, then renames over `path`.
pub fn write_tensor_file(path: &Path, dims: &[usize], data: &[f32]) -> crate::Result<()> {
    let bytes = write_tensor(dims, data)?;
    write_atomic(path, &bytes)
}

pub fn read_tensor_file(path: &Path) -> crate::Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| crate::Error::io(path, e))?;
    Ok(read_tensor(&bytes)?)
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> crate::Result<()> {
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{file_name}.tmp"));
    let mut f = fs::File::create(&tmp).map_err(|e| crate::Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| crate::Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| crate::Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_dim_layout() {
        let bytes = write_tensor(&[2], &[1.0, 2.0]).unwrap();
        assert_eq!(header_len(1), 11);
        assert_eq!(bytes.len(), 11 + 8);
        assert_eq!(&bytes[..7], b"GEBT\x01\x01\x01");
        assert_eq!(&bytes[7..11], &[2, 0, 0, 0]);
        assert_eq!(&bytes[11..15], &1.0f32.to_le_bytes());
    }

    #[test]
    fn window_payload_size() {
        let dims = [10, 3, 224, 224];
        let n: usize = dims.iter().product();
        let bytes = write_tensor(&dims, &vec![0.0; n]).unwrap();
        assert_eq!(bytes.len() - header_len(4), 6_021_120);
    }

    #[test]
    fn error_cases() {
        let mut bytes = write_tensor(&[3], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(write_tensor(&[2, 2], &[1.0]), Err(TensorError::DimMismatch { dims: vec![2, 2], expected: 4, actual: 1 }));
        let truncated = &bytes[..bytes.len() - 1];
        assert!(matches!(read_tensor(truncated), Err(TensorError::PayloadLength { .. })));
        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(matches!(read_tensor(&trailing), Err(TensorError::PayloadLength { .. })));
        bytes[4] = 2;
        assert_eq!(read_tensor(&bytes), Err(TensorError::UnsupportedVersion(2)));
        bytes[4] = 1;
        bytes[5] = 7;
        assert_eq!(read_tensor(&bytes), Err(TensorError::UnsupportedDtype(7)));
        bytes[0] = b'X';
        assert_eq!(read_tensor(&bytes), Err(TensorError::BadMagic));
        assert_eq!(TensorError::BadMagic.to_string(), "not a GEBT file");
        assert!(write_tensor(&[], &[]).is_err());
        assert!(write_tensor(&[1, 1, 1, 1, 1, 1], &[0.0]).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.gebt");
        write_tensor_file(&path, &[2, 2], &[1.0, -2.0, 3.5, 0.0]).unwrap();
        let t = read_tensor_file(&path).unwrap();
        assert_eq!(t.dims, vec![2, 2]);
        assert_eq!(t.data, vec![1.0, -2.0, 3.5, 0.0]);
    }

    proptest! {
        #[test]
        fn round_trip(dims in prop::collection::vec(1usize..5, 1..=5), seed in any::<u64>()) {
            let n: usize = dims.iter().product();
            let data: Vec<f32> = (0..n)
                .map(|i| ((seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64) >> 11) as f32) * 1e-9 - 3.0)
                .collect();
            let bytes = write_tensor(&dims, &data).unwrap();
            let t = read_tensor(&bytes).unwrap();
            prop_assert_eq!(t.dims, dims);
            prop_assert_eq!(
                t.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                data.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }
}
