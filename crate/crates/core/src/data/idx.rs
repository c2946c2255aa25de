//! IDX container: big-endian magic, big-endian `u32` dimensions, `u8` payload.

use std::path::Path;

use crate::error::{Error, IdxError, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxFile {
    pub magic: u32,
    pub dims: Vec<u32>,
    pub payload: Vec<u8>,
}

impl IdxFile {
    pub fn images(count: u32, rows: u32, cols: u32, payload: Vec<u8>) -> Self {
        Self {
            magic: IMAGES_MAGIC,
            dims: vec![count, rows, cols],
            payload,
        }
    }

    pub fn labels(payload: Vec<u8>) -> Self {
        Self {
            magic: LABELS_MAGIC,
            dims: vec![payload.len() as u32],
            payload,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 4 * self.dims.len() + self.payload.len());
        out.extend_from_slice(&self.magic.to_be_bytes());
        for d in &self.dims {
            out.extend_from_slice(&d.to_be_bytes());
        }
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Number of items along the first dimension.
    pub fn count(&self) -> usize {
        self.dims[0] as usize
    }

    /// Bytes per item.
    pub fn item_len(&self) -> usize {
        self.dims[1..].iter().map(|&d| d as usize).product()
    }
}

fn dim_count(magic: u32) -> std::result::Result<usize, IdxError> {
    match magic {
        IMAGES_MAGIC => Ok(3),
        LABELS_MAGIC => Ok(1),
        other => Err(IdxError::BadMagic(other)),
    }
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("four bytes"))
}

pub fn parse_idx(bytes: &[u8]) -> std::result::Result<IdxFile, IdxError> {
    if bytes.len() < 4 {
        return Err(IdxError::Truncated {
            expected: 4,
            found: bytes.len(),
        });
    }
    let magic = read_u32(bytes, 0);
    let ndims = dim_count(magic)?;
    let header = 4 + 4 * ndims;
    if bytes.len() < header {
        return Err(IdxError::Truncated {
            expected: header,
            found: bytes.len(),
        });
    }
    let dims: Vec<u32> = (0..ndims).map(|k| read_u32(bytes, 4 + 4 * k)).collect();
    let payload_len = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
        .and_then(|n| n.checked_add(header))
        .ok_or_else(|| IdxError::DimOverflow(dims.clone()))?;
    if bytes.len() < payload_len {
        return Err(IdxError::Truncated {
            expected: payload_len,
            found: bytes.len(),
        });
    }
    Ok(IdxFile {
        magic,
        dims,
        payload: bytes[header..payload_len].to_vec(),
    })
}

pub fn load_idx(path: &Path) -> Result<IdxFile> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_idx(&bytes)?)
}
