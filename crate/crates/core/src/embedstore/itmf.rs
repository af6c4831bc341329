//! ITMF: a little-endian binary container for one embedding set.
//!
//! ```text
//! offset  size     field
//! 0       4        magic "ITMF"
//! 4       4        u32 version (= 1)
//! 8       4        u32 N (rows)
//! 12      4        u32 d (feature width)
//! 16      4        u32 num_classes
//! 20      4·N·d    f32 features, row-major
//! ..      4·N      u32 labels
//! ```

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::EmbeddingSet;
use crate::error::{ItmError, Result};

pub const ITMF_MAGIC: [u8; 4] = *b"ITMF";
pub const ITMF_VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

/// Reads and validates an ITMF file. The set is named after the file stem.
pub fn load_embedding_set(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| ItmError::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_itmf(&bytes, name).map_err(|e| match e {
        ItmError::Format(msg) => ItmError::Format(format!("{}: {msg}", path.display())),
        ItmError::Validation(msg) => ItmError::Validation(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn save_embedding_set(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_itmf(set)?).map_err(|e| ItmError::io(path, e))
}

fn u32_at(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().expect("4 bytes"))
}

pub fn read_itmf(bytes: &[u8], name: impl Into<String>) -> Result<EmbeddingSet> {
    if bytes.len() < HEADER_LEN {
        return Err(ItmError::Format(format!(
            "file is {} bytes, shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if bytes[..4] != ITMF_MAGIC {
        return Err(ItmError::Format(format!("bad magic {:02x?}", &bytes[..4])));
    }
    let version = u32_at(bytes, 4);
    if version != ITMF_VERSION {
        return Err(ItmError::Format(format!("unsupported version {version}")));
    }
    let n = u32_at(bytes, 8) as usize;
    let d = u32_at(bytes, 12) as usize;
    let classes = u32_at(bytes, 16) as usize;

    let expected = n
        .checked_mul(d)
        .and_then(|nd| nd.checked_add(n))
        .and_then(|words| words.checked_mul(4))
        .and_then(|body| body.checked_add(HEADER_LEN))
        .ok_or_else(|| ItmError::Format(format!("header sizes overflow: N={n}, d={d}")))?;
    if bytes.len() != expected {
        return Err(ItmError::Format(format!(
            "expected {expected} bytes for N={n}, d={d}, found {}",
            bytes.len()
        )));
    }

    let feat_end = HEADER_LEN + 4 * n * d;
    let features: Vec<f64> = bytes[HEADER_LEN..feat_end]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    let labels: Vec<u32> = bytes[feat_end..]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let features = Array2::from_shape_vec((n, d), features).expect("length checked above");
    EmbeddingSet::new(name, features, labels, classes)
}

/// Serializes a set. Features are stored as f32; values not exactly
/// representable in f32 are rounded to nearest.
pub fn write_itmf(set: &EmbeddingSet) -> Result<Vec<u8>> {
    let (n, d) = set.features().dim();
    let to_u32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| ItmError::Format(format!("{what} = {v} exceeds u32")))
    };
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * n * (d + 1));
    out.extend_from_slice(&ITMF_MAGIC);
    out.extend_from_slice(&ITMF_VERSION.to_le_bytes());
    out.extend_from_slice(&to_u32(n, "N")?.to_le_bytes());
    out.extend_from_slice(&to_u32(d, "d")?.to_le_bytes());
    out.extend_from_slice(&to_u32(set.num_classes(), "num_classes")?.to_le_bytes());
    for &v in set.features().iter() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    for &y in set.labels() {
        out.extend_from_slice(&y.to_le_bytes());
    }
    Ok(out)
}
