//! Model checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! bytes 0..4   magic "SDMC"
//! bytes 4..8   format version, u32 (currently 1)
//! byte  8      model kind tag: 1 = noise-prediction net, 2 = transition net
//! bytes 9..17  parameter count, u64
//! then         parameters as 32-bit IEEE-754 floats, in the canonical
//!              layer order documented by each model's `layout` function
//! ```

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SDMC";
pub const VERSION: u32 = 1;

/// Which model family a checkpoint holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Denoiser = 1,
    Transition = 2,
}

impl ModelKind {
    fn from_byte(b: u8) -> Option<Self> {
        match b {
            1 => Some(ModelKind::Denoiser),
            2 => Some(ModelKind::Transition),
            _ => None,
        }
    }
}

/// Writes parameters in canonical order, narrowing to f32.
pub fn save(path: &Path, kind: ModelKind, params: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(17 + params.len() * 4);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.push(kind as u8);
    bytes.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for &p in params {
        bytes.extend_from_slice(&(p as f32).to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Reads a checkpoint, checking magic, version, kind, and length.
pub fn load(path: &Path, expect_kind: ModelKind) -> Result<Vec<f64>> {
    let display = path.display().to_string();
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(display.clone(), e))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes).map_err(|e| Error::io(display.clone(), e))?;

    if bytes.len() < 4 || &bytes[0..4] != MAGIC {
        return Err(Error::format(display, Some(0), "not a SDMC checkpoint"));
    }
    if bytes.len() < 8 {
        return Err(Error::format(display, Some(4), "truncated before version"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::format(display, Some(4), format!("unsupported version {version}")));
    }
    if bytes.len() < 9 {
        return Err(Error::format(display, Some(8), "truncated before model kind"));
    }
    let kind = ModelKind::from_byte(bytes[8])
        .ok_or_else(|| Error::format(display.clone(), Some(8), format!("unknown model kind {}", bytes[8])))?;
    if kind != expect_kind {
        return Err(Error::format(
            display,
            Some(8),
            format!("checkpoint holds {kind:?} parameters, expected {expect_kind:?}"),
        ));
    }
    if bytes.len() < 17 {
        return Err(Error::format(display, Some(9), "truncated before parameter count"));
    }
    let count = u64::from_le_bytes(bytes[9..17].try_into().unwrap()) as usize;
    let expected_len = 17 + count * 4;
    if bytes.len() != expected_len {
        return Err(Error::format(
            display,
            Some(bytes.len().min(expected_len) as u64),
            format!("expected {expected_len} bytes for {count} parameters, file has {}", bytes.len()),
        ));
    }
    let mut params = Vec::with_capacity(count);
    for chunk in bytes[17..].chunks_exact(4) {
        params.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_f32_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.sdmc");
        let params: Vec<f64> = (0..100).map(|i| (i as f64) * 0.125 - 3.0).collect();
        save(&path, ModelKind::Denoiser, &params).unwrap();
        let loaded = load(&path, ModelKind::Denoiser).unwrap();
        assert_eq!(params, loaded);
    }

    #[test]
    fn rejects_malformed_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.sdmc");

        std::fs::write(&path, b"NOPE").unwrap();
        let err = load(&path, ModelKind::Denoiser).unwrap_err();
        assert!(err.to_string().contains("not a SDMC"));

        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&VERSION.to_le_bytes());
        bytes.push(1);
        bytes.extend_from_slice(&10u64.to_le_bytes());
        bytes.extend_from_slice(&[0u8; 8]); // only 2 of 10 params
        std::fs::write(&path, &bytes).unwrap();
        assert!(load(&path, ModelKind::Denoiser).is_err());
    }

    #[test]
    fn kind_tag_is_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.sdmc");
        save(&path, ModelKind::Transition, &[1.0, 2.0]).unwrap();
        assert!(load(&path, ModelKind::Denoiser).is_err());
        assert!(load(&path, ModelKind::Transition).is_ok());
    }
}
