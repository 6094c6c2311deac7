//! `MELF` feature files: magic `MELF`, u32 version, u32 rows, u32 cols, then
//! `rows * cols` little-endian f32 values in row-major order.

use std::path::Path;

use super::mel::MelSpectrogram;
use crate::error::{Error, Result};

pub const MELF_MAGIC: &[u8; 4] = b"MELF";
pub const MELF_VERSION: u32 = 1;

pub fn write_melf(m: &MelSpectrogram, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(16 + 4 * m.values.len());
    out.extend_from_slice(MELF_MAGIC);
    out.extend_from_slice(&MELF_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.n_mels as u32).to_le_bytes());
    out.extend_from_slice(&(m.n_frames as u32).to_le_bytes());
    for v in &m.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_melf(path: impl AsRef<Path>) -> Result<MelSpectrogram> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |why: &str| Error::Parse(format!("{}: {why}", path.display()));
    if bytes.len() < 16 || &bytes[..4] != MELF_MAGIC {
        return Err(bad("not a MELF file"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    if word(4) != MELF_VERSION {
        return Err(bad(&format!("unsupported MELF version {}", word(4))));
    }
    let (rows, cols) = (word(8) as usize, word(12) as usize);
    let payload = &bytes[16..];
    if payload.len() != rows * cols * 4 {
        return Err(bad(&format!(
            "{rows}x{cols} header but {} payload bytes",
            payload.len()
        )));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    MelSpectrogram::new(rows, cols, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.melf");
        let m = MelSpectrogram::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, -80.0]).unwrap();
        write_melf(&m, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"MELF");
        assert_eq!(bytes[4..8], 1u32.to_le_bytes());
        assert_eq!(bytes[8..12], 2u32.to_le_bytes());
        assert_eq!(bytes[12..16], 3u32.to_le_bytes());
        assert_eq!(bytes[16..20], 1.0f32.to_le_bytes());
        assert_eq!(bytes.len(), 16 + 24);
        assert_eq!(read_melf(&path).unwrap(), m);
    }

    #[test]
    fn corrupt_files_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.melf");
        std::fs::write(&path, b"MELQ\x01\0\0\0\x01\0\0\0\x01\0\0\0\0\0\0\0").unwrap();
        assert!(matches!(read_melf(&path), Err(Error::Parse(_))));
        std::fs::write(&path, b"MELF\x01\0\0\0\x02\0\0\0\x01\0\0\0\0\0\0\0").unwrap();
        assert!(matches!(read_melf(&path), Err(Error::Parse(_))));
    }
}
