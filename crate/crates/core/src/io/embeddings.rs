//! Binary embedding dumps.
//!
//! Layout, little-endian throughout:
//!
//! | bytes    | field                         |
//! |----------|-------------------------------|
//! | 0..5     | magic `IFLB1`                 |
//! | 5..13    | `n`, u64                      |
//! | 13..21   | `d`, u64                      |
//! | 21..25   | encoding, u32 (0 = float32)   |
//! | 25..     | `n·d` float32, row-major      |
//!
//! Labels live in an optional sidecar `<path>.labels`, one per row.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::vector::Embeddings;

pub const MAGIC: &[u8; 5] = b"IFLB1";
pub const HEADER_LEN: u64 = 25;
pub const ENCODING_F32_LE: u32 = 0;

pub fn labels_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".labels");
    PathBuf::from(s)
}

pub fn encode_embeddings(emb: &Embeddings) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN as usize + emb.as_slice().len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(emb.n_rows() as u64).to_le_bytes());
    out.extend_from_slice(&(emb.dim() as u64).to_le_bytes());
    out.extend_from_slice(&ENCODING_F32_LE.to_le_bytes());
    for &x in emb.as_slice() {
        out.extend_from_slice(&(x as f32).to_le_bytes());
    }
    out
}

fn u64_at(bytes: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"))
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<Embeddings> {
    if let Some(offset) = MAGIC.iter().zip(bytes).position(|(a, b)| a != b) {
        return Err(Error::BadMagic { offset: offset as u64 });
    }
    if (bytes.len() as u64) < HEADER_LEN {
        if bytes.len() < MAGIC.len() {
            return Err(Error::BadMagic { offset: bytes.len() as u64 });
        }
        return Err(Error::TruncatedPayload { expected: HEADER_LEN, actual: bytes.len() as u64 });
    }
    let n = u64_at(bytes, 5);
    let d = u64_at(bytes, 13);
    let code = u32::from_le_bytes(bytes[21..25].try_into().expect("4 bytes"));
    if code != ENCODING_F32_LE {
        return Err(Error::UnsupportedEncoding { code, offset: 21 });
    }
    let expected = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(4))
        .and_then(|c| c.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::Data(format!("header sizes n={n}, d={d} overflow")))?;
    let actual = bytes.len() as u64;
    if actual < expected {
        return Err(Error::TruncatedPayload { expected, actual });
    }
    if actual > expected {
        return Err(Error::Data(format!("{} trailing bytes after payload at byte offset {expected}", actual - expected)));
    }
    let payload = &bytes[HEADER_LEN as usize..];
    let mut data = Vec::with_capacity((n * d) as usize);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let x = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        if !x.is_finite() {
            return Err(Error::NonFiniteValue { offset: HEADER_LEN + 4 * i as u64 });
        }
        data.push(x as f64);
    }
    Embeddings::new(n as usize, d as usize, data)
}

/// Write `emb` and, when given, its label sidecar.
pub fn save_embeddings(path: &Path, emb: &Embeddings, labels: Option<&[String]>) -> Result<()> {
    if let Some(l) = labels {
        if l.len() != emb.n_rows() {
            return Err(Error::LengthMismatch { left: emb.n_rows(), right: l.len() });
        }
        if let Some(bad) = l.iter().find(|s| s.contains('\n')) {
            return Err(Error::Data(format!("label {bad:?} contains a newline")));
        }
        let mut text = l.join("\n");
        text.push('\n');
        fs::write(labels_path(path), text)?;
    }
    fs::write(path, encode_embeddings(emb))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedEmbeddings {
    pub embeddings: Embeddings,
    /// Sidecar labels when the sidecar exists.
    pub labels: Option<Vec<String>>,
}

/// Read an embedding dump and its sidecar, optionally rescaling rows to
/// unit norm.
pub fn load_embeddings(path: &Path, renormalize: bool) -> Result<LoadedEmbeddings> {
    let mut embeddings = decode_embeddings(&fs::read(path)?)?;
    if renormalize {
        embeddings.normalize_rows()?;
    }
    let lp = labels_path(path);
    let labels = if lp.exists() {
        let labels: Vec<String> = fs::read_to_string(&lp)?.lines().map(str::to_owned).collect();
        if labels.len() != embeddings.n_rows() {
            return Err(Error::Data(format!(
                "{} labels in {} for {} rows",
                labels.len(),
                lp.display(),
                embeddings.n_rows()
            )));
        }
        Some(labels)
    } else {
        None
    };
    Ok(LoadedEmbeddings { embeddings, labels })
}
