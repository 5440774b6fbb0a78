//! `NREMB1` lexicon files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"NREMB1"  u32 dim  u32 count
//! count × { u16 key_len, key (UTF-8), dim × f32 }
//! ```

use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use super::lexicon::{Lexicon, LexiconError};

pub const MAGIC: &[u8; 6] = b"NREMB1";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("cannot access lexicon file: {0}")]
    Io(#[from] io::Error),
    #[error("not a lexicon file")]
    BadMagic,
    #[error("truncated header")]
    TruncatedHeader,
    /// Entries are numbered from 0 in file order.
    #[error("truncated at entry {0}")]
    Truncated(u32),
    #[error("dim mismatch: file has {found}, expected {expected}")]
    DimMismatch { found: usize, expected: usize },
    #[error("entry {0}: key is not valid UTF-8")]
    BadKey(u32),
    #[error("entry {entry}: {source}")]
    BadEntry {
        entry: u32,
        #[source]
        source: LexiconError,
    },
    #[error("entry {0}: duplicate key")]
    DuplicateKey(u32),
    #[error("{0} trailing bytes after last entry")]
    TrailingBytes(usize),
    #[error("key {0:?} longer than 65535 bytes")]
    KeyTooLong(String),
}

pub fn encode_lexicon(lexicon: &Lexicon) -> Result<Vec<u8>, FormatError> {
    let mut out = Vec::with_capacity(14 + lexicon.len() * (8 + 4 * lexicon.dim()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(lexicon.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(lexicon.len() as u32).to_le_bytes());
    for (key, vector) in lexicon.iter() {
        let len = u16::try_from(key.len()).map_err(|_| FormatError::KeyTooLong(key.to_string()))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(key.as_bytes());
        for x in vector.as_slice() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_le_bytes(b.try_into().unwrap()))
    }
}

pub fn decode_lexicon(bytes: &[u8]) -> Result<Lexicon, FormatError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(FormatError::BadMagic);
    }
    let mut cur = Cursor { bytes, pos: MAGIC.len() };
    let dim = cur.u32().ok_or(FormatError::TruncatedHeader)? as usize;
    let count = cur.u32().ok_or(FormatError::TruncatedHeader)?;
    let mut lexicon = Lexicon::new(dim).map_err(|e| FormatError::BadEntry { entry: 0, source: e })?;
    for entry in 0..count {
        let truncated = || FormatError::Truncated(entry);
        let len = cur.u16().ok_or_else(truncated)? as usize;
        let key = std::str::from_utf8(cur.take(len).ok_or_else(truncated)?)
            .map_err(|_| FormatError::BadKey(entry))?;
        let raw = cur.take(4 * dim).ok_or_else(truncated)?;
        let vector: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if lexicon.get(key).is_some() {
            return Err(FormatError::DuplicateKey(entry));
        }
        lexicon
            .insert(key, vector)
            .map_err(|source| FormatError::BadEntry { entry, source })?;
    }
    if cur.pos != bytes.len() {
        return Err(FormatError::TrailingBytes(bytes.len() - cur.pos));
    }
    Ok(lexicon)
}

pub fn save_lexicon(lexicon: &Lexicon, path: impl AsRef<Path>) -> Result<(), FormatError> {
    let bytes = encode_lexicon(lexicon)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    f.flush()?;
    Ok(())
}

pub fn load_lexicon(path: impl AsRef<Path>) -> Result<Lexicon, FormatError> {
    decode_lexicon(&std::fs::read(path)?)
}

/// Loads a lexicon and checks its dimension.
pub fn load_lexicon_with_dim(path: impl AsRef<Path>, expected: usize) -> Result<Lexicon, FormatError> {
    let lexicon = load_lexicon(path)?;
    if lexicon.dim() != expected {
        return Err(FormatError::DimMismatch {
            found: lexicon.dim(),
            expected,
        });
    }
    Ok(lexicon)
}
