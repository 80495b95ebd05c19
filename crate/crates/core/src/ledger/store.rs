//! JSON-lines block file. Line `N` holds the canonical encoding of the block
//! at height `N`, terminated by `\n`.

use std::fs::{File, OpenOptions};
use std::io::{self, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use crate::codec::from_canonical_bytes;
use crate::ledger::block::{Block, ChainError};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Chain(#[from] ChainError),
}

/// Strictly parses a whole chain file. Every line, including the last, must
/// be a complete canonical block followed by a newline.
pub fn parse_chain_bytes(bytes: &[u8]) -> Result<Vec<Block>, ChainError> {
    let mut blocks = Vec::new();
    let mut rest = bytes;
    let mut height = 0u64;
    while !rest.is_empty() {
        let Some(end) = rest.iter().position(|&b| b == b'\n') else {
            return Err(ChainError::Corrupt {
                height,
                reason: "missing line terminator".into(),
            });
        };
        let block = decode_line(&rest[..end], height)?;
        blocks.push(block);
        rest = &rest[end + 1..];
        height += 1;
    }
    Ok(blocks)
}

fn decode_line(line: &[u8], height: u64) -> Result<Block, ChainError> {
    from_canonical_bytes::<Block>(line).map_err(|e| ChainError::Corrupt {
        height,
        reason: e.to_string(),
    })
}

/// Outcome of reading a chain file that may end in a torn write.
#[derive(Debug)]
pub struct Recovered {
    pub blocks: Vec<Block>,
    /// Byte length of the intact prefix.
    pub valid_len: usize,
    /// Bytes dropped from the tail, if any.
    pub truncated: usize,
}

/// Parses a chain file, treating an unterminated or undecodable final line
/// as a torn write. Corruption anywhere before the final line is an error.
pub fn recover_chain_bytes(bytes: &[u8]) -> Result<Recovered, ChainError> {
    let mut blocks = Vec::new();
    let mut offset = 0usize;
    let mut height = 0u64;
    while offset < bytes.len() {
        let rest = &bytes[offset..];
        let Some(end) = rest.iter().position(|&b| b == b'\n') else {
            break;
        };
        let is_last = offset + end + 1 == bytes.len();
        match decode_line(&rest[..end], height) {
            Ok(block) => blocks.push(block),
            Err(_) if is_last => break,
            Err(e) => return Err(e),
        }
        offset += end + 1;
        height += 1;
    }
    Ok(Recovered {
        blocks,
        valid_len: offset,
        truncated: bytes.len() - offset,
    })
}

/// Append-only handle on the chain file.
#[derive(Debug)]
pub struct ChainStore {
    path: PathBuf,
    file: File,
}

impl ChainStore {
    /// Opens (creating if needed) the chain file, truncating a torn tail.
    pub fn open(path: impl AsRef<Path>) -> Result<(ChainStore, Recovered), StoreError> {
        let path = path.as_ref().to_path_buf();
        let io_err = |source| StoreError::Io {
            path: path.clone(),
            source,
        };
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io_err(e)),
        };
        let recovered = recover_chain_bytes(&bytes)?;
        let mut file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .read(true)
            .write(true)
            .open(&path)
            .map_err(io_err)?;
        if recovered.truncated > 0 {
            tracing::warn!(
                path = %path.display(),
                dropped_bytes = recovered.truncated,
                height = recovered.blocks.len(),
                "truncating torn trailing block"
            );
            file.set_len(recovered.valid_len as u64).map_err(io_err)?;
            file.sync_all().map_err(io_err)?;
        }
        file.seek(SeekFrom::End(0)).map_err(io_err)?;
        Ok((ChainStore { path, file }, recovered))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes one block line and syncs it to disk before returning.
    pub fn append(&mut self, block: &Block) -> Result<(), StoreError> {
        let mut line = block.canonical_bytes();
        line.push(b'\n');
        self.file
            .write_all(&line)
            .and_then(|_| self.file.sync_data())
            .map_err(|source| StoreError::Io {
                path: self.path.clone(),
                source,
            })
    }
}
