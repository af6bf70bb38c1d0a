//! Token blocks, chained block keys, and fixed-size payload chunks.
//!
//! Key derivation (SHA-256):
//!
//! ```text
//! key[0] = SHA256( 0x00 * 32            || u32le(len) || u32le(tok) ... )
//! key[i] = SHA256( key[i-1]             || u32le(len) || u32le(tok) ... )
//! ```
//!
//! `len` is the number of tokens in the block. Because every key covers the
//! key before it, one key identifies the whole prefix ending at its block.

use std::fmt;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const DEFAULT_BLOCK_SIZE: usize = 128;
pub const DEFAULT_CHUNK_BYTES: usize = 6144;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct BlockKey(pub [u8; 32]);

impl BlockKey {
    pub const ZERO: BlockKey = BlockKey([0; 32]);

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn short(&self) -> String {
        self.0[..4].iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl fmt::Display for BlockKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for BlockKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BlockKey({})", self.short())
    }
}

/// Identifies the (model, tokenizer) pair a cache entry belongs to.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ModelFingerprint(pub [u8; 32]);

impl ModelFingerprint {
    pub fn from_descriptor(model: &str, tokenizer: &str) -> Self {
        let mut h = Sha256::new();
        h.update((model.len() as u32).to_le_bytes());
        h.update(model.as_bytes());
        h.update((tokenizer.len() as u32).to_le_bytes());
        h.update(tokenizer.as_bytes());
        Self(h.finalize().into())
    }
}

impl fmt::Debug for ModelFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let head: String = self.0[..4].iter().map(|b| format!("{b:02x}")).collect();
        write!(f, "ModelFingerprint({head})")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenBlock {
    pub tokens: Vec<TokenId>,
    pub block_index: usize,
}

/// Splits tokens into `block_size` runs; the last block may be short.
pub fn blockify(tokens: &[TokenId], block_size: usize) -> Result<Vec<TokenBlock>> {
    if block_size == 0 {
        return Err(Error::Config("block size must be positive".into()));
    }
    Ok(tokens
        .chunks(block_size)
        .enumerate()
        .map(|(block_index, t)| TokenBlock {
            tokens: t.to_vec(),
            block_index,
        })
        .collect())
}

pub fn block_key(prev: &BlockKey, tokens: &[TokenId]) -> BlockKey {
    let mut h = Sha256::new();
    h.update(prev.0);
    h.update((tokens.len() as u32).to_le_bytes());
    for t in tokens {
        h.update(t.to_le_bytes());
    }
    BlockKey(h.finalize().into())
}

pub fn chain_hash(blocks: &[TokenBlock]) -> Vec<BlockKey> {
    let mut prev = BlockKey::ZERO;
    blocks
        .iter()
        .map(|b| {
            prev = block_key(&prev, &b.tokens);
            prev
        })
        .collect()
}

/// Opaque KVC bytes of one block. Never empty.
#[derive(Clone, PartialEq, Eq)]
pub struct KvcPayload(Vec<u8>);

impl KvcPayload {
    pub fn new(bytes: Vec<u8>) -> Result<Self> {
        if bytes.is_empty() {
            return Err(Error::EmptyPayload);
        }
        Ok(Self(bytes))
    }

    pub fn bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn byte_length(&self) -> usize {
        self.0.len()
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }
}

impl fmt::Debug for KvcPayload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KvcPayload({} bytes)", self.0.len())
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct ChunkRecord {
    pub block: BlockKey,
    pub chunk_id: u32,
    pub total_chunks: u32,
    pub payload: Vec<u8>,
}

impl fmt::Debug for ChunkRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChunkRecord")
            .field("block", &self.block)
            .field("chunk_id", &self.chunk_id)
            .field("total_chunks", &self.total_chunks)
            .field("len", &self.payload.len())
            .finish()
    }
}

pub fn chunk_count(payload_len: usize, chunk_bytes: usize) -> usize {
    payload_len.div_ceil(chunk_bytes)
}

pub fn chunk_split(
    block: BlockKey,
    payload: &KvcPayload,
    chunk_bytes: usize,
) -> Result<Vec<ChunkRecord>> {
    if chunk_bytes == 0 {
        return Err(Error::Config("chunk size must be positive".into()));
    }
    let total = chunk_count(payload.byte_length(), chunk_bytes);
    let total_chunks = u32::try_from(total)
        .map_err(|_| Error::Config(format!("{total} chunks exceed the chunk id range")))?;
    Ok(payload
        .bytes()
        .chunks(chunk_bytes)
        .enumerate()
        .map(|(i, bytes)| ChunkRecord {
            block,
            chunk_id: i as u32,
            total_chunks,
            payload: bytes.to_vec(),
        })
        .collect())
}

/// Reassembles a block from its chunks in any order.
pub fn chunk_join(chunks: &[ChunkRecord]) -> Result<KvcPayload> {
    let first = chunks.first().ok_or(Error::IncompleteBlock {
        missing: 0,
        total: 0,
    })?;
    let total = first.total_chunks;
    let mut slots: Vec<Option<&ChunkRecord>> = vec![None; total as usize];
    for c in chunks {
        if c.block != first.block || c.total_chunks != total {
            return Err(Error::InconsistentChunks(
                "chunks belong to different blocks".into(),
            ));
        }
        let slot = slots.get_mut(c.chunk_id as usize).ok_or_else(|| {
            Error::InconsistentChunks(format!("chunk id {} out of range {total}", c.chunk_id))
        })?;
        if slot.replace(c).is_some() {
            return Err(Error::InconsistentChunks(format!(
                "chunk id {} appears twice",
                c.chunk_id
            )));
        }
    }
    let mut bytes = Vec::new();
    for (i, slot) in slots.iter().enumerate() {
        let c = slot.ok_or(Error::IncompleteBlock {
            missing: i as u32,
            total,
        })?;
        bytes.extend_from_slice(&c.payload);
    }
    KvcPayload::new(bytes)
}
