//! Datagram format shared by nodes and clients.
//!
//! ```text
//! offset size field
//!  0      1   version (1)
//!  1      1   op
//!  2      8   request_id
//! 10     32   model fingerprint
//! 42     32   block key
//! 74      4   chunk_id
//! 78      4   total_chunks
//! 82      4   payload_len
//! 86      *   payload
//! ```
//!
//! Integers are big-endian. A `GET_CHUNK` whose `total_chunks` is
//! [`PROBE`] asks only whether the chunk is held; the `GET_RESP` then has an
//! empty payload.

use std::net::SocketAddr;

use skymemory_core::blockcodec::{BlockKey, ModelFingerprint};
use skymemory_core::topology::SatCoord;

pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 86;
pub const MAX_DATAGRAM: usize = 8 * 1024;
pub const MAX_PAYLOAD: usize = MAX_DATAGRAM - HEADER_LEN;
pub const PROBE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Op {
    SetChunk = 1,
    GetChunk = 2,
    GetResp = 3,
    Evict = 4,
    Migrate = 5,
    Ack = 6,
    Nack = 7,
}

impl Op {
    pub fn from_byte(b: u8) -> Option<Op> {
        Some(match b {
            1 => Op::SetChunk,
            2 => Op::GetChunk,
            3 => Op::GetResp,
            4 => Op::Evict,
            5 => Op::Migrate,
            6 => Op::Ack,
            7 => Op::Nack,
            _ => return None,
        })
    }
}

/// Single-byte payload of a `NACK`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum NackCode {
    Miss = 1,
    Malformed = 2,
    Oversize = 3,
    Version = 4,
    Capacity = 5,
    TransferFailed = 6,
}

impl NackCode {
    pub fn from_byte(b: u8) -> Option<NackCode> {
        Some(match b {
            1 => NackCode::Miss,
            2 => NackCode::Malformed,
            3 => NackCode::Oversize,
            4 => NackCode::Version,
            5 => NackCode::Capacity,
            6 => NackCode::TransferFailed,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("datagram of {0} bytes is shorter than the header")]
    Truncated(usize),
    #[error("payload_len {declared} does not match {actual} trailing bytes")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("unknown op {0}")]
    UnknownOp(u8),
    #[error("unsupported version {0}")]
    UnsupportedVersion(u8),
    #[error("datagram of {0} bytes exceeds the limit")]
    Oversize(usize),
    #[error("bad {0} payload")]
    BadPayload(&'static str),
}

#[derive(Clone, PartialEq, Eq)]
pub struct WireMessage {
    pub op: Op,
    pub request_id: u64,
    pub fingerprint: ModelFingerprint,
    pub block: BlockKey,
    pub chunk_id: u32,
    pub total_chunks: u32,
    pub payload: Vec<u8>,
}

impl std::fmt::Debug for WireMessage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WireMessage")
            .field("op", &self.op)
            .field("request_id", &self.request_id)
            .field("block", &self.block)
            .field("chunk_id", &self.chunk_id)
            .field("total_chunks", &self.total_chunks)
            .field("payload_len", &self.payload.len())
            .finish()
    }
}

impl WireMessage {
    pub fn new(op: Op, request_id: u64) -> Self {
        Self {
            op,
            request_id,
            fingerprint: ModelFingerprint::default(),
            block: BlockKey::ZERO,
            chunk_id: 0,
            total_chunks: 0,
            payload: Vec::new(),
        }
    }

    /// Response to `self` carrying the same request id and chunk address.
    pub fn reply(&self, op: Op) -> Self {
        Self {
            op,
            payload: Vec::new(),
            ..self.clone()
        }
    }

    pub fn nack(&self, code: NackCode) -> Self {
        Self {
            payload: vec![code as u8],
            ..self.reply(Op::Nack)
        }
    }

    pub fn nack_code(&self) -> Option<NackCode> {
        (self.op == Op::Nack)
            .then(|| self.payload.first().copied().and_then(NackCode::from_byte))
            .flatten()
    }

    pub fn encode(&self) -> Result<Vec<u8>, WireError> {
        let len = HEADER_LEN + self.payload.len();
        if len > MAX_DATAGRAM {
            return Err(WireError::Oversize(len));
        }
        let mut out = Vec::with_capacity(len);
        out.push(VERSION);
        out.push(self.op as u8);
        out.extend_from_slice(&self.request_id.to_be_bytes());
        out.extend_from_slice(&self.fingerprint.0);
        out.extend_from_slice(&self.block.0);
        out.extend_from_slice(&self.chunk_id.to_be_bytes());
        out.extend_from_slice(&self.total_chunks.to_be_bytes());
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.payload);
        Ok(out)
    }

    pub fn decode(buf: &[u8]) -> Result<Self, WireError> {
        if buf.len() > MAX_DATAGRAM {
            return Err(WireError::Oversize(buf.len()));
        }
        if buf.len() < HEADER_LEN {
            return Err(WireError::Truncated(buf.len()));
        }
        if buf[0] != VERSION {
            return Err(WireError::UnsupportedVersion(buf[0]));
        }
        let op = Op::from_byte(buf[1]).ok_or(WireError::UnknownOp(buf[1]))?;
        let u32_at = |i: usize| u32::from_be_bytes(buf[i..i + 4].try_into().expect("4 bytes"));
        let declared = u32_at(82) as usize;
        let actual = buf.len() - HEADER_LEN;
        if declared != actual {
            return Err(WireError::LengthMismatch { declared, actual });
        }
        Ok(Self {
            op,
            request_id: u64::from_be_bytes(buf[2..10].try_into().expect("8 bytes")),
            fingerprint: ModelFingerprint(buf[10..42].try_into().expect("32 bytes")),
            block: BlockKey(buf[42..74].try_into().expect("32 bytes")),
            chunk_id: u32_at(74),
            total_chunks: u32_at(78),
            payload: buf[HEADER_LEN..].to_vec(),
        })
    }
}

/// Request id of a datagram too damaged to decode, if it got that far.
pub fn salvage_request_id(buf: &[u8]) -> u64 {
    buf.get(2..10)
        .map(|b| u64::from_be_bytes(b.try_into().expect("8 bytes")))
        .unwrap_or(0)
}

/// `EVICT` payload: origin plane and index (u16 each), ttl (u32), nonce (u64).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvictBody {
    pub origin: SatCoord,
    pub ttl_hops: u32,
    pub nonce: u64,
}

impl EvictBody {
    pub const LEN: usize = 16;

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::LEN);
        out.extend_from_slice(&(self.origin.plane as u16).to_be_bytes());
        out.extend_from_slice(&(self.origin.index as u16).to_be_bytes());
        out.extend_from_slice(&self.ttl_hops.to_be_bytes());
        out.extend_from_slice(&self.nonce.to_be_bytes());
        out
    }

    pub fn decode(buf: &[u8]) -> Result<Self, WireError> {
        if buf.len() != Self::LEN {
            return Err(WireError::BadPayload("EVICT"));
        }
        Ok(Self {
            origin: SatCoord::new(
                u32::from(u16::from_be_bytes([buf[0], buf[1]])),
                u32::from(u16::from_be_bytes([buf[2], buf[3]])),
            ),
            ttl_hops: u32::from_be_bytes(buf[4..8].try_into().expect("4 bytes")),
            nonce: u64::from_be_bytes(buf[8..16].try_into().expect("8 bytes")),
        })
    }
}

/// `MIGRATE` payload: the destination node address as UTF-8 text.
pub fn encode_migrate(dest: SocketAddr) -> Vec<u8> {
    dest.to_string().into_bytes()
}

pub fn decode_migrate(buf: &[u8]) -> Result<SocketAddr, WireError> {
    std::str::from_utf8(buf)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or(WireError::BadPayload("MIGRATE"))
}

/// `ACK` payload of a `SET_CHUNK`: the (fingerprint, block) pairs the node
/// evicted to make room, 64 bytes each.
pub fn encode_evicted(blocks: &[(ModelFingerprint, BlockKey)]) -> Vec<u8> {
    blocks
        .iter()
        .take(MAX_PAYLOAD / 64)
        .flat_map(|(fp, b)| fp.0.into_iter().chain(b.0))
        .collect()
}

pub fn decode_evicted(buf: &[u8]) -> Vec<(ModelFingerprint, BlockKey)> {
    buf.chunks_exact(64)
        .map(|c| {
            (
                ModelFingerprint(c[..32].try_into().expect("32 bytes")),
                BlockKey(c[32..].try_into().expect("32 bytes")),
            )
        })
        .collect()
}
