use thiserror::Error;

use crate::topology::SatCoord;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid constellation: {0}")]
    InvalidSpec(String),

    #[error("coordinate {coord} outside a {planes}x{sats_per_plane} constellation")]
    CoordOutOfRange {
        coord: SatCoord,
        planes: u32,
        sats_per_plane: u32,
    },

    #[error("{requested} servers do not fit in a placement area of {capacity} satellites")]
    Capacity { requested: usize, capacity: usize },

    #[error("strategy {0} does not migrate chunks")]
    UnsupportedStrategy(&'static str),

    #[error("block payload is empty")]
    EmptyPayload,

    #[error("block is incomplete: chunk {missing} of {total} is missing")]
    IncompleteBlock { missing: u32, total: u32 },

    #[error("chunk set is inconsistent: {0}")]
    InconsistentChunks(String),

    #[error("payload of {size} bytes exceeds store capacity of {capacity} bytes")]
    Oversize { size: usize, capacity: usize },

    #[error("expected one payload per block ({blocks}), got {payloads}")]
    PayloadCount { blocks: usize, payloads: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("index snapshot: {0}")]
    Snapshot(String),

    #[error("transport: {0}")]
    Transport(String),
}
