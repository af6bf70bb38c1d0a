//! Store nodes speaking a compact datagram protocol, and a UDP transport
//! that lets the cache manager run against them.

use std::io;
use std::net::SocketAddr;

use skymemory_core::topology::SatCoord;

pub mod client;
pub mod cluster;
pub mod node;
pub mod wire;

pub use client::{ClientConfig, RetryPolicy, UdpTransport};
pub use cluster::LocalCluster;
pub use node::{NodeConfig, NodeHandle};

#[derive(Debug, thiserror::Error)]
pub enum NetError {
    #[error("socket error: {0}")]
    Io(#[from] io::Error),
    #[error("wire error: {0}")]
    Wire(#[from] wire::WireError),
    #[error("no reply from {addr} after {attempts} attempts")]
    Timeout { addr: SocketAddr, attempts: u32 },
    #[error("request refused: {0:?}")]
    Nack(Option<wire::NackCode>),
    #[error("no node serves satellite {0}")]
    UnknownNode(SatCoord),
    #[error("{0}")]
    Config(String),
}

impl From<NetError> for skymemory_core::Error {
    fn from(e: NetError) -> Self {
        skymemory_core::Error::Transport(e.to_string())
    }
}
