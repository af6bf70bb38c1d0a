//! A set of store nodes on loopback, one per satellite coordinate.

use std::collections::{BTreeSet, HashMap};
use std::net::{Ipv4Addr, SocketAddr, UdpSocket};

use skymemory_core::geometry::ConstellationSpec;
use skymemory_core::mapping::{locate_server, PlacementPlan};
use skymemory_core::topology::SatCoord;

use crate::client::{ClientConfig, UdpTransport};
use crate::node::{spawn_on, NodeConfig, NodeHandle};
use crate::NetError;

/// When set, node `i` binds `127.0.0.1:(base + i)` instead of an ephemeral
/// port.
pub const PORT_BASE_ENV: &str = "SKYMEMORY_PORT_BASE";

pub struct LocalCluster {
    nodes: Vec<NodeHandle>,
    addrs: HashMap<SatCoord, SocketAddr>,
}

fn port_base() -> Result<Option<u16>, NetError> {
    match std::env::var(PORT_BASE_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| NetError::Config(format!("{PORT_BASE_ENV}={v:?} is not a port"))),
        Err(_) => Ok(None),
    }
}

/// Every satellite any server of `plan` occupies over the next `steps`
/// rotation steps.
pub fn coverage(plan: &PlacementPlan, steps: u64) -> Result<Vec<SatCoord>, NetError> {
    let mut out = BTreeSet::new();
    for e in 0..=steps {
        for s in 0..plan.n_servers() {
            out.insert(locate_server(plan, s, e).map_err(|e| NetError::Config(e.to_string()))?);
        }
    }
    Ok(out.into_iter().collect())
}

impl LocalCluster {
    /// Starts one node per coordinate. Each node's neighbour list holds the
    /// cluster members adjacent to it on the torus.
    pub fn spawn(
        spec: &ConstellationSpec,
        coords: &[SatCoord],
        capacity_bytes: usize,
        notice_ttl: u32,
    ) -> Result<Self, NetError> {
        let base = port_base()?;
        let mut sockets = Vec::with_capacity(coords.len());
        for (i, _) in coords.iter().enumerate() {
            let port = match base {
                Some(b) => b
                    .checked_add(i as u16)
                    .ok_or_else(|| NetError::Config("port range overflows".into()))?,
                None => 0,
            };
            sockets.push(UdpSocket::bind((Ipv4Addr::LOCALHOST, port))?);
        }
        let mut addrs = HashMap::new();
        for (c, s) in coords.iter().zip(&sockets) {
            addrs.insert(*c, s.local_addr()?);
        }
        let mut nodes = Vec::with_capacity(coords.len());
        for (c, socket) in coords.iter().zip(sockets) {
            let neighbors = c
                .neighbors(spec)
                .into_iter()
                .filter_map(|nb| addrs.get(&nb).copied())
                .collect();
            let cfg = NodeConfig {
                bind: addrs[c],
                coord: *c,
                capacity_bytes,
                neighbors,
                notice_ttl,
            };
            nodes.push(spawn_on(socket, cfg)?);
        }
        Ok(Self { nodes, addrs })
    }

    pub fn addrs(&self) -> &HashMap<SatCoord, SocketAddr> {
        &self.addrs
    }

    pub fn nodes(&self) -> &[NodeHandle] {
        &self.nodes
    }

    pub fn node(&self, coord: SatCoord) -> Option<&NodeHandle> {
        self.nodes.iter().find(|n| n.coord() == coord)
    }

    pub fn transport(&self, cfg: ClientConfig) -> Result<UdpTransport, NetError> {
        UdpTransport::new(self.addrs.clone(), cfg)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}
