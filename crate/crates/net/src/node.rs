//! A store node: one satellite's chunk store behind a UDP socket.

use std::io;
use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use skymemory_core::store::{ChunkKey, EvictionNotice, SatStore, StoreMetrics};
use skymemory_core::topology::SatCoord;

use crate::client::{exchange, RetryPolicy};
use crate::wire::{
    decode_migrate, encode_evicted, salvage_request_id, EvictBody, NackCode, Op, WireError,
    WireMessage, MAX_DATAGRAM, PROBE,
};
use crate::NetError;

const POLL: Duration = Duration::from_millis(50);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeConfig {
    pub bind: SocketAddr,
    pub coord: SatCoord,
    pub capacity_bytes: usize,
    /// +GRID neighbours that eviction notices are forwarded to.
    pub neighbors: Vec<SocketAddr>,
    pub notice_ttl: u32,
}

impl NodeConfig {
    pub fn new(bind: SocketAddr, coord: SatCoord, capacity_bytes: usize) -> Self {
        Self {
            bind,
            coord,
            capacity_bytes,
            neighbors: Vec::new(),
            notice_ttl: 0,
        }
    }
}

/// Comma separated socket addresses.
pub fn parse_neighbors(text: &str) -> Result<Vec<SocketAddr>, NetError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| NetError::Config(format!("bad neighbour address {s:?}")))
        })
        .collect()
}

pub type SharedStore = Arc<Mutex<SatStore>>;

struct Node {
    socket: UdpSocket,
    coord: SatCoord,
    store: SharedStore,
    neighbors: Vec<SocketAddr>,
    next_id: u64,
    push: RetryPolicy,
}

impl Node {
    fn next_id(&mut self) -> u64 {
        self.next_id += 1;
        self.next_id
    }

    fn send(&self, to: SocketAddr, msg: &WireMessage) {
        match msg.encode() {
            Ok(bytes) => {
                if let Err(e) = self.socket.send_to(&bytes, to) {
                    log::warn!("node {} send to {to} failed: {e}", self.coord);
                }
            }
            Err(e) => log::warn!("node {} dropped reply: {e}", self.coord),
        }
    }

    fn gossip(&mut self, notice: EvictionNotice) {
        let forward = self
            .store
            .lock()
            .expect("store lock")
            .apply_eviction(&notice);
        let Some(fwd) = forward else {
            return;
        };
        let body = EvictBody {
            origin: fwd.origin,
            ttl_hops: fwd.ttl_hops,
            nonce: fwd.nonce,
        };
        for nb in self.neighbors.clone() {
            let msg = WireMessage {
                fingerprint: fwd.fingerprint,
                block: fwd.block,
                payload: body.encode(),
                ..WireMessage::new(Op::Evict, self.next_id())
            };
            self.send(nb, &msg);
        }
    }

    fn handle(&mut self, msg: WireMessage) -> Option<WireMessage> {
        let key = ChunkKey::new(msg.fingerprint, msg.block, msg.chunk_id);
        match msg.op {
            Op::SetChunk => {
                let result = self.store.lock().expect("store lock").set(
                    key,
                    msg.total_chunks,
                    msg.payload.clone(),
                );
                match result {
                    Ok(notices) => {
                        let evicted: Vec<_> =
                            notices.iter().map(|n| (n.fingerprint, n.block)).collect();
                        for n in notices {
                            self.gossip(n);
                        }
                        Some(WireMessage {
                            payload: encode_evicted(&evicted),
                            ..msg.reply(Op::Ack)
                        })
                    }
                    Err(_) => Some(msg.nack(NackCode::Oversize)),
                }
            }
            Op::GetChunk => {
                let mut store = self.store.lock().expect("store lock");
                if msg.total_chunks == PROBE {
                    return Some(match store.peek(&key) {
                        Some(total) => WireMessage {
                            total_chunks: total,
                            ..msg.reply(Op::GetResp)
                        },
                        None => msg.nack(NackCode::Miss),
                    });
                }
                Some(match store.get(&key) {
                    Some((total, payload)) => WireMessage {
                        total_chunks: total,
                        payload,
                        ..msg.reply(Op::GetResp)
                    },
                    None => msg.nack(NackCode::Miss),
                })
            }
            Op::Evict => match EvictBody::decode(&msg.payload) {
                Ok(body) => {
                    self.gossip(EvictionNotice {
                        fingerprint: msg.fingerprint,
                        block: msg.block,
                        origin: body.origin,
                        nonce: body.nonce,
                        ttl_hops: body.ttl_hops,
                    });
                    Some(msg.reply(Op::Ack))
                }
                Err(_) => Some(msg.nack(NackCode::Malformed)),
            },
            Op::Migrate => match decode_migrate(&msg.payload) {
                Ok(dest) => Some(match self.migrate_to(dest) {
                    Ok(()) => msg.reply(Op::Ack),
                    Err(e) => {
                        log::warn!("node {} migration to {dest} failed: {e}", self.coord);
                        msg.nack(NackCode::TransferFailed)
                    }
                }),
                Err(_) => Some(msg.nack(NackCode::Malformed)),
            },
            Op::GetResp | Op::Ack | Op::Nack => None,
        }
    }

    /// Pushes every held chunk to `dest` and deletes each local copy once
    /// the destination has acknowledged it.
    fn migrate_to(&mut self, dest: SocketAddr) -> Result<(), NetError> {
        let chunks = self.store.lock().expect("store lock").export_all();
        let local = self.socket.local_addr()?;
        let push = UdpSocket::bind(SocketAddr::new(local.ip(), 0))?;
        for c in chunks {
            let msg = WireMessage {
                fingerprint: c.key.fingerprint,
                block: c.key.block,
                chunk_id: c.key.chunk_id,
                total_chunks: c.total_chunks,
                payload: c.payload,
                ..WireMessage::new(Op::SetChunk, self.next_id())
            };
            let reply = exchange(&push, dest, &msg, &self.push)?;
            if reply.op != Op::Ack {
                return Err(NetError::Nack(reply.nack_code()));
            }
            self.store.lock().expect("store lock").remove(&c.key);
        }
        Ok(())
    }
}

/// Runs the node loop on `socket` until `shutdown` is set.
pub fn serve(
    socket: UdpSocket,
    cfg: NodeConfig,
    store: SharedStore,
    shutdown: Arc<AtomicBool>,
) -> Result<StoreMetrics, NetError> {
    socket.set_read_timeout(Some(POLL))?;
    let mut node = Node {
        socket,
        coord: cfg.coord,
        store,
        neighbors: cfg.neighbors,
        next_id: u64::from(cfg.coord.plane) << 48 | u64::from(cfg.coord.index) << 32,
        push: RetryPolicy::default(),
    };
    let mut buf = vec![0u8; MAX_DATAGRAM + 1];
    while !shutdown.load(Ordering::Relaxed) {
        let (len, from) = match node.socket.recv_from(&mut buf) {
            Ok(r) => r,
            Err(e)
                if matches!(
                    e.kind(),
                    io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
                ) =>
            {
                continue
            }
            Err(e) => return Err(e.into()),
        };
        let datagram = &buf[..len];
        let reply = match WireMessage::decode(datagram) {
            Ok(msg) => node.handle(msg),
            Err(err) => {
                let code = match err {
                    WireError::UnsupportedVersion(_) => NackCode::Version,
                    WireError::Oversize(_) => NackCode::Oversize,
                    _ => NackCode::Malformed,
                };
                log::debug!("node {} rejected datagram from {from}: {err}", node.coord);
                let mut nack = WireMessage::new(Op::Nack, salvage_request_id(datagram));
                nack.payload = vec![code as u8];
                Some(nack)
            }
        };
        if let Some(r) = reply {
            node.send(from, &r);
        }
    }
    let metrics = node.store.lock().expect("store lock").metrics();
    Ok(metrics)
}

/// A node running on its own thread.
pub struct NodeHandle {
    addr: SocketAddr,
    coord: SatCoord,
    store: SharedStore,
    shutdown: Arc<AtomicBool>,
    thread: Option<JoinHandle<Result<StoreMetrics, NetError>>>,
}

impl NodeHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn coord(&self) -> SatCoord {
        self.coord
    }

    /// Runs `f` against the node's store, serialised with the node loop.
    pub fn with_store<R>(&self, f: impl FnOnce(&mut SatStore) -> R) -> R {
        f(&mut self.store.lock().expect("store lock"))
    }

    pub fn stop(mut self) -> Result<StoreMetrics, NetError> {
        self.halt()
    }

    fn halt(&mut self) -> Result<StoreMetrics, NetError> {
        self.shutdown.store(true, Ordering::Relaxed);
        match self.thread.take() {
            Some(t) => t
                .join()
                .map_err(|_| NetError::Config("node thread panicked".into()))?,
            None => Ok(self.with_store(|s| s.metrics())),
        }
    }
}

impl Drop for NodeHandle {
    fn drop(&mut self) {
        let _ = self.halt();
    }
}

/// Starts a node on an already bound socket.
pub fn spawn_on(socket: UdpSocket, cfg: NodeConfig) -> Result<NodeHandle, NetError> {
    let addr = socket.local_addr()?;
    let store = Arc::new(Mutex::new(
        SatStore::new(cfg.coord, cfg.capacity_bytes).with_notice_ttl(cfg.notice_ttl),
    ));
    let shutdown = Arc::new(AtomicBool::new(false));
    let coord = cfg.coord;
    let thread = {
        let store = Arc::clone(&store);
        let shutdown = Arc::clone(&shutdown);
        std::thread::Builder::new()
            .name(format!("node-{}-{}", coord.plane, coord.index))
            .spawn(move || serve(socket, cfg, store, shutdown))?
    };
    Ok(NodeHandle {
        addr,
        coord,
        store,
        shutdown,
        thread: Some(thread),
    })
}

pub fn spawn(cfg: NodeConfig) -> Result<NodeHandle, NetError> {
    let socket = UdpSocket::bind(cfg.bind)?;
    spawn_on(socket, cfg)
}
