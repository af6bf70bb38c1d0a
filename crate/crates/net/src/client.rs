//! UDP client and the [`Transport`] implementation over real sockets.

use std::collections::HashMap;
use std::io;
use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use skymemory_core::blockcodec::{BlockKey, ModelFingerprint};
use skymemory_core::mapping::MigrationPlan;
use skymemory_core::protocol::{ChunkGet, ChunkPut, FetchOutcome, Transport};
use skymemory_core::store::ChunkKey;
use skymemory_core::topology::SatCoord;

use crate::wire::{
    decode_evicted, encode_migrate, EvictBody, NackCode, Op, WireMessage, MAX_DATAGRAM, PROBE,
};
use crate::NetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub retries: u32,
    /// Wait for the first attempt; doubled on every retry.
    pub initial_timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retries: 3,
            initial_timeout: Duration::from_millis(50),
        }
    }
}

/// Sends `msg` and waits for the response carrying its request id,
/// retrying with exponential backoff. Responses to other requests are
/// discarded.
pub fn exchange(
    socket: &UdpSocket,
    dest: SocketAddr,
    msg: &WireMessage,
    policy: &RetryPolicy,
) -> Result<WireMessage, NetError> {
    let bytes = msg.encode()?;
    let mut buf = vec![0u8; MAX_DATAGRAM];
    let mut wait = policy.initial_timeout;
    for _ in 0..=policy.retries {
        socket.send_to(&bytes, dest)?;
        let deadline = Instant::now() + wait;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                break;
            }
            socket.set_read_timeout(Some(left))?;
            match socket.recv_from(&mut buf) {
                Ok((len, _)) => match WireMessage::decode(&buf[..len]) {
                    Ok(reply) if reply.request_id == msg.request_id => return Ok(reply),
                    Ok(_) => {}
                    Err(e) => log::debug!("discarding bad reply from {dest}: {e}"),
                },
                Err(e)
                    if matches!(
                        e.kind(),
                        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
                    ) =>
                {
                    break
                }
                Err(e) => return Err(e.into()),
            }
        }
        wait *= 2;
    }
    Err(NetError::Timeout {
        addr: dest,
        attempts: policy.retries + 1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClientConfig {
    pub retry: RetryPolicy,
    pub migrate_retry: RetryPolicy,
    /// Worker threads, each with its own socket, used for batched puts and
    /// gets.
    pub max_in_flight: usize,
    /// Hop budget of client-originated eviction notices.
    pub notice_ttl: u32,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            retry: RetryPolicy::default(),
            migrate_retry: RetryPolicy {
                retries: 3,
                initial_timeout: Duration::from_secs(5),
            },
            max_in_flight: 8,
            notice_ttl: 0,
        }
    }
}

type Slot = Option<(u32, Vec<u8>)>;

pub struct UdpTransport {
    nodes: HashMap<SatCoord, SocketAddr>,
    cfg: ClientConfig,
    next_id: AtomicU64,
    control: Mutex<UdpSocket>,
    evicted: Mutex<Vec<(ModelFingerprint, BlockKey)>>,
}

fn client_socket() -> io::Result<UdpSocket> {
    UdpSocket::bind("0.0.0.0:0")
}

impl UdpTransport {
    pub fn new(nodes: HashMap<SatCoord, SocketAddr>, cfg: ClientConfig) -> Result<Self, NetError> {
        Ok(Self {
            nodes,
            cfg,
            next_id: AtomicU64::new(1),
            control: Mutex::new(client_socket()?),
            evicted: Mutex::new(Vec::new()),
        })
    }

    pub fn nodes(&self) -> &HashMap<SatCoord, SocketAddr> {
        &self.nodes
    }

    fn node(&self, coord: SatCoord) -> Result<SocketAddr, NetError> {
        self.nodes
            .get(&coord)
            .copied()
            .ok_or(NetError::UnknownNode(coord))
    }

    fn request_id(&self) -> u64 {
        self.next_id.fetch_add(1, Ordering::Relaxed)
    }

    fn control(
        &self,
        dest: SocketAddr,
        msg: &WireMessage,
        policy: &RetryPolicy,
    ) -> Result<WireMessage, NetError> {
        let socket = self.control.lock().expect("control socket");
        exchange(&socket, dest, msg, policy)
    }

    /// Runs one request per item across the worker pool, preserving order.
    fn fan_out<I, F>(&self, items: &[I], f: F) -> Result<Vec<WireMessage>, NetError>
    where
        I: Sync,
        F: Fn(&I, u64) -> Result<(SocketAddr, WireMessage), NetError> + Sync,
    {
        if items.is_empty() {
            return Ok(Vec::new());
        }
        let workers = self.cfg.max_in_flight.clamp(1, items.len());
        let per = items.len().div_ceil(workers);
        std::thread::scope(|scope| {
            let handles: Vec<_> = items
                .chunks(per)
                .map(|part| {
                    let f = &f;
                    scope.spawn(move || -> Result<Vec<WireMessage>, NetError> {
                        let socket = client_socket()?;
                        part.iter()
                            .map(|item| {
                                let (dest, msg) = f(item, self.request_id())?;
                                exchange(&socket, dest, &msg, &self.cfg.retry)
                            })
                            .collect()
                    })
                })
                .collect();
            let mut out = Vec::with_capacity(items.len());
            for h in handles {
                out.extend(h.join().expect("worker panicked")?);
            }
            Ok(out)
        })
    }

    fn put(&self, puts: &[ChunkPut]) -> Result<(), NetError> {
        let replies = self.fan_out(puts, |p, id| {
            Ok((
                self.node(p.coord)?,
                WireMessage {
                    fingerprint: p.key.fingerprint,
                    block: p.key.block,
                    chunk_id: p.key.chunk_id,
                    total_chunks: p.total_chunks,
                    payload: p.payload.clone(),
                    ..WireMessage::new(Op::SetChunk, id)
                },
            ))
        })?;
        let mut evicted = self.evicted.lock().expect("eviction log");
        let mut failure = None;
        for r in replies {
            match r.op {
                Op::Ack => evicted.extend(decode_evicted(&r.payload)),
                _ => failure = failure.or(Some(NetError::Nack(r.nack_code()))),
            }
        }
        failure.map_or(Ok(()), Err)
    }

    fn get(&self, gets: &[ChunkGet]) -> Result<Vec<Slot>, NetError> {
        let replies = self.fan_out(gets, |g, id| {
            Ok((
                self.node(g.coord)?,
                WireMessage {
                    fingerprint: g.key.fingerprint,
                    block: g.key.block,
                    chunk_id: g.key.chunk_id,
                    ..WireMessage::new(Op::GetChunk, id)
                },
            ))
        })?;
        replies
            .into_iter()
            .map(|r| match r.op {
                Op::GetResp => Ok(Some((r.total_chunks, r.payload))),
                Op::Nack if r.nack_code() == Some(NackCode::Miss) => Ok(None),
                _ => Err(NetError::Nack(r.nack_code())),
            })
            .collect()
    }

    fn probe_at(&self, coord: SatCoord, key: ChunkKey) -> Result<Option<u32>, NetError> {
        let msg = WireMessage {
            fingerprint: key.fingerprint,
            block: key.block,
            chunk_id: key.chunk_id,
            total_chunks: PROBE,
            ..WireMessage::new(Op::GetChunk, self.request_id())
        };
        let reply = self.control(self.node(coord)?, &msg, &self.cfg.retry)?;
        match reply.op {
            Op::GetResp => Ok(Some(reply.total_chunks)),
            Op::Nack if reply.nack_code() == Some(NackCode::Miss) => Ok(None),
            _ => Err(NetError::Nack(reply.nack_code())),
        }
    }

    fn evict(
        &self,
        origin: SatCoord,
        fingerprint: ModelFingerprint,
        block: BlockKey,
    ) -> Result<(), NetError> {
        let id = self.request_id();
        let body = EvictBody {
            origin,
            ttl_hops: self.cfg.notice_ttl,
            nonce: id | 1 << 63,
        };
        let msg = WireMessage {
            fingerprint,
            block,
            payload: body.encode(),
            ..WireMessage::new(Op::Evict, id)
        };
        let reply = self.control(self.node(origin)?, &msg, &self.cfg.retry)?;
        match reply.op {
            Op::Ack => Ok(()),
            _ => Err(NetError::Nack(reply.nack_code())),
        }
    }

    fn migrate_all(&self, plan: &MigrationPlan) -> Result<(), NetError> {
        for mv in &plan.moves {
            let from = self.node(mv.from)?;
            let to = self.node(mv.to)?;
            let msg = WireMessage {
                payload: encode_migrate(to),
                ..WireMessage::new(Op::Migrate, self.request_id())
            };
            let reply = self.control(from, &msg, &self.cfg.migrate_retry)?;
            if reply.op != Op::Ack {
                return Err(NetError::Nack(reply.nack_code()));
            }
        }
        Ok(())
    }
}

impl Transport for UdpTransport {
    fn put_chunks(&self, puts: Vec<ChunkPut>) -> skymemory_core::Result<()> {
        Ok(self.put(&puts)?)
    }

    fn get_chunks(
        &self,
        gets: &[ChunkGet],
        _overhead: SatCoord,
    ) -> skymemory_core::Result<FetchOutcome> {
        let start = Instant::now();
        let chunks = self.get(gets)?;
        Ok(FetchOutcome {
            chunks,
            latency_s: start.elapsed().as_secs_f64(),
        })
    }

    fn probe(&self, coord: SatCoord, key: ChunkKey) -> skymemory_core::Result<Option<u32>> {
        Ok(self.probe_at(coord, key)?)
    }

    fn evict_block(
        &self,
        origin: SatCoord,
        fingerprint: ModelFingerprint,
        block: BlockKey,
    ) -> skymemory_core::Result<()> {
        Ok(self.evict(origin, fingerprint, block)?)
    }

    fn migrate(&self, plan: &MigrationPlan) -> skymemory_core::Result<()> {
        Ok(self.migrate_all(plan)?)
    }

    fn drain_evicted(&self) -> Vec<(ModelFingerprint, BlockKey)> {
        std::mem::take(&mut *self.evicted.lock().expect("eviction log"))
    }
}
