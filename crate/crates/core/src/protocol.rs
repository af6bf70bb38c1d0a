//! Set and get of prompt KV caches over a [`Transport`].
//!
//! A prompt is cut into token blocks whose chained hashes are the cache
//! keys. Each block's payload is split into chunks and chunk `c` lives on
//! logical server `c mod n_servers`, which the placement plan maps to a
//! satellite for the current rotation epoch.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Mutex, RwLock};

use crate::blockcodec::{
    blockify, chain_hash, chunk_join, chunk_split, BlockKey, ChunkRecord, KvcPayload,
    ModelFingerprint, TokenId, DEFAULT_BLOCK_SIZE, DEFAULT_CHUNK_BYTES,
};
use crate::error::{Error, Result};
use crate::geometry::ConstellationSpec;
use crate::index::{BlockMeta, RadixIndex};
use crate::mapping::{
    locate_server, migration_plan, plan_after, plan_for, MigrationPlan, PlacementPlan, Strategy,
};
use crate::store::ChunkKey;
use crate::topology::SatCoord;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkPut {
    pub coord: SatCoord,
    pub key: ChunkKey,
    pub total_chunks: u32,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkGet {
    pub coord: SatCoord,
    pub key: ChunkKey,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FetchOutcome {
    /// One slot per request: `(total_chunks, payload)` on a hit.
    pub chunks: Vec<Option<(u32, Vec<u8>)>>,
    pub latency_s: f64,
}

/// Where chunks physically go. Implemented by the simulated network and by
/// the UDP client.
pub trait Transport: Send + Sync {
    fn put_chunks(&self, puts: Vec<ChunkPut>) -> Result<()>;

    /// Fetches every requested chunk; `overhead` is the satellite above the
    /// client, used by transports that model latency.
    fn get_chunks(&self, gets: &[ChunkGet], overhead: SatCoord) -> Result<FetchOutcome>;

    /// Chunk total of `key` if that chunk is held at `coord`.
    fn probe(&self, coord: SatCoord, key: ChunkKey) -> Result<Option<u32>>;

    /// Drops every chunk of the block, starting from `origin` and gossiping
    /// outward.
    fn evict_block(
        &self,
        origin: SatCoord,
        fingerprint: ModelFingerprint,
        block: BlockKey,
    ) -> Result<()>;

    fn migrate(&self, plan: &MigrationPlan) -> Result<()>;

    /// Blocks the stores evicted for capacity since the last call.
    fn drain_evicted(&self) -> Vec<(ModelFingerprint, BlockKey)>;

    /// Purges blocks with missing chunks. Returns the number purged.
    fn sweep_incomplete(&self) -> Result<usize> {
        Ok(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvictionPolicy {
    /// Apply broadcast evictions to the index as they arrive.
    Gossip,
    /// Repair the index only when a get finds a gap.
    Lazy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KvcManagerConfig {
    pub spec: ConstellationSpec,
    /// Satellite overhead at epoch 0.
    pub center: SatCoord,
    pub block_size_tokens: usize,
    pub chunk_bytes: usize,
    pub n_servers: usize,
    pub strategy: Strategy,
    pub use_radix_index: bool,
    pub model_fingerprint: ModelFingerprint,
    pub eviction_policy: EvictionPolicy,
    /// Rotation steps between incomplete-block sweeps; 0 disables them.
    pub sweep_interval: u64,
}

impl KvcManagerConfig {
    pub fn new(
        spec: ConstellationSpec,
        center: SatCoord,
        n_servers: usize,
        strategy: Strategy,
    ) -> Self {
        Self {
            spec,
            center,
            block_size_tokens: DEFAULT_BLOCK_SIZE,
            chunk_bytes: DEFAULT_CHUNK_BYTES,
            n_servers,
            strategy,
            use_radix_index: true,
            model_fingerprint: ModelFingerprint::default(),
            eviction_policy: EvictionPolicy::Gossip,
            sweep_interval: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_servers == 0 {
            return Err(Error::Config("n_servers must be at least 1".into()));
        }
        if self.block_size_tokens == 0 || self.chunk_bytes == 0 {
            return Err(Error::Config(
                "block and chunk sizes must be positive".into(),
            ));
        }
        self.spec.validate()?;
        self.center.validate(&self.spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GetResult {
    pub matched_blocks: usize,
    pub payloads: Vec<KvcPayload>,
    pub fetch_latency_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LookupOutcome {
    pub depth: usize,
    /// Block positions whose existence was checked remotely.
    pub probes: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ManagerStats {
    pub lookups: u64,
    pub probes: u64,
    pub blocks_stored: u64,
    pub lazy_evictions: u64,
    pub index_repairs: u64,
}

#[derive(Default)]
struct Counters {
    lookups: AtomicU64,
    probes: AtomicU64,
    blocks_stored: AtomicU64,
    lazy_evictions: AtomicU64,
    index_repairs: AtomicU64,
}

pub struct KvcManager<T: Transport> {
    cfg: KvcManagerConfig,
    transport: T,
    base: PlacementPlan,
    /// Rotation gate: gets and adds hold it shared, rotation exclusively.
    epoch: RwLock<u64>,
    index: RwLock<RadixIndex>,
    writer: Mutex<()>,
    counters: Counters,
}

impl<T: Transport> KvcManager<T> {
    pub fn new(cfg: KvcManagerConfig, transport: T) -> Result<Self> {
        cfg.validate()?;
        let base = plan_for(cfg.strategy, cfg.center, cfg.n_servers, &cfg.spec)?;
        Ok(Self {
            cfg,
            transport,
            base,
            epoch: RwLock::new(0),
            index: RwLock::new(RadixIndex::new()),
            writer: Mutex::new(()),
            counters: Counters::default(),
        })
    }

    pub fn config(&self) -> &KvcManagerConfig {
        &self.cfg
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    pub fn epoch(&self) -> u64 {
        *self.epoch.read().expect("epoch lock")
    }

    pub fn index(&self) -> std::sync::RwLockReadGuard<'_, RadixIndex> {
        self.index.read().expect("index lock")
    }

    pub fn replace_index(&self, index: RadixIndex) {
        *self.index.write().expect("index lock") = index;
    }

    pub fn stats(&self) -> ManagerStats {
        let c = &self.counters;
        ManagerStats {
            lookups: c.lookups.load(Ordering::Relaxed),
            probes: c.probes.load(Ordering::Relaxed),
            blocks_stored: c.blocks_stored.load(Ordering::Relaxed),
            lazy_evictions: c.lazy_evictions.load(Ordering::Relaxed),
            index_repairs: c.index_repairs.load(Ordering::Relaxed),
        }
    }

    /// Placement plan in force at `epoch`.
    pub fn plan_at(&self, epoch: u64) -> Result<PlacementPlan> {
        plan_after(&self.base, epoch)
    }

    /// Satellite overhead at `epoch`.
    pub fn overhead_at(&self, epoch: u64) -> SatCoord {
        if self.cfg.strategy.migrates() {
            let s = u64::from(self.cfg.spec.sats_per_plane);
            self.base
                .center
                .offset(0, -((epoch % s) as i64), &self.cfg.spec)
        } else {
            self.base.center
        }
    }

    pub fn block_keys(&self, tokens: &[TokenId]) -> Result<Vec<BlockKey>> {
        Ok(chain_hash(&blockify(tokens, self.cfg.block_size_tokens)?))
    }

    fn chunk_key(&self, block: BlockKey, chunk_id: u32) -> ChunkKey {
        ChunkKey::new(self.cfg.model_fingerprint, block, chunk_id)
    }

    /// Satellite holding `chunk_id` of a block set at `meta.set_epoch`.
    fn chunk_home(&self, meta: &BlockMeta, chunk_id: u32, now: u64) -> Result<SatCoord> {
        let n = (meta.n_servers_at_set.max(1) as usize).min(self.base.n_servers());
        let server = chunk_id as usize % n;
        let set_plan = plan_after(&self.base, meta.set_epoch)?;
        locate_server(&set_plan, server, now.saturating_sub(meta.set_epoch))
    }

    fn head_home(&self, now: u64) -> Result<SatCoord> {
        locate_server(&self.base, 0, now)
    }

    fn probe_head(&self, block: BlockKey, now: u64) -> Result<Option<u32>> {
        self.counters.probes.fetch_add(1, Ordering::Relaxed);
        self.transport
            .probe(self.head_home(now)?, self.chunk_key(block, 0))
    }

    /// Binary search for the deepest present block, assuming presence is
    /// prefix-monotone. Returns the depth and the totals learnt on the way.
    fn remote_search(
        &self,
        keys: &[BlockKey],
        now: u64,
    ) -> Result<(LookupOutcome, HashMap<usize, u32>)> {
        let mut totals = HashMap::new();
        let (mut lo, mut hi) = (0usize, keys.len());
        let mut probes = 0;
        while lo < hi {
            let mid = (lo + hi).div_ceil(2);
            probes += 1;
            match self.probe_head(keys[mid - 1], now)? {
                Some(total) => {
                    totals.insert(mid - 1, total);
                    lo = mid;
                }
                None => hi = mid - 1,
            }
        }
        Ok((LookupOutcome { depth: lo, probes }, totals))
    }

    /// Index lookup whose deepest match is confirmed remotely; stale entries
    /// are evicted and the search repeated.
    fn indexed_search(
        &self,
        keys: &[BlockKey],
        now: u64,
    ) -> Result<(LookupOutcome, Vec<BlockMeta>)> {
        let mut probes = 0;
        loop {
            let found = self.index().longest_prefix(keys);
            let Some(m) = found else {
                return Ok((LookupOutcome { depth: 0, probes }, Vec::new()));
            };
            probes += 1;
            self.counters.probes.fetch_add(1, Ordering::Relaxed);
            let home = self.chunk_home(&m.meta, 0, now)?;
            let hit = self
                .transport
                .probe(home, self.chunk_key(keys[m.depth - 1], 0))?;
            if hit.is_some() {
                let metas = self.index().metas_along(&keys[..m.depth]);
                return Ok((
                    LookupOutcome {
                        depth: m.depth,
                        probes,
                    },
                    metas,
                ));
            }
            self.counters.index_repairs.fetch_add(1, Ordering::Relaxed);
            self.repair(&keys[..m.depth], home)?;
        }
    }

    /// Drops the last block of `prefix` from the index and the constellation.
    fn repair(&self, prefix: &[BlockKey], origin: SatCoord) -> Result<()> {
        let block = *prefix.last().expect("non-empty prefix");
        self.index.write().expect("index lock").evict(prefix);
        self.counters.lazy_evictions.fetch_add(1, Ordering::Relaxed);
        self.transport
            .evict_block(origin, self.cfg.model_fingerprint, block)
    }

    fn sync_evictions(&self) {
        let evicted = self.transport.drain_evicted();
        if self.cfg.eviction_policy == EvictionPolicy::Gossip && self.cfg.use_radix_index {
            let mut index = self.index.write().expect("index lock");
            for (fp, block) in evicted {
                if fp == self.cfg.model_fingerprint {
                    index.evict_block(&block);
                }
            }
        }
    }

    fn lookup_at(&self, keys: &[BlockKey], now: u64) -> Result<LookupOutcome> {
        self.counters.lookups.fetch_add(1, Ordering::Relaxed);
        if self.cfg.use_radix_index {
            Ok(self.indexed_search(keys, now)?.0)
        } else {
            Ok(self.remote_search(keys, now)?.0)
        }
    }

    /// Depth of the longest cached prefix of `keys`.
    pub fn lookup_longest_match(&self, keys: &[BlockKey]) -> Result<LookupOutcome> {
        self.sync_evictions();
        let now = self.epoch.read().expect("epoch lock");
        self.lookup_at(keys, *now)
    }

    /// Stores every block deeper than the cached prefix. Returns how many
    /// blocks were newly stored.
    pub fn add_blocks(&self, tokens: &[TokenId], payloads: &[KvcPayload]) -> Result<usize> {
        let keys = self.block_keys(tokens)?;
        if keys.len() != payloads.len() {
            return Err(Error::PayloadCount {
                blocks: keys.len(),
                payloads: payloads.len(),
            });
        }
        if keys.is_empty() {
            return Ok(0);
        }
        self.sync_evictions();
        let _writer = self.writer.lock().expect("writer lock");
        let now_guard = self.epoch.read().expect("epoch lock");
        let now = *now_guard;
        let found = self.lookup_at(&keys, now)?.depth;
        let mut metas = if self.cfg.use_radix_index {
            self.index().metas_along(&keys[..found])
        } else {
            Vec::new()
        };
        let mut stored = 0;
        let mut failure = None;
        for (i, payload) in payloads.iter().enumerate().skip(found) {
            let meta = BlockMeta {
                total_chunks: 0,
                set_epoch: now,
                n_servers_at_set: self.cfg.n_servers as u32,
                payload_bytes: payload.byte_length() as u64,
            };
            let chunks = chunk_split(keys[i], payload, self.cfg.chunk_bytes)?;
            let meta = BlockMeta {
                total_chunks: chunks.len() as u32,
                ..meta
            };
            let mut puts = Vec::with_capacity(chunks.len());
            for c in chunks {
                puts.push(ChunkPut {
                    coord: self.chunk_home(&meta, c.chunk_id, now)?,
                    key: self.chunk_key(c.block, c.chunk_id),
                    total_chunks: c.total_chunks,
                    payload: c.payload,
                });
            }
            if let Err(e) = self.transport.put_chunks(puts) {
                let origin = self.chunk_home(&meta, 0, now)?;
                self.transport
                    .evict_block(origin, self.cfg.model_fingerprint, keys[i])?;
                failure = Some(e);
                break;
            }
            metas.push(meta);
            stored += 1;
        }
        if self.cfg.use_radix_index && metas.len() == found + stored {
            let depth = metas.len();
            self.index
                .write()
                .expect("index lock")
                .insert(&keys[..depth], &metas)?;
        }
        drop(now_guard);
        self.counters
            .blocks_stored
            .fetch_add(stored as u64, Ordering::Relaxed);
        self.sync_evictions();
        match failure {
            Some(e) => Err(e),
            None => Ok(stored),
        }
    }

    /// Fetches the cached KV payloads of the longest intact prefix.
    pub fn get_cache(&self, tokens: &[TokenId]) -> Result<GetResult> {
        let keys = self.block_keys(tokens)?;
        self.sync_evictions();
        let now_guard = self.epoch.read().expect("epoch lock");
        let now = *now_guard;
        self.counters.lookups.fetch_add(1, Ordering::Relaxed);
        let (depth, metas) = if self.cfg.use_radix_index {
            let (out, metas) = self.indexed_search(&keys, now)?;
            (out.depth, metas)
        } else {
            let (out, mut totals) = self.remote_search(&keys, now)?;
            let mut metas = Vec::with_capacity(out.depth);
            let mut depth = out.depth;
            for (i, key) in keys.iter().enumerate().take(out.depth) {
                let total = match totals.remove(&i) {
                    Some(t) => Some(t),
                    None => self.probe_head(*key, now)?,
                };
                let Some(total) = total else {
                    depth = i;
                    break;
                };
                metas.push(self.unindexed_meta(total));
            }
            (depth, metas)
        };
        let depth = depth.min(metas.len());
        if depth == 0 {
            return Ok(GetResult {
                matched_blocks: 0,
                payloads: Vec::new(),
                fetch_latency_s: 0.0,
            });
        }

        let mut gets = Vec::new();
        let mut spans = Vec::with_capacity(depth);
        for (i, meta) in metas.iter().enumerate().take(depth) {
            let start = gets.len();
            for c in 0..meta.total_chunks {
                gets.push(ChunkGet {
                    coord: self.chunk_home(meta, c, now)?,
                    key: self.chunk_key(keys[i], c),
                });
            }
            spans.push(start..gets.len());
        }
        let outcome = self.transport.get_chunks(&gets, self.overhead_at(now))?;

        let mut payloads = Vec::with_capacity(depth);
        for (i, span) in spans.into_iter().enumerate() {
            let mut records = Vec::with_capacity(span.len());
            let mut gap = None;
            for j in span {
                match &outcome.chunks[j] {
                    Some((total, bytes)) => records.push(ChunkRecord {
                        block: keys[i],
                        chunk_id: gets[j].key.chunk_id,
                        total_chunks: *total,
                        payload: bytes.clone(),
                    }),
                    None => {
                        gap = Some(gets[j].coord);
                        break;
                    }
                }
            }
            let joined = match gap {
                None => chunk_join(&records).ok(),
                Some(_) => None,
            };
            match joined {
                Some(p) => payloads.push(p),
                None => {
                    let origin = gap.unwrap_or(gets[0].coord);
                    if self.cfg.use_radix_index {
                        self.repair(&keys[..=i], origin)?;
                    } else {
                        self.counters.lazy_evictions.fetch_add(1, Ordering::Relaxed);
                        self.transport
                            .evict_block(origin, self.cfg.model_fingerprint, keys[i])?;
                    }
                    break;
                }
            }
        }
        drop(now_guard);
        Ok(GetResult {
            matched_blocks: payloads.len(),
            payloads,
            fetch_latency_s: outcome.latency_s,
        })
    }

    /// Without the index the set epoch is unknown; every migrating plan
    /// places server `s` at the same satellite for a given epoch whatever
    /// the set time, so epoch 0 is as good as any.
    fn unindexed_meta(&self, total: u32) -> BlockMeta {
        BlockMeta {
            total_chunks: total,
            set_epoch: 0,
            n_servers_at_set: self.cfg.n_servers as u32,
            payload_bytes: 0,
        }
    }

    /// Advances the rotation clock by `steps`, migrating chunks on every
    /// step for strategies that migrate.
    pub fn rotate(&self, steps: u64) -> Result<usize> {
        let _writer = self.writer.lock().expect("writer lock");
        let mut epoch = self.epoch.write().expect("epoch lock");
        let mut moved = 0;
        for _ in 0..steps {
            if self.cfg.strategy.migrates() {
                let (mig, _) = migration_plan(&plan_after(&self.base, *epoch)?)?;
                moved += mig.moves.len();
                self.transport.migrate(&mig)?;
            }
            *epoch += 1;
            if self.cfg.sweep_interval > 0 && epoch.is_multiple_of(self.cfg.sweep_interval) {
                self.transport.sweep_incomplete()?;
            }
        }
        drop(epoch);
        self.sync_evictions();
        Ok(moved)
    }

    /// Satellite and store key of one chunk of block `block` of the prompt.
    pub fn chunk_location(
        &self,
        tokens: &[TokenId],
        block: usize,
        chunk_id: u32,
    ) -> Result<(SatCoord, ChunkKey)> {
        let keys = self.block_keys(tokens)?;
        let key = *keys.get(block).ok_or_else(|| {
            Error::Config(format!(
                "prompt has {} blocks, no block {block}",
                keys.len()
            ))
        })?;
        let now = self.epoch();
        let meta = match self.index().metas_along(&keys[..=block]).get(block) {
            Some(m) => *m,
            None => self.unindexed_meta(chunk_id + 1),
        };
        Ok((
            self.chunk_home(&meta, chunk_id, now)?,
            self.chunk_key(key, chunk_id),
        ))
    }

    /// Evicts block `block` of the prompt from the index and constellation.
    pub fn evict(&self, tokens: &[TokenId], block: usize) -> Result<()> {
        let (origin, key) = self.chunk_location(tokens, block, 0)?;
        let keys = self.block_keys(tokens)?;
        let _writer = self.writer.lock().expect("writer lock");
        self.index
            .write()
            .expect("index lock")
            .evict(&keys[..=block]);
        self.transport
            .evict_block(origin, self.cfg.model_fingerprint, key.block)
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::simnet::SimNetwork;

    fn spec() -> ConstellationSpec {
        ConstellationSpec::new(15, 15, 550e3).unwrap()
    }

    fn manager(strategy: Strategy, index: bool, capacity: usize) -> KvcManager<SimNetwork> {
        let mut cfg = KvcManagerConfig::new(spec(), SatCoord::new(7, 7), 9, strategy);
        cfg.use_radix_index = index;
        cfg.block_size_tokens = 4;
        cfg.chunk_bytes = 64;
        let net = SimNetwork::new(spec(), capacity, 8).unwrap();
        KvcManager::new(cfg, net).unwrap()
    }

    fn tokens(seed: u64, blocks: usize) -> Vec<TokenId> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..blocks * 4).map(|_| rng.gen()).collect()
    }

    fn payloads(seed: u64, blocks: usize) -> Vec<KvcPayload> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        (0..blocks)
            .map(|_| {
                let len = rng.gen_range(1..2000);
                KvcPayload::new((0..len).map(|_| rng.gen()).collect()).unwrap()
            })
            .collect()
    }

    #[test]
    fn add_counts_only_new_blocks() {
        for index in [true, false] {
            let m = manager(Strategy::RotationHopAware, index, 1 << 24);
            let t = tokens(1, 4);
            let p = payloads(1, 4);
            assert_eq!(m.add_blocks(&t, &p).unwrap(), 4);
            assert_eq!(m.add_blocks(&t, &p).unwrap(), 0);

            let mut longer = t[..8].to_vec();
            longer.extend(tokens(2, 2));
            let mut lp = p[..2].to_vec();
            lp.extend(payloads(2, 2));
            assert_eq!(m.add_blocks(&longer, &lp).unwrap(), 2);
            let got = m.get_cache(&longer).unwrap();
            assert_eq!(got.payloads, lp);
        }
    }

    #[test]
    fn payload_count_must_match_blocks() {
        let m = manager(Strategy::RotationHopAware, true, 1 << 24);
        let err = m.add_blocks(&tokens(1, 3), &payloads(1, 2)).unwrap_err();
        assert_eq!(
            err,
            Error::PayloadCount {
                blocks: 3,
                payloads: 2
            }
        );
    }

    #[test]
    fn empty_cache_gives_empty_result() {
        let m = manager(Strategy::HopAware, false, 1 << 24);
        let got = m.get_cache(&tokens(3, 5)).unwrap();
        assert_eq!(got.matched_blocks, 0);
        assert!(got.payloads.is_empty());
    }

    #[test]
    fn binary_search_matches_linear_scan() {
        for n in 1..=16usize {
            let m = manager(Strategy::RotationHopAware, false, 1 << 24);
            let t = tokens(n as u64, n);
            let p = payloads(n as u64, n);
            let keys = m.block_keys(&t).unwrap();
            let bound = (n as f64).log2().ceil() as usize + 1;
            let out = m.lookup_longest_match(&keys).unwrap();
            assert_eq!(out.depth, 0);
            assert!(out.probes <= bound);
            for k in 1..=n {
                m.add_blocks(&t[..k * 4], &p[..k]).unwrap();
                let out = m.lookup_longest_match(&keys).unwrap();
                assert_eq!(out.depth, k, "n={n} k={k}");
                assert!(out.probes <= bound, "n={n} k={k} probes={}", out.probes);
            }
        }
    }

    #[test]
    fn index_and_remote_search_agree() {
        let a = manager(Strategy::RotationHopAware, true, 1 << 24);
        let b = manager(Strategy::RotationHopAware, false, 1 << 24);
        let t = tokens(9, 8);
        let p = payloads(9, 8);
        for m in [&a, &b] {
            m.add_blocks(&t[..20], &p[..5]).unwrap();
        }
        let keys = a.block_keys(&t).unwrap();
        assert_eq!(a.lookup_longest_match(&keys).unwrap().depth, 5);
        assert_eq!(b.lookup_longest_match(&keys).unwrap().depth, 5);
        assert_eq!(a.lookup_longest_match(&keys).unwrap().probes, 1);
    }

    #[test]
    fn rotation_is_transparent() {
        for strategy in Strategy::ALL {
            for index in [true, false] {
                let m = manager(strategy, index, 1 << 24);
                let t = tokens(4, 6);
                let p = payloads(4, 6);
                m.add_blocks(&t, &p).unwrap();
                let before = m.get_cache(&t).unwrap();
                for k in [1u64, 2, 14] {
                    m.rotate(k).unwrap();
                    let after = m.get_cache(&t).unwrap();
                    assert_eq!(after.payloads, before.payloads, "{strategy} index={index}");
                }
            }
        }
    }

    #[test]
    fn blocks_set_at_different_epochs_stay_reachable() {
        let m = manager(Strategy::RotationHopAware, true, 1 << 24);
        let t = tokens(5, 6);
        let p = payloads(5, 6);
        m.add_blocks(&t[..8], &p[..2]).unwrap();
        m.rotate(2).unwrap();
        m.add_blocks(&t, &p).unwrap();
        m.rotate(5).unwrap();
        assert_eq!(m.get_cache(&t).unwrap().payloads, p);
        let metas = m.index().metas_along(&m.block_keys(&t).unwrap());
        assert_eq!(metas[0].set_epoch, 0);
        assert_eq!(metas[5].set_epoch, 2);
    }

    #[test]
    fn missing_chunk_truncates_the_result() {
        for index in [true, false] {
            let m = manager(Strategy::RotationHopAware, index, 1 << 24);
            let t = tokens(6, 4);
            let p = payloads(6, 4);
            m.add_blocks(&t, &p).unwrap();
            let total = p[2].byte_length().div_ceil(64) as u32;
            let (at, key) = m.chunk_location(&t, 2, total - 1).unwrap();
            assert!(m
                .transport()
                .with_grid(|g| g.store_mut(at).unwrap().remove(&key)));
            let got = m.get_cache(&t).unwrap();
            assert_eq!(got.matched_blocks, 2);
            assert_eq!(got.payloads, p[..2].to_vec());
            let block = m.block_keys(&t).unwrap()[2];
            let left = m
                .transport()
                .with_grid(|g| g.chunks_of_block(ModelFingerprint::default(), block));
            assert_eq!(left, 0);
            assert_eq!(m.get_cache(&t).unwrap().matched_blocks, 2);
        }
    }

    #[test]
    fn fingerprints_are_isolated() {
        let net = SimNetwork::new(spec(), 1 << 24, 8).unwrap();
        let mut cfg =
            KvcManagerConfig::new(spec(), SatCoord::new(7, 7), 9, Strategy::RotationHopAware);
        cfg.block_size_tokens = 4;
        cfg.use_radix_index = false;
        cfg.model_fingerprint = ModelFingerprint::from_descriptor("a", "tok");
        let a = KvcManager::new(cfg, net).unwrap();
        let t = tokens(7, 3);
        a.add_blocks(&t, &payloads(7, 3)).unwrap();
        let keys = a.block_keys(&t).unwrap();
        let puts = a
            .transport()
            .with_grid(|g| g.stores().iter().map(|s| s.len()).sum::<usize>());
        assert!(puts > 0);
        let other = ModelFingerprint::from_descriptor("b", "tok");
        let hit = a
            .transport()
            .probe(a.head_home(0).unwrap(), ChunkKey::new(other, keys[0], 0))
            .unwrap();
        assert_eq!(hit, None);
    }

    #[test]
    fn capacity_evictions_repair_the_index() {
        let m = manager(Strategy::RotationHopAware, true, 256);
        let t1 = tokens(10, 2);
        let p1 = payloads(10, 2);
        m.add_blocks(&t1, &p1).unwrap();
        for s in 11..40 {
            let _ = m.add_blocks(&tokens(s, 2), &payloads(s, 2));
        }
        let got = m.get_cache(&t1).unwrap();
        assert!(got.matched_blocks <= 2);
        assert_eq!(got.payloads[..], p1[..got.matched_blocks]);
        let used = m.transport().metrics();
        assert!(used.used_bytes <= 256 * 225);
        assert!(used.evictions > 0);
    }

    #[test]
    fn oversize_chunks_leave_no_half_blocks() {
        let mut cfg =
            KvcManagerConfig::new(spec(), SatCoord::new(7, 7), 9, Strategy::RotationHopAware);
        cfg.block_size_tokens = 4;
        cfg.chunk_bytes = 64;
        let m = KvcManager::new(cfg, SimNetwork::new(spec(), 32, 8).unwrap()).unwrap();
        let t = tokens(12, 1);
        let p = vec![KvcPayload::new(vec![1; 20 + 64 * 3]).unwrap()];
        assert!(matches!(m.add_blocks(&t, &p), Err(Error::Oversize { .. })));
        assert_eq!(m.transport().metrics().chunks, 0);
        assert_eq!(m.get_cache(&t).unwrap().matched_blocks, 0);
    }

    #[test]
    fn explicit_evict_drops_suffix() {
        let m = manager(Strategy::RotationAware, true, 1 << 24);
        let t = tokens(13, 4);
        let p = payloads(13, 4);
        m.add_blocks(&t, &p).unwrap();
        m.evict(&t, 1).unwrap();
        let got = m.get_cache(&t).unwrap();
        assert_eq!(got.matched_blocks, 1);
        assert_eq!(m.index().len(), 1);
    }

    #[test]
    fn eviction_notices_reach_the_index_lazily() {
        let net = SimNetwork::new(spec(), 1 << 24, 8).unwrap();
        let mut cfg =
            KvcManagerConfig::new(spec(), SatCoord::new(7, 7), 9, Strategy::RotationHopAware);
        cfg.block_size_tokens = 4;
        cfg.chunk_bytes = 64;
        cfg.eviction_policy = EvictionPolicy::Lazy;
        let m = KvcManager::new(cfg, net).unwrap();
        let t = tokens(14, 3);
        m.add_blocks(&t, &payloads(14, 3)).unwrap();
        let block = m.block_keys(&t).unwrap()[1];
        let (at, _) = m.chunk_location(&t, 1, 0).unwrap();
        m.transport()
            .evict_block(at, ModelFingerprint::default(), block)
            .unwrap();
        assert_eq!(m.index().len(), 3);
        assert_eq!(m.get_cache(&t).unwrap().matched_blocks, 1);
        assert_eq!(m.index().len(), 1);
        assert!(m.stats().lazy_evictions >= 1);
    }
}
