//! Per-satellite chunk stores and the grid of stores that gossips evictions
//! and executes migrations.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};

use crate::blockcodec::{BlockKey, ModelFingerprint};
use crate::error::{Error, Result};
use crate::geometry::ConstellationSpec;
use crate::mapping::MigrationPlan;
use crate::topology::SatCoord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChunkKey {
    pub fingerprint: ModelFingerprint,
    pub block: BlockKey,
    pub chunk_id: u32,
}

impl ChunkKey {
    pub fn new(fingerprint: ModelFingerprint, block: BlockKey, chunk_id: u32) -> Self {
        Self {
            fingerprint,
            block,
            chunk_id,
        }
    }

    fn block_id(&self) -> BlockId {
        (self.fingerprint, self.block)
    }
}

type BlockId = (ModelFingerprint, BlockKey);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EvictionNotice {
    pub fingerprint: ModelFingerprint,
    pub block: BlockKey,
    pub origin: SatCoord,
    /// Distinguishes repeated evictions of the same block from one origin.
    pub nonce: u64,
    pub ttl_hops: u32,
}

/// A chunk in transit between stores. `stamp` carries its LRU age.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredChunk {
    pub key: ChunkKey,
    pub total_chunks: u32,
    pub payload: Vec<u8>,
    pub stamp: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StoreMetrics {
    pub hits: u64,
    pub misses: u64,
    /// Chunks dropped to make room.
    pub evictions: u64,
    /// Chunks dropped by eviction notices.
    pub purged: u64,
    pub chunks: usize,
    pub used_bytes: usize,
    pub capacity_bytes: usize,
}

impl StoreMetrics {
    pub fn merge(&mut self, other: &StoreMetrics) {
        self.hits += other.hits;
        self.misses += other.misses;
        self.evictions += other.evictions;
        self.purged += other.purged;
        self.chunks += other.chunks;
        self.used_bytes += other.used_bytes;
        self.capacity_bytes += other.capacity_bytes;
    }
}

#[derive(Debug, Clone)]
struct Entry {
    stamp: u64,
    total_chunks: u32,
    payload: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct SatStore {
    coord: SatCoord,
    capacity_bytes: usize,
    used_bytes: usize,
    clock: u64,
    notice_seq: u64,
    notice_ttl: u32,
    entries: HashMap<ChunkKey, Entry>,
    lru: BTreeSet<(u64, ChunkKey)>,
    blocks: HashMap<BlockId, BTreeSet<u32>>,
    seen: HashSet<(BlockId, SatCoord, u64)>,
    metrics: StoreMetrics,
}

impl SatStore {
    pub fn new(coord: SatCoord, capacity_bytes: usize) -> Self {
        Self {
            coord,
            capacity_bytes,
            used_bytes: 0,
            clock: 0,
            notice_seq: 0,
            notice_ttl: 0,
            entries: HashMap::new(),
            lru: BTreeSet::new(),
            blocks: HashMap::new(),
            seen: HashSet::new(),
            metrics: StoreMetrics::default(),
        }
    }

    /// Hop budget stamped on notices this store originates.
    pub fn with_notice_ttl(mut self, ttl: u32) -> Self {
        self.notice_ttl = ttl;
        self
    }

    pub fn set_notice_ttl(&mut self, ttl: u32) {
        self.notice_ttl = ttl;
    }

    pub fn coord(&self) -> SatCoord {
        self.coord
    }

    pub fn capacity_bytes(&self) -> usize {
        self.capacity_bytes
    }

    pub fn used_bytes(&self) -> usize {
        self.used_bytes
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    fn unlink(&mut self, key: &ChunkKey) -> Option<Entry> {
        let entry = self.entries.remove(key)?;
        self.lru.remove(&(entry.stamp, *key));
        self.used_bytes -= entry.payload.len();
        if let Some(ids) = self.blocks.get_mut(&key.block_id()) {
            ids.remove(&key.chunk_id);
            if ids.is_empty() {
                self.blocks.remove(&key.block_id());
            }
        }
        Some(entry)
    }

    fn link(&mut self, key: ChunkKey, entry: Entry) {
        self.used_bytes += entry.payload.len();
        self.lru.insert((entry.stamp, key));
        self.blocks
            .entry(key.block_id())
            .or_default()
            .insert(key.chunk_id);
        self.entries.insert(key, entry);
    }

    fn make_room(&mut self) -> Vec<EvictionNotice> {
        let mut evicted: Vec<BlockId> = Vec::new();
        while self.used_bytes > self.capacity_bytes {
            let Some(&(_, victim)) = self.lru.first() else {
                break;
            };
            self.unlink(&victim);
            self.metrics.evictions += 1;
            if !evicted.contains(&victim.block_id()) {
                evicted.push(victim.block_id());
            }
        }
        evicted
            .into_iter()
            .map(|(fingerprint, block)| {
                self.notice_seq += 1;
                EvictionNotice {
                    fingerprint,
                    block,
                    origin: self.coord,
                    nonce: self.notice_seq,
                    ttl_hops: self.notice_ttl,
                }
            })
            .collect()
    }

    fn check_size(&self, len: usize) -> Result<()> {
        if len > self.capacity_bytes {
            return Err(Error::Oversize {
                size: len,
                capacity: self.capacity_bytes,
            });
        }
        Ok(())
    }

    /// Stores a chunk as most recently used, evicting least recently used
    /// chunks while over capacity. Returns one notice per evicted block.
    pub fn set(
        &mut self,
        key: ChunkKey,
        total_chunks: u32,
        payload: Vec<u8>,
    ) -> Result<Vec<EvictionNotice>> {
        self.check_size(payload.len())?;
        self.unlink(&key);
        let stamp = self.tick();
        self.link(
            key,
            Entry {
                stamp,
                total_chunks,
                payload,
            },
        );
        Ok(self.make_room())
    }

    /// Inserts a migrated chunk keeping its LRU age.
    pub fn import(&mut self, chunk: StoredChunk) -> Result<Vec<EvictionNotice>> {
        self.check_size(chunk.payload.len())?;
        self.unlink(&chunk.key);
        self.clock = self.clock.max(chunk.stamp);
        self.link(
            chunk.key,
            Entry {
                stamp: chunk.stamp,
                total_chunks: chunk.total_chunks,
                payload: chunk.payload,
            },
        );
        Ok(self.make_room())
    }

    /// Hit refreshes recency. Returns `(total_chunks, payload)`.
    pub fn get(&mut self, key: &ChunkKey) -> Option<(u32, Vec<u8>)> {
        let Some(mut entry) = self.unlink(key) else {
            self.metrics.misses += 1;
            return None;
        };
        self.metrics.hits += 1;
        entry.stamp = self.tick();
        let out = (entry.total_chunks, entry.payload.clone());
        self.link(*key, entry);
        Some(out)
    }

    /// Chunk total of `key` without touching recency.
    pub fn peek(&self, key: &ChunkKey) -> Option<u32> {
        self.entries.get(key).map(|e| e.total_chunks)
    }

    pub fn contains(&self, key: &ChunkKey) -> bool {
        self.entries.contains_key(key)
    }

    /// Lowest chunk id held for the block, with the block's chunk total.
    /// Does not touch recency.
    pub fn probe(&self, fingerprint: ModelFingerprint, block: BlockKey) -> Option<(u32, u32)> {
        let id = *self.blocks.get(&(fingerprint, block))?.first()?;
        let key = ChunkKey::new(fingerprint, block, id);
        Some((id, self.entries[&key].total_chunks))
    }

    pub fn chunk_ids(&self, fingerprint: ModelFingerprint, block: BlockKey) -> Vec<u32> {
        self.blocks
            .get(&(fingerprint, block))
            .map(|ids| ids.iter().copied().collect())
            .unwrap_or_default()
    }

    pub fn remove(&mut self, key: &ChunkKey) -> bool {
        self.unlink(key).is_some()
    }

    pub fn purge_block(&mut self, fingerprint: ModelFingerprint, block: BlockKey) -> usize {
        let ids = self.chunk_ids(fingerprint, block);
        for id in &ids {
            self.unlink(&ChunkKey::new(fingerprint, block, *id));
        }
        ids.len()
    }

    /// Originates a notice for `block` as if this store had evicted it.
    pub fn notice_for(&mut self, fingerprint: ModelFingerprint, block: BlockKey) -> EvictionNotice {
        self.notice_seq += 1;
        EvictionNotice {
            fingerprint,
            block,
            origin: self.coord,
            nonce: self.notice_seq,
            ttl_hops: self.notice_ttl,
        }
    }

    /// Purges the block locally. Returns the notice to forward to the four
    /// neighbours, or `None` when it was already seen or its ttl ran out.
    pub fn apply_eviction(&mut self, notice: &EvictionNotice) -> Option<EvictionNotice> {
        let id = (
            (notice.fingerprint, notice.block),
            notice.origin,
            notice.nonce,
        );
        if !self.seen.insert(id) {
            return None;
        }
        let n = self.purge_block(notice.fingerprint, notice.block);
        self.metrics.purged += n as u64;
        (notice.ttl_hops > 0).then(|| EvictionNotice {
            ttl_hops: notice.ttl_hops - 1,
            ..*notice
        })
    }

    /// Copies of every held chunk, oldest first.
    pub fn export_all(&self) -> Vec<StoredChunk> {
        self.lru
            .iter()
            .map(|(stamp, key)| {
                let e = &self.entries[key];
                StoredChunk {
                    key: *key,
                    total_chunks: e.total_chunks,
                    payload: e.payload.clone(),
                    stamp: *stamp,
                }
            })
            .collect()
    }

    /// Held keys in sorted order.
    pub fn keys(&self) -> Vec<ChunkKey> {
        let mut keys: Vec<ChunkKey> = self.entries.keys().copied().collect();
        keys.sort();
        keys
    }

    /// Keys from least to most recently used.
    pub fn lru_order(&self) -> Vec<ChunkKey> {
        self.lru.iter().map(|(_, k)| *k).collect()
    }

    pub fn blocks(&self) -> Vec<(ModelFingerprint, BlockKey, u32)> {
        let mut out: Vec<_> = self
            .blocks
            .iter()
            .map(|(&(fp, b), ids)| {
                let key = ChunkKey::new(fp, b, *ids.first().expect("non-empty"));
                (fp, b, self.entries[&key].total_chunks)
            })
            .collect();
        out.sort();
        out
    }

    pub fn metrics(&self) -> StoreMetrics {
        StoreMetrics {
            chunks: self.entries.len(),
            used_bytes: self.used_bytes,
            capacity_bytes: self.capacity_bytes,
            ..self.metrics
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GossipReport {
    /// Notice deliveries, including duplicates that were dropped.
    pub messages: usize,
    pub chunks_purged: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MigrationReport {
    pub chunks_moved: usize,
    pub bytes_moved: usize,
}

/// Every satellite's store, addressed by coordinate.
#[derive(Debug, Clone)]
pub struct Constellation {
    spec: ConstellationSpec,
    stores: Vec<SatStore>,
    evicted: Vec<(ModelFingerprint, BlockKey)>,
}

impl Constellation {
    pub fn new(spec: ConstellationSpec, capacity_bytes: usize, notice_ttl: u32) -> Result<Self> {
        spec.validate()?;
        let stores = (0..spec.planes)
            .flat_map(|p| (0..spec.sats_per_plane).map(move |i| SatCoord::new(p, i)))
            .map(|c| SatStore::new(c, capacity_bytes).with_notice_ttl(notice_ttl))
            .collect();
        Ok(Self {
            spec,
            stores,
            evicted: Vec::new(),
        })
    }

    pub fn spec(&self) -> &ConstellationSpec {
        &self.spec
    }

    fn slot(&self, coord: SatCoord) -> Result<usize> {
        coord.validate(&self.spec)?;
        Ok((coord.plane * self.spec.sats_per_plane + coord.index) as usize)
    }

    pub fn store(&self, coord: SatCoord) -> Result<&SatStore> {
        let i = self.slot(coord)?;
        Ok(&self.stores[i])
    }

    pub fn store_mut(&mut self, coord: SatCoord) -> Result<&mut SatStore> {
        let i = self.slot(coord)?;
        Ok(&mut self.stores[i])
    }

    pub fn stores(&self) -> &[SatStore] {
        &self.stores
    }

    pub fn set_notice_ttl(&mut self, ttl: u32) {
        for s in &mut self.stores {
            s.set_notice_ttl(ttl);
        }
    }

    /// Stores a chunk and gossips any resulting evictions.
    pub fn set(
        &mut self,
        coord: SatCoord,
        key: ChunkKey,
        total_chunks: u32,
        payload: Vec<u8>,
    ) -> Result<GossipReport> {
        let notices = self.store_mut(coord)?.set(key, total_chunks, payload)?;
        self.propagate_all(notices)
    }

    /// Breadth-first gossip of `notice` starting at its origin.
    pub fn propagate(&mut self, notice: EvictionNotice) -> Result<GossipReport> {
        let mut report = GossipReport::default();
        let mut queue = VecDeque::from([(notice.origin, notice)]);
        while let Some((at, n)) = queue.pop_front() {
            report.messages += 1;
            let store = self.store_mut(at)?;
            let before = store.len();
            let forward = store.apply_eviction(&n);
            report.chunks_purged += before - store.len();
            if let Some(fwd) = forward {
                for nb in at.neighbors(&self.spec) {
                    queue.push_back((nb, fwd));
                }
            }
        }
        Ok(report)
    }

    /// Blocks evicted for capacity since the last call.
    pub fn drain_evicted(&mut self) -> Vec<(ModelFingerprint, BlockKey)> {
        std::mem::take(&mut self.evicted)
    }

    pub fn propagate_all(&mut self, notices: Vec<EvictionNotice>) -> Result<GossipReport> {
        self.evicted
            .extend(notices.iter().map(|n| (n.fingerprint, n.block)));
        let mut total = GossipReport::default();
        for n in notices {
            let r = self.propagate(n)?;
            total.messages += r.messages;
            total.chunks_purged += r.chunks_purged;
        }
        Ok(total)
    }

    /// Copies every chunk from each move's source to its destination, then
    /// drops the source copies once all destinations hold them.
    pub fn execute_migration(&mut self, plan: &MigrationPlan) -> Result<MigrationReport> {
        let mut report = MigrationReport::default();
        let mut transfers = Vec::new();
        for mv in &plan.moves {
            transfers.push((mv.from, mv.to, self.store(mv.from)?.export_all()));
        }
        let mut notices = Vec::new();
        for (_, to, chunks) in &transfers {
            let dest = self.store_mut(*to)?;
            for c in chunks {
                report.chunks_moved += 1;
                report.bytes_moved += c.payload.len();
                notices.extend(dest.import(c.clone())?);
            }
        }
        for (from, to, chunks) in &transfers {
            if from == to {
                continue;
            }
            let src = self.store_mut(*from)?;
            for c in chunks {
                src.remove(&c.key);
            }
        }
        self.propagate_all(notices)?;
        Ok(report)
    }

    /// Counts of each block's chunks over the whole grid.
    pub fn block_census(&self) -> BTreeMap<(ModelFingerprint, BlockKey), (u32, usize)> {
        let mut census: BTreeMap<_, (u32, BTreeSet<u32>)> = BTreeMap::new();
        for s in &self.stores {
            for (fp, b, total) in s.blocks() {
                let e = census.entry((fp, b)).or_insert((total, BTreeSet::new()));
                e.1.extend(s.chunk_ids(fp, b));
            }
        }
        census
            .into_iter()
            .map(|(k, (total, ids))| (k, (total, ids.len())))
            .collect()
    }

    /// Purges every block that is missing chunks anywhere in the grid.
    pub fn cleanup_incomplete(&mut self) -> usize {
        let broken: Vec<_> = self
            .block_census()
            .into_iter()
            .filter(|(_, (total, held))| (*held as u64) < u64::from(*total))
            .map(|(k, _)| k)
            .collect();
        for (fp, b) in &broken {
            for s in &mut self.stores {
                s.purge_block(*fp, *b);
            }
        }
        broken.len()
    }

    pub fn chunks_of_block(&self, fingerprint: ModelFingerprint, block: BlockKey) -> usize {
        self.stores
            .iter()
            .map(|s| s.chunk_ids(fingerprint, block).len())
            .sum()
    }

    pub fn metrics(&self) -> StoreMetrics {
        let mut m = StoreMetrics::default();
        for s in &self.stores {
            m.merge(&s.metrics());
        }
        m
    }
}
