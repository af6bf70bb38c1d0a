//! Local radix index over block-key sequences.
//!
//! A prompt's key sequence is flattened into one byte string (32 bytes per
//! block) and stored in a path-compressed radix tree. Every block boundary of
//! an inserted sequence carries a terminal holding that block's metadata, so a
//! longest-prefix walk answers "how many leading blocks are cached" without
//! talking to the constellation.
//!
//! Snapshot format (all little-endian):
//!
//! ```text
//! magic     6 bytes  "SKYIDX"
//! version   u16      1
//! count     u64      number of entries
//! entry*    u32 depth, depth * 32 key bytes,
//!           u32 total_chunks, u64 set_epoch, u32 n_servers_at_set, u64 payload_bytes
//! digest    32 bytes SHA-256 of everything before it
//! ```

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::blockcodec::BlockKey;
use crate::error::{Error, Result};

const KEY_LEN: usize = 32;
const MAGIC: &[u8; 6] = b"SKYIDX";
const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockMeta {
    pub total_chunks: u32,
    pub set_epoch: u64,
    pub n_servers_at_set: u32,
    pub payload_bytes: u64,
}

#[derive(Debug, Default, Clone)]
struct Node {
    terminal: Option<BlockMeta>,
    children: BTreeMap<u8, Edge>,
}

#[derive(Debug, Clone)]
struct Edge {
    label: Vec<u8>,
    node: Node,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrefixMatch {
    pub depth: usize,
    pub meta: BlockMeta,
}

#[derive(Debug, Default, Clone)]
pub struct RadixIndex {
    root: Node,
    count: usize,
    /// Last key of every indexed sequence, to its full sequence.
    by_key: HashMap<BlockKey, Vec<BlockKey>>,
}

fn flatten(keys: &[BlockKey]) -> Vec<u8> {
    keys.iter().flat_map(|k| k.0).collect()
}

fn unflatten(bytes: &[u8]) -> Vec<BlockKey> {
    bytes
        .chunks_exact(KEY_LEN)
        .map(|c| BlockKey(c.try_into().expect("exact chunk")))
        .collect()
}

fn common_prefix(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).take_while(|(x, y)| x == y).count()
}

impl Node {
    fn insert(&mut self, key: &[u8], meta: BlockMeta) -> bool {
        if key.is_empty() {
            return self.terminal.replace(meta).is_none();
        }
        let Some(edge) = self.children.get_mut(&key[0]) else {
            self.children.insert(
                key[0],
                Edge {
                    label: key.to_vec(),
                    node: Node {
                        terminal: Some(meta),
                        children: BTreeMap::new(),
                    },
                },
            );
            return true;
        };
        let common = common_prefix(&edge.label, key);
        if common < edge.label.len() {
            let tail = edge.label.split_off(common);
            let lower = std::mem::take(&mut edge.node);
            edge.node.children.insert(
                tail[0],
                Edge {
                    label: tail,
                    node: lower,
                },
            );
        }
        edge.node.insert(&key[common..], meta)
    }

    fn collect(&self, path: &mut Vec<u8>, out: &mut Vec<(Vec<u8>, BlockMeta)>) {
        if let Some(meta) = self.terminal {
            out.push((path.clone(), meta));
        }
        for edge in self.children.values() {
            path.extend_from_slice(&edge.label);
            edge.node.collect(path, out);
            path.truncate(path.len() - edge.label.len());
        }
    }

    /// Removes the terminal at `key` and everything below it.
    fn remove(&mut self, key: &[u8], path: &mut Vec<u8>, out: &mut Vec<(Vec<u8>, BlockMeta)>) {
        if key.is_empty() {
            self.collect(path, out);
            *self = Node::default();
            return;
        }
        let first = key[0];
        let Some(edge) = self.children.get_mut(&first) else {
            return;
        };
        if key.len() < edge.label.len() {
            if edge.label.starts_with(key) {
                path.extend_from_slice(&edge.label);
                edge.node.collect(path, out);
                path.truncate(path.len() - edge.label.len());
                self.children.remove(&first);
            }
            return;
        }
        if !key.starts_with(&edge.label) {
            return;
        }
        let label_len = edge.label.len();
        path.extend_from_slice(&edge.label);
        edge.node.remove(&key[label_len..], path, out);
        path.truncate(path.len() - label_len);

        if edge.node.terminal.is_none() {
            match edge.node.children.len() {
                0 => {
                    self.children.remove(&first);
                }
                1 => {
                    let (_, child) = edge.node.children.pop_first().expect("one child");
                    edge.label.extend_from_slice(&child.label);
                    edge.node = child.node;
                }
                _ => {}
            }
        }
    }
}

impl RadixIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Indexes every block boundary of `keys`; `metas[i]` belongs to the
    /// block ending at `keys[i]`.
    pub fn insert(&mut self, keys: &[BlockKey], metas: &[BlockMeta]) -> Result<()> {
        if keys.len() != metas.len() {
            return Err(Error::PayloadCount {
                blocks: keys.len(),
                payloads: metas.len(),
            });
        }
        let flat = flatten(keys);
        for (depth, meta) in metas.iter().enumerate() {
            if self.root.insert(&flat[..(depth + 1) * KEY_LEN], *meta) {
                self.count += 1;
            }
            self.by_key
                .entry(keys[depth])
                .or_insert_with(|| keys[..=depth].to_vec());
        }
        Ok(())
    }

    pub fn longest_prefix(&self, keys: &[BlockKey]) -> Option<PrefixMatch> {
        let flat = flatten(keys);
        let mut node = &self.root;
        let mut consumed = 0;
        let mut best = None;
        loop {
            if let Some(meta) = node.terminal {
                best = Some(PrefixMatch {
                    depth: consumed / KEY_LEN,
                    meta,
                });
            }
            let rest = &flat[consumed..];
            let Some(edge) = rest.first().and_then(|b| node.children.get(b)) else {
                break;
            };
            if !rest.starts_with(&edge.label) {
                break;
            }
            consumed += edge.label.len();
            node = &edge.node;
        }
        best
    }

    /// Metadata of every indexed boundary along `keys`, stopping at the first
    /// boundary that is not indexed.
    pub fn metas_along(&self, keys: &[BlockKey]) -> Vec<BlockMeta> {
        let depth = self.longest_prefix(keys).map_or(0, |m| m.depth);
        (1..=depth)
            .filter_map(|d| self.longest_prefix(&keys[..d]).map(|m| m.meta))
            .collect()
    }

    /// Removes the boundary at the end of `keys` and every deeper extension.
    pub fn evict(&mut self, keys: &[BlockKey]) -> usize {
        if keys.is_empty() {
            return 0;
        }
        let mut removed = Vec::new();
        self.root
            .remove(&flatten(keys), &mut Vec::new(), &mut removed);
        for (path, _) in &removed {
            let seq = unflatten(path);
            if let Some(last) = seq.last() {
                if self.by_key.get(last) == Some(&seq) {
                    self.by_key.remove(last);
                }
            }
        }
        self.count -= removed.len();
        removed.len()
    }

    /// Evicts the boundary whose last key is `block` (and its extensions).
    pub fn evict_block(&mut self, block: &BlockKey) -> usize {
        match self.by_key.get(block).cloned() {
            Some(path) => self.evict(&path),
            None => 0,
        }
    }

    /// All indexed boundaries in lexicographic order of their key bytes.
    pub fn entries(&self) -> Vec<(Vec<BlockKey>, BlockMeta)> {
        let mut out = Vec::new();
        self.root.collect(&mut Vec::new(), &mut out);
        out.into_iter()
            .map(|(path, meta)| (unflatten(&path), meta))
            .collect()
    }

    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        let entries = self.entries();
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(entries.len() as u64).to_le_bytes());
        for (keys, meta) in &entries {
            buf.extend_from_slice(&(keys.len() as u32).to_le_bytes());
            for k in keys {
                buf.extend_from_slice(&k.0);
            }
            buf.extend_from_slice(&meta.total_chunks.to_le_bytes());
            buf.extend_from_slice(&meta.set_epoch.to_le_bytes());
            buf.extend_from_slice(&meta.n_servers_at_set.to_le_bytes());
            buf.extend_from_slice(&meta.payload_bytes.to_le_bytes());
        }
        let digest: [u8; 32] = Sha256::digest(&buf).into();
        buf.extend_from_slice(&digest);
        w.write_all(&buf)
            .map_err(|e| Error::Snapshot(format!("write failed: {e}")))
    }

    pub fn read_snapshot<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)
            .map_err(|e| Error::Snapshot(format!("read failed: {e}")))?;
        if buf.len() < MAGIC.len() + 2 + 8 + 32 {
            return Err(Error::Snapshot("file too short".into()));
        }
        let (body, digest) = buf.split_at(buf.len() - 32);
        let actual: [u8; 32] = Sha256::digest(body).into();
        if actual.as_slice() != digest {
            return Err(Error::Snapshot("digest mismatch".into()));
        }
        let mut cur = Cursor {
            bytes: body,
            pos: 0,
        };
        if cur.take(6)? != MAGIC {
            return Err(Error::Snapshot("bad magic".into()));
        }
        let version = u16::from_le_bytes(cur.array()?);
        if version != VERSION {
            return Err(Error::Snapshot(format!("unsupported version {version}")));
        }
        let count = u64::from_le_bytes(cur.array()?);
        let mut entries: Vec<(Vec<BlockKey>, BlockMeta)> = Vec::new();
        for _ in 0..count {
            let depth = u32::from_le_bytes(cur.array()?) as usize;
            let keys = unflatten(cur.take(depth * KEY_LEN)?);
            let meta = BlockMeta {
                total_chunks: u32::from_le_bytes(cur.array()?),
                set_epoch: u64::from_le_bytes(cur.array()?),
                n_servers_at_set: u32::from_le_bytes(cur.array()?),
                payload_bytes: u64::from_le_bytes(cur.array()?),
            };
            entries.push((keys, meta));
        }
        if cur.pos != body.len() {
            return Err(Error::Snapshot("trailing bytes".into()));
        }
        let mut index = RadixIndex::new();
        for (keys, meta) in entries {
            let Some(last) = keys.last().copied() else {
                return Err(Error::Snapshot("empty entry".into()));
            };
            if index.root.insert(&flatten(&keys), meta) {
                index.count += 1;
            }
            index.by_key.entry(last).or_insert(keys);
        }
        Ok(index)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)
            .map_err(|e| Error::Snapshot(format!("{}: {e}", path.display())))?;
        self.write_snapshot(std::io::BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Snapshot(format!("{}: {e}", path.display())))?;
        Self::read_snapshot(std::io::BufReader::new(file))
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Snapshot("truncated entry".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("sized take"))
    }
}
