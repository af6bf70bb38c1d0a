//! Scripted workloads against the cache manager.
//!
//! A script is one command per line; `#` starts a comment.
//!
//! ```text
//! config servers=9 strategy=rotation-hop-aware block=16 capacity=64MiB
//! prompt sys len=64 seed=7          # 64 random tokens
//! prompt chat len=32 extends=sys    # sys followed by 32 more tokens
//! add sys size=64KiB                # one payload of this size per block
//! rotate 3
//! get chat expect=4                 # longest cached prefix must be 4 blocks
//! evict sys block=2                 # evict block 2 and everything after it
//! evict sys block=1 chunk=0         # silently drop a single chunk
//! ```
//!
//! `config` keys: `servers`, `strategy`, `planes`, `sats`, `altitude` (km),
//! `center` (`orb:satellite`, 1-based), `block` (tokens), `chunk` (bytes),
//! `capacity` (bytes per satellite), `ttl` (gossip hops), `index`
//! (`on`/`off`), `policy` (`gossip`/`lazy`), `sweep` (rotation steps between
//! incomplete-block sweeps), `model`, `processing` (seconds per chunk) and
//! `metric` (`one-way`/`round-trip`). Every `config` line must precede the
//! first other command.
//!
//! Payload bytes are derived from the block key, so any get can be checked
//! without keeping copies around.

use std::collections::HashMap;

use anyhow::{anyhow, bail, Context, Result};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skymemory_core::blockcodec::{BlockKey, KvcPayload, ModelFingerprint, TokenId};
use skymemory_core::geometry::ConstellationSpec;
use skymemory_core::mapping::{plan_for, Strategy};
use skymemory_core::protocol::{EvictionPolicy, KvcManager, KvcManagerConfig, Transport};
use skymemory_core::simnet::{LatencyMetric, SimNetwork};
use skymemory_core::store::{ChunkKey, StoreMetrics};
use skymemory_core::topology::SatCoord;
use skymemory_net::cluster::coverage;
use skymemory_net::{ClientConfig, LocalCluster};

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Config(Vec<(String, String)>),
    Prompt {
        name: String,
        len: usize,
        seed: Option<u64>,
        extends: Option<String>,
    },
    Add {
        name: String,
        size: usize,
        expect: Option<usize>,
    },
    Rotate(u64),
    Get {
        name: String,
        expect: Option<usize>,
    },
    Evict {
        name: String,
        block: usize,
        chunk: Option<u32>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub line: usize,
    pub command: Command,
}

/// Byte count with an optional binary suffix: `4096`, `64KiB`, `2.9MiB`.
pub fn parse_bytes(text: &str) -> Result<usize> {
    let t = text.trim();
    let cut = t.find(|c: char| c.is_ascii_alphabetic()).unwrap_or(t.len());
    let (num, unit) = (&t[..cut], &t[cut..]);
    let scale = match unit.to_ascii_lowercase().as_str() {
        "" | "b" => 1.0,
        "k" | "kb" | "kib" => 1024.0,
        "m" | "mb" | "mib" => 1024.0 * 1024.0,
        "g" | "gb" | "gib" => 1024.0 * 1024.0 * 1024.0,
        other => bail!("unknown byte unit '{other}'"),
    };
    let v: f64 = num
        .parse()
        .map_err(|_| anyhow!("'{t}' is not a byte count"))?;
    if !(v >= 0.0 && v.is_finite()) {
        bail!("'{t}' is not a byte count");
    }
    Ok((v * scale).round() as usize)
}

fn int<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| anyhow!("{key}={v} is not a whole number"))
}

struct Args<'a> {
    named: HashMap<&'a str, &'a str>,
    positional: Vec<&'a str>,
}

impl<'a> Args<'a> {
    fn new(words: &[&'a str], allowed: &[&str]) -> Result<Self> {
        let mut named = HashMap::new();
        let mut positional = Vec::new();
        for w in words {
            match w.split_once('=') {
                Some((k, v)) => {
                    if !allowed.contains(&k) {
                        bail!("unknown argument '{k}'");
                    }
                    if named.insert(k, v).is_some() {
                        bail!("argument '{k}' given twice");
                    }
                }
                None => positional.push(*w),
            }
        }
        Ok(Self { named, positional })
    }

    fn name(&self) -> Result<String> {
        match self.positional.as_slice() {
            [n] => Ok(n.to_string()),
            [] => bail!("missing prompt name"),
            _ => bail!("expected one prompt name, got {}", self.positional.len()),
        }
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.named.get(key).map(|v| int(key, v)).transpose()
    }

    fn need<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?.ok_or_else(|| anyhow!("missing {key}="))
    }
}

fn parse_line(words: &[&str]) -> Result<Command> {
    let (cmd, rest) = words.split_first().expect("non-empty line");
    Ok(match *cmd {
        "config" => {
            let mut pairs = Vec::new();
            for w in rest {
                let (k, v) = w
                    .split_once('=')
                    .ok_or_else(|| anyhow!("expected key=value, got '{w}'"))?;
                pairs.push((k.to_string(), v.to_string()));
            }
            Command::Config(pairs)
        }
        "prompt" => {
            let a = Args::new(rest, &["len", "seed", "extends"])?;
            Command::Prompt {
                name: a.name()?,
                len: a.need("len")?,
                seed: a.get("seed")?,
                extends: a.named.get("extends").map(|s| s.to_string()),
            }
        }
        "add" => {
            let a = Args::new(rest, &["size", "expect"])?;
            let size = parse_bytes(
                a.named
                    .get("size")
                    .ok_or_else(|| anyhow!("missing size="))?,
            )?;
            if size == 0 {
                bail!("size must be positive");
            }
            Command::Add {
                name: a.name()?,
                size,
                expect: a.get("expect")?,
            }
        }
        "rotate" => match rest {
            [k] => Command::Rotate(int("rotate", k)?),
            _ => bail!("usage: rotate STEPS"),
        },
        "get" => {
            let a = Args::new(rest, &["expect"])?;
            Command::Get {
                name: a.name()?,
                expect: a.get("expect")?,
            }
        }
        "evict" => {
            let a = Args::new(rest, &["block", "chunk"])?;
            Command::Evict {
                name: a.name()?,
                block: a.need("block")?,
                chunk: a.get("chunk")?,
            }
        }
        other => bail!("unknown command '{other}'"),
    })
}

pub fn parse_script(text: &str) -> Result<Vec<Step>> {
    let mut steps = Vec::new();
    let mut seen_op = false;
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let words: Vec<&str> = raw
            .split('#')
            .next()
            .unwrap_or("")
            .split_whitespace()
            .collect();
        if words.is_empty() {
            continue;
        }
        let command = parse_line(&words).with_context(|| format!("line {line}: {}", raw.trim()))?;
        match command {
            Command::Config(_) if seen_op => {
                bail!("line {line}: config must come before other commands")
            }
            Command::Config(_) => {}
            _ => seen_op = true,
        }
        steps.push(Step { line, command });
    }
    Ok(steps)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settings {
    pub manager: KvcManagerConfig,
    pub capacity_bytes: usize,
    pub notice_ttl: u32,
    pub chunk_processing_s: f64,
    pub metric: LatencyMetric,
}

impl Default for Settings {
    fn default() -> Self {
        let spec = ConstellationSpec::new(15, 15, 550e3).expect("default grid");
        let manager =
            KvcManagerConfig::new(spec, SatCoord::new(7, 7), 9, Strategy::RotationHopAware);
        Self {
            manager,
            capacity_bytes: 64 << 20,
            notice_ttl: 8,
            chunk_processing_s: 0.011,
            metric: LatencyMetric::OneWay,
        }
    }
}

fn on_off(v: &str) -> Result<bool> {
    match v {
        "on" | "true" | "yes" => Ok(true),
        "off" | "false" | "no" => Ok(false),
        _ => bail!("expected on or off, got '{v}'"),
    }
}

impl Settings {
    pub fn apply(&mut self, key: &str, v: &str) -> Result<()> {
        let m = &mut self.manager;
        match key {
            "servers" => m.n_servers = int(key, v)?,
            "strategy" => m.strategy = v.parse()?,
            "planes" => m.spec.planes = int(key, v)?,
            "sats" => m.spec.sats_per_plane = int(key, v)?,
            "altitude" => {
                let km: f64 = v
                    .parse()
                    .map_err(|_| anyhow!("altitude={v} is not a number"))?;
                m.spec.altitude_m = km * 1e3;
            }
            "center" => {
                let c = SatCoord::parse(v)
                    .filter(|c| c.plane > 0 && c.index > 0)
                    .ok_or_else(|| anyhow!("center={v} is not orb:satellite (1-based)"))?;
                m.center = SatCoord::new(c.plane - 1, c.index - 1);
            }
            "block" => m.block_size_tokens = int(key, v)?,
            "chunk" => m.chunk_bytes = parse_bytes(v)?,
            "capacity" => self.capacity_bytes = parse_bytes(v)?,
            "ttl" => self.notice_ttl = int(key, v)?,
            "index" => m.use_radix_index = on_off(v)?,
            "policy" => {
                m.eviction_policy = match v {
                    "gossip" => EvictionPolicy::Gossip,
                    "lazy" => EvictionPolicy::Lazy,
                    _ => bail!("policy must be gossip or lazy"),
                }
            }
            "sweep" => m.sweep_interval = int(key, v)?,
            "model" => m.model_fingerprint = ModelFingerprint::from_descriptor(v, v),
            "processing" => {
                self.chunk_processing_s = v
                    .parse()
                    .ok()
                    .filter(|p: &f64| *p >= 0.0 && p.is_finite())
                    .ok_or_else(|| anyhow!("processing={v} is not a duration in seconds"))?
            }
            "metric" => {
                self.metric = match v {
                    "one-way" => LatencyMetric::OneWay,
                    "round-trip" => LatencyMetric::RoundTrip,
                    _ => bail!("metric must be one-way or round-trip"),
                }
            }
            other => bail!("unknown config key '{other}'"),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportKind {
    Sim,
    Udp,
}

impl std::str::FromStr for TransportKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sim" => Ok(Self::Sim),
            "udp" => Ok(Self::Udp),
            other => bail!("unknown transport '{other}' (sim or udp)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GetRecord {
    pub line: usize,
    pub name: String,
    pub blocks: usize,
    pub matched: usize,
    pub intact: bool,
    pub latency_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub lines: Vec<String>,
    pub failures: Vec<String>,
    pub gets: Vec<GetRecord>,
    pub metrics: StoreMetrics,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Deterministic payload of `size` bytes for a block.
pub fn block_payload(key: &BlockKey, size: usize) -> KvcPayload {
    let mut rng = ChaCha8Rng::from_seed(key.0);
    let mut bytes = vec![0u8; size];
    rng.fill_bytes(&mut bytes);
    KvcPayload::new(bytes).expect("size is positive")
}

fn name_seed(name: &str, seed: u64) -> u64 {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h = (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^ seed
}

/// Hooks into the stores behind a transport, for fault injection and
/// reporting.
trait Backdoor {
    fn drop_chunk(&self, coord: SatCoord, key: &ChunkKey) -> bool;
    fn metrics(&self) -> StoreMetrics;
}

struct SimBackdoor<'a>(&'a SimNetwork);

impl Backdoor for SimBackdoor<'_> {
    fn drop_chunk(&self, coord: SatCoord, key: &ChunkKey) -> bool {
        self.0
            .with_grid(|g| g.store_mut(coord).map(|s| s.remove(key)).unwrap_or(false))
    }

    fn metrics(&self) -> StoreMetrics {
        self.0.metrics()
    }
}

struct UdpBackdoor<'a>(&'a LocalCluster);

impl Backdoor for UdpBackdoor<'_> {
    fn drop_chunk(&self, coord: SatCoord, key: &ChunkKey) -> bool {
        self.0
            .node(coord)
            .map(|n| n.with_store(|s| s.remove(key)))
            .unwrap_or(false)
    }

    fn metrics(&self) -> StoreMetrics {
        let mut m = StoreMetrics::default();
        for n in self.0.nodes() {
            m.merge(&n.with_store(|s| s.metrics()));
        }
        m
    }
}

struct Runner<'a, T: Transport> {
    manager: &'a KvcManager<T>,
    backdoor: &'a dyn Backdoor,
    seed: u64,
    prompts: HashMap<String, Vec<TokenId>>,
    expected: HashMap<BlockKey, KvcPayload>,
    report: Report,
    latency_note: &'static str,
}

impl<T: Transport> Runner<'_, T> {
    fn tokens(&self, name: &str) -> Result<&[TokenId]> {
        self.prompts
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| anyhow!("no prompt named '{name}'"))
    }

    fn say(&mut self, line: usize, text: String) {
        self.report.lines.push(format!("[{line}] {text}"));
    }

    fn fail(&mut self, line: usize, text: String) {
        self.report.lines.push(format!("[{line}] FAIL {text}"));
        self.report.failures.push(format!("line {line}: {text}"));
    }

    fn step(&mut self, step: &Step) -> Result<()> {
        let line = step.line;
        match &step.command {
            Command::Config(_) => {}
            Command::Prompt {
                name,
                len,
                seed,
                extends,
            } => {
                let mut tokens = match extends {
                    Some(base) => self.tokens(base)?.to_vec(),
                    None => Vec::new(),
                };
                let mut rng =
                    ChaCha8Rng::seed_from_u64(seed.unwrap_or_else(|| name_seed(name, self.seed)));
                tokens.extend((0..*len).map(|_| rng.gen_range(0..50_000u32)));
                let blocks = self.manager.block_keys(&tokens)?.len();
                self.say(
                    line,
                    format!("prompt {name}: {} tokens, {blocks} blocks", tokens.len()),
                );
                self.prompts.insert(name.clone(), tokens);
            }
            Command::Add { name, size, expect } => {
                let tokens = self.tokens(name)?.to_vec();
                let keys = self.manager.block_keys(&tokens)?;
                let payloads: Vec<KvcPayload> = keys
                    .iter()
                    .map(|k| {
                        self.expected
                            .entry(*k)
                            .or_insert_with(|| block_payload(k, *size))
                            .clone()
                    })
                    .collect();
                let stored = self.manager.add_blocks(&tokens, &payloads)?;
                self.say(
                    line,
                    format!("add {name}: stored {stored} of {} blocks", keys.len()),
                );
                if let Some(want) = expect {
                    if stored != *want {
                        self.fail(
                            line,
                            format!("add {name}: expected {want} new blocks, stored {stored}"),
                        );
                    }
                }
            }
            Command::Rotate(k) => {
                let moved = self.manager.rotate(*k)?;
                self.say(
                    line,
                    format!(
                        "rotate {k}: epoch {}, {moved} server moves",
                        self.manager.epoch()
                    ),
                );
            }
            Command::Get { name, expect } => {
                let tokens = self.tokens(name)?.to_vec();
                let keys = self.manager.block_keys(&tokens)?;
                let got = self.manager.get_cache(&tokens)?;
                let intact = got.payloads.len() == got.matched_blocks
                    && keys
                        .iter()
                        .zip(&got.payloads)
                        .all(|(k, p)| self.expected.get(k) == Some(p));
                self.say(
                    line,
                    format!(
                        "get {name}: matched {}/{} blocks, payloads {}, fetch {:.9} s{}",
                        got.matched_blocks,
                        keys.len(),
                        if intact { "intact" } else { "CORRUPT" },
                        got.fetch_latency_s,
                        self.latency_note
                    ),
                );
                if !intact {
                    self.fail(
                        line,
                        format!("get {name}: payloads differ from what was added"),
                    );
                }
                if let Some(want) = expect {
                    if got.matched_blocks != *want {
                        self.fail(
                            line,
                            format!(
                                "get {name}: expected {want} blocks, matched {}",
                                got.matched_blocks
                            ),
                        );
                    }
                }
                self.report.gets.push(GetRecord {
                    line,
                    name: name.clone(),
                    blocks: keys.len(),
                    matched: got.matched_blocks,
                    intact,
                    latency_s: got.fetch_latency_s,
                });
            }
            Command::Evict { name, block, chunk } => {
                let tokens = self.tokens(name)?.to_vec();
                match chunk {
                    Some(c) => {
                        let (coord, key) = self.manager.chunk_location(&tokens, *block, *c)?;
                        let hit = self.backdoor.drop_chunk(coord, &key);
                        self.say(
                            line,
                            format!(
                                "evict {name} block {block} chunk {c}: {} at {coord}",
                                if hit { "dropped" } else { "not present" }
                            ),
                        );
                    }
                    None => {
                        self.manager.evict(&tokens, *block)?;
                        self.say(
                            line,
                            format!("evict {name} block {block}: evicted with its suffix"),
                        );
                    }
                }
            }
        }
        Ok(())
    }

    fn run(mut self, steps: &[Step]) -> Result<Report> {
        for s in steps {
            self.step(s).with_context(|| format!("line {}", s.line))?;
        }
        let m = self.backdoor.metrics();
        let st = self.manager.stats();
        self.report.lines.push(format!(
            "stores: hits {}, misses {}, evictions {}, purged {}, chunks {}, used {} bytes",
            m.hits, m.misses, m.evictions, m.purged, m.chunks, m.used_bytes
        ));
        self.report.lines.push(format!(
            "manager: lookups {}, probes {}, blocks stored {}, lazy evictions {}, index repairs {}",
            st.lookups, st.probes, st.blocks_stored, st.lazy_evictions, st.index_repairs
        ));
        self.report.metrics = m;
        Ok(self.report)
    }
}

/// Settings after applying every `config` line of the script.
pub fn settings_of(steps: &[Step]) -> Result<Settings> {
    let mut s = Settings::default();
    for step in steps {
        if let Command::Config(pairs) = &step.command {
            for (k, v) in pairs {
                s.apply(k, v)
                    .with_context(|| format!("line {}", step.line))?;
            }
        }
    }
    s.manager.validate()?;
    if s.capacity_bytes == 0 {
        bail!("capacity must be positive");
    }
    Ok(s)
}

/// Runs the script against a fresh constellation. `seed` feeds prompts
/// that give no seed of their own.
pub fn run_scenario(steps: &[Step], kind: TransportKind, seed: u64) -> Result<Report> {
    let s = settings_of(steps)?;
    let cfg = s.manager;
    match kind {
        TransportKind::Sim => {
            let net = SimNetwork::new(cfg.spec, s.capacity_bytes, s.notice_ttl)?
                .with_latency_model(s.chunk_processing_s, s.metric);
            let manager = KvcManager::new(cfg, net)?;
            let backdoor = SimBackdoor(manager.transport());
            runner(&manager, &backdoor, seed, "").run(steps)
        }
        TransportKind::Udp => {
            let steps_total: u64 = steps
                .iter()
                .map(|s| match s.command {
                    Command::Rotate(k) => k,
                    _ => 0,
                })
                .sum();
            let plan = plan_for(cfg.strategy, cfg.center, cfg.n_servers, &cfg.spec)?;
            let coords = coverage(&plan, steps_total)?;
            let cluster = LocalCluster::spawn(&cfg.spec, &coords, s.capacity_bytes, s.notice_ttl)?;
            let client = ClientConfig {
                notice_ttl: s.notice_ttl,
                ..ClientConfig::default()
            };
            let manager = KvcManager::new(cfg, cluster.transport(client)?)?;
            let backdoor = UdpBackdoor(&cluster);
            let mut report = runner(&manager, &backdoor, seed, " (wall clock)").run(steps)?;
            report
                .lines
                .insert(0, format!("udp: {} store nodes on loopback", cluster.len()));
            Ok(report)
        }
    }
}

fn runner<'a, T: Transport>(
    manager: &'a KvcManager<T>,
    backdoor: &'a dyn Backdoor,
    seed: u64,
    latency_note: &'static str,
) -> Runner<'a, T> {
    Runner {
        manager,
        backdoor,
        seed,
        prompts: HashMap::new(),
        expected: HashMap::new(),
        report: Report::default(),
        latency_note,
    }
}
