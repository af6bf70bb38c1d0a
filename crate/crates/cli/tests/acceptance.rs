//! Acceptance checks. Each criterion runs against its own time budget and
//! prints one PASS/FAIL line; the process exits nonzero if any fails.

use std::collections::VecDeque;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skymemory_cli::{render_layout, sweep, RenderFormat, SweepConfig};
use skymemory_core::blockcodec::{BlockKey, KvcPayload, TokenId};
use skymemory_core::geometry::{
    inter_plane_max_distance, intra_plane_distance, propagation_latency, ConstellationSpec,
    EARTH_RADIUS_M,
};
use skymemory_core::mapping::{plan_for, Strategy};
use skymemory_core::protocol::{KvcManager, KvcManagerConfig, Transport};
use skymemory_core::simnet::{evaluate, SimConfig, SimNetwork};
use skymemory_core::store::{ChunkKey, SatStore};
use skymemory_core::topology::SatCoord;
use skymemory_net::cluster::coverage;
use skymemory_net::{ClientConfig, LocalCluster};

type Check = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn grid15() -> ConstellationSpec {
    ConstellationSpec::new(15, 15, 550e3).unwrap()
}

// ---------------------------------------------------------------------------
// double-double arithmetic for the geometry oracle

#[derive(Clone, Copy, Debug)]
struct Dd {
    hi: f64,
    lo: f64,
}

fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let bb = s - a;
    Dd {
        hi: s,
        lo: (a - (s - bb)) + (b - bb),
    }
}

fn quick(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd {
        hi: s,
        lo: b - (s - a),
    }
}

impl Dd {
    const fn from(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    fn add(self, o: Dd) -> Dd {
        let s = two_sum(self.hi, o.hi);
        let t = two_sum(self.lo, o.lo);
        let s = quick(s.hi, s.lo + t.hi);
        quick(s.hi, s.lo + t.lo)
    }

    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        quick(p, e + (self.hi * o.lo + self.lo * o.hi))
    }

    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul(Dd::from(q1)));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul(Dd::from(q2)));
        let q3 = r.hi / o.hi;
        quick(q1, q2).add(Dd::from(q3))
    }

    fn sqrt(self) -> Dd {
        let y = Dd::from(self.hi.sqrt());
        let y = y.add(self.sub(y.mul(y)).div(y.mul(Dd::from(2.0))));
        y.add(self.sub(y.mul(y)).div(y.mul(Dd::from(2.0))))
    }
}

const PI_DD: Dd = Dd {
    hi: std::f64::consts::PI,
    lo: 1.224_646_799_147_353_2e-16,
};

/// `r * sqrt(2 (1 - cos(2 pi / n)))`, with `1 - cos` summed as a Taylor
/// series and the root refined by Newton steps, all in double-double.
fn chord_oracle(radius: Dd, n: u32) -> Dd {
    let x = PI_DD.mul(Dd::from(2.0)).div(Dd::from(f64::from(n)));
    let x2 = x.mul(x);
    let mut term = x2.div(Dd::from(2.0));
    let mut sum = term;
    for k in 2..200u32 {
        let d = f64::from((2 * k - 1) * (2 * k));
        term = term.mul(x2).div(Dd::from(d)).neg();
        sum = sum.add(term);
        if term.hi.abs() < 1e-40 * sum.hi.abs() {
            break;
        }
    }
    radius.mul(sum.mul(Dd::from(2.0)).sqrt())
}

fn rel_err(got: f64, want: Dd) -> f64 {
    (Dd::from(got).sub(want).hi / want.hi).abs()
}

fn geometry_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6e0);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let planes = rng.gen_range(2..=2000u32);
        let sats = rng.gen_range(2..=2000u32);
        let h = rng.gen_range(1.0..=40_000e3);
        let spec = ConstellationSpec::new(planes, sats, h).map_err(|e| e.to_string())?;
        let radius = two_sum(EARTH_RADIUS_M, h);
        let dm = intra_plane_distance(&spec).map_err(|e| e.to_string())?;
        let dn = inter_plane_max_distance(&spec).map_err(|e| e.to_string())?;
        for (got, n) in [(dm, sats), (dn, planes)] {
            let e = rel_err(got, chord_oracle(radius, n));
            ensure!(
                e <= 1e-12,
                "P={planes} S={sats} h={h}: relative error {e:e}"
            );
            worst = worst.max(e);
        }
    }
    Ok(format!("1000 tuples, worst relative error {worst:.2e}"))
}

fn latency_surface() -> Check {
    let heights: Vec<f64> = (0..20)
        .map(|i| 160e3 + 1840e3 * f64::from(i) / 19.0)
        .collect();
    let sizes: Vec<u32> = (1..=10).map(|k| 10 * k).collect();
    let lat = |s: u32, h: f64| -> Result<(f64, f64), String> {
        let spec = ConstellationSpec::new(s, s, h).map_err(|e| e.to_string())?;
        Ok((
            propagation_latency(intra_plane_distance(&spec).map_err(|e| e.to_string())?),
            propagation_latency(inter_plane_max_distance(&spec).map_err(|e| e.to_string())?),
        ))
    };
    let mut cells = 0;
    for (i, &s) in sizes.iter().enumerate() {
        for (j, &h) in heights.iter().enumerate() {
            let here = lat(s, h)?;
            if i > 0 {
                let west = lat(sizes[i - 1], h)?;
                ensure!(
                    here.0 < west.0 && here.1 < west.1,
                    "not decreasing in S at S={s} h={h}"
                );
            }
            if j > 0 {
                let below = lat(s, heights[j - 1])?;
                ensure!(
                    here.0 > below.0 && here.1 > below.1,
                    "not increasing in h at S={s} h={h}"
                );
            }
            cells += 1;
        }
    }
    Ok(format!(
        "{cells} grid cells, S in 10..100, h in 160..2000 km"
    ))
}

fn strategy_ordering() -> Check {
    let mut margin = f64::INFINITY;
    let mut rt_violations = 0;
    let n = 93;
    for i in 0..n {
        let h = 160e3 + 1840e3 * f64::from(i) / f64::from(n - 1);
        let mut cfg = SimConfig::midpoint();
        cfg.spec.altitude_m = h;
        let l = |s| evaluate(&cfg, s).map_err(|e| e.to_string());
        let (ra, ha, rha) = (
            l(Strategy::RotationAware)?,
            l(Strategy::HopAware)?,
            l(Strategy::RotationHopAware)?,
        );
        ensure!(
            rha.0 <= ha.0 && rha.0 <= ra.0,
            "at {:.0} km: rotation-hop-aware {:.6} s, hop-aware {:.6} s, rotation-aware {:.6} s",
            h / 1e3,
            rha.0,
            ha.0,
            ra.0
        );
        margin = margin.min(ha.0.min(ra.0) - rha.0);
        if !(rha.1 <= ha.1 && rha.1 <= ra.1) {
            rt_violations += 1;
        }
    }
    Ok(format!(
        "{n} altitudes, smallest lead {:.3} ms (round-trip metric: {rt_violations} altitudes out of order)",
        margin * 1e3
    ))
}

fn server_scaling() -> Check {
    let mut parts = Vec::new();
    let mut rha = 0.0;
    for s in Strategy::ALL {
        let at = |n| {
            let cfg = SimConfig {
                n_servers: n,
                ..SimConfig::midpoint()
            };
            evaluate(&cfg, s).map_err(|e| e.to_string())
        };
        let (l9, l81) = (at(9)?, at(81)?);
        let cut = 1.0 - l81.0 / l9.0;
        let cut_rt = 1.0 - l81.1 / l9.1;
        if s == Strategy::RotationHopAware {
            rha = cut;
        }
        parts.push(format!(
            "{s} {:.1}% (round trip {:.1}%)",
            cut * 100.0,
            cut_rt * 100.0
        ));
    }
    ensure!(
        (0.85..=0.95).contains(&rha),
        "rotation-hop-aware reduction {:.2}% outside 85-95%: {}",
        rha * 100.0,
        parts.join(", ")
    );
    Ok(parts.join(", "))
}

// ---------------------------------------------------------------------------
// protocol helpers

fn random_payload(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> KvcPayload {
    let size = rng.gen_range(lo.ln()..=hi.ln()).exp().round().max(1.0) as usize;
    let mut bytes = vec![0u8; size];
    rng.fill_bytes(&mut bytes);
    KvcPayload::new(bytes).unwrap()
}

fn sim_manager(
    servers: usize,
    strategy: Strategy,
    index: bool,
    block: usize,
    ttl: u32,
) -> KvcManager<SimNetwork> {
    let mut cfg = KvcManagerConfig::new(grid15(), SatCoord::new(7, 7), servers, strategy);
    cfg.block_size_tokens = block;
    cfg.use_radix_index = index;
    KvcManager::new(cfg, SimNetwork::new(grid15(), 1 << 34, ttl).unwrap()).unwrap()
}

/// Linear-scan model of what has been cached: block key to payload.
#[derive(Default)]
struct FlatOracle {
    entries: Vec<(BlockKey, KvcPayload)>,
}

impl FlatOracle {
    fn find(&self, key: &BlockKey) -> Option<&KvcPayload> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, p)| p)
    }

    fn depth(&self, keys: &[BlockKey]) -> usize {
        keys.iter().take_while(|k| self.find(k).is_some()).count()
    }
}

fn protocol_round_trip() -> Check {
    const BLOCK: usize = 16;
    const ROUNDS: usize = 10;
    const PER_ROUND: usize = 100;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e7);
    let (mut bytes, mut shared, mut blocks) = (0usize, 0usize, 0usize);
    for round in 0..ROUNDS {
        let m = sim_manager(25, Strategy::RotationHopAware, true, BLOCK, 8);
        let mut oracle = FlatOracle::default();
        let mut prompts: Vec<Vec<TokenId>> = Vec::new();
        for p in 0..PER_ROUND {
            let n_blocks = rng.gen_range(1..=16usize);
            let mut tokens: Vec<TokenId> = Vec::new();
            if !prompts.is_empty() && rng.gen_bool(0.6) {
                let base = &prompts[rng.gen_range(0..prompts.len())];
                let keep = rng.gen_range(0..=base.len().div_ceil(BLOCK).min(n_blocks));
                tokens.extend_from_slice(&base[..(keep * BLOCK).min(base.len())]);
            }
            let mut len = n_blocks * BLOCK;
            if rng.gen_bool(0.25) {
                len -= rng.gen_range(0..BLOCK);
            }
            while tokens.len() < len {
                tokens.push(rng.gen_range(0..50_000));
            }
            tokens.truncate(len);
            let keys = m.block_keys(&tokens).map_err(|e| e.to_string())?;

            let before = oracle.depth(&keys);
            let got = m.get_cache(&tokens).map_err(|e| e.to_string())?;
            ensure!(
                got.matched_blocks == before,
                "round {round} prompt {p}: matched {} before add, oracle {before}",
                got.matched_blocks
            );
            for (k, pl) in keys.iter().zip(&got.payloads) {
                ensure!(
                    oracle.find(k) == Some(pl),
                    "round {round} prompt {p}: cached payload differs"
                );
            }

            let payloads: Vec<KvcPayload> = keys
                .iter()
                .map(|k| match oracle.find(k) {
                    Some(pl) => pl.clone(),
                    None => random_payload(&mut rng, 1.0, 4e6),
                })
                .collect();
            let stored = m
                .add_blocks(&tokens, &payloads)
                .map_err(|e| e.to_string())?;
            ensure!(
                stored == keys.len() - before,
                "round {round} prompt {p}: stored {stored}, expected {}",
                keys.len() - before
            );
            for (k, pl) in keys.iter().zip(&payloads).skip(before) {
                bytes += pl.byte_length();
                oracle.entries.push((*k, pl.clone()));
            }
            shared += before;
            blocks += keys.len();

            let got = m.get_cache(&tokens).map_err(|e| e.to_string())?;
            ensure!(
                got.matched_blocks == keys.len(),
                "round {round} prompt {p}: matched {} of {}",
                got.matched_blocks,
                keys.len()
            );
            ensure!(
                got.payloads == payloads,
                "round {round} prompt {p}: payloads differ after add"
            );
            prompts.push(tokens);
        }
    }
    Ok(format!(
        "{} prompts, {blocks} blocks ({shared} served from shared prefixes), {:.1} MiB stored",
        ROUNDS * PER_ROUND,
        bytes as f64 / (1 << 20) as f64
    ))
}

fn binary_search_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xb5);
    let mut worst = (0usize, 0usize);
    let mut cases = 0;
    for n in 1..=16usize {
        let bound = (n as f64).log2().ceil() as usize + 1;
        let tokens: Vec<TokenId> = (0..n * 4).map(|_| rng.gen_range(0..50_000)).collect();
        let payloads: Vec<KvcPayload> = (0..n)
            .map(|_| random_payload(&mut rng, 1.0, 20_000.0))
            .collect();
        for depth in 0..=n {
            for index in [false, true] {
                let m = sim_manager(9, Strategy::RotationHopAware, index, 4, 8);
                m.add_blocks(&tokens[..depth * 4], &payloads[..depth])
                    .map_err(|e| e.to_string())?;
                let keys = m.block_keys(&tokens).map_err(|e| e.to_string())?;
                let out = m.lookup_longest_match(&keys).map_err(|e| e.to_string())?;
                ensure!(
                    out.depth == depth,
                    "N={n} cached={depth} index={index}: found {}",
                    out.depth
                );
                ensure!(
                    out.probes <= bound,
                    "N={n} cached={depth} index={index}: {} probes > {bound}",
                    out.probes
                );
                if !index && out.probes > worst.0 {
                    worst = (out.probes, n);
                }
                cases += 1;
            }
        }
    }
    Ok(format!(
        "{cases} cases, most probes without index {} at N={}",
        worst.0, worst.1
    ))
}

fn rotation_transparency() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7a7);
    let s = u64::from(grid15().sats_per_plane);
    let mut moved_total = 0;
    let mut runs = 0;
    for strategy in Strategy::ALL {
        for index in [true, false] {
            let tokens: Vec<TokenId> = (0..6 * 32).map(|_| rng.gen_range(0..50_000)).collect();
            let payloads: Vec<KvcPayload> =
                (0..6).map(|_| random_payload(&mut rng, 1e3, 3e5)).collect();
            for k in [1, s, 2 * s] {
                let m = sim_manager(25, strategy, index, 32, 8);
                m.add_blocks(&tokens, &payloads)
                    .map_err(|e| e.to_string())?;
                let before = m.get_cache(&tokens).map_err(|e| e.to_string())?;
                ensure!(
                    before.payloads == payloads,
                    "{strategy}: pre-rotation get differs from added payloads"
                );
                let moved = m.rotate(k).map_err(|e| e.to_string())?;
                let held = m.transport().with_grid(|g| g.metrics().chunks);
                ensure!(
                    held == payloads
                        .iter()
                        .map(|p| p.byte_length().div_ceil(6144))
                        .sum::<usize>(),
                    "{strategy} k={k}: chunk count changed to {held}"
                );
                if strategy.migrates() {
                    ensure!(moved > 0, "{strategy} k={k}: nothing migrated");
                }
                moved_total += moved;
                let after = m.get_cache(&tokens).map_err(|e| e.to_string())?;
                ensure!(
                    after.matched_blocks == before.matched_blocks
                        && after.payloads == before.payloads,
                    "{strategy} index={index} k={k}: matched {} after rotation, payloads equal: {}",
                    after.matched_blocks,
                    after.payloads == before.payloads
                );
                runs += 1;
            }
        }
    }
    Ok(format!(
        "{runs} runs over k in {{1, {s}, {}}}, {moved_total} server moves",
        2 * s
    ))
}

fn eviction_atomicity() -> Check {
    let spec = grid15();
    let diameter = spec.planes / 2 + spec.sats_per_plane / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(0xe71c);
    let tokens: Vec<TokenId> = (0..8 * 16).map(|_| rng.gen_range(0..50_000)).collect();
    let payloads: Vec<KvcPayload> = (0..8)
        .map(|_| random_payload(&mut rng, 7e3, 1.2e5))
        .collect();
    let mut purged = 0;
    for pick in 0..100 {
        let strategy = Strategy::ALL[pick % 3];
        let m = sim_manager(25, strategy, true, 16, diameter);
        m.add_blocks(&tokens, &payloads)
            .map_err(|e| e.to_string())?;
        m.rotate(rng.gen_range(0..=15)).map_err(|e| e.to_string())?;
        let keys = m.block_keys(&tokens).map_err(|e| e.to_string())?;
        let block = rng.gen_range(0..8);
        let total = payloads[block].byte_length().div_ceil(6144) as u32;
        let chunk = rng.gen_range(0..total);
        let (coord, key) = m
            .chunk_location(&tokens, block, chunk)
            .map_err(|e| e.to_string())?;
        let dropped = m
            .transport()
            .with_grid(|g| g.store_mut(coord).map(|s| s.remove(&key)).unwrap_or(false));
        ensure!(
            dropped,
            "pick {pick}: chunk {chunk} of block {block} was not at its home {coord}"
        );

        let got = m.get_cache(&tokens).map_err(|e| e.to_string())?;
        let fp = m.config().model_fingerprint;
        let left = m
            .transport()
            .with_grid(|g| g.chunks_of_block(fp, keys[block]));
        ensure!(
            left == 0,
            "pick {pick} ({strategy}): {left} chunks of block {block} survive"
        );
        ensure!(
            got.matched_blocks == block,
            "pick {pick}: matched {} with block {block} broken",
            got.matched_blocks
        );
        ensure!(
            got.payloads[..] == payloads[..block],
            "pick {pick}: intact prefix differs"
        );
        let again = m.get_cache(&tokens).map_err(|e| e.to_string())?;
        ensure!(
            again.matched_blocks == block,
            "pick {pick}: second get matched {}",
            again.matched_blocks
        );
        purged += total as usize - 1;
    }
    Ok(format!(
        "100 picks, ttl {diameter}, {purged} sibling chunks purged"
    ))
}

/// Reference LRU over chunks: a recency list, most recent at the back.
struct LruOracle {
    capacity: usize,
    items: VecDeque<(ChunkKey, Vec<u8>)>,
}

impl LruOracle {
    fn used(&self) -> usize {
        self.items.iter().map(|(_, p)| p.len()).sum()
    }

    fn set(&mut self, key: ChunkKey, payload: Vec<u8>) {
        if payload.len() > self.capacity {
            return;
        }
        if let Some(i) = self.items.iter().position(|(k, _)| *k == key) {
            self.items.remove(i);
        }
        self.items.push_back((key, payload));
        while self.used() > self.capacity {
            self.items.pop_front();
        }
    }

    fn get(&mut self, key: &ChunkKey) -> Option<Vec<u8>> {
        let i = self.items.iter().position(|(k, _)| k == key)?;
        let item = self.items.remove(i).unwrap();
        let out = item.1.clone();
        self.items.push_back(item);
        Some(out)
    }
}

fn lru_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x14c);
    let mut evicting_sets = 0;
    for store_no in 0..4u32 {
        let capacity = [4_000, 20_000, 64_000, 150_000][store_no as usize];
        let mut store = SatStore::new(SatCoord::new(store_no, 0), capacity);
        let mut oracle = LruOracle {
            capacity,
            items: VecDeque::new(),
        };
        for op in 0..10_000 {
            let block = BlockKey([rng.gen_range(0..40u8); 32]);
            let key = ChunkKey::new(Default::default(), block, rng.gen_range(0..6));
            if rng.gen_bool(0.55) {
                let len = rng.gen_range(1..=3_000);
                let payload: Vec<u8> = (0..len).map(|i| (i as u8) ^ block.0[0]).collect();
                let res = store.set(key, 6, payload.clone());
                if payload.len() > capacity {
                    ensure!(
                        res.is_err(),
                        "store {store_no} op {op}: oversize set accepted"
                    );
                } else {
                    let notices = res.map_err(|e| e.to_string())?;
                    evicting_sets += usize::from(!notices.is_empty());
                }
                oracle.set(key, payload);
            } else {
                let got = store.get(&key).map(|(_, p)| p);
                ensure!(
                    got == oracle.get(&key),
                    "store {store_no} op {op}: get disagrees"
                );
            }
        }
        let want: Vec<ChunkKey> = oracle.items.iter().map(|(k, _)| *k).collect();
        ensure!(
            store.lru_order() == want,
            "store {store_no}: final recency order differs"
        );
        for (k, p) in &oracle.items {
            ensure!(
                store.get(k).map(|(_, b)| b).as_ref() == Some(p),
                "store {store_no}: payload of {k:?} differs"
            );
        }
        ensure!(
            store.used_bytes() == oracle.used(),
            "store {store_no}: used bytes differ"
        );
    }
    Ok(format!(
        "4 stores x 10^4 ops, {evicting_sets} sets evicted chunks"
    ))
}

fn transport_equivalence() -> Check {
    let spec = grid15();
    let centre = SatCoord::new(7, 7);
    let mut cfg = KvcManagerConfig::new(spec, centre, 10, Strategy::RotationHopAware);
    cfg.block_size_tokens = 32;
    let steps = 3;
    let plan = plan_for(cfg.strategy, centre, cfg.n_servers, &spec).map_err(|e| e.to_string())?;
    let coords = coverage(&plan, steps).map_err(|e| e.to_string())?;
    ensure!(coords.len() >= 10, "only {} nodes", coords.len());
    let cluster = LocalCluster::spawn(&spec, &coords, 1 << 28, 8).map_err(|e| e.to_string())?;
    let udp = KvcManager::new(
        cfg,
        cluster
            .transport(ClientConfig::default())
            .map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let sim = KvcManager::new(
        cfg,
        SimNetwork::new(spec, 1 << 28, 8).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;

    let mut rng = ChaCha8Rng::seed_from_u64(0x29);
    let tokens: Vec<TokenId> = (0..4 * 32).map(|_| rng.gen_range(0..50_000)).collect();
    let payloads: Vec<KvcPayload> = (0..4)
        .map(|i| {
            let mut b = vec![0u8; 3_040_870 - i * 1_111];
            rng.fill_bytes(&mut b);
            KvcPayload::new(b).unwrap()
        })
        .collect();
    fn script<T: Transport>(
        m: &KvcManager<T>,
        tokens: &[TokenId],
        payloads: &[KvcPayload],
        steps: u64,
    ) -> Result<(usize, usize, usize, Vec<KvcPayload>), String> {
        let prefix = m
            .get_cache(&tokens[..64])
            .map_err(|e| e.to_string())?
            .matched_blocks;
        let stored = m.add_blocks(tokens, payloads).map_err(|e| e.to_string())?;
        m.rotate(steps).map_err(|e| e.to_string())?;
        let got = m.get_cache(tokens).map_err(|e| e.to_string())?;
        Ok((prefix, stored, got.matched_blocks, got.payloads))
    }
    let a = script(&sim, &tokens, &payloads, steps)?;
    let b = script(&udp, &tokens, &payloads, steps)?;
    ensure!(a.3 == payloads, "simnet payloads differ from the originals");
    ensure!(
        a == b,
        "simnet {:?} vs udp {:?} (depth/stored), payloads equal: {}",
        (a.0, a.1, a.2),
        (b.0, b.1, b.2),
        a.3 == b.3
    );
    let chunks: usize = cluster
        .nodes()
        .iter()
        .map(|n| n.with_store(|s| s.len()))
        .sum();
    Ok(format!(
        "{} UDP nodes, 4 blocks x ~2.9 MiB ({chunks} chunks), rotate {steps}, depth {} on both",
        cluster.len(),
        b.2
    ))
}

fn golden_stability() -> Check {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let read =
        |name: &str| std::fs::read_to_string(dir.join(name)).map_err(|e| format!("{name}: {e}"));
    let first = sweep(&SweepConfig::default()).map_err(|e| e.to_string())?;
    let second = sweep(&SweepConfig::default()).map_err(|e| e.to_string())?;
    ensure!(first.csv == second.csv, "sweep CSV differs between runs");
    ensure!(
        first.csv == read("sweep_default.csv")?,
        "sweep CSV differs from golden"
    );
    for (param, svg) in &first.charts {
        ensure!(
            *svg == read(&format!("chart_{}.svg", param.name()))?,
            "{} chart differs from golden",
            param.name()
        );
    }
    let mut n = 1 + first.charts.len();
    for s in Strategy::ALL {
        for size in [3, 5, 7, 9] {
            for (fmt, ext) in [(RenderFormat::Ascii, "txt"), (RenderFormat::Svg, "svg")] {
                let out = render_layout(s, size, fmt).map_err(|e| e.to_string())?;
                ensure!(
                    out == render_layout(s, size, fmt).map_err(|e| e.to_string())?,
                    "{s} {size} unstable"
                );
                ensure!(
                    out == read(&format!("render_{s}_{size}.{ext}"))?,
                    "render {s} {size}x{size} {ext} differs from golden"
                );
                n += 1;
            }
        }
    }
    Ok(format!("{n} artifacts byte-identical to goldens"))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("geometry oracle", Duration::from_secs(1), geometry_oracle),
        (
            "latency surface shape",
            Duration::from_secs(1),
            latency_surface,
        ),
        (
            "strategy ordering across altitudes",
            Duration::from_secs(5),
            strategy_ordering,
        ),
        (
            "9 to 81 server scaling",
            Duration::from_secs(5),
            server_scaling,
        ),
        (
            "protocol round trip",
            Duration::from_secs(60),
            protocol_round_trip,
        ),
        (
            "binary-search equivalence",
            Duration::from_secs(10),
            binary_search_equivalence,
        ),
        (
            "rotation transparency",
            Duration::from_secs(30),
            rotation_transparency,
        ),
        (
            "eviction atomicity",
            Duration::from_secs(30),
            eviction_atomicity,
        ),
        (
            "LRU model equivalence",
            Duration::from_secs(10),
            lru_equivalence,
        ),
        (
            "transport equivalence",
            Duration::from_secs(120),
            transport_equivalence,
        ),
        (
            "golden regressions",
            Duration::from_secs(30),
            golden_stability,
        ),
    ];
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let took = start.elapsed();
        let (ok, detail) = match result {
            Ok(d) if took <= *budget => (true, d),
            Ok(d) => (false, format!("{d}; over budget")),
            Err(e) => (false, e),
        };
        failed += usize::from(!ok);
        println!(
            "{} [{:>2}] {name} ({:.3} s of {} s): {detail}",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            took.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
