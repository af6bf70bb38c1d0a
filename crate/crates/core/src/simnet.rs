//! Simulated constellation network: latency model, an event-driven get
//! simulation, parameter sweeps and an in-process [`Transport`].

use std::cmp::Ordering as CmpOrdering;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::blockcodec::{BlockKey, ModelFingerprint, DEFAULT_CHUNK_BYTES};
use crate::error::{Error, Result};
use crate::geometry::{ground_to_sat_distance, propagation_latency, ConstellationSpec};
use crate::mapping::{migration_plan, plan_for, MigrationPlan, PlacementPlan, Strategy};
use crate::protocol::{ChunkGet, ChunkPut, FetchOutcome, Transport};
use crate::store::{ChunkKey, Constellation, StoreMetrics};
use crate::topology::{path_distance_m, ring_offset, SatCoord};

pub const MIB: f64 = 1024.0 * 1024.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatencyMetric {
    /// Ground to satellite only: the time until the farthest chunk is served.
    OneWay,
    /// Request and response legs both counted.
    RoundTrip,
}

impl LatencyMetric {
    fn legs(&self) -> f64 {
        match self {
            LatencyMetric::OneWay => 1.0,
            LatencyMetric::RoundTrip => 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    /// A ground station under the given satellite.
    Ground(SatCoord),
    Sat(SatCoord),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub spec: ConstellationSpec,
    pub kvc_bytes: u64,
    pub n_servers: usize,
    pub chunk_processing_s: f64,
    pub chunk_bytes: usize,
    /// Satellite overhead of the client.
    pub center: SatCoord,
    pub metric: LatencyMetric,
    /// Fraction in [0, 1] by which a chunk's processing may finish early.
    pub jitter: f64,
    pub seed: u64,
}

impl SimConfig {
    /// Midpoint of every swept range on the 15 x 15 grid centred at plane 8,
    /// satellite 8 (1-based).
    pub fn midpoint() -> Self {
        Self {
            spec: ConstellationSpec::new(15, 15, 1_080_000.0).expect("valid grid"),
            kvc_bytes: (11.5 * MIB) as u64,
            n_servers: 45,
            chunk_processing_s: 0.011,
            chunk_bytes: DEFAULT_CHUNK_BYTES,
            center: SatCoord::new(7, 7),
            metric: LatencyMetric::OneWay,
            jitter: 0.0,
            seed: 0,
        }
    }

    pub fn chunks(&self) -> u64 {
        self.kvc_bytes.div_ceil(self.chunk_bytes as u64)
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.center.validate(&self.spec)?;
        if self.n_servers == 0 || self.chunk_bytes == 0 {
            return Err(Error::Config(
                "servers and chunk bytes must be positive".into(),
            ));
        }
        if !(self.chunk_processing_s >= 0.0 && self.chunk_processing_s.is_finite()) {
            return Err(Error::Config(
                "chunk processing time must be non-negative".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.jitter) {
            return Err(Error::Config("jitter must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Straight-line displacement along the grid between two satellites.
pub fn grid_displacement_m(from: SatCoord, to: SatCoord, spec: &ConstellationSpec) -> Result<f64> {
    let d = spec.link_distances()?;
    let dp = ring_offset(from.plane, to.plane, spec.planes) as f64;
    let di = ring_offset(from.index, to.index, spec.sats_per_plane) as f64;
    Ok((d.intra_plane_m * di).hypot(d.inter_plane_max_m * dp))
}

/// One-way propagation delay of a message to `to`.
pub fn message_latency(from: Endpoint, to: SatCoord, spec: &ConstellationSpec) -> Result<f64> {
    to.validate(spec)?;
    match from {
        Endpoint::Ground(overhead) => {
            let d = grid_displacement_m(overhead, to, spec)?;
            Ok(propagation_latency(ground_to_sat_distance(d, spec)?))
        }
        Endpoint::Sat(sat) => {
            let d = spec.link_distances()?;
            Ok(propagation_latency(path_distance_m(sat, to, spec, &d)?))
        }
    }
}

/// Chunks striped round-robin over servers: server `s` gets chunk ids
/// congruent to `s`.
pub fn server_chunk_counts(chunks: u64, n_servers: usize) -> Vec<u64> {
    let n = n_servers as u64;
    (0..n)
        .map(|s| chunks / n + u64::from(s < chunks % n))
        .collect()
}

fn server_legs(cfg: &SimConfig, plan: &PlacementPlan) -> Result<Vec<(f64, u64)>> {
    let counts = server_chunk_counts(cfg.chunks(), plan.n_servers());
    plan.assignments
        .iter()
        .zip(counts)
        .filter(|(_, n)| *n > 0)
        .map(|(sat, n)| {
            Ok((
                message_latency(Endpoint::Ground(cfg.center), *sat, &cfg.spec)?,
                n,
            ))
        })
        .collect()
}

/// Latency of the slowest server: its message legs plus serial processing
/// of every chunk it holds.
pub fn worst_case_get_latency(cfg: &SimConfig, plan: &PlacementPlan) -> Result<f64> {
    cfg.validate()?;
    let legs = cfg.metric.legs();
    Ok(server_legs(cfg, plan)?
        .into_iter()
        .map(|(leg, n)| legs * leg + cfg.chunk_processing_s * n as f64)
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimEventKind {
    /// The request reached the server.
    MessageDelivery {
        server: usize,
    },
    /// One chunk finished processing; `remaining` are still queued.
    ProcessingDone {
        server: usize,
        remaining: u64,
    },
    RotationStep,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEvent {
    pub time_s: f64,
    pub seq: u64,
    pub kind: SimEventKind,
}

impl Eq for SimEvent {}

impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> CmpOrdering {
        other
            .time_s
            .total_cmp(&self.time_s)
            .then(other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<CmpOrdering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub completion_s: f64,
    pub per_server_s: Vec<f64>,
    pub events: usize,
    pub rotations: u64,
}

/// Event-driven run of one parallel get. `rotation_period_s` interleaves
/// rotation steps; chunks stay readable across them.
pub fn simulate_get(
    cfg: &SimConfig,
    plan: &PlacementPlan,
    rotation_period_s: Option<f64>,
) -> Result<SimReport> {
    cfg.validate()?;
    let legs = server_legs(cfg, plan)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut queue = BinaryHeap::new();
    let mut seq = 0u64;
    let mut push = |queue: &mut BinaryHeap<SimEvent>, time_s: f64, kind: SimEventKind| {
        seq += 1;
        queue.push(SimEvent { time_s, seq, kind });
    };
    for (server, (leg, _)) in legs.iter().enumerate() {
        push(&mut queue, *leg, SimEventKind::MessageDelivery { server });
    }
    if let Some(period) = rotation_period_s.filter(|p| *p > 0.0) {
        push(&mut queue, period, SimEventKind::RotationStep);
    }

    let mut done = vec![0.0; legs.len()];
    let mut open = legs.len();
    let mut report = SimReport {
        completion_s: 0.0,
        per_server_s: Vec::new(),
        events: 0,
        rotations: 0,
    };
    let mut last = 0.0f64;
    while let Some(ev) = queue.pop() {
        debug_assert!(ev.time_s >= last);
        last = ev.time_s;
        report.events += 1;
        let work =
            |rng: &mut ChaCha8Rng| cfg.chunk_processing_s * (1.0 - cfg.jitter * rng.gen::<f64>());
        match ev.kind {
            SimEventKind::MessageDelivery { server } => {
                let t = ev.time_s + work(&mut rng);
                push(
                    &mut queue,
                    t,
                    SimEventKind::ProcessingDone {
                        server,
                        remaining: legs[server].1 - 1,
                    },
                );
            }
            SimEventKind::ProcessingDone { server, remaining } => {
                if remaining > 0 {
                    let t = ev.time_s + work(&mut rng);
                    push(
                        &mut queue,
                        t,
                        SimEventKind::ProcessingDone {
                            server,
                            remaining: remaining - 1,
                        },
                    );
                } else {
                    done[server] = ev.time_s + (cfg.metric.legs() - 1.0) * legs[server].0;
                    open -= 1;
                }
            }
            SimEventKind::RotationStep => {
                report.rotations += 1;
                if open > 0 {
                    push(
                        &mut queue,
                        ev.time_s + rotation_period_s.unwrap_or_default(),
                        SimEventKind::RotationStep,
                    );
                }
            }
        }
    }
    report.completion_s = done.iter().copied().fold(0.0, f64::max);
    report.per_server_s = done;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SweepParam {
    KvcBytes,
    Servers,
    ChunkProcessingTime,
    Altitude,
}

impl SweepParam {
    pub const ALL: [SweepParam; 4] = [
        SweepParam::KvcBytes,
        SweepParam::Servers,
        SweepParam::ChunkProcessingTime,
        SweepParam::Altitude,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::KvcBytes => "kvc_bytes",
            SweepParam::Servers => "servers",
            SweepParam::ChunkProcessingTime => "chunk_processing_time",
            SweepParam::Altitude => "altitude",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRanges {
    pub kvc_bytes: (f64, f64),
    pub servers: (usize, usize),
    pub chunk_processing_s: (f64, f64),
    pub altitude_m: (f64, f64),
    pub points: usize,
}

impl Default for SweepRanges {
    fn default() -> Self {
        Self {
            kvc_bytes: (2.0 * MIB, 21.0 * MIB),
            servers: (9, 81),
            chunk_processing_s: (0.002, 0.02),
            altitude_m: (160_000.0, 2_000_000.0),
            points: 10,
        }
    }
}

fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        n => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

impl SweepRanges {
    /// Swept values of `param`. Server counts are the odd squares in range,
    /// one per full square box.
    pub fn values(&self, param: SweepParam) -> Vec<f64> {
        match param {
            SweepParam::KvcBytes => linspace(self.kvc_bytes.0, self.kvc_bytes.1, self.points)
                .into_iter()
                .map(f64::round)
                .collect(),
            SweepParam::Servers => (1..)
                .step_by(2)
                .map(|k: usize| k * k)
                .skip_while(|&n| n < self.servers.0)
                .take_while(|&n| n <= self.servers.1)
                .map(|n| n as f64)
                .collect(),
            SweepParam::ChunkProcessingTime => linspace(
                self.chunk_processing_s.0,
                self.chunk_processing_s.1,
                self.points,
            ),
            SweepParam::Altitude => linspace(self.altitude_m.0, self.altitude_m.1, self.points)
                .into_iter()
                .map(f64::round)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub section: SweepParam,
    pub value: f64,
    pub strategy: Strategy,
    pub max_latency_s: f64,
    pub max_latency_round_trip_s: f64,
}

fn with_param(base: &SimConfig, param: SweepParam, value: f64) -> Result<SimConfig> {
    let mut cfg = *base;
    match param {
        SweepParam::KvcBytes => cfg.kvc_bytes = value as u64,
        SweepParam::Servers => cfg.n_servers = value as usize,
        SweepParam::ChunkProcessingTime => cfg.chunk_processing_s = value,
        SweepParam::Altitude => {
            cfg.spec = ConstellationSpec {
                altitude_m: value,
                ..cfg.spec
            };
            cfg.spec.validate()?;
        }
    }
    Ok(cfg)
}

/// Max latency of `cfg` under both metrics; the event simulation is used
/// when processing has jitter.
pub fn evaluate(cfg: &SimConfig, strategy: Strategy) -> Result<(f64, f64)> {
    let plan = plan_for(strategy, cfg.center, cfg.n_servers, &cfg.spec)?;
    let run = |metric| -> Result<f64> {
        let c = SimConfig { metric, ..*cfg };
        if c.jitter > 0.0 {
            Ok(simulate_get(&c, &plan, None)?.completion_s)
        } else {
            worst_case_get_latency(&c, &plan)
        }
    };
    Ok((run(cfg.metric)?, run(LatencyMetric::RoundTrip)?))
}

/// One row per swept value per strategy, sections in [`SweepParam::ALL`]
/// order. Other parameters stay at their `base` values.
pub fn run_sweep(
    base: &SimConfig,
    ranges: &SweepRanges,
    strategies: &[Strategy],
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for param in SweepParam::ALL {
        for value in ranges.values(param) {
            let cfg = with_param(base, param, value)?;
            for &strategy in strategies {
                let (max_latency_s, max_latency_round_trip_s) = evaluate(&cfg, strategy)?;
                rows.push(SweepRow {
                    section: param,
                    value,
                    strategy,
                    max_latency_s,
                    max_latency_round_trip_s,
                });
            }
        }
    }
    Ok(rows)
}

pub const SWEEP_CSV_HEADER: &str =
    "section,parameter_value,strategy,max_latency_s,max_latency_round_trip_s";

fn format_value(param: SweepParam, value: f64) -> String {
    match param {
        SweepParam::ChunkProcessingTime => format!("{value:.6}"),
        _ => format!("{value:.0}"),
    }
}

/// Units: kvc_bytes in bytes, servers as a count, chunk_processing_time in
/// seconds, altitude in metres; latencies in seconds.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{:.9},{:.9}",
            r.section.name(),
            format_value(r.section, r.value),
            r.strategy,
            r.max_latency_s,
            r.max_latency_round_trip_s
        );
    }
    out
}

/// Runs one rotation step on the grid, returning the moves and the new plan.
pub fn advance_rotation(
    grid: &mut Constellation,
    plan: &PlacementPlan,
) -> Result<(MigrationPlan, PlacementPlan)> {
    let (mig, next) = migration_plan(plan)?;
    grid.execute_migration(&mig)?;
    Ok((mig, next))
}

/// In-process transport over a simulated grid of stores.
pub struct SimNetwork {
    grid: Mutex<Constellation>,
    chunk_processing_s: f64,
    metric: LatencyMetric,
    messages: AtomicU64,
}

impl SimNetwork {
    pub fn new(spec: ConstellationSpec, capacity_bytes: usize, notice_ttl: u32) -> Result<Self> {
        Ok(Self {
            grid: Mutex::new(Constellation::new(spec, capacity_bytes, notice_ttl)?),
            chunk_processing_s: 0.0,
            metric: LatencyMetric::OneWay,
            messages: AtomicU64::new(0),
        })
    }

    pub fn with_latency_model(mut self, chunk_processing_s: f64, metric: LatencyMetric) -> Self {
        self.chunk_processing_s = chunk_processing_s;
        self.metric = metric;
        self
    }

    /// Runs `f` with exclusive access to the stores.
    pub fn with_grid<R>(&self, f: impl FnOnce(&mut Constellation) -> R) -> R {
        f(&mut self.grid.lock().expect("grid lock"))
    }

    pub fn messages(&self) -> u64 {
        self.messages.load(Ordering::Relaxed)
    }

    pub fn metrics(&self) -> StoreMetrics {
        self.with_grid(|g| g.metrics())
    }

    fn count(&self, n: usize) {
        self.messages.fetch_add(n as u64, Ordering::Relaxed);
    }
}

impl Transport for SimNetwork {
    fn put_chunks(&self, puts: Vec<ChunkPut>) -> Result<()> {
        self.count(puts.len());
        let mut grid = self.grid.lock().expect("grid lock");
        for p in puts {
            let notices = grid
                .store_mut(p.coord)?
                .set(p.key, p.total_chunks, p.payload)?;
            grid.propagate_all(notices)?;
        }
        Ok(())
    }

    fn get_chunks(&self, gets: &[ChunkGet], overhead: SatCoord) -> Result<FetchOutcome> {
        self.count(gets.len());
        let mut grid = self.grid.lock().expect("grid lock");
        let spec = *grid.spec();
        let mut per_sat: BTreeMap<SatCoord, u64> = BTreeMap::new();
        let mut chunks = Vec::with_capacity(gets.len());
        for g in gets {
            *per_sat.entry(g.coord).or_default() += 1;
            chunks.push(grid.store_mut(g.coord)?.get(&g.key));
        }
        let mut latency_s = 0.0f64;
        for (sat, n) in per_sat {
            let leg = message_latency(Endpoint::Ground(overhead), sat, &spec)?;
            latency_s =
                latency_s.max(self.metric.legs() * leg + self.chunk_processing_s * n as f64);
        }
        Ok(FetchOutcome { chunks, latency_s })
    }

    fn probe(&self, coord: SatCoord, key: ChunkKey) -> Result<Option<u32>> {
        self.count(1);
        let grid = self.grid.lock().expect("grid lock");
        Ok(grid.store(coord)?.peek(&key))
    }

    fn evict_block(
        &self,
        origin: SatCoord,
        fingerprint: ModelFingerprint,
        block: BlockKey,
    ) -> Result<()> {
        let mut grid = self.grid.lock().expect("grid lock");
        let notice = grid.store_mut(origin)?.notice_for(fingerprint, block);
        let report = grid.propagate(notice)?;
        self.count(report.messages);
        Ok(())
    }

    fn migrate(&self, plan: &MigrationPlan) -> Result<()> {
        let mut grid = self.grid.lock().expect("grid lock");
        let report = grid.execute_migration(plan)?;
        self.count(report.chunks_moved);
        Ok(())
    }

    fn drain_evicted(&self) -> Vec<(ModelFingerprint, BlockKey)> {
        self.with_grid(|g| g.drain_evicted())
    }

    fn sweep_incomplete(&self) -> Result<usize> {
        Ok(self.with_grid(|g| g.cleanup_incomplete()))
    }
}
