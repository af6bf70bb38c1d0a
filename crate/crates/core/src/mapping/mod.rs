//! Logical server to satellite placement.
//!
//! Chunks are striped over `n` logical servers; a placement strategy decides
//! which satellite hosts each server:
//!
//! * rotation-aware: row-major over a square LOS window around the overhead
//!   satellite,
//! * hop-aware: rings of increasing +GRID hop distance around a fixed
//!   satellite, over the whole torus,
//! * rotation-and-hop-aware: the same rings, clipped to the smallest odd
//!   square box that holds `n` servers.
//!
//! Within one ring, cells are taken north row first and west to east inside
//! a row. As the constellation moves, satellites leave the window on the
//! east and enter it on the west; each rotation step moves the servers on the
//! exiting column to the entering column of the same plane.

mod render;

use std::fmt;
use std::str::FromStr;

pub use render::{render_ascii, render_svg};

use crate::error::{Error, Result};
use crate::geometry::ConstellationSpec;
use crate::topology::{ring_offset, SatCoord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    RotationAware,
    HopAware,
    RotationHopAware,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [
        Strategy::RotationAware,
        Strategy::HopAware,
        Strategy::RotationHopAware,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::RotationAware => "rotation-aware",
            Strategy::HopAware => "hop-aware",
            Strategy::RotationHopAware => "rotation-hop-aware",
        }
    }

    /// Whether the window follows the ground point, so chunks migrate.
    pub fn migrates(&self) -> bool {
        !matches!(self, Strategy::HopAware)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "rotation-aware" | "rotation" => Ok(Strategy::RotationAware),
            "hop-aware" | "hop" => Ok(Strategy::HopAware),
            "rotation-hop-aware" | "hop-rotation-aware" | "rotation-hop" => {
                Ok(Strategy::RotationHopAware)
            }
            other => Err(Error::Config(format!("unknown strategy '{other}'"))),
        }
    }
}

/// Rectangle of satellites on the torus, centred on `center`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LosWindow {
    pub center: SatCoord,
    pub half_width_planes: u32,
    pub half_width_index: u32,
}

impl LosWindow {
    pub fn square(center: SatCoord, side: u32) -> Result<Self> {
        if side == 0 || side.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "window side must be odd and positive, got {side}"
            )));
        }
        Ok(Self {
            center,
            half_width_planes: side / 2,
            half_width_index: side / 2,
        })
    }

    /// The smallest odd square box holding `n_servers`.
    pub fn for_servers(center: SatCoord, n_servers: usize) -> Result<Self> {
        Self::square(center, odd_box_side(n_servers))
    }

    pub fn rows(&self) -> u32 {
        2 * self.half_width_planes + 1
    }

    pub fn cols(&self) -> u32 {
        2 * self.half_width_index + 1
    }

    pub fn area(&self) -> usize {
        self.rows() as usize * self.cols() as usize
    }

    /// Hop diameter of the window.
    pub fn diameter_hops(&self) -> u32 {
        2 * (self.half_width_planes + self.half_width_index)
    }

    pub fn fits(&self, spec: &ConstellationSpec) -> Result<()> {
        self.center.validate(spec)?;
        if self.rows() > spec.planes || self.cols() > spec.sats_per_plane {
            return Err(Error::Capacity {
                requested: self.area(),
                capacity: spec.satellite_count(),
            });
        }
        Ok(())
    }

    pub fn contains(&self, coord: SatCoord, spec: &ConstellationSpec) -> bool {
        let dp = ring_offset(self.center.plane, coord.plane, spec.planes);
        let di = ring_offset(self.center.index, coord.index, spec.sats_per_plane);
        dp.unsigned_abs() <= u64::from(self.half_width_planes)
            && di.unsigned_abs() <= u64::from(self.half_width_index)
    }

    /// Signed `(plane, index)` offsets of every cell, row-major from the
    /// north-west corner.
    pub fn offsets(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        let hp = i64::from(self.half_width_planes);
        let hw = i64::from(self.half_width_index);
        (-hp..=hp).flat_map(move |dp| (-hw..=hw).map(move |di| (dp, di)))
    }

    pub fn shifted_west(&self, spec: &ConstellationSpec) -> Self {
        Self {
            center: self.center.offset(0, -1, spec),
            ..*self
        }
    }

    fn west_edge(&self, spec: &ConstellationSpec) -> u32 {
        self.center
            .offset(0, -i64::from(self.half_width_index), spec)
            .index
    }

    fn east_edge(&self, spec: &ConstellationSpec) -> u32 {
        self.center
            .offset(0, i64::from(self.half_width_index), spec)
            .index
    }
}

/// `⌈√n⌉`, bumped to the next odd number.
pub fn odd_box_side(n_servers: usize) -> u32 {
    let mut side = (n_servers.max(1) as f64).sqrt().ceil() as u32;
    while (side as usize) * (side as usize) < n_servers {
        side += 1;
    }
    if side.is_multiple_of(2) {
        side += 1;
    }
    side
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacementPlan {
    pub strategy: Strategy,
    pub center: SatCoord,
    /// Area the servers live in; for hop-aware plans the bounding box of
    /// the rings.
    pub window: LosWindow,
    /// `assignments[server_id]` is the hosting satellite.
    pub assignments: Vec<SatCoord>,
    pub epoch: u64,
    pub spec: ConstellationSpec,
}

impl PlacementPlan {
    pub fn n_servers(&self) -> usize {
        self.assignments.len()
    }

    pub fn coord_of(&self, server_id: usize) -> Option<SatCoord> {
        self.assignments.get(server_id).copied()
    }

    pub fn server_at(&self, coord: SatCoord) -> Option<usize> {
        self.assignments.iter().position(|c| *c == coord)
    }

    /// Hop distance of a server from the plan centre.
    pub fn ring_of(&self, server_id: usize) -> Option<u32> {
        let c = self.coord_of(server_id)?;
        let (dp, di) = offset_from(self.center, c, &self.spec);
        Some((dp.unsigned_abs() + di.unsigned_abs()) as u32)
    }
}

fn offset_from(center: SatCoord, coord: SatCoord, spec: &ConstellationSpec) -> (i64, i64) {
    (
        ring_offset(center.plane, coord.plane, spec.planes),
        ring_offset(center.index, coord.index, spec.sats_per_plane),
    )
}

fn ring_order(offsets: &mut [(i64, i64)]) {
    offsets.sort_by_key(|&(dp, di)| (dp.unsigned_abs() + di.unsigned_abs(), dp, di));
}

fn capacity_check(n_servers: usize, capacity: usize) -> Result<()> {
    if n_servers == 0 {
        return Err(Error::Config("at least one server is required".into()));
    }
    if n_servers > capacity {
        return Err(Error::Capacity {
            requested: n_servers,
            capacity,
        });
    }
    Ok(())
}

pub fn rotation_aware_plan(
    window: LosWindow,
    n_servers: usize,
    spec: &ConstellationSpec,
) -> Result<PlacementPlan> {
    window.fits(spec)?;
    capacity_check(n_servers, window.area())?;
    let assignments = window
        .offsets()
        .take(n_servers)
        .map(|(dp, di)| window.center.offset(dp, di, spec))
        .collect();
    Ok(PlacementPlan {
        strategy: Strategy::RotationAware,
        center: window.center,
        window,
        assignments,
        epoch: 0,
        spec: *spec,
    })
}

pub fn hop_aware_plan(
    center: SatCoord,
    n_servers: usize,
    spec: &ConstellationSpec,
) -> Result<PlacementPlan> {
    center.validate(spec)?;
    capacity_check(n_servers, spec.satellite_count())?;
    let mut offsets: Vec<(i64, i64)> = (0..spec.planes)
        .flat_map(|p| (0..spec.sats_per_plane).map(move |i| SatCoord::new(p, i)))
        .map(|c| offset_from(center, c, spec))
        .collect();
    ring_order(&mut offsets);
    offsets.truncate(n_servers);
    let half_p = offsets
        .iter()
        .map(|o| o.0.unsigned_abs())
        .max()
        .unwrap_or(0) as u32;
    let half_i = offsets
        .iter()
        .map(|o| o.1.unsigned_abs())
        .max()
        .unwrap_or(0) as u32;
    Ok(PlacementPlan {
        strategy: Strategy::HopAware,
        center,
        window: LosWindow {
            center,
            half_width_planes: half_p,
            half_width_index: half_i,
        },
        assignments: offsets
            .into_iter()
            .map(|(dp, di)| center.offset(dp, di, spec))
            .collect(),
        epoch: 0,
        spec: *spec,
    })
}

pub fn rotation_hop_aware_plan(
    center: SatCoord,
    n_servers: usize,
    spec: &ConstellationSpec,
) -> Result<PlacementPlan> {
    let window = LosWindow::for_servers(center, n_servers)?;
    window.fits(spec)?;
    capacity_check(n_servers, window.area())?;
    let mut offsets: Vec<(i64, i64)> = window.offsets().collect();
    ring_order(&mut offsets);
    Ok(PlacementPlan {
        strategy: Strategy::RotationHopAware,
        center,
        window,
        assignments: offsets
            .into_iter()
            .take(n_servers)
            .map(|(dp, di)| center.offset(dp, di, spec))
            .collect(),
        epoch: 0,
        spec: *spec,
    })
}

/// Fresh plan for `strategy`; window strategies use the odd square box.
pub fn plan_for(
    strategy: Strategy,
    center: SatCoord,
    n_servers: usize,
    spec: &ConstellationSpec,
) -> Result<PlacementPlan> {
    match strategy {
        Strategy::RotationAware => {
            rotation_aware_plan(LosWindow::for_servers(center, n_servers)?, n_servers, spec)
        }
        Strategy::HopAware => hop_aware_plan(center, n_servers, spec),
        Strategy::RotationHopAware => rotation_hop_aware_plan(center, n_servers, spec),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Move {
    pub server_id: usize,
    pub from: SatCoord,
    pub to: SatCoord,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MigrationPlan {
    pub moves: Vec<Move>,
}

/// One rotation step: servers on the exiting east column move to the
/// entering west column of their plane. Returns the moves and the plan
/// after the step.
pub fn migration_plan(prev: &PlacementPlan) -> Result<(MigrationPlan, PlacementPlan)> {
    if !prev.strategy.migrates() {
        return Err(Error::UnsupportedStrategy(prev.strategy.name()));
    }
    let spec = &prev.spec;
    let east = prev.window.east_edge(spec);
    let width = i64::from(prev.window.cols());
    let mut next = prev.clone();
    let mut moves = Vec::new();
    for (server_id, coord) in next.assignments.iter_mut().enumerate() {
        if coord.index == east {
            let to = coord.offset(0, -width, spec);
            if to != *coord {
                moves.push(Move {
                    server_id,
                    from: *coord,
                    to,
                });
            }
            *coord = to;
        }
    }
    next.window = prev.window.shifted_west(spec);
    next.center = next.window.center;
    next.epoch = prev.epoch + 1;
    Ok((MigrationPlan { moves }, next))
}

/// Where `server_id` of a plan set at `plan.epoch` lives after
/// `elapsed_steps` rotation steps. Hop-aware plans never migrate.
pub fn locate_server(
    plan: &PlacementPlan,
    server_id: usize,
    elapsed_steps: u64,
) -> Result<SatCoord> {
    let coord = plan.coord_of(server_id).ok_or(Error::Capacity {
        requested: server_id + 1,
        capacity: plan.n_servers(),
    })?;
    if !plan.strategy.migrates() || elapsed_steps == 0 {
        return Ok(coord);
    }
    let spec = &plan.spec;
    let s = u64::from(spec.sats_per_plane);
    let width = u64::from(plan.window.cols());
    let west = u64::from(plan.window.west_edge(spec));
    let rel = (u64::from(coord.index) + s - west) % s;
    let rel_now = (rel + elapsed_steps % width) % width;
    let west_now = (west + s - elapsed_steps % s) % s;
    Ok(SatCoord::new(
        coord.plane,
        ((west_now + rel_now) % s) as u32,
    ))
}

/// The set-time plan advanced by `elapsed_steps` migrations.
pub fn plan_after(plan: &PlacementPlan, elapsed_steps: u64) -> Result<PlacementPlan> {
    if !plan.strategy.migrates() {
        let mut p = plan.clone();
        p.epoch += elapsed_steps;
        return Ok(p);
    }
    let mut p = plan.clone();
    for (server_id, coord) in p.assignments.iter_mut().enumerate() {
        *coord = locate_server(plan, server_id, elapsed_steps)?;
    }
    let offset = (elapsed_steps % u64::from(plan.spec.sats_per_plane)) as i64;
    p.center = plan.center.offset(0, -offset, &plan.spec);
    p.window.center = p.center;
    p.epoch = plan.epoch + elapsed_steps;
    Ok(p)
}
