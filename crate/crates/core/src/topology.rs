//! +GRID torus addressing and routing.
//!
//! Satellites are addressed by `(plane, index)`; both axes wrap around. A
//! route equalizes the plane first (north = decreasing plane, south =
//! increasing plane) and then moves within the plane (west = decreasing
//! index, east = increasing index), always taking the shorter way round.
//! Equal-length ways resolve to north and west.

use std::fmt;

use crate::error::{Error, Result};
use crate::geometry::{ConstellationSpec, LinkDistances};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SatCoord {
    pub plane: u32,
    pub index: u32,
}

impl SatCoord {
    pub const fn new(plane: u32, index: u32) -> Self {
        Self { plane, index }
    }

    pub fn validate(&self, spec: &ConstellationSpec) -> Result<()> {
        if self.plane >= spec.planes || self.index >= spec.sats_per_plane {
            return Err(Error::CoordOutOfRange {
                coord: *self,
                planes: spec.planes,
                sats_per_plane: spec.sats_per_plane,
            });
        }
        Ok(())
    }

    /// Moves by signed offsets with wraparound.
    pub fn offset(&self, delta_plane: i64, delta_index: i64, spec: &ConstellationSpec) -> Self {
        Self {
            plane: wrap(i64::from(self.plane) + delta_plane, spec.planes),
            index: wrap(i64::from(self.index) + delta_index, spec.sats_per_plane),
        }
    }

    pub fn step(&self, step: HopStep, spec: &ConstellationSpec) -> Self {
        self.offset(
            i64::from(step.delta_plane),
            i64::from(step.delta_index),
            spec,
        )
    }

    /// The four +GRID neighbours in north, south, west, east order.
    /// Duplicates are removed on degenerate tori (one or two planes).
    pub fn neighbors(&self, spec: &ConstellationSpec) -> Vec<SatCoord> {
        let mut out = Vec::with_capacity(4);
        for step in [HopStep::NORTH, HopStep::SOUTH, HopStep::WEST, HopStep::EAST] {
            let n = self.step(step, spec);
            if n != *self && !out.contains(&n) {
                out.push(n);
            }
        }
        out
    }

    /// Parses `P:S` (0-based).
    pub fn parse(text: &str) -> Option<Self> {
        let (p, s) = text.trim().split_once(':')?;
        Some(Self::new(p.trim().parse().ok()?, s.trim().parse().ok()?))
    }
}

impl fmt::Display for SatCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.plane, self.index)
    }
}

fn wrap(value: i64, modulus: u32) -> u32 {
    value.rem_euclid(i64::from(modulus)) as u32
}

/// Signed shortest offset from `from` to `to` on a ring of `modulus`,
/// in `(-modulus/2, modulus/2]`.
pub fn ring_offset(from: u32, to: u32, modulus: u32) -> i64 {
    let m = i64::from(modulus);
    let mut d = (i64::from(to) - i64::from(from)).rem_euclid(m);
    if d > m / 2 {
        d -= m;
    }
    d
}

/// One +GRID hop, or the zero step on arrival.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HopStep {
    pub delta_plane: i8,
    pub delta_index: i8,
}

impl HopStep {
    pub const ARRIVED: Self = Self::new(0, 0);
    pub const NORTH: Self = Self::new(-1, 0);
    pub const SOUTH: Self = Self::new(1, 0);
    pub const WEST: Self = Self::new(0, -1);
    pub const EAST: Self = Self::new(0, 1);

    const fn new(delta_plane: i8, delta_index: i8) -> Self {
        Self {
            delta_plane,
            delta_index,
        }
    }

    pub fn is_arrival(&self) -> bool {
        *self == Self::ARRIVED
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DirectionalDistances {
    pub north: u32,
    pub south: u32,
    pub west: u32,
    pub east: u32,
}

impl DirectionalDistances {
    /// Hop count of the shortest +GRID route.
    pub fn manhattan(&self) -> u32 {
        self.north.min(self.south) + self.west.min(self.east)
    }
}

fn backward(from: u32, to: u32, modulus: u32) -> u32 {
    use std::cmp::Ordering::*;
    match to.cmp(&from) {
        Less => from - to,
        Greater => from + modulus - to,
        Equal => 0,
    }
}

fn forward(from: u32, to: u32, modulus: u32) -> u32 {
    use std::cmp::Ordering::*;
    match to.cmp(&from) {
        Greater => to - from,
        Less => modulus - from + to,
        Equal => 0,
    }
}

pub fn directional_distances(
    from: SatCoord,
    to: SatCoord,
    spec: &ConstellationSpec,
) -> Result<DirectionalDistances> {
    from.validate(spec)?;
    to.validate(spec)?;
    let (p, s) = (spec.planes, spec.sats_per_plane);
    Ok(DirectionalDistances {
        north: backward(from.plane, to.plane, p),
        south: forward(from.plane, to.plane, p),
        west: backward(from.index, to.index, s),
        east: forward(from.index, to.index, s),
    })
}

pub fn next_hop(from: SatCoord, to: SatCoord, spec: &ConstellationSpec) -> Result<HopStep> {
    let d = directional_distances(from, to, spec)?;
    let step = if d.north != 0 || d.south != 0 {
        if d.north <= d.south {
            HopStep::NORTH
        } else {
            HopStep::SOUTH
        }
    } else if d.west != 0 || d.east != 0 {
        if d.west <= d.east {
            HopStep::WEST
        } else {
            HopStep::EAST
        }
    } else {
        HopStep::ARRIVED
    };
    Ok(step)
}

/// Every coordinate visited from `from` to `to`, both ends included.
pub fn hop_path(from: SatCoord, to: SatCoord, spec: &ConstellationSpec) -> Result<Vec<SatCoord>> {
    let bound = (spec.planes / 2 + spec.sats_per_plane / 2) as usize + 1;
    let mut path = Vec::with_capacity(bound);
    let mut here = from;
    path.push(here);
    loop {
        let step = next_hop(here, to, spec)?;
        if step.is_arrival() {
            break;
        }
        here = here.step(step, spec);
        path.push(here);
        debug_assert!(path.len() <= bound);
    }
    Ok(path)
}

pub fn hop_distance_m(step: HopStep, dists: &LinkDistances) -> f64 {
    let planes = f64::from(step.delta_plane) * dists.inter_plane_max_m;
    let index = f64::from(step.delta_index) * dists.intra_plane_m;
    planes.hypot(index)
}

/// Total ISL length of the routed path between two satellites.
pub fn path_distance_m(
    from: SatCoord,
    to: SatCoord,
    spec: &ConstellationSpec,
    dists: &LinkDistances,
) -> Result<f64> {
    let path = hop_path(from, to, spec)?;
    Ok(path
        .windows(2)
        .map(|w| {
            let step = HopStep {
                delta_plane: ring_offset(w[0].plane, w[1].plane, spec.planes) as i8,
                delta_index: ring_offset(w[0].index, w[1].index, spec.sats_per_plane) as i8,
            };
            hop_distance_m(step, dists)
        })
        .sum())
}
