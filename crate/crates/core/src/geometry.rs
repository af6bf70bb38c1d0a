//! Closed-form constellation geometry.
//!
//! A constellation is `planes` circular orbital planes at a shared altitude,
//! each carrying `sats_per_plane` equidistant satellites. Neighbouring
//! satellites are separated by a chord of the orbit circle, so the in-plane
//! hop is `(r_E + h) * sqrt(2 * (1 - cos(2π / S)))` and the worst-case
//! cross-plane hop uses the plane count in place of `S`.
//!
//! The chord is evaluated as `2 (r_E + h) sin(π / n)`, which is the same
//! quantity without the cancellation in `1 - cos` for large `n`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;

/// Mean Earth radius, m.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Approximate access latency of each memory tier, seconds (low, high).
pub const MEMORY_TIER_LATENCY_S: [(&str, f64, f64); 8] = [
    ("CPU", 10e-9, 15e-9),
    ("GPU", 50e-9, 100e-9),
    ("RDMA", 2e-6, 5e-6),
    ("SSD", 20e-6, 200e-6),
    ("HDD", 2e-3, 20e-3),
    ("NAS", 30e-3, 40e-3),
    ("LEO (current RF)", 20e-3, 50e-3),
    ("LEO (theoretical laser)", 2e-3, 4e-3),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstellationSpec {
    pub planes: u32,
    pub sats_per_plane: u32,
    pub altitude_m: f64,
    pub earth_radius_m: f64,
}

impl ConstellationSpec {
    pub fn new(planes: u32, sats_per_plane: u32, altitude_m: f64) -> Result<Self> {
        let spec = Self {
            planes,
            sats_per_plane,
            altitude_m,
            earth_radius_m: EARTH_RADIUS_M,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_earth_radius(mut self, earth_radius_m: f64) -> Result<Self> {
        self.earth_radius_m = earth_radius_m;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.planes == 0 {
            return Err(Error::InvalidSpec("plane count must be at least 1".into()));
        }
        if self.sats_per_plane == 0 {
            return Err(Error::InvalidSpec(
                "satellites per plane must be at least 1".into(),
            ));
        }
        if !(self.altitude_m.is_finite() && self.altitude_m > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "altitude must be positive, got {} m",
                self.altitude_m
            )));
        }
        if !(self.earth_radius_m.is_finite() && self.earth_radius_m > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "earth radius must be positive, got {} m",
                self.earth_radius_m
            )));
        }
        Ok(())
    }

    pub fn orbit_radius_m(&self) -> f64 {
        self.earth_radius_m + self.altitude_m
    }

    pub fn satellite_count(&self) -> usize {
        self.planes as usize * self.sats_per_plane as usize
    }

    pub fn link_distances(&self) -> Result<LinkDistances> {
        Ok(LinkDistances {
            intra_plane_m: intra_plane_distance(self)?,
            inter_plane_max_m: inter_plane_max_distance(self)?,
        })
    }
}

/// Per-hop distances on the +GRID: in-plane and worst-case cross-plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkDistances {
    pub intra_plane_m: f64,
    pub inter_plane_max_m: f64,
}

fn ring_chord(radius_m: f64, count: u32) -> f64 {
    2.0 * radius_m * (PI / f64::from(count)).sin().abs()
}

/// Distance between neighbouring satellites in the same plane.
pub fn intra_plane_distance(spec: &ConstellationSpec) -> Result<f64> {
    spec.validate()?;
    Ok(ring_chord(spec.orbit_radius_m(), spec.sats_per_plane))
}

/// Maximum distance between neighbouring satellites in adjacent planes.
pub fn inter_plane_max_distance(spec: &ConstellationSpec) -> Result<f64> {
    spec.validate()?;
    Ok(ring_chord(spec.orbit_radius_m(), spec.planes))
}

/// Straight-line distance from a ground point to a satellite whose sub-point
/// is `displacement_m` away along the constellation grid.
pub fn ground_to_sat_distance(displacement_m: f64, spec: &ConstellationSpec) -> Result<f64> {
    spec.validate()?;
    if !(displacement_m.is_finite() && displacement_m >= 0.0) {
        return Err(Error::InvalidSpec(format!(
            "ground displacement must be non-negative, got {displacement_m} m"
        )));
    }
    Ok(displacement_m.hypot(spec.altitude_m))
}

pub fn propagation_latency(distance_m: f64) -> f64 {
    distance_m / SPEED_OF_LIGHT_M_S
}
