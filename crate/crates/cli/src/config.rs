//! Sweep configuration files.
//!
//! One `KEY = value` per line; `#` starts a comment. Ranges are written
//! `lo..hi` with an optional unit after the numbers:
//!
//! ```text
//! KVC_BYTES             = 2..21 MB      # bytes; B, KB, MB, GB (binary multiples)
//! SERVERS               = 9..81         # odd squares in range are swept
//! CHUNK_PROCESSING_TIME = 0.002..0.02 s # s or ms
//! ALTITUDE              = 160..2000 km  # km or m
//! MAX_SATELLITES        = 15            # satellites per plane
//! MAX_ORBS              = 15            # planes
//! CENTER_SATELLITE      = 8             # 1-based
//! CENTER_ORB            = 8             # 1-based
//! CHUNK_BYTES           = 6144
//! SWEEP_POINTS          = 10
//! SEED                  = 0
//! JITTER                = 0             # 0..1, processing-time jitter
//! METRIC                = one-way       # or round-trip
//! STRATEGIES            = rotation-aware, hop-aware, rotation-hop-aware
//! ```
//!
//! Parameters not being swept sit at the midpoint of their range.

use anyhow::{anyhow, bail, Context, Result};
use skymemory_core::geometry::ConstellationSpec;
use skymemory_core::mapping::Strategy;
use skymemory_core::simnet::{LatencyMetric, SimConfig, SweepRanges};
use skymemory_core::topology::SatCoord;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub base: SimConfig,
    pub ranges: SweepRanges,
    pub strategies: Vec<Strategy>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self::from_ranges(SweepRanges::default(), 15, 15, SatCoord::new(7, 7))
            .expect("default grid")
    }
}

impl SweepConfig {
    fn from_ranges(ranges: SweepRanges, planes: u32, sats: u32, center: SatCoord) -> Result<Self> {
        let mid = |(lo, hi): (f64, f64)| 0.5 * (lo + hi);
        let base = SimConfig {
            spec: ConstellationSpec::new(planes, sats, mid(ranges.altitude_m))?,
            kvc_bytes: mid(ranges.kvc_bytes).round() as u64,
            n_servers: (ranges.servers.0 + ranges.servers.1) / 2,
            chunk_processing_s: mid(ranges.chunk_processing_s),
            center,
            ..SimConfig::midpoint()
        };
        Ok(Self {
            base,
            ranges,
            strategies: Strategy::ALL.to_vec(),
        })
    }
}

fn split_unit(text: &str) -> (&str, &str) {
    let t = text.trim();
    let cut = t
        .find(|c: char| c.is_ascii_alphabetic() && c != 'e' && c != 'E')
        .unwrap_or(t.len());
    (t[..cut].trim(), t[cut..].trim())
}

fn number(text: &str) -> Result<f64> {
    let v: f64 = text
        .trim()
        .parse()
        .map_err(|_| anyhow!("'{}' is not a number", text.trim()))?;
    if !v.is_finite() {
        bail!("'{}' is not finite", text.trim());
    }
    Ok(v)
}

/// `lo..hi unit` or `v unit`, scaled by the unit's multiplier.
fn range(text: &str, unit_scale: impl Fn(&str) -> Option<f64>) -> Result<(f64, f64)> {
    let (nums, unit) = split_unit(text);
    let scale =
        unit_scale(&unit.to_ascii_lowercase()).ok_or_else(|| anyhow!("unknown unit '{unit}'"))?;
    let (lo, hi) = match nums.split_once("..") {
        Some((a, b)) => (number(a)?, number(b)?),
        None => {
            let v = number(nums)?;
            (v, v)
        }
    };
    if lo > hi {
        bail!("range {lo}..{hi} is reversed");
    }
    Ok((lo * scale, hi * scale))
}

fn bytes_unit(u: &str) -> Option<f64> {
    Some(match u {
        "b" => 1.0,
        "kb" | "kib" => 1024.0,
        "" | "mb" | "mib" => 1024.0 * 1024.0,
        "gb" | "gib" => 1024.0 * 1024.0 * 1024.0,
        _ => return None,
    })
}

fn seconds_unit(u: &str) -> Option<f64> {
    Some(match u {
        "" | "s" => 1.0,
        "ms" => 1e-3,
        _ => return None,
    })
}

fn metres_unit(u: &str) -> Option<f64> {
    Some(match u {
        "" | "km" => 1000.0,
        "m" => 1.0,
        _ => return None,
    })
}

fn count_unit(u: &str) -> Option<f64> {
    u.is_empty().then_some(1.0)
}

fn whole<T: TryFrom<u64>>(text: &str) -> Result<T> {
    let v: u64 = text
        .trim()
        .parse()
        .map_err(|_| anyhow!("'{}' is not a whole number", text.trim()))?;
    T::try_from(v).map_err(|_| anyhow!("{v} is out of range"))
}

pub fn parse_sweep_config(text: &str) -> Result<SweepConfig> {
    let mut ranges = SweepRanges::default();
    let (mut planes, mut sats) = (15u32, 15u32);
    let (mut center_orb, mut center_sat) = (8u32, 8u32);
    let mut chunk_bytes = None;
    let mut seed = 0;
    let mut jitter = 0.0;
    let mut metric = LatencyMetric::OneWay;
    let mut strategies = Strategy::ALL.to_vec();

    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parse = || -> Result<()> {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("expected KEY = value"))?;
            let value = value.trim();
            match key.trim().to_ascii_uppercase().as_str() {
                "KVC_BYTES" => ranges.kvc_bytes = range(value, bytes_unit)?,
                "SERVERS" => {
                    let (lo, hi) = range(value, count_unit)?;
                    if lo < 1.0 || lo.fract() != 0.0 || hi.fract() != 0.0 {
                        bail!("server counts must be positive whole numbers");
                    }
                    ranges.servers = (lo as usize, hi as usize);
                }
                "CHUNK_PROCESSING_TIME" => ranges.chunk_processing_s = range(value, seconds_unit)?,
                "ALTITUDE" => ranges.altitude_m = range(value, metres_unit)?,
                "MAX_SATELLITES" => sats = whole(value)?,
                "MAX_ORBS" => planes = whole(value)?,
                "CENTER_SATELLITE" => center_sat = whole(value)?,
                "CENTER_ORB" => center_orb = whole(value)?,
                "CHUNK_BYTES" => chunk_bytes = Some(whole::<usize>(value)?),
                "SWEEP_POINTS" => ranges.points = whole(value)?,
                "SEED" => seed = whole(value)?,
                "JITTER" => jitter = number(value)?,
                "METRIC" => {
                    metric = match value.to_ascii_lowercase().as_str() {
                        "one-way" | "oneway" => LatencyMetric::OneWay,
                        "round-trip" | "roundtrip" => LatencyMetric::RoundTrip,
                        other => bail!("unknown metric '{other}'"),
                    }
                }
                "STRATEGIES" => {
                    strategies = value
                        .split(',')
                        .map(|s| s.parse::<Strategy>())
                        .collect::<Result<_, _>>()?;
                }
                other => bail!("unknown key '{other}'"),
            }
            Ok(())
        };
        parse().with_context(|| format!("line {}: {raw:?}", n + 1))?;
    }

    if center_orb == 0 || center_orb > planes || center_sat == 0 || center_sat > sats {
        bail!("centre orb {center_orb} satellite {center_sat} lies outside the {planes} x {sats} grid");
    }
    let center = SatCoord::new(center_orb - 1, center_sat - 1);
    let mut cfg = SweepConfig::from_ranges(ranges, planes, sats, center)?;
    if let Some(c) = chunk_bytes {
        cfg.base.chunk_bytes = c;
    }
    cfg.base.seed = seed;
    cfg.base.jitter = jitter;
    cfg.base.metric = metric;
    cfg.strategies = strategies;
    cfg.base.validate()?;
    if cfg.ranges.points == 0 {
        bail!("SWEEP_POINTS must be at least 1");
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_midpoint() {
        let cfg = SweepConfig::default();
        assert_eq!(cfg.base, SimConfig::midpoint());
        assert_eq!(cfg.strategies, Strategy::ALL.to_vec());
    }

    #[test]
    fn table_file_parses_to_defaults() {
        let text = "\
# simulation table
KVC_BYTES = 2..21 MB
SERVERS = 9..81
CHUNK_PROCESSING_TIME = 0.002..0.02
ALTITUDE = 160..2000km
MAX_SATELLITES = 15
MAX_ORBS = 15
CENTER_SATELLITE = 8
CENTER_ORB = 8
";
        assert_eq!(parse_sweep_config(text).unwrap(), SweepConfig::default());
    }

    #[test]
    fn units_scale() {
        let cfg = parse_sweep_config(
            "ALTITUDE = 500..600 m\nCHUNK_PROCESSING_TIME = 2..4 ms\nKVC_BYTES=1..3 KB",
        )
        .unwrap();
        assert_eq!(cfg.ranges.altitude_m, (500.0, 600.0));
        assert_eq!(cfg.ranges.chunk_processing_s, (0.002, 0.004));
        assert_eq!(cfg.ranges.kvc_bytes, (1024.0, 3072.0));
        assert_eq!(cfg.base.kvc_bytes, 2048);
    }

    #[test]
    fn errors_name_the_line() {
        for (text, needle) in [
            ("SERVERS = 9..81\nBOGUS = 1", "line 2"),
            ("ALTITUDE = 1..2 parsecs", "unknown unit"),
            ("SERVERS = 81..9", "reversed"),
            ("CENTER_ORB = 16", "outside"),
            ("JITTER = 2", "jitter"),
            ("just words", "KEY = value"),
        ] {
            let err = format!("{:#}", parse_sweep_config(text).unwrap_err());
            assert!(err.contains(needle), "{text:?} -> {err}");
        }
    }
}
