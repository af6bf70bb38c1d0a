//! Command implementations behind the `skymemory` binary.

use anyhow::{bail, Result};
use skymemory_core::geometry::ConstellationSpec;
use skymemory_core::mapping::{plan_for, render_ascii, render_svg, Strategy};
use skymemory_core::simnet::{run_sweep, sweep_csv, SweepParam, SweepRow};
use skymemory_core::topology::SatCoord;

pub mod chart;
pub mod config;
pub mod scenario;

pub use config::{parse_sweep_config, SweepConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderFormat {
    Ascii,
    Svg,
}

/// Layout of `size * size` servers on the 15 x 15 reference grid, centred
/// on orb 8 satellite 8.
pub fn render_layout(strategy: Strategy, size: u32, format: RenderFormat) -> Result<String> {
    if size.is_multiple_of(2) || size == 0 || size > 15 {
        bail!("size must be odd and between 1 and 15, got {size}");
    }
    let spec = ConstellationSpec::new(15, 15, 550e3)?;
    let plan = plan_for(strategy, SatCoord::new(7, 7), (size * size) as usize, &spec)?;
    Ok(match format {
        RenderFormat::Ascii => render_ascii(&plan),
        RenderFormat::Svg => render_svg(&plan),
    })
}

pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub csv: String,
    /// `(section, svg)` for every section.
    pub charts: Vec<(SweepParam, String)>,
}

pub fn sweep(cfg: &SweepConfig) -> Result<SweepOutput> {
    let rows = run_sweep(&cfg.base, &cfg.ranges, &cfg.strategies)?;
    let csv = sweep_csv(&rows);
    let charts = SweepParam::ALL
        .iter()
        .map(|&p| (p, chart::sweep_chart(p, &rows)))
        .collect();
    Ok(SweepOutput { rows, csv, charts })
}
