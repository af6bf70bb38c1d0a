use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use skymemory_cli::scenario::{parse_script, run_scenario, TransportKind};
use skymemory_cli::{parse_sweep_config, render_layout, sweep, RenderFormat, SweepConfig};
use skymemory_core::mapping::Strategy;
use skymemory_core::topology::SatCoord;
use skymemory_net::node::{parse_neighbors, spawn, NodeConfig};

#[derive(Parser)]
#[command(
    name = "skymemory",
    version,
    about = "LEO-constellation KV cache: sweeps, layouts, scenarios and store nodes"
)]
struct Cli {
    /// Seed for randomized inputs.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Sweep configuration file (KEY = value lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Ascii,
    Svg,
}

#[derive(Clone, Copy, ValueEnum)]
enum Transport {
    Sim,
    Udp,
}

#[derive(Subcommand)]
enum Cmd {
    /// Max-latency sweep over KVC size, servers, processing time and altitude.
    Sweep {
        /// Directory for one SVG chart per section.
        #[arg(long)]
        charts: Option<PathBuf>,
    },
    /// Draws a server layout on the 15 x 15 grid.
    Render {
        #[arg(long, default_value = "rotation-hop-aware")]
        strategy: String,
        /// Side of the server box; `size * size` servers.
        #[arg(long, default_value_t = 5)]
        size: u32,
        #[arg(long, value_enum, default_value_t = Format::Ascii)]
        format: Format,
    },
    /// Runs a scenario script.
    Scenario {
        script: PathBuf,
        #[arg(long, value_enum, default_value_t = Transport::Sim)]
        transport: Transport,
    },
    /// Serves a satellite store over UDP until killed.
    Node {
        #[arg(long, default_value = "127.0.0.1:7400")]
        bind: std::net::SocketAddr,
        /// Grid position as `plane:index` (0-based).
        #[arg(long, default_value = "0:0")]
        coord: String,
        /// Store capacity in bytes.
        #[arg(long, default_value_t = 64 << 20)]
        capacity: usize,
        /// Comma-separated neighbour addresses for eviction gossip.
        #[arg(long, default_value = "")]
        neighbors: String,
        /// Hop budget for eviction notices this node originates.
        #[arg(long, default_value_t = 8)]
        ttl: u32,
    },
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<i32> {
    let seed = cli.seed.unwrap_or(0);
    match cli.command {
        Cmd::Sweep { charts } => {
            let mut cfg = match &cli.config {
                Some(p) => {
                    let text = fs::read_to_string(p)
                        .with_context(|| format!("reading {}", p.display()))?;
                    parse_sweep_config(&text).with_context(|| format!("in {}", p.display()))?
                }
                None => SweepConfig::default(),
            };
            if let Some(s) = cli.seed {
                cfg.base.seed = s;
            }
            let out = sweep(&cfg)?;
            emit(cli.output.as_deref(), &out.csv)?;
            if let Some(dir) = charts {
                fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                for (param, svg) in &out.charts {
                    let path = dir.join(format!("{}.svg", param.name()));
                    fs::write(&path, svg).with_context(|| format!("writing {}", path.display()))?;
                }
            }
        }
        Cmd::Render {
            strategy,
            size,
            format,
        } => {
            let strategy: Strategy = strategy.parse()?;
            let format = match format {
                Format::Ascii => RenderFormat::Ascii,
                Format::Svg => RenderFormat::Svg,
            };
            emit(
                cli.output.as_deref(),
                &render_layout(strategy, size, format)?,
            )?;
        }
        Cmd::Scenario { script, transport } => {
            let text = fs::read_to_string(&script)
                .with_context(|| format!("reading {}", script.display()))?;
            let steps = parse_script(&text).with_context(|| format!("in {}", script.display()))?;
            let kind = match transport {
                Transport::Sim => TransportKind::Sim,
                Transport::Udp => TransportKind::Udp,
            };
            let report = run_scenario(&steps, kind, seed)?;
            let mut text = report.lines.join("\n");
            text.push('\n');
            emit(cli.output.as_deref(), &text)?;
            if !report.passed() {
                for f in &report.failures {
                    eprintln!("failed: {f}");
                }
                return Ok(1);
            }
        }
        Cmd::Node {
            bind,
            coord,
            capacity,
            neighbors,
            ttl,
        } => {
            let Some(coord) = SatCoord::parse(&coord) else {
                bail!("--coord {coord:?} is not plane:index");
            };
            let mut cfg = NodeConfig::new(bind, coord, capacity);
            cfg.neighbors = parse_neighbors(&neighbors)?;
            cfg.notice_ttl = ttl;
            let handle = spawn(cfg)?;
            eprintln!("serving {} on {}", handle.coord(), handle.addr());
            loop {
                std::thread::park();
            }
        }
    }
    Ok(0)
}

fn main() {
    env_logger::init();
    match run(Cli::parse()) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    }
}
