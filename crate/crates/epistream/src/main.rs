//! Command-line front end: single runs, figure sweeps, the chunk-size
//! bound, suitable-range extraction from sweep output, and trace audit.

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use epistream::analytics::{min_diffusion_delay, suitable_range};
use epistream::engine::{run, run_traced};
use epistream::harness::{miss_curve_from_csv, run_sweep, ScaleMode, SweepSpec};
use epistream::model::SimConfig;
use epistream::trace::{parse_trace, WriteSink};
use epistream::tracecheck::check_config;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Parser)]
#[command(name = "epistream", version, about = "Push-based P2P live streaming simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one config and print its metrics.
    Simulate {
        /// TOML config file; missing fields take defaults.
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Writes the full event trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run a parameter sweep and emit the CSV table.
    Sweep {
        /// Preset grid: fig1..fig6.
        #[arg(long, conflicts_with = "spec")]
        preset: Option<String>,
        /// Sweep description file (base config + axes + seeds).
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Write CSV here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Preset size: "desk" (n=300) or "full" (n=1000).
        #[arg(long, default_value = "desk")]
        scale: String,
        /// Overrides the seed list, comma separated.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Print the minimum diffusion delay bound for one parameter set.
    Dmin {
        /// Probe set size.
        #[arg(long)]
        m: usize,
        /// Chunk size in Mb.
        #[arg(long)]
        c: f64,
        /// Number of peers.
        #[arg(long)]
        n: usize,
        /// Stream rate in Mb/s.
        #[arg(long)]
        s: f64,
    },
    /// Extract the suitable chunk-size range from sweep CSV output.
    Range {
        /// Sweep CSV (needs chunk_size and miss_ratio columns).
        #[arg(long)]
        csv: PathBuf,
        /// Miss ratio the range must stay under.
        #[arg(long, default_value_t = 0.01)]
        theta_loss: f64,
        /// Miss ratio treated as fully converged.
        #[arg(long, default_value_t = 1e-4)]
        theta_plateau: f64,
        /// Restrict rows to other varied columns, e.g. latency_scale=2.
        #[arg(long)]
        group: Vec<String>,
    },
    /// Replay a trace against its config and report violations.
    TraceCheck {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
}

fn load_config(path: &Path) -> anyhow::Result<SimConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(SimConfig::from_toml_str(&text)?)
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().cmd {
        Cmd::Simulate { config, seed, trace } => {
            let mut cfg = load_config(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let out = match trace {
                None => run(&cfg)?,
                Some(path) => {
                    let file = fs::File::create(&path)
                        .with_context(|| format!("creating {}", path.display()))?;
                    let mut sink = WriteSink::new(BufWriter::new(file))?;
                    let out = run_traced(&cfg, &mut sink)?;
                    sink.finish()?;
                    out
                }
            };
            let m = &out.metrics;
            println!("miss_ratio          {}", m.miss_ratio);
            println!("avg_delay           {}", m.avg_delay);
            println!("diffusion_delay     {}", m.diffusion_delay);
            println!("goodput             {}", m.goodput);
            println!("throughput          {}", m.throughput);
            println!("overhead_control    {}", m.overhead_control);
            println!("overhead_duplicate  {}", m.overhead_duplicate);
            println!("timely_deliveries   {}", m.timely_deliveries);
            println!("complete_chunks     {}", m.complete_chunks);
            println!("median_rtt          {}", out.stats.median_rtt);
        }
        Cmd::Sweep { preset, spec, out, scale, seeds } => {
            let mut sweep = match (preset, spec) {
                (Some(id), None) => {
                    let scale = ScaleMode::from_str(&scale)?;
                    SweepSpec::preset(&id, scale)
                        .with_context(|| format!("unknown preset {id:?} (use fig1..fig6)"))?
                }
                (None, Some(path)) => {
                    let text = fs::read_to_string(&path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    SweepSpec::from_toml_str(&text)?
                }
                _ => bail!("pass exactly one of --preset or --spec"),
            };
            if let Some(seeds) = seeds {
                sweep.seeds = seeds;
            }
            let csv = run_sweep(&sweep)?;
            match out {
                None => print!("{csv}"),
                Some(path) => fs::write(&path, csv)
                    .with_context(|| format!("writing {}", path.display()))?,
            }
        }
        Cmd::Dmin { m, c, n, s } => {
            println!("{}", min_diffusion_delay(m, c, n, s));
        }
        Cmd::Range { csv, theta_loss, theta_plateau, group } => {
            let text = fs::read_to_string(&csv)
                .with_context(|| format!("reading {}", csv.display()))?;
            let group: Vec<(&str, &str)> = group
                .iter()
                .map(|g| g.split_once('=').context("--group takes field=value"))
                .collect::<Result<_, _>>()?;
            let curve = miss_curve_from_csv(&text, &group)?;
            let range = suitable_range(&curve, theta_loss, theta_plateau)?;
            println!("c_low  {}", range.c_low);
            println!("c_high {}", range.c_high);
        }
        Cmd::TraceCheck { trace, config } => {
            let cfg = load_config(&config)?;
            let file = fs::File::open(&trace)
                .with_context(|| format!("reading {}", trace.display()))?;
            let events = parse_trace(BufReader::new(file))?;
            let report = check_config(&events, &cfg)?;
            let mut stderr = std::io::stderr().lock();
            for v in &report.violations {
                writeln!(stderr, "{v}")?;
            }
            println!(
                "{} transfers, {} arrivals, {} violations",
                report.transfers_checked,
                report.arrivals_checked,
                report.violations.len()
            );
            if !report.is_clean() {
                std::process::exit(1);
            }
        }
    }
    Ok(())
}
