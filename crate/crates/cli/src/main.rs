//! `attngeom` command-line driver.
//!
//! Every subcommand writes CSV tables and SVG plots to its output directory.
//! `ATTNGEOM_OUT_DIR`, when set, replaces the output directory of whatever
//! runs. `--dump-config` writes the fully resolved settings as JSON and exits;
//! `--config` replays such a file.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use attngeom::experiments::{
    plot_bound, plot_id, plot_sine, plot_sweep, run_fit_sine, run_id_trace, run_partition2d, run_regions_bound,
    run_sweep, BoundConfig, IdTraceConfig, Partition2dConfig, SineConfig, SweepConfig,
};
use attngeom::geometry::RowPolicy;
use attngeom::train::AdamConfig;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

const OUT_DIR_ENV: &str = "ATTNGEOM_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "attngeom", version, about = "Region geometry and attention ID experiments")]
struct Cli {
    /// Run the settings stored in a JSON file written by --dump-config.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Write the resolved settings as JSON ("-" for stdout) and exit.
    #[arg(long, global = true, value_name = "FILE")]
    dump_config: Option<PathBuf>,

    /// Regenerate SVGs from existing CSVs without recomputing.
    #[arg(long, global = true)]
    plot_only: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Input-space partition of a random 2-D network, with and without biases.
    Partition2d(Partition2dArgs),
    /// Fit sin on [-2π, 2π] with several widths; predictions, loss, error, regions.
    FitSine(FitSineArgs),
    /// Region upper bound against input dimension.
    RegionsBound(BoundArgs),
    /// Train the attention block over a (context, heads, seed) grid and count regions.
    Sweep(SweepArgs),
    /// Per-layer intrinsic dimension of an attention trace file.
    IdTrace(IdTraceArgs),
}

#[derive(Debug, Args)]
struct Partition2dArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 16)]
    n_hidden: usize,
    /// Pixels per side.
    #[arg(long, default_value_t = 400)]
    resolution: usize,
    /// The plotted square is [-w, w]².
    #[arg(long, default_value_t = 3.0)]
    half_width: f64,
    #[arg(long, default_value = "out/partition2d")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct FitSineArgs {
    /// Hidden widths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "50,500")]
    widths: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20_000)]
    steps: usize,
    #[arg(long, default_value_t = 1000)]
    n_points: usize,
    /// Loss table stride.
    #[arg(long, default_value_t = 100)]
    loss_every: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value = "out/fit-sine")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct BoundArgs {
    /// Neuron counts, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "50,100,500")]
    ns: Vec<u64>,
    /// Largest input dimension; defaults to n for each curve.
    #[arg(long)]
    d_max: Option<u64>,
    #[arg(long, default_value = "out/regions-bound")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_value = "10,100")]
    contexts: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,10")]
    heads: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = 32)]
    d_model: usize,
    #[arg(long, default_value_t = 16)]
    d_head: usize,
    #[arg(long, default_value_t = 64)]
    n_hidden: usize,
    #[arg(long, default_value_t = 10_000)]
    steps: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Divide attention logits by √d_head.
    #[arg(long)]
    scale_logits: bool,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value = "out/sweep")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct IdTraceArgs {
    /// Trace file to analyse.
    #[arg(long)]
    trace: PathBuf,
    /// Reference trace; enables the per-layer relative change.
    #[arg(long)]
    base: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// Row summarising each layer: last | mean.
    #[arg(long, default_value = "last")]
    row_policy: RowPolicy,
    #[arg(long, default_value = "out/id-trace")]
    out_dir: PathBuf,
}

/// Resolved settings of one run; the JSON form of `--dump-config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
enum RunConfig {
    Partition2d(Partition2dConfig),
    FitSine(SineConfig),
    RegionsBound(BoundConfig),
    Sweep(SweepConfig),
    IdTrace(IdTraceConfig),
}

impl RunConfig {
    fn from_command(cmd: Command) -> Self {
        let adam = |lr| AdamConfig {
            lr,
            ..AdamConfig::default()
        };
        match cmd {
            Command::Partition2d(a) => RunConfig::Partition2d(Partition2dConfig {
                seed: a.seed,
                n_hidden: a.n_hidden,
                resolution: a.resolution,
                half_width: a.half_width,
                out_dir: a.out_dir,
            }),
            Command::FitSine(a) => RunConfig::FitSine(SineConfig {
                widths: a.widths,
                seed: a.seed,
                steps: a.steps,
                n_points: a.n_points,
                loss_every: a.loss_every,
                adam: adam(a.lr),
                out_dir: a.out_dir,
            }),
            Command::RegionsBound(a) => RunConfig::RegionsBound(BoundConfig {
                ns: a.ns,
                d_max: a.d_max,
                out_dir: a.out_dir,
            }),
            Command::Sweep(a) => RunConfig::Sweep(SweepConfig {
                contexts: a.contexts,
                heads: a.heads,
                seeds: a.seeds,
                d_model: a.d_model,
                d_head: a.d_head,
                n_hidden: a.n_hidden,
                steps: a.steps,
                scale_logits: a.scale_logits,
                adam: adam(a.lr),
                workers: a.workers,
                out_dir: a.out_dir,
            }),
            Command::IdTrace(a) => RunConfig::IdTrace(IdTraceConfig {
                trace: a.trace,
                base: a.base,
                epsilon: a.epsilon,
                policy: a.row_policy,
                out_dir: a.out_dir,
            }),
        }
    }

    fn out_dir_mut(&mut self) -> &mut PathBuf {
        match self {
            RunConfig::Partition2d(c) => &mut c.out_dir,
            RunConfig::FitSine(c) => &mut c.out_dir,
            RunConfig::RegionsBound(c) => &mut c.out_dir,
            RunConfig::Sweep(c) => &mut c.out_dir,
            RunConfig::IdTrace(c) => &mut c.out_dir,
        }
    }
}

fn resolve(cli: Cli) -> Result<(RunConfig, Option<PathBuf>, bool)> {
    let mut cfg = match (cli.config, cli.command) {
        (Some(_), Some(_)) => bail!("--config replaces the subcommand; pass one or the other"),
        (Some(path), None) => {
            let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        (None, Some(cmd)) => RunConfig::from_command(cmd),
        (None, None) => bail!("no subcommand given (see --help)"),
    };
    if let Some(dir) = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()) {
        *cfg.out_dir_mut() = PathBuf::from(dir);
    }
    Ok((cfg, cli.dump_config, cli.plot_only))
}

fn dump(cfg: &RunConfig, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(cfg)? + "\n";
    if path == Path::new("-") {
        print!("{text}");
    } else {
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn plot(cfg: &RunConfig) -> Result<()> {
    match cfg {
        RunConfig::Partition2d(_) => bail!("partition2d images are rendered directly; rerun without --plot-only"),
        RunConfig::FitSine(c) => plot_sine(&c.out_dir)?,
        RunConfig::RegionsBound(c) => plot_bound(&c.out_dir)?,
        RunConfig::Sweep(c) => plot_sweep(&c.out_dir)?,
        RunConfig::IdTrace(c) => plot_id(&c.out_dir)?,
    }
    Ok(())
}

fn run(cfg: &RunConfig) -> Result<()> {
    match cfg {
        RunConfig::Partition2d(c) => {
            let s = run_partition2d(c)?;
            println!("regions (standard bias): {}", s.standard_regions);
            println!("regions (zero bias):     {}", s.zero_bias_regions);
        }
        RunConfig::FitSine(c) => {
            let s = run_fit_sine(c)?;
            println!("n_hidden\tfinal_mse\tregions");
            for (n, mse, regions) in s.runs {
                println!("{n}\t{mse:.6e}\t{regions}");
            }
        }
        RunConfig::RegionsBound(c) => {
            let rows = run_regions_bound(c)?;
            println!("wrote {} rows", rows.len());
        }
        RunConfig::Sweep(c) => {
            let out = run_sweep(c)?;
            println!("context\theads\tseed\tregions\tfinal_mse");
            for r in &out.records {
                let regions = r.region_count.map_or("diverged".into(), |v| v.to_string());
                let mse = r.final_mse.map_or("-".into(), |v| format!("{v:.6e}"));
                println!("{}\t{}\t{}\t{regions}\t{mse}", r.context, r.heads, r.seed);
            }
            println!("trained {} of {} points", out.trained, out.records.len());
        }
        RunConfig::IdTrace(c) => {
            let (series, change) = run_id_trace(c)?;
            println!("layer\tid");
            for (l, v) in series.values.iter().enumerate() {
                println!("{l}\t{v}");
            }
            if let Some(ch) = change {
                println!("layer\trelative_change_pct");
                for (l, v) in ch.iter().enumerate() {
                    println!("{l}\t{v:.3}");
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = resolve(cli).and_then(|(cfg, dump_to, plot_only)| {
        if let Some(path) = dump_to {
            return dump(&cfg, &path);
        }
        if plot_only {
            plot(&cfg)
        } else {
            run(&cfg)
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
