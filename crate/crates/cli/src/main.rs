use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use d2s_core::config::ExperimentConfig;
use d2s_core::d2s::Variant;
use d2s_core::eval::MetricsFormat;
use d2s_core::runner;

#[derive(Parser)]
#[command(name = "d2s", version, about = "Pruning and dense-to-sparse incremental training lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one variant over several seeds and write metrics plus a manifest.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// dense-only, fixed-mask, aux-adapt, mop-adapt or d2s.
        #[arg(long)]
        variant: String,
        /// Comma-separated seeds; defaults to eval.seeds from the config.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        /// csv or jsonl; defaults to eval.format from the config.
        #[arg(long)]
        format: Option<String>,
    },
    /// Compare runs: relative-CE curves, last-window table, sparsity plots.
    Compare {
        /// Manifest files written by `run`.
        #[arg(required = true)]
        manifests: Vec<PathBuf>,
        #[arg(long, default_value = "compare")]
        out: PathBuf,
    },
    /// Time dense against CSR mat-vec across sizes and sparsities.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export a slice of the synthetic stream to a record file.
    GenStream {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        start: u64,
        #[arg(long, default_value_t = 10_000)]
        count: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the layers and sparsity of a model snapshot.
    InspectSnapshot { path: PathBuf },
}

fn load_config(path: Option<&PathBuf>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => Ok(ExperimentConfig::load(p)?),
        None => Ok(ExperimentConfig::default()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, variant, seeds, out, format } => {
            let cfg = load_config(config.as_ref())?;
            let variant: Variant = variant.parse()?;
            let format: MetricsFormat = match format {
                Some(f) => f.parse()?,
                None => cfg.eval.format,
            };
            let seeds = seeds.unwrap_or_else(|| cfg.eval.seeds.clone());
            let manifest = runner::cmd_run(&cfg, variant, &seeds, &out, format)?;
            for o in &manifest.outputs {
                let rel = o.final_eval.as_ref().map_or(f64::NAN, |f| f.relative_ce * 100.0);
                println!("seed {}: {} (post-horizon relative CE {rel:.4}%)", o.seed, out.join(&o.metrics).display());
            }
            println!("manifest: {}", out.join(runner::RunManifest::file_name(variant)).display());
        }
        Command::Compare { manifests, out } => {
            let report = runner::cmd_compare(&manifests, &out)?;
            print!("{}", report.table());
            println!("plots and CSV written to {}", out.display());
        }
        Command::Bench { config, out } => {
            let cfg = load_config(config.as_ref())?;
            let results = runner::cmd_bench(&cfg.bench, out.as_deref())?;
            print!("{}", runner::bench_table(&results));
        }
        Command::GenStream { config, seed, start, count, out } => {
            let cfg = load_config(config.as_ref())?;
            let n = runner::gen_stream(&cfg, seed, start, count, &out)?;
            println!("wrote {n} examples to {}", out.display());
        }
        Command::InspectSnapshot { path } => {
            let text = runner::inspect_snapshot(&path).with_context(|| format!("reading {}", path.display()))?;
            print!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
