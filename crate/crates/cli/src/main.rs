use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;
use roadside_teacher::pipeline::{self, PipelineConfig};
use roadside_teacher::{Error, ErrorKind};

/// Auto-annotation of stationary roadside LiDAR sequences.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Cli {
    /// Pipeline configuration file (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Overrides the configured simulator seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides the configured worker count (0 = one per core).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one teacher per configured dataset.
    Annotate,
    /// Merge labeled datasets into the training superset.
    Merge,
    /// Score predictions against reference labels.
    Evaluate,
    /// Render a synthetic scene with ground truth.
    Simulate,
    /// Turn external predictions into the next round's labels.
    Iterate,
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 1,
        ErrorKind::Data => 2,
        ErrorKind::Internal => 3,
    }
}

fn missing_section(name: &str) -> Error {
    Error::Config(format!("configuration has no [{name}] section"))
}

fn run(cli: Cli) -> Result<(), Error> {
    let path = cli
        .config
        .ok_or_else(|| Error::Config("--config <PATH> is required".into()))?;
    let mut cfg = PipelineConfig::load(&path)?;
    if let Some(jobs) = cli.jobs {
        cfg.jobs = jobs;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = Some(seed);
    }

    match cli.command {
        Command::Annotate => {
            let results = pipeline::annotate(&cfg)?;
            let mut first_err = None;
            for (name, res) in results {
                match res {
                    Ok(stats) => println!(
                        "{name}: {} frames, {:.2}% removed, {} clusters, {} labels, {} rejected",
                        stats.frames,
                        stats.removed_percent(),
                        stats.clusters,
                        stats.accepted,
                        stats.rejected
                    ),
                    Err(e) => {
                        error!("{name}: {e}");
                        first_err.get_or_insert(e);
                    }
                }
            }
            first_err.map_or(Ok(()), Err)
        }
        Command::Merge => {
            let index = pipeline::with_jobs(cfg.jobs, || pipeline::merge(&cfg))??;
            let labels: usize = index.iter().map(|e| e.labels).sum();
            println!("superset: {} frames, {labels} labels", index.len());
            Ok(())
        }
        Command::Evaluate => {
            let ev = cfg.evaluate.as_ref().ok_or_else(|| missing_section("evaluate"))?;
            let report = pipeline::with_jobs(cfg.jobs, || pipeline::run_evaluation(ev))??;
            print!("{report}");
            Ok(())
        }
        Command::Simulate => {
            let sim = cfg.simulate.as_ref().ok_or_else(|| missing_section("simulate"))?;
            let spec = pipeline::with_jobs(cfg.jobs, || pipeline::run_simulation(sim, cfg.seed))??;
            println!("{} frames written to {}", spec.frames, sim.output.display());
            Ok(())
        }
        Command::Iterate => {
            let it = cfg.iterate.as_ref().ok_or_else(|| missing_section("iterate"))?;
            let round = pipeline::iterate(&it.previous, &it.predictions, &cfg.output_root, it.min_score, cfg.iteration)?;
            println!(
                "round {}: {} labels kept, {} below score, written to {}",
                round.round,
                round.kept,
                round.dropped,
                round.labels_dir.display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match panic::catch_unwind(AssertUnwindSafe(|| run(cli))) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            error!("{e}");
            ExitCode::from(exit_code(e.kind()))
        }
        Err(_) => ExitCode::from(3),
    }
}
