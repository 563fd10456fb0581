use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sdhom::config::{ExperimentConfig, ProblemKind};
use sdhom::run::run;
use sdhom::store::{emit_plot_data, PlotKind, ResultStore};
use sdhom::{Error, Result};

#[derive(Parser)]
#[command(name = "sdhom", version, about = "Homogenized densities for structured deformations")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the density assumptions by sampling.
    ValidateDensity(RunArgs),
    /// Bulk cell problem sweep.
    Bulk(RunArgs),
    /// Surface cell problem sweep.
    Surface(RunArgs),
    /// Energy along the sawtooth approximating sequence.
    ApproxDemo(RunArgs),
    /// Brute-force reference values.
    Oracle(RunArgs),
    /// Long-format plot table from stored results.
    PlotData {
        #[arg(long)]
        out: PathBuf,
        /// One of bulk, surface, approx.
        #[arg(long)]
        kind: String,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    k_list: Option<Vec<usize>>,
    #[arg(long)]
    resolution: Option<usize>,
}

fn execute(args: RunArgs, kind: ProblemKind) -> Result<bool> {
    if let Some(j) = args.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()
            .map_err(|e| Error::Internal(e.to_string()))?;
    }
    let text = std::fs::read_to_string(&args.config)?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Some(k) = cfg.kind.filter(|k| *k != kind) {
        return Err(Error::Config {
            pointer: "/kind".into(),
            message: format!("config is for {}, not {}", k.name(), kind.name()),
        });
    }
    cfg.kind = Some(kind);
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(k) = args.k_list {
        cfg.k_list = k;
    }
    if let Some(m) = args.resolution {
        cfg.m = m;
    }
    if let Some(o) = &args.out {
        cfg.output_dir = Some(o.display().to_string());
    }
    cfg.validate()?;
    let out = PathBuf::from(cfg.output_dir.clone().unwrap_or_else(|| "out".into()));
    let outcome = run(&cfg, &out)?;
    println!(
        "{} {}: {} rows in {}",
        outcome.kind.name(),
        outcome.config_hash,
        outcome.rows,
        out.display()
    );
    for f in &outcome.failures {
        eprintln!("warning: {f}");
    }
    Ok(outcome.all_ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::ValidateDensity(a) => execute(a, ProblemKind::Validate),
        Cmd::Bulk(a) => execute(a, ProblemKind::Bulk),
        Cmd::Surface(a) => execute(a, ProblemKind::Surface),
        Cmd::ApproxDemo(a) => execute(a, ProblemKind::Approx),
        Cmd::Oracle(a) => execute(a, ProblemKind::Oracle),
        Cmd::PlotData { out, kind } => kind
            .parse::<PlotKind>()
            .and_then(|k| emit_plot_data(&ResultStore::open(&out)?, k))
            .map(|p| {
                println!("{}", p.display());
                true
            }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
