//! Thin command-line front end: parse arguments, load the experiment
//! config, dispatch to the matching operator command, map errors to exit
//! codes (1 usage/config, 2 data/IO, 3 diverged training).

use clap::{Parser, Subcommand};
use std::path::PathBuf;

use oscnn::commands::{self, CliOverrides};
use oscnn::config::RunConfig;

#[derive(Parser)]
#[command(
    name = "oscnn",
    version,
    about = "Two-stream convolutional event recognition workbench"
)]
struct Cli {
    /// Experiment description file (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Replace the seed of every entry the command touches.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    force: bool,
    /// Describe the planned work without writing anything.
    #[arg(long, global = true)]
    dry_run: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus described by [gen].
    GenToy,
    /// Train a fresh network per [[pretrain]] entry on its proxy task.
    Pretrain,
    /// Fine-tune a pretrained model per [[finetune]] entry.
    Finetune,
    /// Ten-crop score a split per [[score]] entry.
    Score,
    /// Combine score files per [[fuse]] entry.
    Fuse {
        /// Comma-separated fusion weights, aligned with the entry's inputs.
        #[arg(long, value_delimiter = ',')]
        weights: Option<Vec<f32>>,
        /// Derive weights from the entry's declared streams: late fusion
        /// across axes, 0.3/0.6 across network depths.
        #[arg(long, conflicts_with = "weights")]
        depth_ensemble: bool,
    },
    /// Evaluate score files against labeled splits per [[eval]] entry.
    Eval,
    /// Export the first-layer filters of the [viz] model as a PPM image.
    VizFilters,
}

/// Minimal stderr logger so library warnings reach the operator.
struct StderrLogger;

impl log::Log for StderrLogger {
    fn enabled(&self, metadata: &log::Metadata) -> bool {
        metadata.level() <= log::Level::Info
    }

    fn log(&self, record: &log::Record) {
        if self.enabled(record.metadata()) {
            eprintln!("[{}] {}", record.level().to_string().to_lowercase(), record.args());
        }
    }

    fn flush(&self) {}
}

static LOGGER: StderrLogger = StderrLogger;

fn run(cli: Cli) -> oscnn::Result<()> {
    let config = RunConfig::load(&cli.config)?;
    let mut overrides = CliOverrides {
        seed: cli.seed,
        force: cli.force,
        dry_run: cli.dry_run,
        ..CliOverrides::default()
    };
    match cli.command {
        Command::GenToy => commands::gen_toy(&config, &overrides),
        Command::Pretrain => commands::pretrain(&config, &overrides),
        Command::Finetune => commands::finetune(&config, &overrides),
        Command::Score => commands::score(&config, &overrides),
        Command::Fuse { weights, depth_ensemble } => {
            overrides.weights = weights;
            overrides.depth_ensemble = depth_ensemble;
            commands::fuse(&config, &overrides)
        }
        Command::Eval => commands::eval(&config, &overrides),
        Command::VizFilters => commands::viz_filters(&config, &overrides),
    }
}

fn main() {
    let _ = log::set_logger(&LOGGER);
    log::set_max_level(log::LevelFilter::Info);
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests render on stdout and exit cleanly;
            // real usage errors render on stderr and exit 1.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
