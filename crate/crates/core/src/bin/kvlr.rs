use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};

use kvlr::config::{Config, Resolution};
use kvlr::pipeline::Pipeline;

#[derive(Parser)]
#[command(
    name = "kvlr",
    version,
    about = "Action fields, expert routing and budgeted execution for articulated tools"
)]
struct Cli {
    /// TOML configuration file; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the configured image size, as HxW.
    #[arg(long, global = true)]
    resolution: Option<Resolution>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic trajectories and target action-tube masks.
    Synth,
    /// Trajectories to KVAF field files.
    Lift {
        /// Directory of .traj files [default: OUT/trajectories].
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Routing decisions and motion-binned routing statistics.
    Route {
        /// Directory of per-sequence KVAF folders [default: OUT/fields].
        #[arg(long)]
        fields: Option<PathBuf>,
    },
    /// Routing objectives, threshold updates and gradient checks.
    Losses {
        #[arg(long)]
        fields: Option<PathBuf>,
    },
    /// Significance, execution plans and simulated cost.
    Schedule {
        #[arg(long)]
        fields: Option<PathBuf>,
    },
    /// Chamfer, temporal IoU, area flicker and Dice of predicted masks.
    Eval {
        /// Predicted masks.
        #[arg(long)]
        pred: PathBuf,
        /// Target masks [default: OUT/masks].
        #[arg(long)]
        target: Option<PathBuf>,
    },
    /// Merges CSV reports into OUT/report.csv.
    Report {
        /// CSV files to merge [default: every CSV in OUT].
        inputs: Vec<PathBuf>,
    },
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let mut config = match &cli.config {
        Some(p) => Config::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(r) = cli.resolution {
        config.resolution = r;
    }
    let out = cli.out.clone();
    let p = Pipeline::new(config, &out)?;
    let or = |d: Option<PathBuf>, rel: &str| d.unwrap_or_else(|| out.join(rel));
    let written = match cli.command {
        Command::Synth => p.synth(),
        Command::Lift { input } => p.lift(&or(input, "trajectories")),
        Command::Route { fields } => p.route(&or(fields, "fields")),
        Command::Losses { fields } => p.losses(&or(fields, "fields")),
        Command::Schedule { fields } => p.schedule(&or(fields, "fields")),
        Command::Eval { pred, target } => p.eval(&pred, &or(target, "masks")),
        Command::Report { inputs } => p.report(&inputs),
    }?;
    for w in written.iter().filter(|w| w.extension().is_some_and(|e| e == "csv")) {
        println!("{}", w.display());
    }
    println!("{} files written under {}", written.len(), out.display());
    Ok(())
}
