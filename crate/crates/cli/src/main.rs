//! `trep`: command-line pipelines for trajectory representation experiments.

mod commands;
mod manifest;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;
use trep_core::error::Category;

#[derive(Parser)]
#[command(name = "trep", version, about = "Pedestrian trajectory representation learning")]
struct Cli {
    /// JSON training configuration; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed, overriding the configuration's.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory receiving every output and the run manifest.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

/// Floor plan selection: a built-in preset or map and wall files.
#[derive(Args, Debug, Clone)]
pub struct MapArgs {
    /// Built-in map: two-corridor-12, two-corridor-6, fixture-8 or fig2.
    #[arg(long, conflicts_with_all = ["map", "walls"])]
    preset: Option<String>,
    /// Occupancy map text file (`.` free, `#` blocked).
    #[arg(long, required_unless_present = "preset")]
    map: Option<PathBuf>,
    /// Wall file, one `row,col-row,col` pair per line.
    #[arg(long)]
    walls: Option<PathBuf>,
}

/// Network plus cell embeddings; embeddings are trained when not given.
#[derive(Args, Debug, Clone)]
pub struct EnvArgs {
    #[command(flatten)]
    map: MapArgs,
    /// Embedding file written by `embed`.
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Builds the road network and writes the normalized map, walls and a summary.
    BuildMap(MapArgs),
    /// Generates a labeled synthetic corpus.
    GenSynth {
        #[command(flatten)]
        map: MapArgs,
        /// Scenario JSON; the six-group ring scenario when absent.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        per_group: usize,
        /// Emits the perturbed held-out variant instead.
        #[arg(long)]
        held_out: bool,
        #[arg(long, default_value = "corpus.txt")]
        output: String,
    },
    /// Converts a tracking log into a corpus.
    IngestAtc {
        #[command(flatten)]
        map: MapArgs,
        #[arg(long)]
        input: PathBuf,
        /// Column and unit settings as JSON.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value = "corpus.txt")]
        output: String,
    },
    /// Trains cell embeddings.
    Embed(MapArgs),
    /// Likelihood pretraining of the actor.
    Pretrain {
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "actor-ll.ckpt")]
        output: String,
    },
    /// Actor-critic training; pretrains first unless `--actor` is given.
    Train {
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long)]
        corpus: PathBuf,
        /// Pretrained actor checkpoint.
        #[arg(long)]
        actor: Option<PathBuf>,
    },
    /// Writes one representation per trajectory.
    Encode {
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long)]
        actor: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "representations.csv")]
        output: String,
    },
    /// k-means over a representation file.
    Cluster {
        #[arg(long)]
        representations: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        restarts: usize,
        #[arg(long, default_value = "clusters.csv")]
        output: String,
    },
    /// WCSE for every K in a range.
    EvalWcse {
        #[command(flatten)]
        map: MapArgs,
        #[arg(long)]
        representations: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 2)]
        k_min: usize,
        #[arg(long, default_value_t = 10)]
        k_max: usize,
        #[arg(long, default_value_t = 1)]
        restarts: usize,
        /// Series name in the CSV header.
        #[arg(long, default_value = "wcse")]
        name: String,
        #[arg(long, default_value = "wcse.csv")]
        output: String,
    },
    /// Trains or computes a comparison representation.
    Baseline {
        #[arg(value_enum)]
        kind: BaselineKind,
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Forced-deviation recoverability experiment.
    Perturb {
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long)]
        actor: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// 0-based action index to override.
        #[arg(long, default_value_t = 3)]
        step: usize,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value = "perturb.jsonl")]
        output: String,
    },
    /// Merges WCSE curve files into one CSV and an SVG chart.
    ExportCurves {
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "curves")]
        output: String,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum BaselineKind {
    Dft,
    Cssrnn,
    TrepLl,
}

fn exit_code(category: Category) -> u8 {
    match category {
        Category::Config => 2,
        Category::Data => 3,
        Category::Numerical => 4,
        Category::Contract | Category::Io => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let category = e.category();
            let detail = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {detail}", category.as_str());
            ExitCode::from(exit_code(category))
        }
    }
}
