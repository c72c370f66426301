//! Command-line front end. Exit codes: 0 success, 2 configuration error,
//! 3 runtime failure, 4 verification failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mazelab::cli::{self, AnalyzeSpec, CliError};
use mazelab::maze::TileType;
use mazelab::train::Algorithm;

#[derive(Parser)]
#[command(name = "mazelab", version, about = "Maze RL lab: train tiny policies, extract reward vectors, analyze and steer")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a maze snapshot from a config.
    GenMaze {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a policy into a run directory.
    Train {
        /// Config file (required for a new run; ignored with --resume).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Override the config's algorithm (grpo | reinforce | sft).
        #[arg(long)]
        algorithm: Option<String>,
        /// Override the config's total update steps.
        #[arg(long)]
        steps: Option<usize>,
        /// Continue from the latest checkpoint in the run directory.
        #[arg(long)]
        resume: bool,
    },
    /// Roll out episodes from a checkpoint.
    Rollout {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        checkpoint: String,
        #[arg(long)]
        seed: u64,
        #[arg(short = 'k', long, default_value_t = 10)]
        episodes: usize,
        #[arg(long)]
        steer_vector: Option<String>,
        #[arg(long)]
        steer_layer: Option<usize>,
        #[arg(long, default_value_t = 0.0)]
        steer_factor: f64,
        #[arg(long, default_value = "rollout")]
        out: String,
    },
    /// Generate the labeled synthetic trajectory set.
    Synth {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "synth")]
        out: String,
    },
    /// Extract concept vectors and layer-selection reports.
    Extract {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        checkpoint: String,
        #[arg(long)]
        seed: u64,
        /// Artifact tag, e.g. "trained" or "control".
        #[arg(long, default_value = "trained")]
        tag: String,
    },
    /// Recompute a layer-selection report from stored artifacts.
    SelectLayer {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        vector: String,
        #[arg(long)]
        activations: String,
        #[arg(long, default_value = "layer_select_recomputed.json")]
        out: String,
    },
    /// Geometric analyses over stored artifacts.
    Analyze {
        #[arg(long)]
        run: PathBuf,
        #[command(subcommand)]
        what: AnalyzeCmd,
    },
    /// Behavioral steering sweep over the configured factor grid.
    Sweep {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        checkpoint: String,
        /// Condition label recorded in each cell (e.g. trained / naive).
        #[arg(long, default_value = "trained")]
        condition: String,
        /// Trained vector artifacts, comma separated.
        #[arg(long, value_delimiter = ',')]
        vectors: Vec<String>,
        /// Steer norm-matched control vectors as well.
        #[arg(long)]
        control: bool,
        /// Control vector artifacts, comma separated.
        #[arg(long, value_delimiter = ',')]
        control_vectors: Vec<String>,
        /// Layer-selection report naming the steering layer per class.
        #[arg(long, default_value = "layer_select_trained.json")]
        layer_report: String,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "sweep")]
        out: String,
    },
    /// Projection tracking on trained vs maze-naive checkpoints.
    Track {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        checkpoint: String,
        #[arg(long)]
        naive_checkpoint: String,
        #[arg(long)]
        vector: String,
        #[arg(long, default_value = "layer_select_trained.json")]
        layer_report: String,
        #[arg(long)]
        per_class: Option<usize>,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "track")]
        out: String,
    },
    /// Re-validate every artifact hash and lineage link in a run.
    Verify {
        #[arg(long)]
        run: PathBuf,
    },
}

#[derive(Subcommand)]
enum AnalyzeCmd {
    /// Per-layer cosine report between two vector files.
    Cosine {
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        #[arg(long, default_value = "cosine")]
        out: String,
    },
    /// Centered tile-mean cosines at one layer.
    Tilemeans {
        #[arg(long)]
        means: String,
        #[arg(long)]
        layer: Option<usize>,
        #[arg(long, default_value = "tilemeans")]
        out: String,
    },
    /// Top-k promoted/suppressed tokens through the unembedding.
    Logitlens {
        #[arg(long)]
        vector: String,
        #[arg(long)]
        checkpoint: String,
        #[arg(long)]
        layer: Option<usize>,
        #[arg(short)]
        k: Option<usize>,
        #[arg(long, default_value = "logitlens")]
        out: String,
    },
    /// PCA over the per-layer vectors of the given files.
    Pca {
        #[arg(long, value_delimiter = ',')]
        vectors: Vec<String>,
        #[arg(long, default_value_t = 2)]
        components: usize,
        #[arg(long, default_value = "pca")]
        out: String,
    },
    /// Checkpoint-series alignment against the final checkpoint's vector.
    Series {
        #[arg(long, value_delimiter = ',')]
        checkpoints: Vec<String>,
        #[arg(long, default_value = "gold")]
        class: String,
        #[arg(long)]
        layer: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "series")]
        out: String,
    },
}

fn parse_algorithm(s: &str) -> Result<Algorithm, CliError> {
    match s {
        "grpo" => Ok(Algorithm::Grpo),
        "reinforce" => Ok(Algorithm::Reinforce),
        "sft" => Ok(Algorithm::Sft),
        other => Err(CliError::Config(format!(
            "unknown algorithm {other}; expected grpo | reinforce | sft"
        ))),
    }
}

fn parse_class(s: &str) -> Result<TileType, CliError> {
    match s.to_ascii_lowercase().as_str() {
        "gold" => Ok(TileType::Gold),
        "mold" => Ok(TileType::Mold),
        other => Err(CliError::Config(format!(
            "unknown class {other}; expected gold | mold"
        ))),
    }
}

fn run(cmd: Cmd) -> Result<(), CliError> {
    match cmd {
        Cmd::GenMaze { config, seed, out } => cli::cmd_gen_maze(&config, seed, &out),
        Cmd::Train {
            config,
            run,
            seed,
            algorithm,
            steps,
            resume,
        } => {
            let algo = algorithm.as_deref().map(parse_algorithm).transpose()?;
            cli::cmd_train(config.as_deref(), &run, seed, algo, steps, resume)
        }
        Cmd::Rollout {
            run,
            checkpoint,
            seed,
            episodes,
            steer_vector,
            steer_layer,
            steer_factor,
            out,
        } => cli::cmd_rollout(
            &run,
            &checkpoint,
            seed,
            episodes,
            steer_vector.as_deref(),
            steer_layer,
            steer_factor,
            &out,
        ),
        Cmd::Synth { run, seed, out } => cli::cmd_synth(&run, seed, &out),
        Cmd::Extract {
            run,
            checkpoint,
            seed,
            tag,
        } => cli::cmd_extract(&run, &checkpoint, seed, &tag),
        Cmd::SelectLayer {
            run,
            vector,
            activations,
            out,
        } => cli::cmd_select_layer(&run, &vector, &activations, &out),
        Cmd::Analyze { run, what } => {
            let spec = match &what {
                AnalyzeCmd::Cosine { a, b, out } => AnalyzeSpec::Cosine { a, b, out },
                AnalyzeCmd::Tilemeans { means, layer, out } => AnalyzeSpec::TileMeans {
                    means,
                    layer: *layer,
                    out,
                },
                AnalyzeCmd::Logitlens {
                    vector,
                    checkpoint,
                    layer,
                    k,
                    out,
                } => AnalyzeSpec::LogitLens {
                    vector,
                    checkpoint,
                    layer: *layer,
                    k: *k,
                    out,
                },
                AnalyzeCmd::Pca {
                    vectors,
                    components,
                    out,
                } => AnalyzeSpec::Pca {
                    vectors: vectors.iter().map(|s| s.as_str()).collect(),
                    components: *components,
                    out,
                },
                AnalyzeCmd::Series {
                    checkpoints,
                    class,
                    layer,
                    seed,
                    out,
                } => AnalyzeSpec::Series {
                    checkpoints: checkpoints.iter().map(|s| s.as_str()).collect(),
                    class: parse_class(class)?,
                    layer: *layer,
                    seed: *seed,
                    out,
                },
            };
            cli::cmd_analyze(&run, spec)
        }
        Cmd::Sweep {
            run,
            checkpoint,
            condition,
            vectors,
            control,
            control_vectors,
            layer_report,
            episodes,
            seed,
            out,
        } => cli::cmd_sweep(
            &run,
            &checkpoint,
            &condition,
            &vectors,
            control,
            &control_vectors,
            &layer_report,
            episodes,
            seed,
            &out,
        ),
        Cmd::Track {
            run,
            checkpoint,
            naive_checkpoint,
            vector,
            layer_report,
            per_class,
            seed,
            out,
        } => cli::cmd_track(
            &run,
            &checkpoint,
            &naive_checkpoint,
            &vector,
            &layer_report,
            per_class,
            seed,
            &out,
        ),
        Cmd::Verify { run } => cli::cmd_verify(&run),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
