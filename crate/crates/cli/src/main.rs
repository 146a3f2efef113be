mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use despeckle_core::Error;

/// Paired-speckle simulation, despeckling network training and filter
/// evaluation.
#[derive(Parser, Debug)]
#[command(name = "despeckle", version)]
struct Cli {
    /// Worker threads for internal parallelism (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a train/val/test corpus of paired speckle images.
    Simulate {
        /// JSON dataset config; defaults to the desk-scale corpus.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the despeckling network on a corpus.
    Train {
        /// JSON training config; defaults apply to missing keys.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Despeckle one image, optionally blending the original back in.
    Apply {
        #[arg(long)]
        input: PathBuf,
        /// Method as inline JSON (e.g. '{"type":"median","window":7}') or a
        /// path to a JSON file.
        #[arg(long)]
        method: String,
        #[arg(long)]
        output: PathBuf,
        /// Weight of the original image: output = (1-alpha)*filtered + alpha*input.
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
    },
    /// Score methods against the averaged images of a corpus.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        /// JSON evaluation config (methods, splits, regions).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Adds the trained network to the default method set.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time methods on a single image.
    Bench {
        #[arg(long)]
        image: PathBuf,
        /// JSON benchmark config (methods, warmups, reps).
        #[arg(long)]
        config: PathBuf,
        /// Report path.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Stable exit codes: 2 configuration, 3 I/O, 4 numeric divergence.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } | Error::Format { .. } => 3,
        Error::Divergence(_) | Error::Numeric(_) => 4,
        Error::Config(_)
        | Error::Shape(_)
        | Error::Domain(_)
        | Error::Input(_)
        | Error::Dataset(_) => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if threads == 0 {
        eprintln!("error: --threads must be positive");
        return ExitCode::from(2);
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
    {
        eprintln!("error: cannot start thread pool: {e}");
        return ExitCode::from(2);
    }
    let result = match cli.command {
        Command::Simulate { config, out } => commands::simulate(config.as_deref(), &out, threads),
        Command::Train {
            config,
            manifest,
            out,
            resume,
        } => commands::train(
            config.as_deref(),
            &manifest,
            &out,
            resume.as_deref(),
            threads,
        ),
        Command::Apply {
            input,
            method,
            output,
            alpha,
        } => commands::apply(&input, &method, &output, alpha),
        Command::Evaluate {
            manifest,
            config,
            checkpoint,
            out,
        } => commands::evaluate(
            &manifest,
            config.as_deref(),
            checkpoint.as_deref(),
            &out,
            threads,
        ),
        Command::Bench { image, config, out } => commands::bench(&image, &config, &out, threads),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
