//! Experiment runner: training, evaluation, sweeps, ablations, throughput,
//! corpus dumps, activation/attention analyses, and the selfcheck gate.

mod commands;
mod config;
mod rundir;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "lengthgen", version, about = "Randomized positional encodings on algorithmic length-generalization tasks")]
struct Cli {
    /// Output root for run artifacts (default: $LENGTHGEN_OUT or ./runs).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and evaluate it on the unseen lengths.
    Train(config::ExperimentFlags),
    /// Re-evaluate a finished run from its checkpoint and config echo.
    Eval {
        /// Run directory containing config.txt and checkpoint/.
        run_dir: PathBuf,
        #[command(flatten)]
        flags: config::ExperimentFlags,
    },
    /// Grid over seeds x learning rates x schemes, plus aggregate summaries.
    Sweep {
        #[command(flatten)]
        flags: config::ExperimentFlags,
        /// Comma-separated seeds, e.g. 0,1,2.
        #[arg(long, default_value = "0")]
        seeds: String,
        /// Comma-separated learning rates, e.g. 1e-4,3e-4,5e-4.
        #[arg(long, default_value = "0.0003")]
        lrs: String,
        /// Concurrent runs.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Train and evaluate the same config across several position bounds L.
    AblateL {
        #[command(flatten)]
        flags: config::ExperimentFlags,
        /// Comma-separated L values.
        #[arg(long = "l-values", default_value = "256,512,1024")]
        l_values: String,
    },
    /// Sorted vs unsorted position sampling on one task.
    AblateSorting(config::ExperimentFlags),
    /// Steps-per-second comparison: short vs long training lengths, and the
    /// randomized-vs-standard overhead at equal length.
    Throughput {
        #[command(flatten)]
        flags: config::ExperimentFlags,
        #[arg(long, default_value_t = 40)]
        short_n: usize,
        #[arg(long, default_value_t = 500)]
        long_n: usize,
        #[arg(long, default_value_t = 50)]
        warmup: usize,
        #[arg(long, default_value_t = 200)]
        timed: usize,
    },
    /// Write task instances as JSON lines.
    DumpCorpus {
        #[command(flatten)]
        flags: config::ExperimentFlags,
        /// Instances per length.
        #[arg(long, default_value_t = 10)]
        count: usize,
        /// Output file (stdout when omitted).
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Fit a 2D PCA on activations at one length and project another.
    AnalyzePca {
        run_dir: PathBuf,
        #[arg(long)]
        fit_length: Option<usize>,
        #[arg(long)]
        project_length: Option<usize>,
        /// Sequences per length.
        #[arg(long, default_value_t = 30)]
        count: usize,
    },
    /// Max-over-heads attention matrices for one sequence.
    AnalyzeAttention {
        run_dir: PathBuf,
        #[arg(long)]
        length: Option<usize>,
    },
    /// Run the oracle and invariant suites; exit non-zero on any failure.
    Selfcheck,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let out_root = rundir::out_root(cli.out.clone());
    let result = match cli.command {
        Command::Train(flags) => commands::train(&out_root, &flags),
        Command::Eval { run_dir, flags } => commands::eval(&run_dir, &flags),
        Command::Sweep { flags, seeds, lrs, jobs } => commands::sweep(&out_root, &flags, &seeds, &lrs, jobs),
        Command::AblateL { flags, l_values } => commands::ablate_l(&out_root, &flags, &l_values),
        Command::AblateSorting(flags) => commands::ablate_sorting(&out_root, &flags),
        Command::Throughput { flags, short_n, long_n, warmup, timed } => {
            commands::throughput(&out_root, &flags, short_n, long_n, warmup, timed)
        }
        Command::DumpCorpus { flags, count, file } => commands::dump_corpus(&flags, count, file.as_deref()),
        Command::AnalyzePca { run_dir, fit_length, project_length, count } => {
            commands::analyze_pca(&run_dir, fit_length, project_length, count)
        }
        Command::AnalyzeAttention { run_dir, length } => commands::analyze_attention(&run_dir, length),
        Command::Selfcheck => commands::selfcheck(),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
