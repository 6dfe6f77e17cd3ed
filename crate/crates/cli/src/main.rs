use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spd_bci::{run, Command};

#[derive(Parser)]
#[command(name = "spd-bci", version, about = "Spatio-temporal EEG pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// Pipeline configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate synthetic raw trials into `paths.raw`.
    Synth(Common),
    /// Band-pass, notch and normalize raw segments.
    Preprocess(Common),
    /// Extract temporal and tangent-space features.
    Features(Common),
    /// Train the model (and search the rank grid when configured).
    Train(Common),
    /// Score the trained model on the test split.
    Evaluate(Common),
    /// Train and score every configured variant.
    Ablate(Common),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("SPD_BCI_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (command, args) = match cli.command {
        Cmd::Synth(a) => (Command::Synth, a),
        Cmd::Preprocess(a) => (Command::Preprocess, a),
        Cmd::Features(a) => (Command::Features, a),
        Cmd::Train(a) => (Command::Train, a),
        Cmd::Evaluate(a) => (Command::Evaluate, a),
        Cmd::Ablate(a) => (Command::Ablate, a),
    };
    match run(command, &args.config, args.seed, args.jobs) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
