//! `spd-bci` pipeline: configuration, stages and subcommands.
//!
//! Every subcommand reads one TOML configuration and writes its artifacts
//! below `paths.work`:
//!
//! | command      | reads                       | writes                                   |
//! |--------------|-----------------------------|------------------------------------------|
//! | `synth`      | config                      | `paths.raw/*.eegs`                       |
//! | `preprocess` | `paths.raw/*.eegs`, CSV     | `preprocessed/*.eegs`                    |
//! | `features`   | `preprocessed/`             | `features/temporal/{train,test}/*.eegt`, `features/rank-R/{train,test}/*.eegp` |
//! | `train`      | `features/`                 | `model.ckpt`, `train.jsonl`, `grid.csv`  |
//! | `evaluate`   | `features/`, `model.ckpt`   | `metrics.json`                           |
//! | `ablate`     | `features/`                 | `ablation/*.ckpt`, `ablation.csv`        |

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;

use std::path::Path;

pub use config::{PipelineConfig, Profile, ProfileName};
pub use error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Synth,
    Preprocess,
    Features,
    Train,
    Evaluate,
    Ablate,
}

/// Runs one subcommand with `jobs` worker threads (`0` = one per core).
pub fn run(command: Command, config: &Path, seed: Option<u64>, jobs: usize) -> CliResult<()> {
    let cfg = PipelineConfig::load(config, seed)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    log::info!("{command:?} with profile {}", cfg.profile.name.label());
    pool.install(|| match command {
        Command::Synth => commands::synth(&cfg),
        Command::Preprocess => commands::preprocess(&cfg),
        Command::Features => commands::features(&cfg),
        Command::Train => commands::train(&cfg),
        Command::Evaluate => commands::evaluate(&cfg),
        Command::Ablate => commands::ablate(&cfg),
    })
}
