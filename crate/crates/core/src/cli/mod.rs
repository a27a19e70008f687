// SPDX-License-Identifier: MIT OR Apache-2.0

//! Command-line pipeline: one subcommand per stage over a run directory
//! keyed by config hash.

pub mod config;
pub mod manifest;
pub mod report;
pub mod stages;
pub mod svg;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::LabConfig;
pub use manifest::RunManifest;
pub use stages::{Run, Stage, StageStatus};

use crate::error::LabError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_PIPELINE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "recall-lab", version, about = "Knowledge-recall interpretability pipeline")]
pub struct Cli {
    /// JSON config file; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Config override `section.key=value` (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Root directory holding one subdirectory per config hash.
    #[arg(long, global = true, default_value = "runs")]
    pub out: PathBuf,
    /// Worker threads for parallel stages (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    /// Rerun the stage even when its outputs are current.
    #[arg(long, global = true)]
    pub force: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Generate the synthetic world.
    Gen,
    /// Train the model on the world.
    Train,
    /// Keep triples recalled under both query templates.
    Filter,
    /// Compute SES/RES/OES grids for every filtered triple.
    Score,
    /// Locality reports, layer profiles, component bands and heatmaps.
    Locality,
    /// Counter-knowledge interchange: mean accuracy and layer sweeps.
    Interchange,
    /// Contextual editing with and without patching.
    Edit,
    /// Summary document over all stages.
    Report,
    /// Every stage in order.
    All,
    /// Print the resolved config and its run directory.
    Config,
}

impl Command {
    fn stages(self) -> Vec<Stage> {
        match self {
            Command::Gen => vec![Stage::Gen],
            Command::Train => vec![Stage::Train],
            Command::Filter => vec![Stage::Filter],
            Command::Score => vec![Stage::Score],
            Command::Locality => vec![Stage::Locality],
            Command::Interchange => vec![Stage::Interchange],
            Command::Edit => vec![Stage::Edit],
            Command::Report => vec![Stage::Report],
            Command::All => Stage::ALL.to_vec(),
            Command::Config => vec![],
        }
    }
}

/// Process exit code for an error.
pub fn exit_code(e: &LabError) -> i32 {
    match e {
        LabError::PipelineOrder(_) | LabError::Corrupt { .. } | LabError::Json(_) | LabError::Csv(_) => EXIT_PIPELINE,
        LabError::Diverged { .. } => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

pub fn load_config(cli: &Cli) -> crate::Result<LabConfig> {
    let base = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| LabError::Config(format!("cannot read {}: {e}", p.display())))?;
            LabConfig::from_json(&text).map_err(|e| match e {
                LabError::Json(j) => LabError::Config(format!("{}: {j}", p.display())),
                other => other,
            })?
        }
        None => LabConfig::default(),
    };
    base.with_overrides(&cli.overrides).map_err(|e| match e {
        LabError::Json(j) => LabError::Config(j.to_string()),
        other => other,
    })
}

/// Run a parsed command; returns the process exit code.
pub fn execute(cli: &Cli) -> i32 {
    let config = match load_config(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    if cli.workers > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.workers).build_global() {
            log::warn!("worker pool already initialised: {e}");
        }
    }
    let mut run = match Run::open(&cli.out, config, cli.force) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    if let Command::Config = cli.command {
        let json = match run.config.to_json() {
            Ok(j) => j,
            Err(e) => {
                eprintln!("error: {e}");
                return exit_code(&e);
            }
        };
        let mut out = std::io::stdout().lock();
        let _ = write!(out, "{json}").and_then(|_| writeln!(out, "run directory: {}", run.dir.display()));
        return EXIT_OK;
    }
    for stage in cli.command.stages() {
        match run.run(stage) {
            Ok(StageStatus::Ran) => println!("{}: done ({})", stage.name(), run.dir.display()),
            Ok(StageStatus::UpToDate) => println!("{}: up to date ({})", stage.name(), run.dir.display()),
            Err(e) => {
                eprintln!("error in {}: {e}", stage.name());
                return exit_code(&e);
            }
        }
    }
    EXIT_OK
}

/// Parse `args` and run; clap usage errors map to exit code 1.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(&cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}
