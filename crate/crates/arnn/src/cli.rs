//! Argument parsing and dispatch.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands;
use crate::config::{ConfigBuilder, RunConfig};
use crate::error::{AppError, Result};

#[derive(Debug, Parser)]
#[command(
    name = "arnn",
    version,
    about = "Context-augmented session recommender"
)]
pub struct Cli {
    #[command(flatten)]
    pub options: Options,

    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every subcommand. They override the config file.
#[derive(Debug, Args)]
pub struct Options {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Training stage: gru, pnn or merge.
    #[arg(long, global = true)]
    pub stage: Option<String>,

    /// Hyperparameter profile: xing, tmall or synth.
    #[arg(long, global = true)]
    pub profile: Option<String>,

    /// Cut-off of the ranking metrics and of `recommend`.
    #[arg(long, global = true)]
    pub k: Option<usize>,

    /// Output directory (synth) or report file (evaluate).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Directory of the preprocessed splits.
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,

    /// Directory of checkpoints and training histories.
    #[arg(long, global = true)]
    pub checkpoints: Option<PathBuf>,

    /// Any config key, as key=value. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic context-dependent log.
    Synth,
    /// Sessionize, sample and split a raw log.
    Preprocess {
        /// Delimited event log.
        input: Option<PathBuf>,
    },
    /// Train one stage.
    Train,
    /// Evaluate the configured systems on the test split.
    Evaluate,
    /// Recommend next items for a session prefix.
    Recommend {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Context for steps without their own, as `field=v1|v2;field=v3`.
        #[arg(long, default_value = "")]
        context: String,
        /// Prefix steps, oldest first, as `item` or `item@context`.
        #[arg(required = true)]
        steps: Vec<String>,
    },
}

impl Cli {
    /// Resolves the configuration: defaults, file, `--set`, dedicated flags.
    pub fn config(&self) -> Result<RunConfig> {
        let o = &self.options;
        let mut b = ConfigBuilder::new();
        if let Some(path) = &o.config {
            b = b.file(path)?;
        }
        for s in &o.set {
            b = b.assignment(s)?;
        }
        let path_str = |p: &PathBuf| p.to_string_lossy().into_owned();
        let flags = [
            ("seed", o.seed.map(|v| v.to_string())),
            ("stage", o.stage.clone()),
            ("profile", o.profile.clone()),
            ("k", o.k.map(|v| v.to_string())),
            ("out", o.out.as_ref().map(path_str)),
            ("data_dir", o.data.as_ref().map(path_str)),
            ("checkpoint_dir", o.checkpoints.as_ref().map(path_str)),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                b = b.set(key, &v)?;
            }
        }
        if let Command::Preprocess { input: Some(p) } = &self.command {
            b = b.set("input", &path_str(p))?;
        }
        b.build()
    }
}

/// Parses arguments and runs one command.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
            AppError::Help(e.to_string())
        }
        _ => AppError::Config(e.to_string()),
    })?;
    let cfg = cli.config()?;
    match &cli.command {
        Command::Synth => commands::synth(&cfg, out),
        Command::Preprocess { .. } => commands::preprocess(&cfg, out),
        Command::Train => commands::train(&cfg, out).map(|_| ()),
        Command::Evaluate => commands::evaluate(&cfg, out).map(|_| ()),
        Command::Recommend {
            checkpoint,
            context,
            steps,
        } => {
            let intra = cfg.dialect.intra_delimiter;
            let default = commands::parse_context(context, intra)?;
            let prefix = steps
                .iter()
                .map(|s| commands::parse_step(s, &default, intra))
                .collect::<Result<Vec<_>>>()?;
            let recs = commands::recommend(checkpoint, &prefix, cfg.k)?;
            out.write_all(commands::render_recommendations(&recs).as_bytes())
                .map_err(|e| AppError::io("<stdout>", e))
        }
    }
}
