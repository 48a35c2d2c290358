mod commands;
mod paths;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cvforge_io::IoError;

#[derive(Parser, Debug)]
#[command(name = "cvforge", version, about = "Aerial-to-ground 3D vision dataset pipeline")]
pub struct Cli {
    /// Seed for every random choice of the stage.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// error, warn, info, debug or trace; CVFORGE_LOG applies when absent.
    #[arg(long, global = true)]
    pub log_level: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Map a local reconstruction into ECEF using GPS tags.
    Georegister(commands::GeoregisterArgs),
    /// Sample look-at targets and generate virtual viewpoints.
    SampleViews(commands::SampleViewsArgs),
    /// Build tracks from match files and triangulate them.
    Triangulate(commands::TriangulateArgs),
    /// Localize query images against a triangulated map.
    Localize(commands::LocalizeArgs),
    /// Compute the covisibility matrix from depth maps.
    Covis(commands::CovisArgs),
    /// Select training pairs from a covisibility matrix.
    Pairs(commands::PairsArgs),
    /// Relative rotation and translation accuracy of predicted poses.
    EvalPose(commands::EvalPoseArgs),
    /// Pointmap accuracy after robust similarity alignment.
    EvalPointmap(commands::EvalPointmapArgs),
    /// Generate a synthetic benchmark scene on disk.
    SynthScene(commands::SynthSceneArgs),
    /// Ray-cast depth maps for every posed camera of a manifest.
    RenderDepth(commands::RenderDepthArgs),
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    User(String),
    Internal(String),
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        if e.is_write_failure() {
            CliError::Internal(e.to_string())
        } else {
            CliError::User(e.to_string())
        }
    }
}

impl From<cvforge_core::Error> for CliError {
    fn from(e: cvforge_core::Error) -> Self {
        CliError::User(e.to_string())
    }
}

fn init_logging(flag: Option<&str>) -> Result<(), CliError> {
    let spec = flag
        .map(str::to_string)
        .or_else(|| std::env::var("CVFORGE_LOG").ok())
        .unwrap_or_else(|| "warn".into());
    if spec.parse::<log::LevelFilter>().is_err() {
        return Err(CliError::User(format!("invalid log level {spec:?}")));
    }
    env_logger::Builder::new()
        .parse_filters(&spec)
        .format_timestamp(None)
        .try_init()
        .map_err(|e| CliError::Internal(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_logging(cli.log_level.as_deref())?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::User("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    commands::dispatch(&cli)
}

fn main() -> ExitCode {
    let outcome = std::panic::catch_unwind(|| match Cli::try_parse() {
        Ok(cli) => run(cli),
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                Ok(())
            } else {
                Err(CliError::Usage(e.render().to_string()))
            }
        }
    });
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(CliError::Usage(text))) => {
            eprint!("{text}");
            ExitCode::from(1)
        }
        Ok(Err(CliError::User(msg))) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Ok(Err(CliError::Internal(msg))) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(2)
        }
        Err(_) => ExitCode::from(2),
    }
}
