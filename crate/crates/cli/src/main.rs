//! `voxinit`: command-line front end for voxel Gaussian initialization.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{error::ErrorKind, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use voxinit::encode::{DeskTextEncoder, TextEncoder};
use voxinit::guidance::{BridgeClient, GuidanceProvider, SyntheticGuidance, TargetSet};
use voxinit::render::{write_png, CameraPose};
use voxinit::toy::two_sphere_targets;
use voxinit::train::{
    render_checkpoint, run_to_completion, Checkpoint, ProviderKind, TrainConfig, Trainer,
};
use voxinit::Error;

const SEED_ENV: &str = "VOXINIT_SEED";

#[derive(Parser, Debug)]
#[command(name = "voxinit", version, about = "Voxelized 3D Gaussian initialization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the initialization network and export the point cloud.
    Init(InitArgs),
    /// Render one view of a trained checkpoint to PNG.
    Render(RenderArgs),
    /// Write the two-sphere reference targets for the synthetic provider.
    Targets(TargetsArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Provider {
    Synthetic,
    Bridge,
}

#[derive(clap::Args, Debug)]
struct InitArgs {
    #[arg(long)]
    prompt: Option<String>,
    /// JSON run configuration; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the provider named in the config.
    #[arg(long, value_enum)]
    provider: Option<Provider>,
    #[arg(long)]
    bridge_url: Option<String>,
    /// Target directory for the synthetic provider.
    #[arg(long)]
    targets: Option<PathBuf>,
    /// Print the effective configuration as JSON and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(clap::Args, Debug)]
struct RenderArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    azimuth: f64,
    #[arg(long, default_value_t = 20.0, allow_hyphen_values = true)]
    elevation: f64,
    #[arg(long)]
    out: PathBuf,
    /// Defaults to the checkpoint's training render size.
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
}

#[derive(clap::Args, Debug)]
struct TargetsArgs {
    #[arg(long)]
    out: PathBuf,
    /// Configuration supplying resolution, extent, orbit and render size.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Echoed into the output directory alongside the effective config.
#[derive(Serialize)]
struct RunManifest<'a> {
    config_path: Option<&'a Path>,
    prompt: &'a str,
    output_dir: &'a Path,
    provider: ProviderKind,
    bridge_url: Option<&'a str>,
    targets: Option<&'a Path>,
    config: &'a TrainConfig,
}

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) => 2,
        Error::Transport(_) | Error::Protocol(_) => 3,
        _ => 4,
    }
}

fn load_config(path: Option<&Path>) -> Result<TrainConfig, Failure> {
    let mut cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Failure::Usage(format!("invalid config {}: {e}", p.display())))?
        }
        None => TrainConfig::default(),
    };
    if let Ok(v) = std::env::var(SEED_ENV) {
        cfg.seed = v
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("{SEED_ENV}={v} is not an unsigned integer")))?;
    }
    Ok(cfg)
}

fn cmd_init(args: InitArgs) -> Result<(), Failure> {
    let mut cfg = load_config(args.config.as_deref())?;
    match args.provider {
        Some(Provider::Synthetic) => cfg.provider = ProviderKind::Synthetic,
        Some(Provider::Bridge) => cfg.provider = ProviderKind::Bridge,
        None => {}
    }
    if let Some(url) = &args.bridge_url {
        cfg.bridge.url = Some(url.clone());
    }
    if args.print_config {
        let json = serde_json::to_string_pretty(&cfg).map_err(|e| Error::Data(e.to_string()))?;
        println!("{json}");
        return Ok(());
    }
    let prompt = args
        .prompt
        .as_deref()
        .ok_or_else(|| Failure::Usage("--prompt is required".into()))?;
    cfg.validate()?;

    let bridge;
    let synthetic;
    let (provider, text): (&dyn GuidanceProvider, _) = match cfg.provider {
        ProviderKind::Bridge => {
            let url = cfg.bridge.url.clone().ok_or_else(|| {
                Failure::Usage("the bridge provider needs --bridge-url or bridge.url".into())
            })?;
            bridge = BridgeClient::new(
                &url,
                Duration::from_secs_f64(cfg.bridge.timeout_secs),
                cfg.bridge.guidance_scale,
            );
            let model = bridge.health()?;
            eprintln!("bridge {url} serving {model}");
            let text = bridge.embed(prompt)?;
            (&bridge, text)
        }
        ProviderKind::Synthetic => {
            let dir = args.targets.as_deref().ok_or_else(|| {
                Failure::Usage("the synthetic provider needs --targets <dir>".into())
            })?;
            synthetic = SyntheticGuidance::new(TargetSet::load(dir)?);
            let text = DeskTextEncoder::new(cfg.net.d_text, cfg.seed).embed(prompt)?;
            (&synthetic, text)
        }
    };

    fs::create_dir_all(&args.out).map_err(Error::from)?;
    let manifest = RunManifest {
        config_path: args.config.as_deref(),
        prompt,
        output_dir: &args.out,
        provider: cfg.provider,
        bridge_url: cfg.bridge.url.as_deref(),
        targets: args.targets.as_deref(),
        config: &cfg,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Data(e.to_string()))?;
    fs::write(args.out.join("manifest.json"), json).map_err(Error::from)?;

    let mut trainer = Trainer::new(prompt, cfg, text, provider)?;
    let report = run_to_completion(&mut trainer, Some(&args.out))?;
    let last = report.metrics.last();
    eprintln!(
        "{} steps, final |residual| {:.4}, {} points written to {}",
        report.metrics.len(),
        last.map_or(0.0, |m| m.residual_norm),
        report.cloud.len(),
        args.out.join("init.ply").display()
    );
    Ok(())
}

fn cmd_render(args: RenderArgs) -> Result<(), Failure> {
    let ckpt = Checkpoint::load(&args.checkpoint).map_err(|e| match e {
        Error::Io(io) => Error::Checkpoint(format!("{}: {io}", args.checkpoint.display())),
        other => other,
    })?;
    let cfg = &ckpt.config;
    let camera = CameraPose::orbit(
        args.azimuth,
        args.elevation,
        cfg.orbit.radius,
        cfg.orbit.fov_deg,
        args.width.unwrap_or(cfg.render.width),
        args.height.unwrap_or(cfg.render.height),
    )?;
    let image = render_checkpoint(&ckpt, &camera)?;
    write_png(&image, &args.out)?;
    Ok(())
}

fn cmd_targets(args: TargetsArgs) -> Result<(), Failure> {
    let cfg = load_config(args.config.as_deref())?;
    cfg.validate()?;
    let targets = two_sphere_targets(
        cfg.resolution,
        cfg.extent,
        &cfg.orbit,
        cfg.render.width,
        cfg.render.height,
    )?;
    targets.save(&args.out)?;
    eprintln!("{} views written to {}", targets.views().len(), args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Init(a) => cmd_init(a),
        Command::Render(a) => cmd_render(a),
        Command::Targets(a) => cmd_targets(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => Cli::command().error(ErrorKind::ArgumentConflict, msg).exit(),
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
