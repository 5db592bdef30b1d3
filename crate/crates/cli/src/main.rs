use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nrv_cli::commands::*;
use nrv_cli::pipeline::{demo_manifest, run_pipeline};
use nrv_cli::{CliError, CliResult};
use nrv_service::SessionConfig;

#[derive(Parser)]
#[command(name = "nrv", version, about = "Volumetric neurite processing tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the header and histogram summary of a volume.
    Info(InfoArgs),
    /// Render tube phantoms.
    Phantom(PhantomArgs),
    /// Thin and fragment a phantom.
    Degenerate(DegenerateArgs),
    /// Widefield blur.
    Blur(BlurArgs),
    /// Two-segment percentile rescale of a raw volume.
    Normalize(NormalizeArgs),
    /// Split a volume into overlapping tiles.
    Tile(TileArgs),
    /// Reassemble tiles listed in a tile manifest.
    Stitch(StitchArgs),
    /// Age translation through a predictor backend.
    Predict(PredictArgs),
    /// Evaluate a reference loss and print a JSON breakdown.
    Loss(LossArgs),
    /// Multiscale tubularity response.
    Vesselness(VesselnessArgs),
    /// Connected components of a thresholded volume.
    Components(ComponentsArgs),
    /// One intermediate frame between young and old volumes.
    Morph(MorphArgs),
    /// Evenly spaced intermediate frames.
    MorphSequence(MorphSequenceArgs),
    /// Isosurface as OBJ.
    Mesh(MeshArgs),
    /// Fiber density and young/old percentage difference.
    Density(DensityArgs),
    /// Serve volumes over HTTP.
    Serve(ServeArgs),
    /// Run a pipeline manifest.
    Run(RunArgs),
    /// Write the demo manifest and run it.
    Demo(DemoArgs),
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: String,
    #[arg(long)]
    data: PathBuf,
    /// JSON session defaults (loss and vesselness parameters).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    manifest: PathBuf,
}

#[derive(Args)]
struct DemoArgs {
    #[arg(long, default_value = "demo")]
    out_dir: PathBuf,
    /// Edge length of the cubic demo volume.
    #[arg(long, default_value_t = 128)]
    size: usize,
}

fn print(report: Option<serde_json::Value>) -> CliResult<()> {
    if let Some(r) = report {
        println!("{}", serde_json::to_string_pretty(&r)?);
    }
    Ok(())
}

fn dispatch(command: Command) -> CliResult<()> {
    let step: &dyn Step = match &command {
        Command::Info(a) => a,
        Command::Phantom(a) => a,
        Command::Degenerate(a) => a,
        Command::Blur(a) => a,
        Command::Normalize(a) => a,
        Command::Tile(a) => a,
        Command::Stitch(a) => a,
        Command::Predict(a) => a,
        Command::Loss(a) => a,
        Command::Vesselness(a) => a,
        Command::Components(a) => a,
        Command::Morph(a) => a,
        Command::MorphSequence(a) => a,
        Command::Mesh(a) => a,
        Command::Density(a) => a,
        Command::Serve(a) => return serve(a),
        Command::Run(a) => {
            let record = run_pipeline(&a.manifest)?;
            return print(Some(serde_json::to_value(record.output_hashes())?));
        }
        Command::Demo(a) => {
            if a.size < 96 {
                return Err(CliError::new("invalid_parameter", "demo size must be at least 96"));
            }
            let path = a.out_dir.join("demo.json");
            write_json(&path, &demo_manifest(a.size))?;
            let record = run_pipeline(&path)?;
            return print(Some(serde_json::to_value(record.output_hashes())?));
        }
    };
    print(step.run()?)
}

fn serve(a: &ServeArgs) -> CliResult<()> {
    let config: SessionConfig = match &a.config {
        Some(path) => read_json(path)?,
        None => SessionConfig::default(),
    };
    let runtime = tokio::runtime::Runtime::new()?;
    runtime
        .block_on(nrv_service::serve(&a.bind, &a.data, config))
        .map_err(|e| match e {
            nrv_service::ServeError::Load(e) => CliError::from(e),
            nrv_service::ServeError::Io(e) => CliError::new("bind_failure", e.to_string()),
        })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::to_string(&e).unwrap_or_else(|_| e.to_string()));
            ExitCode::FAILURE
        }
    }
}
