//! `funkrad`: phantoms, circular-mean transforms, reconstruction and checks.
//!
//! Every command prints its resolved options as JSON, then a text table, then
//! a JSON summary. The options block can be saved and passed back with
//! `--config` to repeat the run.

mod args;
mod commands;
mod geom;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use funkrad::{FunkError, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use args::*;
use commands::Report;

#[derive(Parser)]
#[command(name = "funkrad", version, about = "Circular-mean transform toolkit for thermoacoustic tomography")]
struct Cli {
    /// Worker threads; falls back to FUNKRAD_THREADS, then to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON options for the command; flags on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rasterize a phantom to a grid file.
    Phantom(PhantomArgs),
    /// Grid file to sinogram file.
    Forward(ForwardArgs),
    /// Sinogram file to grid file.
    Backproject(BackprojectArgs),
    /// Duality defect over successive refinements.
    AdjointCheck(AdjointCheckArgs),
    /// Kaczmarz reconstruction from a sinogram.
    Reconstruct(ReconstructArgs),
    /// Build and certify an annihilator.
    RangeBuild(RangeBuildArgs),
    /// Range-condition residuals of a sinogram.
    RangeCheck(RangeCheckArgs),
    /// Near-diagonal behaviour of the normal-operator kernel.
    KernelProbe(KernelProbeArgs),
    /// Eigenvalue decay of the discrete normal operator.
    Spectrum(SpectrumArgs),
    /// Sampled geometric diagnostics.
    GeomCheck(GeomCheckArgs),
}

fn read_config(path: &PathBuf, command: &str) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|source| FunkError::Io { path: path.clone(), source })?;
    let value: Value = serde_json::from_str(&text)?;
    match (value.get("command"), value.get("args")) {
        (Some(name), Some(args)) => {
            if name.as_str() != Some(command) {
                return Err(FunkError::InvalidConfig(format!("config is for {name}, not \"{command}\"")));
            }
            Ok(args.clone())
        }
        _ => Ok(value),
    }
}

/// Overlays explicitly given command-line values on the config file, then
/// fills defaults.
fn prepare<A: Serialize + DeserializeOwned + Resolve>(
    cli: A,
    config: Option<&PathBuf>,
    command: &str,
) -> Result<A> {
    let merged = match config {
        None => cli,
        Some(path) => {
            let mut base = read_config(path, command)?;
            let Value::Object(given) = serde_json::to_value(&cli)? else { unreachable!() };
            let Value::Object(target) = &mut base else {
                return Err(FunkError::InvalidConfig("config must be a JSON object".into()));
            };
            for (key, value) in given {
                let explicit = match &value {
                    Value::Null | Value::Bool(false) => false,
                    Value::Array(items) => !items.is_empty(),
                    _ => true,
                };
                if explicit {
                    target.insert(key, value);
                }
            }
            serde_json::from_value(base)?
        }
    };
    merged.resolve()
}

fn execute<A: Serialize + DeserializeOwned + Resolve>(
    cli: A,
    config: Option<&PathBuf>,
    command: &str,
    run: impl FnOnce(&A) -> Result<Report>,
) -> Result<String> {
    let args = prepare(cli, config, command)?;
    let echo = serde_json::json!({ "command": command, "args": args });
    let report = run(&args)?;
    let mut out = String::from("# config\n");
    out.push_str(&serde_json::to_string_pretty(&echo)?);
    out.push_str("\n# report\n");
    out.push_str(&report.table);
    out.push_str("# summary\n");
    out.push_str(&serde_json::to_string_pretty(&report.summary)?);
    out.push('\n');
    Ok(out)
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("FUNKRAD_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| FunkError::InvalidConfig(format!("FUNKRAD_THREADS = `{v}` is not a count"))),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<String> {
    if let Some(n) = thread_count(cli.threads)? {
        if n == 0 {
            return Err(FunkError::InvalidConfig("thread count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| FunkError::InvalidConfig(e.to_string()))?;
    }
    let config = cli.config.as_ref();
    match cli.command {
        Command::Phantom(a) => execute(a, config, "phantom", commands::phantom),
        Command::Forward(a) => execute(a, config, "forward", commands::forward_cmd),
        Command::Backproject(a) => execute(a, config, "backproject", commands::backproject_cmd),
        Command::AdjointCheck(a) => execute(a, config, "adjoint-check", commands::adjoint_check),
        Command::Reconstruct(a) => execute(a, config, "reconstruct", commands::reconstruct),
        Command::RangeBuild(a) => execute(a, config, "range-build", commands::range_build),
        Command::RangeCheck(a) => execute(a, config, "range-check", commands::range_check),
        Command::KernelProbe(a) => execute(a, config, "kernel-probe", commands::kernel_probe_cmd),
        Command::Spectrum(a) => execute(a, config, "spectrum", commands::spectrum),
        Command::GeomCheck(a) => execute(a, config, "geom-check", commands::geom_check),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("funkrad: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
