use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tdswanson_cli::config::{LoadedConfig, SweepParam, SweepSpec};
use tdswanson_cli::error::{CliError, CliResult};
use tdswanson_cli::range::RangeSpec;
use tdswanson_cli::run::{self, RunOptions};
use tdswanson_cli::sweep;

#[derive(Parser)]
#[command(name = "tdswanson", version, about = "Time-dependent non-Hermitian Swanson model runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its artifacts.
    Run {
        config: PathBuf,
        /// Output directory, overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Evaluate the verification checks.
        #[arg(long)]
        verify: bool,
        #[arg(long)]
        quiet: bool,
    },
    /// Sweep one parameter over a range.
    Sweep {
        config: PathBuf,
        /// Parameter to sweep, overriding the config.
        #[arg(long)]
        param: Option<SweepParam>,
        /// Range `a:b:n`, overriding the config.
        #[arg(long)]
        range: Option<RangeSpec>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
}

fn print_files(files: &[PathBuf]) {
    for f in files {
        println!("{}", f.display());
    }
}

fn sweep_spec(loaded: &LoadedConfig, param: Option<SweepParam>, range: Option<RangeSpec>) -> CliResult<SweepSpec> {
    let base = loaded.config.sweep;
    let param = param.or(base.map(|s| s.param));
    let range = range.or(base.map(|s| s.range));
    match (param, range) {
        (Some(param), Some(range)) => Ok(SweepSpec { param, range }),
        (None, _) => Err(CliError::Config("no sweep parameter: pass --param or set `sweep.param`".into())),
        (_, None) => Err(CliError::Config("no sweep range: pass --range or set `sweep.range`".into())),
    }
}

fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run { config, out, verify, quiet } => {
            let loaded = LoadedConfig::from_path(&config)?;
            let dir = loaded.output_dir(out.as_deref());
            let outcome = run::run(&loaded, &dir, RunOptions { verify, quiet })?;
            if !quiet {
                print_files(&outcome.files);
            }
        }
        Command::Sweep { config, param, range, out, quiet } => {
            let loaded = LoadedConfig::from_path(&config)?;
            let spec = sweep_spec(&loaded, param, range)?;
            let dir = loaded.output_dir(out.as_deref().map(Path::new));
            let outcome = sweep::sweep(&loaded, &spec, &dir, quiet)?;
            if !quiet {
                print_files(&outcome.files);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
