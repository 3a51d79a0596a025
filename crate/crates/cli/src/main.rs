use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use delaydisc::config::RunConfig;
use delaydisc::pipeline::{cmd_discover, cmd_predict, cmd_report, cmd_simulate};
use delaydisc::{Error, Result};

#[derive(Parser)]
#[command(name = "delaydisc", version, about = "Discover delay differential equations from noisy time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a known model and write noisy and clean trajectories.
    Simulate(Common),
    /// Run the sampler on a trajectory and write the discovered model.
    Discover {
        #[command(flatten)]
        common: Common,
        /// Also write every chain iterate.
        #[arg(long)]
        trace: bool,
    },
    /// Re-simulate a discovered model, with uncertainty bands when chains are given.
    Predict(Common),
    /// Tabulate parameter errors of discovered models against their truth.
    Report(Common),
}

#[derive(Args)]
struct Common {
    /// TOML config, or a manifest.json from an earlier run.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut config = RunConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        Ok(config)
    }
}

fn run(cli: Cli) -> Result<()> {
    let manifest = match &cli.command {
        Command::Simulate(c) => cmd_simulate(&c.load()?, &c.out)?,
        Command::Discover { common, trace } => {
            let mut config = common.load()?;
            // recorded in the manifest so a re-run writes the same files
            if let (true, Some(dc)) = (*trace, config.discover.as_mut()) {
                dc.trace = true;
            }
            cmd_discover(&config, &common.out, false)?
        }
        Command::Predict(c) => cmd_predict(&c.load()?, &c.out)?,
        Command::Report(c) => cmd_report(&c.load()?, &c.out)?,
    };
    log::info!("{} wrote {} file(s)", manifest.command, manifest.outputs.len() + 1);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> ExitCode {
    ExitCode::from(e.exit_code().clamp(1, 255) as u8)
}
