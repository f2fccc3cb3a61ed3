use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use pepsim::cli::{
    cmd_analyze, cmd_gains, cmd_project, cmd_simulate, cmd_solid_angle, load_config,
    to_json_document, write_atomic, ConfigError, GainVariant,
};
use pepsim::config::ExperimentConfig;
use pepsim::parallel::{threads_from_env, with_workers};

#[derive(Parser)]
#[command(
    name = "pepsim",
    version,
    about = "Pauli-forbidden X-ray search simulator and limit toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config document, or `preset:<name>`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Compiled-in preset used when no --config is given.
    #[arg(long, default_value = "vip2-2016")]
    preset: String,
    /// Output directory; documents go to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Geometry Monte Carlo sample count, overriding the config.
    #[arg(long)]
    samples: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate both periods and write events, spectra and report.json.
    Simulate(Common),
    /// Derive the β²/2 limit from two event CSV files.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Current-on events CSV.
        #[arg(long)]
        on: PathBuf,
        /// Current-off events CSV.
        #[arg(long)]
        off: PathBuf,
    },
    /// Print a preset sensitivity-gain table.
    Gains {
        /// `vip` or `upgrade`.
        variant: GainVariant,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Project a limit to a longer run with a sensitivity gain.
    Project {
        #[arg(long)]
        limit: f64,
        #[arg(long)]
        gain: f64,
        #[arg(long)]
        time_ratio: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Geometric solid angle and acceptance at the forbidden-line energy.
    SolidAngle(Common),
}

enum Failure {
    Config(ConfigError),
    Run(pepsim::Error),
}

impl From<pepsim::Error> for Failure {
    fn from(e: pepsim::Error) -> Self {
        Failure::Run(e)
    }
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, Failure> {
        let path = match &self.config {
            Some(p) => p.clone(),
            None => PathBuf::from(format!("preset:{}", self.preset)),
        };
        let mut config = load_config(&path).map_err(Failure::Config)?;
        if let Some(seed) = self.seed {
            config.run.seed = seed;
        }
        if let Some(n) = self.samples {
            config.geometry_samples = n;
        }
        config.validate().map_err(|source| {
            Failure::Config(ConfigError {
                path,
                line: None,
                source,
            })
        })?;
        Ok(config)
    }
}

fn emit<T: Serialize>(doc: &T, out: Option<&Path>, name: &str) -> Result<(), Failure> {
    let bytes = to_json_document(doc)?;
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| pepsim::Error::io(dir, e))?;
            write_atomic(&dir.join(name), &bytes)?;
        }
        None => print!("{}", String::from_utf8_lossy(&bytes)),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate(common) => {
            let config = common.load()?;
            let out = common.out.unwrap_or_else(|| PathBuf::from("."));
            let report = cmd_simulate(&config, &out)?;
            match &report.limit {
                Some(l) => println!(
                    "beta2/2 <= {:e} (n_x_upper {:.3}, acceptance {:.5}) -> {}",
                    l.beta2_over_2_upper,
                    l.n_x_upper,
                    report.acceptance.acceptance_with_attenuation,
                    out.display()
                ),
                None => println!("no limit (zero exposure) -> {}", out.display()),
            }
        }
        Command::Analyze { common, on, off } => {
            let config = common.load()?;
            let limit = cmd_analyze(&config, &on, &off)?;
            emit(&limit, common.out.as_deref(), "limit.json")?;
        }
        Command::Gains { variant, out } => {
            emit(&cmd_gains(variant)?, out.as_deref(), "gains.json")?;
        }
        Command::Project {
            limit,
            gain,
            time_ratio,
            out,
        } => {
            emit(
                &cmd_project(limit, gain, time_ratio)?,
                out.as_deref(),
                "projection.json",
            )?;
        }
        Command::SolidAngle(common) => {
            let config = common.load()?;
            let result = cmd_solid_angle(&config, config.geometry_samples, config.run.seed)?;
            emit(&result, common.out.as_deref(), "solid_angle.json")?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match threads_from_env() {
        Some(n) => with_workers(n, || run(cli)),
        None => run(cli),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
