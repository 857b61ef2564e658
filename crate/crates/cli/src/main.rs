use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use iqlidar::config::{parse_config, ExperimentConfig};
use iqlidar::experiment::{self, RunOutput, SweepParam, RECIPES};
use iqlidar::Error;

/// FMCW coherent imager simulator with an IQ receiver and row-column readout.
#[derive(Parser)]
#[command(name = "iqlidar", version)]
struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate frames and write depth maps, reports and a manifest.
    Simulate {
        #[command(flatten)]
        source: Source,
    },
    /// Re-run the experiment for each value of one parameter.
    Sweep {
        #[command(flatten)]
        source: Source,
        /// One of B, snr, N, leakage, linewidth.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true)]
        values: Vec<f64>,
    },
    /// Recompute depth maps from traces stored by a previous simulate run.
    Analyze {
        /// Output directory of a simulate run with `traces = true`.
        #[arg(long)]
        input: PathBuf,
        /// Configuration to use instead of the stored one.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// List built-in experiments, or print one's configuration.
    Recipes {
        /// Print this recipe's configuration file.
        #[arg(long)]
        show: Option<String>,
    },
}

#[derive(Args)]
struct Source {
    /// Configuration file.
    #[arg(long, conflicts_with = "recipe", required_unless_present = "recipe")]
    config: Option<PathBuf>,
    /// Built-in experiment name, see `iqlidar recipes`.
    #[arg(long)]
    recipe: Option<String>,
    /// Master seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Source {
    fn load(&self) -> Result<(ExperimentConfig, PathBuf), Error> {
        let mut cfg = match (&self.config, &self.recipe) {
            (Some(path), _) => load_config(path)?,
            (None, Some(name)) => experiment::recipe(name)?.parse()?,
            (None, None) => {
                return Err(Error::Usage(
                    "either --config or --recipe is required".into(),
                ))
            }
        };
        if let Some(seed) = self.seed {
            cfg = cfg.with_seed(seed)?;
        }
        let out = self
            .out
            .clone()
            .unwrap_or_else(|| PathBuf::from(&cfg.file.output.dir));
        Ok((cfg, out))
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Usage(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text)
}

fn report(out: &Path, run: &RunOutput) {
    println!("wrote {} files to {}", run.artifacts.len(), out.display());
    let map = &run.maps[0];
    let ok: Vec<f64> = map
        .estimates
        .iter()
        .filter(|e| e.quality == iqlidar::PeakQuality::Ok)
        .map(|e| e.range)
        .collect();
    println!(
        "frame 0: {}/{} pixels with a clean peak",
        ok.len(),
        map.estimates.len()
    );
    if let Some(r) = &run.report {
        if let (Some(sigma), Some(ratio)) = (r.pooled_sigma, r.pooled_ratio) {
            println!(
                "pooled sigma_R = {sigma:.3e} m, sigma_R/R = {ratio:.3e} over {} frames",
                r.frames
            );
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate { source } => {
            let (cfg, out) = source.load()?;
            let run = experiment::run_simulate(&cfg, &out)?;
            report(&out, &run);
        }
        Command::Sweep {
            source,
            param,
            values,
        } => {
            let param: SweepParam = param.parse()?;
            let (cfg, out) = source.load()?;
            let rows = experiment::run_sweep(&cfg, param, &values, &out)?;
            print!("{}", experiment::sweep_csv(param, &rows));
        }
        Command::Analyze { input, config, out } => {
            let cfg = config.as_deref().map(load_config).transpose()?;
            let run = experiment::run_analyze(&input, &out, cfg.as_ref())?;
            report(&out, &run);
        }
        Command::Recipes { show: Some(name) } => print!("{}", experiment::recipe(&name)?.config),
        Command::Recipes { show: None } => {
            let width = RECIPES.iter().map(|r| r.name.len()).max().unwrap_or(0);
            for r in RECIPES {
                println!("{:width$}  {}", r.name, r.description);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(k.into())
            .build_global()
        {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(3);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 2 } else { 3 })
        }
    }
}
