use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use piwa_cli::commands::{self, FitRateArgs};
use piwa_cli::{CliResult, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "piwa",
    version,
    about = "SGD with weighted iterate averaging: experiment runner"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (TOML with dotted keys).
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> CliResult<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(dir) = &self.out {
            cfg.output.dir = dir.clone();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// One trace per seed for the configured scheme.
    Run(ConfigArgs),
    /// Every scheme and alpha of the sweep over every seed, plus summary.csv.
    Sweep(ConfigArgs),
    /// Coupled runs on neighbouring datasets.
    Stability(ConfigArgs),
    /// Stagewise proximal method.
    Stagewise(ConfigArgs),
    /// Write the configured dataset in LIBSVM format.
    GenData(ConfigArgs),
    /// Log-log fit of gap against iteration from trace files.
    FitRate {
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        /// Reference objective value.
        #[arg(long, allow_hyphen_values = true)]
        baseline: f64,
        /// Subtracted from the baseline so that gaps stay positive.
        #[arg(long, default_value_t = 0.0)]
        slack: f64,
        /// First iteration included.
        #[arg(long, default_value_t = 1)]
        from: usize,
        #[arg(long, default_value = "obj_avg")]
        column: String,
    },
}

fn report(paths: impl IntoIterator<Item = PathBuf>) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run(a) => report(commands::cmd_run(&a.load()?)?.into_iter().map(|r| r.path)),
        Command::Sweep(a) => {
            let out = commands::cmd_sweep(&a.load()?)?;
            report(
                out.results
                    .into_iter()
                    .map(|r| r.path)
                    .chain([out.summary_path]),
            );
        }
        Command::Stability(a) => {
            let out = commands::cmd_stability(&a.load()?)?;
            report([out.trials_path, out.summary_path]);
        }
        Command::Stagewise(a) => report([commands::cmd_stagewise(&a.load()?)?.path]),
        Command::GenData(a) => report(commands::cmd_gen_data(&a.load()?)?),
        Command::FitRate {
            traces,
            baseline,
            slack,
            from,
            column,
        } => {
            let fit = commands::cmd_fit_rate(&FitRateArgs {
                files: traces,
                baseline,
                slack,
                from,
                column,
            })?;
            println!(
                "slope={} intercept={} r2={} points={} skipped={}",
                fit.slope,
                fit.intercept,
                fit.r_squared,
                fit.points.len(),
                fit.skipped
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("piwa: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
