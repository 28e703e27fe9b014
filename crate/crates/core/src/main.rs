use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dtm_nav::scenario::{
    emit_report, load_config, run_flight, run_monte_carlo, ConfigError, Report, ScenarioConfig, ScenarioError, SweepParam,
};
use dtm_nav::selftest::run_selftest;

const EXIT_INVALID: u8 = 1;
const EXIT_IO: u8 = 2;

#[derive(Parser)]
#[command(name = "dtm-nav", version, about = "Terrain-referenced visual navigation scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo sensitivity sweep over one scenario parameter.
    Sweep {
        /// Scenario file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// features, resolution, grid_spacing, relief or translation_magnitude.
        #[arg(long)]
        param: String,
        /// Comma-separated sweep values.
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        values: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Closed-loop INS/vision flight.
    Flight {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs the built-in consistency checks.
    Selftest,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        let code = match e {
            ScenarioError::Config(ConfigError::Io { .. }) => EXIT_IO,
            _ => EXIT_INVALID,
        };
        Self { code, message: e.to_string() }
    }
}

fn config(path: Option<&Path>) -> Result<ScenarioConfig, Failure> {
    let cfg = match path {
        Some(p) => load_config(p).map_err(ScenarioError::from)?,
        None => ScenarioConfig::default(),
    };
    Ok(cfg)
}

fn write(report: Report<'_>, out: &Path) -> Result<(), Failure> {
    let files = emit_report(report, out).map_err(|e| Failure { code: EXIT_IO, message: e.to_string() })?;
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Sweep { config: path, param, values, out } => {
            let cfg = config(path.as_deref())?;
            let param: SweepParam = param.parse()?;
            let table = run_monte_carlo(&cfg, param, &values)?;
            write(Report::Metrics(&table), &out)
        }
        Command::Flight { config: path, out } => {
            let cfg = config(path.as_deref())?;
            let log = run_flight(&cfg)?;
            write(Report::Trajectory(&log), &out)
        }
        Command::Selftest => {
            let checks = run_selftest();
            for c in &checks {
                println!("{c}");
            }
            let failed = checks.iter().filter(|c| !c.pass).count();
            if failed == 0 {
                Ok(())
            } else {
                Err(Failure { code: EXIT_INVALID, message: format!("{failed} of {} checks failed", checks.len()) })
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_INVALID) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("dtm-nav: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
