use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::{error, info};

use survens_bench::cli::{self, WORKERS_ENV};
use survens_bench::report::{emit_report, Format, Report};
use survens_bench::standins::write_standins;
use survens_bench::BenchError;

#[derive(Parser)]
#[command(name = "bench", version, about = "Survival model benchmarks and simulation sweeps")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
    Plotdata,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
            FormatArg::Plotdata => Format::Plotdata,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a benchmark config and write its JSON report.
    Run {
        config: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run a scenario sweep config and write its JSON report.
    Simulate {
        config: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Convert a JSON report into another format.
    Report {
        report: PathBuf,
        #[arg(short, long, value_enum)]
        format: FormatArg,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Write the synthetic stand-in tables and manifests.
    Standins {
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

fn configure_workers() -> Result<(), BenchError> {
    let Ok(value) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| BenchError::Config(format!("{WORKERS_ENV} must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| BenchError::Config(e.to_string()))
}

fn finish(report: &Report, path: &std::path::Path) -> ExitCode {
    let failed = report.failed_cells();
    info!("wrote {}", path.display());
    if failed > 0 {
        error!("{failed} cells failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    if let Err(e) = configure_workers() {
        error!("{e}");
        return ExitCode::from(2);
    }
    let outcome = match args.command {
        Command::Run { config, output } => cli::run(&config, output.as_deref()).map(|(r, p)| finish(&r, &p)),
        Command::Simulate { config, output } => {
            cli::simulate(&config, output.as_deref()).map(|(r, p)| finish(&r, &p))
        }
        Command::Report {
            report,
            format,
            out_dir,
        } => Report::load(&report).and_then(|r| {
            for path in emit_report(&r, format.into(), &out_dir)? {
                info!("wrote {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }),
        Command::Standins { out_dir } => write_standins(&out_dir).map(|paths| {
            for path in paths {
                info!("wrote {}", path.display());
            }
            ExitCode::SUCCESS
        }),
    };
    outcome.unwrap_or_else(|e| {
        error!("{e}");
        ExitCode::from(2)
    })
}
