//! The work behind each CLI verb, separated from argument parsing.

use std::path::{Path, PathBuf};

use survens::simulate::run_scenario;

use crate::benchmark::run_benchmark;
use crate::config::{BenchConfig, SimulateConfig};
use crate::error::BenchError;
use crate::report::Report;

/// Environment variable holding the worker-pool size.
pub const WORKERS_ENV: &str = "SURVENS_WORKERS";

fn config_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Where a report goes: the command-line override, else the config's
/// `output` resolved against the config's directory, else
/// `<config stem>.report.json` in the working directory.
pub fn report_path(config_path: &Path, configured: Option<&Path>, cli: Option<&Path>) -> PathBuf {
    if let Some(p) = cli {
        return p.to_path_buf();
    }
    if let Some(p) = configured {
        return if p.is_absolute() { p.to_path_buf() } else { config_dir(config_path).join(p) };
    }
    let stem = config_path.file_stem().and_then(|s| s.to_str()).unwrap_or("bench");
    PathBuf::from(format!("{stem}.report.json"))
}

pub fn write_report(report: &Report, path: &Path) -> Result<(), BenchError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    }
    std::fs::write(path, report.to_json()?).map_err(|e| BenchError::io(path, e))
}

/// `bench run`: runs the benchmark described by the config file and writes
/// the JSON report.
pub fn run(config_path: &Path, output: Option<&Path>) -> Result<(Report, PathBuf), BenchError> {
    let config = BenchConfig::load(config_path)?;
    let report = Report::Benchmark(run_benchmark(&config, &config_dir(config_path))?);
    let path = report_path(config_path, config.output.as_deref(), output);
    write_report(&report, &path)?;
    Ok((report, path))
}

/// `bench simulate`: runs a scenario sweep and writes the JSON report.
pub fn simulate(config_path: &Path, output: Option<&Path>) -> Result<(Report, PathBuf), BenchError> {
    let config = SimulateConfig::load(config_path)?;
    let result = run_scenario(&config.scenario, &config.generator, &config.models)?;
    let report = Report::Scenario(result);
    let path = report_path(config_path, config.output.as_deref(), output);
    write_report(&report, &path)?;
    Ok((report, path))
}
