//! Report file formats: full JSON, flat CSV and long-format plot tables.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use survens::simulate::ScenarioResult;

use crate::benchmark::BenchReport;
use crate::error::BenchError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Report {
    Benchmark(BenchReport),
    Scenario(ScenarioResult),
}

impl Report {
    pub fn to_json(&self) -> Result<String, BenchError> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| BenchError::Config(e.to_string()))?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self, BenchError> {
        serde_json::from_str(text).map_err(|e| BenchError::Config(format!("invalid report: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        Self::from_json(&text)
    }

    /// Cells whose score could not be computed.
    pub fn failed_cells(&self) -> usize {
        match self {
            Report::Benchmark(r) => r.failed_cells(),
            Report::Scenario(r) => r.failures.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    Plotdata,
}

#[derive(Debug, Serialize)]
struct FlatRow<'a> {
    row: &'a str,
    dataset: &'a str,
    model: &'a str,
    split: Option<usize>,
    metric: &'a str,
    value: Option<f64>,
    sd: Option<f64>,
    n: Option<usize>,
    error: Option<&'a str>,
}

#[derive(Debug, Serialize)]
struct BoxRow<'a> {
    dataset: &'a str,
    model: &'a str,
    split: usize,
    metric: &'a str,
    value: f64,
}

#[derive(Debug, Serialize)]
struct BarRow<'a> {
    dataset: &'a str,
    model: &'a str,
    metric: &'a str,
    mean: Option<f64>,
    sd: Option<f64>,
}

#[derive(Debug, Serialize)]
struct TraceRow<'a> {
    dataset: &'a str,
    split: usize,
    fold: usize,
    step: usize,
    objective: f64,
}

#[derive(Debug, Serialize)]
struct WeightRow<'a> {
    dataset: &'a str,
    split: usize,
    component: &'a str,
    weight: f64,
}

#[derive(Debug, Serialize)]
struct SweepRow<'a> {
    axis: String,
    generator: &'a str,
    grid_value: f64,
    model: &'a str,
    metric: &'a str,
    mean: Option<f64>,
    sd: Option<f64>,
    replications: usize,
    failed: usize,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| BenchError::IoFailure {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let fail = |e: csv::Error| BenchError::IoFailure {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    for row in rows {
        w.serialize(row).map_err(fail)?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))?;
    Ok(())
}

fn axis_name(r: &ScenarioResult) -> String {
    serde_json::to_value(r.axis)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn sweep_rows(r: &ScenarioResult) -> Vec<SweepRow<'_>> {
    let axis = axis_name(r);
    r.cells
        .iter()
        .map(|c| SweepRow {
            axis: axis.clone(),
            generator: r.generator.name(),
            grid_value: c.grid_value,
            model: &c.model,
            metric: c.metric.name(),
            mean: finite(c.mean),
            sd: finite(c.sd),
            replications: c.replications,
            failed: c.failed,
        })
        .collect()
}

/// Writes `report` into `out_dir` and returns the files created.
///
/// `json` writes `report.json`; `csv` writes `report.csv` with one row per
/// cell and per aggregate (or per sweep cell); `plotdata` writes
/// `boxplot.csv`, `overall.csv`, `weights.csv` and `ensemble_trace.csv` for
/// a benchmark, and `sweep.csv` for a scenario.
pub fn emit_report(report: &Report, format: Format, out_dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    std::fs::create_dir_all(out_dir).map_err(|e| BenchError::io(out_dir, e))?;
    let mut written = Vec::new();
    match format {
        Format::Json => {
            let path = out_dir.join("report.json");
            std::fs::write(&path, report.to_json()?).map_err(|e| BenchError::io(&path, e))?;
            written.push(path);
        }
        Format::Csv => {
            let path = out_dir.join("report.csv");
            match report {
                Report::Benchmark(r) => {
                    let cells = r.cells.iter().map(|c| FlatRow {
                        row: "cell",
                        dataset: &c.dataset,
                        model: &c.model,
                        split: Some(c.split),
                        metric: c.metric.name(),
                        value: c.value,
                        sd: None,
                        n: None,
                        error: c.error.as_deref(),
                    });
                    let aggregates = r.aggregates.iter().map(|a| FlatRow {
                        row: "aggregate",
                        dataset: &a.dataset,
                        model: &a.model,
                        split: None,
                        metric: a.metric.name(),
                        value: finite(a.mean),
                        sd: finite(a.sd),
                        n: Some(a.n),
                        error: None,
                    });
                    write_csv(&path, cells.chain(aggregates))?;
                }
                Report::Scenario(r) => write_csv(&path, sweep_rows(r))?,
            }
            written.push(path);
        }
        Format::Plotdata => match report {
            Report::Benchmark(r) => {
                let path = out_dir.join("boxplot.csv");
                write_csv(
                    &path,
                    r.cells.iter().filter_map(|c| {
                        c.value.map(|value| BoxRow {
                            dataset: &c.dataset,
                            model: &c.model,
                            split: c.split,
                            metric: c.metric.name(),
                            value,
                        })
                    }),
                )?;
                written.push(path);
                let path = out_dir.join("overall.csv");
                write_csv(
                    &path,
                    r.aggregates.iter().map(|a| BarRow {
                        dataset: &a.dataset,
                        model: &a.model,
                        metric: a.metric.name(),
                        mean: finite(a.mean),
                        sd: finite(a.sd),
                    }),
                )?;
                written.push(path);
                let path = out_dir.join("weights.csv");
                write_csv(
                    &path,
                    r.ensembles.iter().flat_map(|e| {
                        e.components.iter().zip(&e.weights).map(move |(c, &w)| WeightRow {
                            dataset: &e.dataset,
                            split: e.split,
                            component: c,
                            weight: w,
                        })
                    }),
                )?;
                written.push(path);
                let path = out_dir.join("ensemble_trace.csv");
                write_csv(
                    &path,
                    r.ensembles.iter().flat_map(|e| {
                        e.fold_traces.iter().enumerate().flat_map(move |(fold, trace)| {
                            trace.iter().enumerate().map(move |(step, &objective)| TraceRow {
                                dataset: &e.dataset,
                                split: e.split,
                                fold,
                                step,
                                objective,
                            })
                        })
                    }),
                )?;
                written.push(path);
            }
            Report::Scenario(r) => {
                let path = out_dir.join("sweep.csv");
                write_csv(&path, sweep_rows(r))?;
                written.push(path);
            }
        },
    }
    Ok(written)
}
