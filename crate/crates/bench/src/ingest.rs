//! Delimited-text datasets: column selection, one-hot encoding of
//! categoricals, optional standardization and missing-row removal.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use survens::data::{Dataset, Subject};

use crate::error::BenchError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub path: PathBuf,
    pub time_column: String,
    pub event_column: String,
    #[serde(default)]
    pub categorical_columns: Vec<String>,
    #[serde(default)]
    pub drop_columns: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Standardize {
    /// Leave covariates on their original scale.
    #[default]
    None,
    /// Zero mean and unit variance using the whole file.
    FullData,
}

const MISSING: [&str; 5] = ["", "NA", "NaN", "nan", "?"];

fn is_missing(v: &str) -> bool {
    MISSING.contains(&v.trim())
}

fn parse_number(v: &str, row: usize, column: &str) -> Result<f64, BenchError> {
    let v = v.trim();
    v.parse::<f64>().map_err(|_| BenchError::ParseFailure {
        row,
        column: column.to_string(),
        value: v.to_string(),
    })
}

fn parse_event(v: &str, row: usize, column: &str) -> Result<bool, BenchError> {
    match v.trim().to_ascii_lowercase().as_str() {
        "1" | "1.0" | "true" | "yes" => Ok(true),
        "0" | "0.0" | "false" | "no" => Ok(false),
        other => Err(BenchError::ParseFailure {
            row,
            column: column.to_string(),
            value: other.to_string(),
        }),
    }
}

/// Reads `manifest.path` (resolved against `base` when relative).
pub fn ingest(manifest: &DatasetManifest, base: &Path, standardize: Standardize) -> Result<Dataset, BenchError> {
    let path = if manifest.path.is_absolute() {
        manifest.path.clone()
    } else {
        base.join(&manifest.path)
    };
    let text = std::fs::read_to_string(&path).map_err(|e| BenchError::io(&path, e))?;
    ingest_str(manifest, &text, standardize)
}

pub fn ingest_str(manifest: &DatasetManifest, text: &str, standardize: Standardize) -> Result<Dataset, BenchError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| BenchError::io(&manifest.path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let column = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| BenchError::MissingColumn(name.to_string()))
    };
    let time_col = column(&manifest.time_column)?;
    let event_col = column(&manifest.event_column)?;
    for c in manifest.categorical_columns.iter().chain(&manifest.drop_columns) {
        column(c)?;
    }
    if time_col == event_col {
        return Err(BenchError::Config("time and event columns must differ".into()));
    }
    let covariate_cols: Vec<usize> = (0..header.len())
        .filter(|&j| j != time_col && j != event_col && !manifest.drop_columns.contains(&header[j]))
        .collect();
    if covariate_cols
        .iter()
        .any(|&j| header[j] == manifest.time_column || header[j] == manifest.event_column)
    {
        return Err(BenchError::Config("time/event columns overlap covariates".into()));
    }

    let mut records = Vec::new();
    let mut dropped = 0usize;
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| BenchError::io(&manifest.path, e))?;
        let fields: Vec<String> = rec.iter().map(str::to_string).collect();
        let used = covariate_cols.iter().chain([&time_col, &event_col]);
        if used.clone().any(|&j| fields.get(j).map_or(true, |v| is_missing(v))) {
            dropped += 1;
            continue;
        }
        records.push((row, fields));
    }
    if dropped > 0 {
        log::warn!("{}: dropped {dropped} rows with missing values", manifest.name);
    }

    // Levels of each categorical column in sorted order; the first is the
    // reference level.
    let mut names = Vec::new();
    let mut encoders: Vec<(usize, Option<Vec<String>>)> = Vec::new();
    for &j in &covariate_cols {
        if manifest.categorical_columns.contains(&header[j]) {
            let levels: BTreeSet<String> = records.iter().map(|(_, f)| f[j].trim().to_string()).collect();
            let levels: Vec<String> = levels.into_iter().collect();
            for level in levels.iter().skip(1) {
                names.push(format!("{}={}", header[j], level));
            }
            encoders.push((j, Some(levels)));
        } else {
            names.push(header[j].clone());
            encoders.push((j, None));
        }
    }

    let mut subjects = Vec::with_capacity(records.len());
    for (row, fields) in &records {
        let mut x = Vec::with_capacity(names.len());
        for (j, levels) in &encoders {
            match levels {
                Some(levels) => {
                    let v = fields[*j].trim();
                    x.extend(levels.iter().skip(1).map(|l| if l == v { 1.0 } else { 0.0 }));
                }
                None => x.push(parse_number(&fields[*j], *row, &header[*j])?),
            }
        }
        let time = parse_number(&fields[time_col], *row, &header[time_col])?;
        let event = parse_event(&fields[event_col], *row, &header[event_col])?;
        subjects.push(Subject::new(x, time, event));
    }
    let dataset = Dataset::new(subjects, names)?;
    Ok(match standardize {
        Standardize::None => dataset,
        Standardize::FullData => {
            let (mean, sd) = dataset.column_moments();
            dataset.standardized_with(&mean, &sd)
        }
    })
}

/// Stratified `(train, validation)` split; `fraction` of the events and of
/// the censored subjects go to train.
pub fn split(dataset: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset), BenchError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(BenchError::Config("split fraction must lie in (0, 1)".into()));
    }
    let (a, b) = dataset.stratified_split(fraction, seed);
    let events = |idx: &[usize]| idx.iter().filter(|&&i| dataset.subjects()[i].event).count();
    let (ea, eb) = (events(&a), events(&b));
    if ea < 2 || eb < 2 {
        return Err(BenchError::TooSmall { events: ea.min(eb) });
    }
    Ok((dataset.subset(&a)?, dataset.subset(&b)?))
}

/// Stratified fold labels in `0..k`: events and censored subjects are
/// shuffled separately and dealt round-robin.
pub fn stratified_folds(dataset: &Dataset, k: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; dataset.len()];
    let mut next = 0;
    for event in [true, false] {
        let mut idx: Vec<usize> = (0..dataset.len())
            .filter(|&i| dataset.subjects()[i].event == event)
            .collect();
        idx.shuffle(&mut rng);
        for i in idx {
            fold[i] = next % k;
            next += 1;
        }
    }
    fold
}

/// `(train, held-out)` datasets of fold `f`.
pub fn fold_split(dataset: &Dataset, folds: &[usize], f: usize) -> Result<(Dataset, Dataset), BenchError> {
    let (held, rest): (Vec<usize>, Vec<usize>) = (0..dataset.len()).partition(|&i| folds[i] == f);
    Ok((dataset.subset(&rest)?, dataset.subset(&held)?))
}
