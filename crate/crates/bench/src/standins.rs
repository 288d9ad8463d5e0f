//! Synthetic stand-ins shaped like the three public benchmark tables:
//! same row counts, encoded feature counts and censored fractions, with
//! covariate columns named after the originals. Values are simulated.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::BenchError;
use crate::ingest::DatasetManifest;

#[derive(Debug, Clone, Copy)]
enum Column {
    /// Gaussian with the given mean and sd, printed with `digits` decimals.
    Numeric { mean: f64, sd: f64, digits: usize },
    /// Log-normal with the given log-mean and log-sd.
    Skewed { mu: f64, sigma: f64, digits: usize },
    /// Integer uniform on `lo..=hi`.
    Ordinal { lo: i64, hi: i64 },
    /// One of the listed levels, uniformly.
    Levels(&'static [&'static str]),
}

struct Table {
    name: &'static str,
    rows: usize,
    censored: usize,
    time_column: &'static str,
    event_column: &'static str,
    id_column: Option<&'static str>,
    columns: &'static [(&'static str, Column)],
    seed: u64,
}

const YES_NO: &[&str] = &["no", "yes"];

const PBC: Table = Table {
    name: "pbc",
    rows: 276,
    censored: 165,
    time_column: "time",
    event_column: "status",
    id_column: Some("id"),
    columns: &[
        ("age", Column::Numeric { mean: 50.0, sd: 10.0, digits: 1 }),
        ("sex", Column::Ordinal { lo: 0, hi: 1 }),
        ("ascites", Column::Ordinal { lo: 0, hi: 1 }),
        ("hepato", Column::Ordinal { lo: 0, hi: 1 }),
        ("spiders", Column::Ordinal { lo: 0, hi: 1 }),
        ("edema", Column::Levels(&["0", "0.5", "1"])),
        ("bili", Column::Skewed { mu: 0.6, sigma: 1.0, digits: 1 }),
        ("chol", Column::Skewed { mu: 5.8, sigma: 0.4, digits: 0 }),
        ("albumin", Column::Numeric { mean: 3.5, sd: 0.4, digits: 2 }),
        ("copper", Column::Skewed { mu: 4.2, sigma: 0.8, digits: 0 }),
        ("alk_phos", Column::Skewed { mu: 7.2, sigma: 0.7, digits: 0 }),
        ("ast", Column::Skewed { mu: 4.7, sigma: 0.4, digits: 1 }),
        ("platelet", Column::Numeric { mean: 260.0, sd: 90.0, digits: 0 }),
        ("stage", Column::Levels(&["1", "2", "3", "4"])),
    ],
    seed: 0x5EED_0001,
};

const GBCSG2: Table = Table {
    name: "gbcsg2",
    rows: 686,
    censored: 387,
    time_column: "time",
    event_column: "cens",
    id_column: None,
    columns: &[
        ("horTh", Column::Levels(YES_NO)),
        ("age", Column::Numeric { mean: 53.0, sd: 10.0, digits: 0 }),
        ("menostat", Column::Levels(&["Post", "Pre"])),
        ("tsize", Column::Skewed { mu: 3.2, sigma: 0.45, digits: 0 }),
        ("tgrade", Column::Ordinal { lo: 1, hi: 3 }),
        ("pnodes", Column::Skewed { mu: 1.2, sigma: 0.9, digits: 0 }),
        ("progrec", Column::Skewed { mu: 3.9, sigma: 1.5, digits: 0 }),
        ("estrec", Column::Skewed { mu: 3.9, sigma: 1.5, digits: 0 }),
    ],
    seed: 0x5EED_0002,
};

const TLCM: Table = Table {
    name: "tlcm",
    rows: 7043,
    censored: 5141,
    time_column: "tenure",
    event_column: "churn",
    id_column: Some("customer_id"),
    columns: &[
        ("gender", Column::Levels(&["Female", "Male"])),
        ("senior_citizen", Column::Ordinal { lo: 0, hi: 1 }),
        ("partner", Column::Levels(YES_NO)),
        ("dependents", Column::Levels(YES_NO)),
        ("phone_service", Column::Levels(YES_NO)),
        ("multiple_lines", Column::Levels(YES_NO)),
        ("internet_service", Column::Levels(&["DSL", "Fiber optic", "No"])),
        ("online_security", Column::Levels(YES_NO)),
        ("tech_support", Column::Levels(YES_NO)),
        ("streaming_tv", Column::Levels(YES_NO)),
        ("contract", Column::Levels(&["Month-to-month", "One year", "Two year"])),
        ("paperless_billing", Column::Levels(YES_NO)),
        (
            "payment_method",
            Column::Levels(&["Bank transfer", "Credit card", "Electronic check", "Mailed check"]),
        ),
        ("monthly_charges", Column::Numeric { mean: 65.0, sd: 30.0, digits: 2 }),
        ("total_charges", Column::Skewed { mu: 7.3, sigma: 1.2, digits: 2 }),
    ],
    seed: 0x5EED_0003,
};

const TABLES: [&Table; 3] = [&PBC, &GBCSG2, &TLCM];

/// Names of the shipped stand-ins.
pub fn standin_names() -> Vec<&'static str> {
    TABLES.iter().map(|t| t.name).collect()
}

fn categorical_columns(table: &Table) -> Vec<String> {
    table
        .columns
        .iter()
        .filter(|(_, c)| matches!(c, Column::Levels(_)))
        .map(|(n, _)| n.to_string())
        .collect()
}

pub fn standin_manifest(name: &str) -> Option<DatasetManifest> {
    let table = TABLES.iter().find(|t| t.name == name)?;
    Some(DatasetManifest {
        name: table.name.to_string(),
        path: PathBuf::from(format!("{}.csv", table.name)),
        time_column: table.time_column.to_string(),
        event_column: table.event_column.to_string(),
        categorical_columns: categorical_columns(table),
        drop_columns: table.id_column.map(|c| vec![c.to_string()]).unwrap_or_default(),
    })
}

/// Standardized contribution of one drawn value to the linear predictor.
fn signal(column: Column, drawn: f64) -> f64 {
    match column {
        Column::Numeric { mean, sd, .. } => (drawn - mean) / sd,
        Column::Skewed { mu, sigma, .. } => (drawn.ln() - mu) / sigma,
        Column::Ordinal { lo, hi } => {
            let mid = (lo + hi) as f64 / 2.0;
            let half = ((hi - lo) as f64 / 2.0).max(0.5);
            (drawn - mid) / half
        }
        Column::Levels(levels) => drawn / (levels.len() - 1).max(1) as f64 - 0.5,
    }
}

fn format_value(column: Column, drawn: f64) -> String {
    match column {
        Column::Numeric { digits, .. } | Column::Skewed { digits, .. } => format!("{drawn:.digits$}"),
        Column::Ordinal { .. } => format!("{}", drawn as i64),
        Column::Levels(levels) => levels[drawn as usize].to_string(),
    }
}

/// CSV text of one stand-in table.
pub fn standin_csv(name: &str) -> Option<String> {
    let table = TABLES.iter().find(|t| t.name == name)?;
    let mut rng = ChaCha8Rng::seed_from_u64(table.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    // Coefficients on the standardized scale; about half the columns matter.
    let beta: Vec<f64> = table
        .columns
        .iter()
        .enumerate()
        .map(|(j, _)| if j % 2 == 0 { 0.6 * normal.sample(&mut rng) } else { 0.0 })
        .collect();
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::with_capacity(table.rows);
    for _ in 0..table.rows {
        let mut eta = 0.0;
        let values: Vec<f64> = table
            .columns
            .iter()
            .zip(&beta)
            .map(|(&(_, col), b)| {
                let v = match col {
                    Column::Numeric { mean, sd, .. } => mean + sd * normal.sample(&mut rng),
                    Column::Skewed { mu, sigma, .. } => (mu + sigma * normal.sample(&mut rng)).exp(),
                    Column::Ordinal { lo, hi } => rng.gen_range(lo..=hi) as f64,
                    Column::Levels(levels) => rng.gen_range(0..levels.len()) as f64,
                };
                eta += b * signal(col, v);
                v
            })
            .collect();
        // Weibull proportional hazards, shape 1.3, baseline scale 1000.
        let u: f64 = rng.gen_range(f64::EPSILON..1.0);
        let t = 1000.0 * (-u.ln() * (-eta).exp()).powf(1.0 / 1.3);
        rows.push((values, t));
    }
    // Exactly `censored` rows are censored at a uniform fraction of their time.
    let mut order: Vec<usize> = (0..table.rows).collect();
    order.shuffle(&mut rng);
    let mut censored = vec![false; table.rows];
    for &i in &order[..table.censored] {
        censored[i] = true;
    }
    let mut out = String::new();
    let mut header: Vec<&str> = Vec::new();
    if let Some(id) = table.id_column {
        header.push(id);
    }
    header.extend(table.columns.iter().map(|(n, _)| *n));
    header.push(table.time_column);
    header.push(table.event_column);
    out.push_str(&header.join(","));
    out.push('\n');
    for (i, (values, t)) in rows.iter().enumerate() {
        let observed = if censored[i] { t * rng.gen_range(0.05..1.0) } else { *t };
        let observed = observed.max(1.0).round();
        let mut fields: Vec<String> = Vec::new();
        if table.id_column.is_some() {
            fields.push(format!("{}", i + 1));
        }
        fields.extend(table.columns.iter().zip(values).map(|(&(_, c), &v)| format_value(c, v)));
        fields.push(format!("{observed}"));
        fields.push(if censored[i] { "0" } else { "1" }.to_string());
        let _ = writeln!(out, "{}", fields.join(","));
    }
    Some(out)
}

fn manifest_toml(m: &DatasetManifest) -> String {
    let list = |v: &[String]| {
        v.iter().map(|s| format!("\"{s}\"")).collect::<Vec<_>>().join(", ")
    };
    format!(
        "name = \"{}\"\npath = \"{}\"\ntime_column = \"{}\"\nevent_column = \"{}\"\ncategorical_columns = [{}]\ndrop_columns = [{}]\n",
        m.name,
        m.path.display(),
        m.time_column,
        m.event_column,
        list(&m.categorical_columns),
        list(&m.drop_columns),
    )
}

/// Writes `<name>.csv` and `<name>.toml` for every stand-in into `dir`.
pub fn write_standins(dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    let mut written = Vec::new();
    for name in standin_names() {
        let csv = standin_csv(name).expect("known stand-in");
        let manifest = standin_manifest(name).expect("known stand-in");
        let csv_path = dir.join(format!("{name}.csv"));
        std::fs::write(&csv_path, csv).map_err(|e| BenchError::io(&csv_path, e))?;
        let toml_path = dir.join(format!("{name}.toml"));
        std::fs::write(&toml_path, manifest_toml(&manifest)).map_err(|e| BenchError::io(&toml_path, e))?;
        written.push(csv_path);
        written.push(toml_path);
    }
    Ok(written)
}
