//! Aggregates run summaries into one CSV: every per-seed row, followed by
//! an aggregate block per algorithm with mean, median, a 95% confidence
//! interval of the median, and quartiles suitable for external box plotting.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::CliError;

#[derive(Clone, Debug)]
struct Row {
    algorithm: String,
    env: String,
    variant: String,
    seed: String,
    normalized_return: f64,
}

fn read_summary(dir: &Path) -> Result<Vec<Row>, CliError> {
    let path = dir.join("summary.csv");
    if !path.exists() {
        return Err(CliError::Runtime(format!(
            "missing metrics: {} has no summary.csv",
            dir.display()
        )));
    }
    let mut reader = csv::Reader::from_path(&path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize, CliError> {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            CliError::Runtime(format!("{}: summary.csv lacks a `{name}` column", dir.display()))
        })
    };
    let (ca, ce, cv, cs, cn) = (
        col("algorithm")?,
        col("env")?,
        col("variant")?,
        col("seed")?,
        col("normalized_return")?,
    );
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        rows.push(Row {
            algorithm: record[ca].to_string(),
            env: record[ce].to_string(),
            variant: record[cv].to_string(),
            seed: record[cs].to_string(),
            normalized_return: record[cn].parse().map_err(|e| {
                CliError::Runtime(format!("{}: bad normalized_return: {e}", dir.display()))
            })?,
        });
    }
    if rows.is_empty() {
        return Err(CliError::Runtime(format!(
            "missing metrics: {} has an empty summary.csv",
            dir.display()
        )));
    }
    Ok(rows)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    // Linear interpolation between order statistics.
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn emit_report(run_dirs: &[PathBuf], out: &Path) -> Result<(), CliError> {
    if run_dirs.is_empty() {
        return Err(CliError::Config("report needs at least one run directory".into()));
    }
    let mut rows = Vec::new();
    for dir in run_dirs {
        rows.extend(read_summary(dir)?);
    }
    let mut w = csv::Writer::from_path(out)?;
    w.write_record([
        "kind",
        "algorithm",
        "env",
        "variant",
        "seed",
        "n",
        "normalized_return",
        "mean",
        "median",
        "median_ci_low",
        "median_ci_high",
        "q1",
        "q3",
        "min",
        "max",
    ])?;
    for r in &rows {
        w.write_record([
            "run",
            &r.algorithm,
            &r.env,
            &r.variant,
            &r.seed,
            "",
            &r.normalized_return.to_string(),
            "",
            "",
            "",
            "",
            "",
            "",
            "",
            "",
        ])?;
    }
    let mut groups: BTreeMap<(String, String, String), Vec<f64>> = BTreeMap::new();
    for r in &rows {
        groups
            .entry((r.algorithm.clone(), r.env.clone(), r.variant.clone()))
            .or_default()
            .push(r.normalized_return);
    }
    for ((algorithm, env, variant), mut values) in groups {
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let median = quantile(&values, 0.5);
        let q1 = quantile(&values, 0.25);
        let q3 = quantile(&values, 0.75);
        // Notched box-plot interval: median ± 1.57 · IQR / √n.
        let half = 1.57 * (q3 - q1) / (n as f64).sqrt();
        w.write_record([
            "aggregate".to_string(),
            algorithm,
            env,
            variant,
            String::new(),
            n.to_string(),
            String::new(),
            mean.to_string(),
            median.to_string(),
            (median - half).to_string(),
            (median + half).to_string(),
            q1.to_string(),
            q3.to_string(),
            values[0].to_string(),
            values[n - 1].to_string(),
        ])?;
    }
    w.flush()?;
    println!("report: {}", out.display());
    Ok(())
}
