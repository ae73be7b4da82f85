//! Result emission: JSON lines or a flattened CSV table.
//!
//! Both formats round-trip: floats are written in shortest round-trip
//! form, and parsing a file back reproduces the aggregates exactly.
//!
//! CSV schema (one row per record):
//! `dataset,defense,attack,metric,seeds,task_metric_mean,task_metric_std,attack_success_mean,attack_success_std,mean_epoch_seconds`
//! with seeds joined by `;` and empty attack columns when no attack ran.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::ResultRecord;

pub const CSV_HEADER: &str = "dataset,defense,attack,metric,seeds,task_metric_mean,task_metric_std,attack_success_mean,attack_success_std,mean_epoch_seconds";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmitFormat {
    JsonLines,
    Csv,
}

impl EmitFormat {
    pub fn parse(s: &str) -> Result<EmitFormat> {
        match s {
            "json_lines" => Ok(EmitFormat::JsonLines),
            "csv" => Ok(EmitFormat::Csv),
            other => Err(Error::config(format!(
                "format must be json_lines or csv, got '{other}'"
            ))),
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One flattened CSV row for a record.
fn csv_row(record: &ResultRecord) -> String {
    let cfg = &record.config;
    let defense = cfg
        .defense
        .to_stack()
        .map(|s| s.describe())
        .unwrap_or_else(|_| "invalid".to_string());
    let seeds = cfg
        .evaluation
        .seeds
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .join(";");
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        cfg.dataset.describe(),
        defense,
        cfg.attack.kind,
        cfg.evaluation.metric.name(),
        seeds,
        record.aggregate.task_metric_mean,
        record.aggregate.task_metric_std,
        opt(record.aggregate.attack_success_mean),
        opt(record.aggregate.attack_success_std),
        record.aggregate.mean_epoch_seconds,
    )
}

/// Serializes records to the given writer.
pub fn write_results(
    records: &[ResultRecord],
    format: EmitFormat,
    out: &mut dyn Write,
) -> Result<()> {
    match format {
        EmitFormat::JsonLines => {
            for record in records {
                let line = serde_json::to_string(record)
                    .map_err(|e| Error::Schema(format!("json serialize: {e}")))?;
                writeln!(out, "{line}")?;
            }
        }
        EmitFormat::Csv => {
            if records.is_empty() {
                return Ok(());
            }
            writeln!(out, "{CSV_HEADER}")?;
            for record in records {
                writeln!(out, "{}", csv_row(record))?;
            }
        }
    }
    Ok(())
}

/// Writes records to a file, or to stdout when `path` is `None`.
/// An empty record list produces an empty file and succeeds.
pub fn emit_results(
    records: &[ResultRecord],
    format: EmitFormat,
    path: Option<&Path>,
) -> Result<()> {
    match path {
        Some(p) => {
            let mut file = std::fs::File::create(p)?;
            write_results(records, format, &mut file)?;
            file.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write_results(records, format, &mut lock)?;
        }
    }
    Ok(())
}

/// Parses a json_lines file back into records (used for round-trip
/// verification and downstream tooling).
pub fn read_json_lines(path: impl AsRef<Path>) -> Result<Vec<ResultRecord>> {
    let text = std::fs::read_to_string(path.as_ref())?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            serde_json::from_str(line).map_err(|e| Error::Schema(format!("json parse: {e}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{parse_config, run_experiment};

    fn tiny_record() -> ResultRecord {
        let cfg = parse_config(
            r#"
[dataset]
kind = "synthetic"
n = 80
d = 4
classes = 2
cluster_separation = 6.0
noise_std = 1.0

[split]
parties = 2

[model]
embedding_dim = 4
bottom_hidden = []
top_hidden = []

[sgd]
learning_rate = 0.1
batch_size = 16
epochs = 1

[evaluation]
metric = "top1"
seeds = [1]
"#,
        )
        .unwrap();
        run_experiment(&cfg).unwrap()
    }

    #[test]
    fn empty_record_list_writes_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        for format in [EmitFormat::JsonLines, EmitFormat::Csv] {
            let path = dir.path().join(format!("empty_{format:?}.out"));
            emit_results(&[], format, Some(&path)).unwrap();
            assert_eq!(std::fs::read_to_string(&path).unwrap(), "");
        }
    }

    #[test]
    fn json_lines_round_trip_reproduces_aggregates() {
        let record = tiny_record();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.jsonl");
        emit_results(
            &[record.clone(), record.clone()],
            EmitFormat::JsonLines,
            Some(&path),
        )
        .unwrap();
        let back = read_json_lines(&path).unwrap();
        assert_eq!(back.len(), 2);
        for b in &back {
            assert!(
                (b.aggregate.task_metric_mean - record.aggregate.task_metric_mean).abs() <= 1e-9
            );
            assert_eq!(b.config, record.config);
        }
    }

    #[test]
    fn csv_header_matches_documented_schema() {
        let record = tiny_record();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.csv");
        emit_results(&[record.clone()], EmitFormat::Csv, Some(&path)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        let row = lines.next().unwrap();
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 10);
        assert_eq!(fields[0], "synthetic(n=80;d=4;c=2)");
        assert_eq!(fields[1], "none");
        assert_eq!(fields[2], "none");
        assert_eq!(fields[3], "top1");
        assert_eq!(fields[4], "1");
        // Attack columns are empty without an attack.
        assert_eq!(fields[7], "");
        // Round-trip the aggregate mean through the printed form.
        let parsed: f64 = fields[5].parse().unwrap();
        assert_eq!(parsed, record.aggregate.task_metric_mean);
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let record = tiny_record();
        let err = emit_results(
            &[record],
            EmitFormat::Csv,
            Some(Path::new("/nonexistent-dir/results.csv")),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Io(_)));
    }
}
