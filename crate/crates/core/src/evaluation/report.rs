use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde_json::{json, Value};

use super::{AggregateReport, Metric, SkipReason, VerdictRecord};

/// Decimal form shared by every artifact so the same ratio always prints
/// identically. Zero denominators print as `undefined`.
pub fn format_ratio(m: &Metric) -> String {
    match m.value() {
        Some(v) => format!("{v:.6}"),
        None => "undefined".to_string(),
    }
}

fn metric_json(m: &Metric) -> Value {
    json!({
        "numerator": m.numerator,
        "denominator": m.denominator,
        "value": m.value(),
        "display": format_ratio(m),
    })
}

pub fn write_records(path: &Path, records: &[VerdictRecord]) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

#[derive(Debug, thiserror::Error)]
pub enum RecordsError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: {source}")]
    Json { path: String, line: usize, source: serde_json::Error },
}

pub fn read_records(path: &Path) -> Result<Vec<VerdictRecord>, RecordsError> {
    let io = |source| RecordsError::Io { path: path.display().to_string(), source };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line)
            .map_err(|source| RecordsError::Json { path: path.display().to_string(), line: i + 1, source })?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_aggregate_json(path: &Path, report: &AggregateReport) -> std::io::Result<()> {
    let groups: Vec<Value> = report
        .groups
        .iter()
        .map(|(k, s)| {
            let skipped: serde_json::Map<String, Value> =
                s.skipped.iter().map(|(r, n)| (r.as_str().to_string(), json!(n))).collect();
            json!({
                "task": k.task,
                "model": k.model,
                "kind": k.kind,
                "config": k.config,
                "records": s.records,
                "classified": s.classified,
                "correct": s.correct,
                "faithful": s.faithful,
                "not_faithful": s.not_faithful,
                "skipped": skipped,
                "accuracy": metric_json(&s.accuracy()),
                "faithfulness": metric_json(&s.faithfulness()),
            })
        })
        .collect();
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &json!({ "groups": groups }))?;
    w.write_all(b"\n")?;
    w.flush()
}

pub fn write_aggregate_csv(path: &Path, report: &AggregateReport) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = [
        "task", "model", "kind", "config", "records", "classified", "correct", "accuracy", "faithful", "not_faithful",
        "faithfulness",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(SkipReason::ALL.iter().map(|r| format!("skipped_{}", r.as_str().replace('-', "_"))));
    w.write_record(&header)?;
    for (k, s) in &report.groups {
        let mut row = vec![
            k.task.to_string(),
            k.model.clone(),
            k.kind.to_string(),
            k.config.clone(),
            s.records.to_string(),
            s.classified.to_string(),
            s.correct.to_string(),
            format_ratio(&s.accuracy()),
            s.faithful.to_string(),
            s.not_faithful.to_string(),
            format_ratio(&s.faithfulness()),
        ];
        row.extend(SkipReason::ALL.iter().map(|r| s.skipped.get(r).copied().unwrap_or(0).to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Long-format rows for grouped bar charts: one row per group and metric.
pub fn write_plot_data(path: &Path, report: &AggregateReport) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["kind", "task", "model", "config", "metric", "numerator", "denominator", "value"])?;
    let mut rows: Vec<_> = report.groups.iter().collect();
    rows.sort_by(|a, b| (a.0.kind, a.0.task, &a.0.model, &a.0.config).cmp(&(b.0.kind, b.0.task, &b.0.model, &b.0.config)));
    for (k, s) in rows {
        for (name, m) in [("faithfulness", s.faithfulness()), ("accuracy", s.accuracy())] {
            w.write_record([
                k.kind.to_string(),
                k.task.to_string(),
                k.model.clone(),
                k.config.clone(),
                name.to_string(),
                m.numerator.to_string(),
                m.denominator.to_string(),
                format_ratio(&m),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
