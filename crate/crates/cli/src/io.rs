//! File plumbing: CSV tables, mask files, JSON summaries.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use corrsep::data::{load_csv_table, CsvOptions, CsvTable};
use corrsep::simulate::CorruptionMask;
use serde_json::{Map, Value};

use crate::{Failure, Globals};

pub fn read_table(path: &Path, header: bool, labels: bool) -> Result<CsvTable, Failure> {
    let options = CsvOptions {
        has_header: header,
        has_labels: labels,
        label_column: None,
    };
    load_csv_table(path, &options).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

/// File at `path`, or stdout.
pub fn sink(path: Option<&PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

pub fn write_masks(path: &Path, masks: &[CorruptionMask]) -> Result<(), Failure> {
    let mut w = sink(Some(&path.to_path_buf()))?;
    for m in masks {
        let line: Vec<&str> = m.0.iter().map(|&b| if b { "1" } else { "0" }).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_masks(path: &Path, dims: usize) -> Result<Vec<CorruptionMask>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            let cells: Vec<bool> = line
                .split(',')
                .map(|c| match c.trim() {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    other => Err(Failure::Data(format!("{}: row {i}: mask cell {other:?} is not 0 or 1", path.display()))),
                })
                .collect::<Result<_, _>>()?;
            if cells.len() != dims {
                return Err(Failure::Data(format!(
                    "{}: row {i} has {} cells, expected {dims}",
                    path.display(),
                    cells.len()
                )));
            }
            Ok(CorruptionMask(cells))
        })
        .collect()
}

/// `{"command", "config", "metrics", ...extra, "timestamp"?}`.
pub fn summary(command: &str, config: Map<String, Value>, metrics: Value, globals: &Globals) -> Value {
    let mut out = Map::new();
    out.insert("command".into(), command.into());
    out.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    if let Some(seed) = config.get("seed").cloned() {
        out.insert("seed".into(), seed);
    }
    out.insert("config".into(), Value::Object(config));
    out.insert("metrics".into(), metrics);
    if globals.timestamp {
        out.insert("timestamp".into(), chrono::Utc::now().to_rfc3339().into());
    }
    Value::Object(out)
}

pub fn write_json(path: Option<&PathBuf>, value: &Value) -> Result<(), Failure> {
    let mut w = sink(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Failure::Data(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}
