//! Output directory, CSV and JSON writers.

use std::fs;
use std::path::{Path, PathBuf};

use qlbe::config::RunConfig;
use qlbe::grid::Cell;
use qlbe::{Error, Result};
use serde::Serialize;

/// Creates the output directory and echoes the effective configuration.
pub fn prepare(config: &RunConfig) -> Result<()> {
    fs::create_dir_all(&config.output)?;
    write_json(&config.output.join("effective_config.json"), config)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Writes a header row and data rows.
pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(header).map_err(csv_error)?;
    for r in rows {
        w.write_record(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}

/// Shortest round-trip text of `x`, scientific outside [1e-4, 1e15).
pub fn fmt(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e15).contains(&a) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

/// Formats an optional number; missing values become empty fields.
pub fn num(x: Option<f64>) -> String {
    x.map(fmt).unwrap_or_default()
}

/// File-name tag of an offset, e.g. `1_m2_0` for (1, -2, 0).
pub fn delta_tag(d: Cell) -> String {
    d.iter().map(|x| if *x < 0 { format!("m{}", -x) } else { x.to_string() }).collect::<Vec<_>>().join("_")
}

pub fn table_path(dir: &Path, d: Cell) -> PathBuf {
    dir.join(format!("kernel_{}.qlbt", delta_tag(d)))
}

pub fn state_path(dir: &Path, d: Cell) -> PathBuf {
    dir.join(format!("state_{}.qlbt", delta_tag(d)))
}
