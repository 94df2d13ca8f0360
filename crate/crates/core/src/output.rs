//! Run artifacts: `rounds.jsonl`, `summary.json` and `accuracy.csv`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::engine::{ExperimentResult, RoundReport, Summary};
use crate::error::{Error, Result};

pub const ROUNDS_FILE: &str = "rounds.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const ACCURACY_FILE: &str = "accuracy.csv";

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

pub fn write_rounds(reports: &[RoundReport], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    for r in reports {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_summary(summary: &Summary, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, summary)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_accuracy(reports: &[RoundReport], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["round", "accuracy"])
        .map_err(|e| csv_error(path, e))?;
    for r in reports {
        w.write_record([r.round.to_string(), r.global_accuracy.to_string()])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Runtime(format!("{}: {other:?}", path.display())),
    }
}

/// Writes all three files into `out_dir`, creating it if needed.
pub fn emit_reports(result: &ExperimentResult, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_rounds(&result.reports, &out_dir.join(ROUNDS_FILE))?;
    write_summary(&result.summary, &out_dir.join(SUMMARY_FILE))?;
    write_accuracy(&result.reports, &out_dir.join(ACCURACY_FILE))
}
