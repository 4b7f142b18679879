//! CSV persistence for traces and sweep summaries.
//!
//! Floats are written in shortest round-trip form, so reading a file back
//! reproduces the rows bit for bit. Missing optional values are empty
//! fields.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::Result;
use crate::metrics::TraceRow;

/// Header line of every trace file.
pub const TRACE_HEADER: &str = "algorithm,s,seed,gamma,k,comm_rounds,dist_sq,gap,drift,cv_error,meta_t";

pub fn write_rows<W: Write, T: Serialize>(writer: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<R: Read, T: DeserializeOwned>(reader: R) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut rows = Vec::new();
    for row in r.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

/// Writes a trace. An empty trace still gets its header line.
pub fn write_trace<W: Write>(mut writer: W, rows: &[TraceRow]) -> Result<()> {
    if rows.is_empty() {
        writeln!(writer, "{TRACE_HEADER}")?;
        return Ok(());
    }
    write_rows(writer, rows)
}

pub fn read_trace<R: Read>(reader: R) -> Result<Vec<TraceRow>> {
    read_rows(reader)
}

pub fn save_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    write_rows(BufWriter::new(File::create(path)?), rows)
}

pub fn save_trace(path: &Path, rows: &[TraceRow]) -> Result<()> {
    write_trace(BufWriter::new(File::create(path)?), rows)
}

pub fn load_trace(path: &Path) -> Result<Vec<TraceRow>> {
    read_trace(File::open(path)?)
}

pub fn load_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    read_rows(File::open(path)?)
}
