//! JSON and CSV writers for command outputs.
//!
//! Floats are written in shortest round-trip form, so equal values always
//! produce equal bytes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Numeric(format!("{}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_error(path))
}

/// One header row, then one row per serialized record.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = File::create(path).map_err(io_error(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::Numeric(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(io_error(path))
}

/// Header-only CSV for an empty series, so consumers always find the file.
pub fn write_csv_header(path: &Path, header: &[&str]) -> Result<()> {
    let mut f = File::create(path).map_err(io_error(path))?;
    writeln!(f, "{}", header.join(",")).map_err(io_error(path))
}
