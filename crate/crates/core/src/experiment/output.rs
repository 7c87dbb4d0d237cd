use std::io::Write;
use std::path::Path;

use super::ExperimentError;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

/// Renders a header and rows as CSV.
pub fn to_csv(header: &[String], rows: &[Vec<String>]) -> Result<String, ExperimentError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| ExperimentError::Numerical(format!("csv encoding failed: {e}"));
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(row).map_err(io)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| ExperimentError::Numerical(format!("csv encoding failed: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv of UTF-8 fields is UTF-8"))
}

/// Writes `contents` to `dir/name` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<(), ExperimentError> {
    let target = dir.join(name);
    let io = |source: std::io::Error| ExperimentError::Io {
        path: target.clone(),
        source,
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents.as_bytes()).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(&target).map_err(|e| io(e.error))?;
    Ok(())
}
