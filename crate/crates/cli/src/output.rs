//! CSV files with `#` comment headers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::CliError;

/// Header lines shared by every file of a run. No timestamps, so reruns
/// produce identical files.
pub fn header_lines(config: &ExperimentConfig) -> Vec<String> {
    vec![
        format!("mckean v{}", env!("CARGO_PKG_VERSION")),
        format!("experiment: {}", config.experiment),
        format!("seed: {}", config.seed),
        format!("config-sha256: {}", config.config_hash),
    ]
}

/// Writes `rows` under `columns` to `dir/name` and returns the path.
pub fn write_csv(
    dir: &Path,
    name: &str,
    header: &[String],
    columns: &[&str],
    rows: &[Vec<String>],
) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut file = BufWriter::new(File::create(&path).map_err(io)?);
    for line in header {
        writeln!(file, "# {line}").map_err(io)?;
    }
    {
        let mut w = csv::Writer::from_writer(&mut file);
        let csv_err = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
        w.write_record(columns).map_err(csv_err)?;
        for row in rows {
            w.write_record(row).map_err(csv_err)?;
        }
        w.flush().map_err(io)?;
    }
    file.flush().map_err(io)?;
    Ok(path)
}

/// Shortest round-trip form; `NaN` and empty cells for missing values.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}
