//! CSV tables and metadata sidecars.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::Config;
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    /// Derived quantities echoed in the sidecar.
    pub notes: Vec<(String, String)>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self {
            columns: columns.to_vec(),
            ..Self::default()
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn note(&mut self, key: &str, value: impl std::fmt::Display) {
        self.notes.push((key.to_string(), value.to_string()));
    }

    pub fn note_num(&mut self, key: &str, value: f64) {
        self.note(key, format_number(value));
    }
}

/// Twelve significant digits, plain decimal for moderate exponents.
pub fn format_number(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf" } else { "-inf" }.into();
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.11e}");
    let (mantissa, exponent) = sci.split_once('e').expect("exponent present");
    let exponent: i32 = exponent.parse().expect("integer exponent");
    if (-5..12).contains(&exponent) {
        let decimals = usize::try_from(11 - exponent).unwrap_or(0);
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    } else {
        format!("{}e{exponent}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn render_csv(config: &Config, table: &Table) -> Result<Vec<u8>, CliError> {
    let hash = config.hash();
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["config_hash"];
    header.extend(&table.columns);
    writer.write_record(&header).map_err(csv_error)?;
    for row in &table.rows {
        let fields = std::iter::once(hash.clone()).chain(row.iter().map(|cell| match cell {
            Cell::Num(v) => format_number(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }));
        writer.write_record(fields).map_err(csv_error)?;
    }
    writer
        .into_inner()
        .map_err(|e| CliError::Io(e.into_error()))
}

fn csv_error(e: csv::Error) -> CliError {
    CliError::Io(e.into())
}

fn render_sidecar(config: &Config, table: &Table, csv_name: &str) -> String {
    let mut out = format!(
        "# singular-eft {}\n# experiment = {}\n# config_hash = {}\n# csv = {csv_name} ({} rows)\n",
        env!("CARGO_PKG_VERSION"),
        config.experiment.name(),
        config.hash(),
        table.rows.len()
    );
    for line in config.canonical().lines().skip(1) {
        out.push_str(line);
        out.push('\n');
    }
    for (k, v) in &table.notes {
        let _ = writeln!(out, "# result: {k} = {v}");
    }
    out
}

/// Writes `<name>.csv` and `<name>.meta` into `dir`. Nothing is left behind
/// on failure.
pub fn write_outputs(dir: &Path, config: &Config, table: &Table) -> Result<Vec<PathBuf>, CliError> {
    let name = config.experiment.name();
    let csv = dir.join(format!("{name}.csv"));
    let meta = dir.join(format!("{name}.meta"));
    let files = [
        (csv.clone(), render_csv(config, table)?),
        (
            meta.clone(),
            render_sidecar(config, table, &format!("{name}.csv")).into_bytes(),
        ),
    ];
    let result = (|| -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        for (path, text) in &files {
            let tmp = PathBuf::from(format!("{}.partial", path.display()));
            fs::write(&tmp, text)?;
            fs::rename(&tmp, path)?;
        }
        Ok(())
    })();
    if let Err(e) = result {
        remove_outputs(dir, config);
        return Err(e.into());
    }
    Ok(vec![csv, meta])
}

/// Removes any outputs of `config`'s experiment, finished or partial.
pub fn remove_outputs(dir: &Path, config: &Config) {
    let name = config.experiment.name();
    for ext in ["csv", "meta", "csv.partial", "meta.partial"] {
        let _ = fs::remove_file(dir.join(format!("{name}.{ext}")));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(format_number(0.0), "0");
        assert_eq!(format_number(1.0), "1");
        assert_eq!(format_number(-1.05), "-1.05");
        assert_eq!(format_number(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_number(2.0 / 3.0 * 1e4), "6666.66666667");
        assert_eq!(format_number(123456.0), "123456");
        assert_eq!(format_number(1.234e-7), "1.234e-7");
        assert_eq!(format_number(-6.02214076e23), "-6.02214076e23");
        assert_eq!(format_number(9.999999999999999), "10");
        assert_eq!(format_number(f64::NAN), "nan");
    }
}
