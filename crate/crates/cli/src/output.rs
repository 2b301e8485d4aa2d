//! CSV persistence. Every file starts with one comment line carrying the
//! configuration hash, followed by the header row.

use std::path::Path;

use crate::error::CliError;

const HASH_PREFIX: &str = "# config_sha256=";

/// 17 significant digits, `.` decimal separator.
pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_error(origin: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Csv {
        path: origin.to_string(),
        msg: e.to_string(),
    }
}

pub fn render_csv(config_hash: &str, header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>, CliError> {
    let mut out = format!("{HASH_PREFIX}{config_hash}\n").into_bytes();
    {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut out);
        w.write_record(header).map_err(|e| csv_error("<memory>", e))?;
        for row in rows {
            w.write_record(row).map_err(|e| csv_error("<memory>", e))?;
        }
        w.flush()?;
    }
    Ok(out)
}

pub fn write_csv(path: &Path, config_hash: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, render_csv(config_hash, header, rows)?)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub config_hash: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    origin: String,
}

impl CsvTable {
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        let (first, body) = text.split_once('\n').unwrap_or((text, ""));
        let config_hash = first
            .strip_prefix(HASH_PREFIX)
            .ok_or_else(|| csv_error(origin, "missing config hash comment"))?
            .to_string();
        let mut reader = csv::Reader::from_reader(body.as_bytes());
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| csv_error(origin, e))?
            .iter()
            .map(str::to_string)
            .collect();
        if header.is_empty() {
            return Err(csv_error(origin, "missing header row"));
        }
        let rows = reader
            .records()
            .map(|r| r.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<Result<Vec<Vec<String>>, _>>()
            .map_err(|e| csv_error(origin, e))?;
        Ok(Self {
            config_hash,
            header,
            rows,
            origin: origin.to_string(),
        })
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        Self::parse(&std::fs::read_to_string(path)?, &path.display().to_string())
    }

    pub fn column(&self, name: &str) -> Result<usize, CliError> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| csv_error(&self.origin, format!("missing column '{name}'")))
    }

    pub fn floats(&self, name: &str) -> Result<Vec<f64>, CliError> {
        let c = self.column(name)?;
        self.rows
            .iter()
            .map(|r| {
                r[c].parse::<f64>()
                    .map_err(|e| csv_error(&self.origin, format!("column '{name}': {e}")))
            })
            .collect()
    }

    pub fn strings(&self, name: &str) -> Result<Vec<String>, CliError> {
        let c = self.column(name)?;
        Ok(self.rows.iter().map(|r| r[c].clone()).collect())
    }
}
