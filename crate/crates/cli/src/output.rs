//! CSV tables with a header row, data rows and `#`-prefixed footer rows, the
//! last of which carries the schema version and build id.

use std::path::Path;

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

pub fn build_id() -> String {
    let base = concat!(env!("CARGO_PKG_NAME"), "-", env!("CARGO_PKG_VERSION"));
    match option_env!("EXKRY_BUILD_ID") {
        Some(id) => format!("{base}+{id}"),
        None => base.to_string(),
    }
}

/// Shortest round-trip representation in scientific notation.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Summary rows written before the metadata row, each starting with `#name`.
    pub footer: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new(), footer: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn push_footer(&mut self, name: &str, values: Vec<String>) {
        let mut row = vec![format!("#{name}")];
        row.extend(values);
        self.footer.push(row);
    }

    /// Index of a header column.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Parsed values of a numeric column; empty cells become `None`.
    pub fn numbers(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let c = self.column(name)?;
        Some(self.rows.iter().map(|r| r[c].parse().ok()).collect())
    }

    pub fn footer_value(&self, name: &str) -> Option<&[String]> {
        let tag = format!("#{name}");
        self.footer.iter().find(|r| r[0] == tag).map(|r| &r[1..])
    }

    pub fn to_bytes(&self, seed: u64) -> Result<Vec<u8>, csv::Error> {
        let mut w = csv::WriterBuilder::new()
            .flexible(true)
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in self.rows.iter().chain(&self.footer) {
            w.write_record(r)?;
        }
        w.write_record([
            "#meta".to_string(),
            format!("schema_version={SCHEMA_VERSION}"),
            format!("build={}", build_id()),
            format!("seed={seed}"),
        ])?;
        w.into_inner().map_err(|e| csv::Error::from(e.into_error()))
    }

    pub fn write(&self, path: &Path, seed: u64) -> Result<(), CliError> {
        let bytes = self.to_bytes(seed).map_err(|source| CliError::Csv { path: path.to_path_buf(), source })?;
        std::fs::write(path, bytes).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
    }

    /// Reads a table written by [`Table::write`], without its metadata row.
    pub fn read(path: &Path) -> Result<Table, CliError> {
        let csv_err = |source| CliError::Csv { path: path.to_path_buf(), source };
        let mut r = csv::ReaderBuilder::new().flexible(true).from_path(path).map_err(csv_err)?;
        let header = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
        let mut t = Table { header, rows: Vec::new(), footer: Vec::new() };
        for rec in r.records() {
            let rec: Vec<String> = rec.map_err(csv_err)?.iter().map(String::from).collect();
            match rec.first() {
                Some(f) if f == "#meta" => {}
                Some(f) if f.starts_with('#') => t.footer.push(rec),
                _ => t.rows.push(rec),
            }
        }
        Ok(t)
    }
}
