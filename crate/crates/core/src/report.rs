//! Tabular result emission shared by the experiment drivers.
//!
//! CSV output is comma-separated with a header row, LF line endings and every
//! real printed with 17 significant digits, so equal inputs give equal bytes.

use std::io::Write;

use crate::error::{Error, Result};

/// Formats a real with 17 significant digits.
pub fn real(v: f64) -> String {
    format!("{v:.16e}")
}

/// A result type that renders as CSV rows.
pub trait Tabular {
    fn columns() -> Vec<String>;
    fn row(&self) -> Vec<String>;
}

/// Column names and string cells.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(columns: I) -> Self {
        Table {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn from_rows<T: Tabular>(items: &[T]) -> Self {
        Table {
            columns: T::columns(),
            rows: items.iter().map(Tabular::row).collect(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    /// Appends the same trailing cells to every row.
    pub fn with_constant_columns(mut self, extra: &[(&str, String)]) -> Self {
        for (name, _) in extra {
            self.columns.push((*name).to_string());
        }
        for row in &mut self.rows {
            row.extend(extra.iter().map(|(_, v)| v.clone()));
        }
        self
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::result::Result<(), csv::Error> {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        writer.write_record(&self.columns)?;
        for row in &self.rows {
            writer.write_record(row)?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    /// Rows as JSON objects keyed by column name; numeric cells become numbers.
    pub fn to_json_rows(&self) -> serde_json::Value {
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let obj = self
                    .columns
                    .iter()
                    .zip(row)
                    .map(|(k, v)| (k.clone(), json_cell(v)))
                    .collect::<serde_json::Map<_, _>>();
                serde_json::Value::Object(obj)
            })
            .collect();
        serde_json::Value::Array(rows)
    }
}

fn json_cell(cell: &str) -> serde_json::Value {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => serde_json::Number::from_f64(v)
            .map(serde_json::Value::Number)
            .unwrap_or_else(|| serde_json::Value::String(cell.into())),
        _ => serde_json::Value::String(cell.into()),
    }
}

/// Writes `contents` to `path`, creating parent directories.
pub fn write_file(path: &std::path::Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reals_keep_seventeen_digits() {
        assert_eq!(real(0.1), "1.0000000000000001e-1");
        assert_eq!(real(1.0).parse::<f64>().unwrap(), 1.0);
        let x = std::f64::consts::PI;
        assert_eq!(real(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn csv_uses_lf_and_header() {
        let mut t = Table::new(["a", "b"]);
        t.push(vec!["1".into(), "x,y".into()]);
        let t = t.with_constant_columns(&[("seed", "7".into())]);
        assert_eq!(t.to_csv(), "a,b,seed\n1,\"x,y\",7\n");
        let json = t.to_json_rows();
        assert_eq!(json[0]["a"], 1.0);
        assert_eq!(json[0]["b"], "x,y");
    }
}
