//! CSV and JSON files. Every emitted file carries the config hash: CSVs in a
//! leading `# config_sha256=<hex>` comment, JSON in a `config_sha256` field.

use std::io::Write;
use std::path::{Path, PathBuf};

use super::CliError;

/// Numeric table with named columns; `None` cells are written empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Option<f64>>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn push_values(&mut self, row: &[f64]) {
        self.push(row.iter().map(|&v| Some(v)).collect());
    }
}

pub fn write_csv(path: &Path, hash: &str, table: &Table) -> Result<PathBuf, CliError> {
    let io = |e: std::io::Error| CliError::io(path, e);
    let mut buf = Vec::new();
    writeln!(buf, "# config_sha256={hash}").map_err(io)?;
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let csv_err = |e: csv::Error| CliError::io(path, std::io::Error::other(e));
        w.write_record(&table.header).map_err(csv_err)?;
        for row in &table.rows {
            w.write_record(row.iter().map(|v| v.map_or(String::new(), |x| x.to_string())))
                .map_err(csv_err)?;
        }
        w.flush().map_err(io)?;
    }
    std::fs::write(path, buf).map_err(io)?;
    Ok(path.to_path_buf())
}

pub fn write_json(path: &Path, hash: &str, mut value: serde_json::Value) -> Result<PathBuf, CliError> {
    if let Some(obj) = value.as_object_mut() {
        obj.insert("config_sha256".into(), serde_json::Value::String(hash.to_string()));
    }
    let mut text = serde_json::to_string_pretty(&value).expect("json value serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))?;
    Ok(path.to_path_buf())
}

/// Columns read from a data file; optional columns may be absent.
#[derive(Debug, Clone, PartialEq)]
pub struct Columns {
    pub values: Vec<Vec<Option<f64>>>,
}

impl Columns {
    pub fn required(&self, k: usize) -> Vec<f64> {
        self.values.iter().map(|r| r[k].expect("required column")).collect()
    }

    pub fn optional(&self, k: usize) -> Vec<Option<f64>> {
        self.values.iter().map(|r| r[k]).collect()
    }
}

/// Read a CSV whose header contains every `required` column; `optional`
/// columns are read when present. Lines starting with `#` are ignored.
pub fn read_csv(path: &Path, required: &[&str], optional: &[&str]) -> Result<Columns, CliError> {
    let name = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(bytes.as_slice());
    let header = r
        .headers()
        .map_err(|e| CliError::Parse(format!("{name}: {e}")))?
        .clone();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(CliError::Parse(format!("{name}: empty file, expected header {}", required.join(","))));
    }
    let find = |c: &str| header.iter().position(|h| h == c);
    let mut idx = Vec::new();
    for c in required {
        idx.push(Some(find(c).ok_or_else(|| {
            CliError::Parse(format!("{name}: missing column '{c}' (header: {})", header.iter().collect::<Vec<_>>().join(",")))
        })?));
    }
    for c in optional {
        idx.push(find(c));
    }
    let names: Vec<&str> = required.iter().chain(optional).copied().collect();
    let mut values = Vec::new();
    for (k, rec) in r.records().enumerate() {
        // header is line 1 of the data
        let row = k + 2;
        let rec = rec.map_err(|e| CliError::Parse(format!("{name}: row {row}: {e}")))?;
        let mut out = Vec::with_capacity(idx.len());
        for (c, pos) in idx.iter().enumerate() {
            let cell = pos.and_then(|p| rec.get(p)).unwrap_or("");
            if cell.is_empty() {
                if c < required.len() {
                    return Err(CliError::Parse(format!("{name}: row {row}, column '{}': empty", names[c])));
                }
                out.push(None);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| {
                CliError::Parse(format!("{name}: row {row}, column '{}': invalid number '{cell}'", names[c]))
            })?;
            if !v.is_finite() {
                return Err(CliError::Parse(format!("{name}: row {row}, column '{}': not finite", names[c])));
            }
            out.push(Some(v));
        }
        values.push(out);
    }
    if values.is_empty() {
        return Err(CliError::Parse(format!("{name}: no data rows")));
    }
    Ok(Columns { values })
}
