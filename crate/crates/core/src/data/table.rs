use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime};

use super::schema::{ColumnRole, SchemaConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Column<T> {
    pub name: String,
    pub values: Vec<T>,
}

/// Typed columns of a CSV file, restricted to the columns a schema uses.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub categorical: Vec<Column<String>>,
    /// `None` marks a missing value.
    pub continuous: Vec<Column<Option<f64>>>,
    pub timestamp: Option<Column<NaiveDateTime>>,
    pub target: Column<f64>,
}

impl RawTable {
    pub fn n_rows(&self) -> usize {
        self.target.values.len()
    }

    /// Writes the table as CSV: timestamp, categorical, continuous, target.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = Vec::new();
        if let Some(ts) = &self.timestamp {
            header.push(&ts.name);
        }
        header.extend(self.categorical.iter().map(|c| c.name.as_str()));
        header.extend(self.continuous.iter().map(|c| c.name.as_str()));
        header.push(&self.target.name);
        w.write_record(&header)?;

        for r in 0..self.n_rows() {
            let mut rec: Vec<String> = Vec::with_capacity(header.len());
            if let Some(ts) = &self.timestamp {
                rec.push(ts.values[r].format("%Y-%m-%d").to_string());
            }
            rec.extend(self.categorical.iter().map(|c| c.values[r].clone()));
            rec.extend(
                self.continuous
                    .iter()
                    .map(|c| c.values[r].map_or_else(String::new, |v| v.to_string())),
            );
            rec.push(self.target.values[r].to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }
}

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S")
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S"))
        .ok()
        .or_else(|| {
            NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .ok()
                .and_then(|d| d.and_hms_opt(0, 0, 0))
        })
}

fn is_missing(s: &str) -> bool {
    matches!(s, "" | "NA" | "NaN" | "nan" | "null")
}

/// Reads a comma-separated file with a header row.
pub fn load_csv(path: impl AsRef<Path>, schema: &SchemaConfig) -> Result<RawTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    load_csv_reader(file, schema)
}

pub fn load_csv_reader<R: Read>(reader: R, schema: &SchemaConfig) -> Result<RawTable> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let position = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("missing column {name:?}")))
    };

    let mut cat_cols = Vec::new();
    let mut cont_cols = Vec::new();
    let mut ts_col = None;
    let mut target_col = None;
    for c in &schema.columns {
        match c.role {
            ColumnRole::Categorical => cat_cols.push((position(&c.name)?, c.name.clone())),
            ColumnRole::Continuous => cont_cols.push((position(&c.name)?, c.name.clone())),
            ColumnRole::Timestamp => ts_col = Some((position(&c.name)?, c.name.clone())),
            ColumnRole::Target => target_col = Some((position(&c.name)?, c.name.clone())),
            ColumnRole::Ignored => {}
        }
    }
    let (target_idx, target_name) = target_col.expect("validated schema has a target");

    let mut table = RawTable {
        categorical: cat_cols
            .iter()
            .map(|(_, n)| Column {
                name: n.clone(),
                values: Vec::new(),
            })
            .collect(),
        continuous: cont_cols
            .iter()
            .map(|(_, n)| Column {
                name: n.clone(),
                values: Vec::new(),
            })
            .collect(),
        timestamp: ts_col.as_ref().map(|(_, n)| Column {
            name: n.clone(),
            values: Vec::new(),
        }),
        target: Column {
            name: target_name,
            values: Vec::new(),
        },
    };

    for (i, record) in rdr.records().enumerate() {
        // 1-based data row number, header excluded.
        let row = i + 1;
        let record = record?;
        let field = |idx: usize| record.get(idx).unwrap_or("").trim();

        let raw = field(target_idx);
        let y: f64 = raw
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| Error::Row {
                row,
                message: format!("target {raw:?} is not a finite number"),
            })?;
        table.target.values.push(y);

        for ((idx, _), col) in cat_cols.iter().zip(&mut table.categorical) {
            col.values.push(field(*idx).to_string());
        }
        for ((idx, name), col) in cont_cols.iter().zip(&mut table.continuous) {
            let raw = field(*idx);
            let v = if is_missing(raw) {
                None
            } else {
                Some(
                    raw.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::Row {
                            row,
                            message: format!("column {name:?}: {raw:?} is not a number"),
                        })?,
                )
            };
            col.values.push(v);
        }
        if let (Some((idx, name)), Some(col)) = (&ts_col, table.timestamp.as_mut()) {
            let raw = field(*idx);
            let t = parse_timestamp(raw).ok_or_else(|| Error::Row {
                row,
                message: format!("column {name:?}: {raw:?} is not a date"),
            })?;
            col.values.push(t);
        }
    }
    Ok(table)
}
