//! Tables written as CSV or JSON, to a directory or to stdout.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::ValueEnum;
use metastable::io::fmt_f64;
use serde_json::{Map, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(v) => fmt_f64(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(v) if v.is_finite() => Value::from(*v),
            Cell::Num(v) => Value::from(fmt_f64(*v)),
            Cell::Int(v) => Value::from(*v),
            Cell::Text(s) => Value::from(s.clone()),
            Cell::Empty => Value::Null,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

#[derive(Clone, Debug)]
pub struct Table {
    pub name: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, headers: &[&str]) -> Table {
        Table {
            name: name.to_string(),
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    /// Two-column `quantity,value` table.
    pub fn key_values(name: &str, pairs: Vec<(&str, Cell)>) -> Table {
        let mut t = Table::new(name, &["quantity", "value"]);
        for (k, v) in pairs {
            t.push(vec![k.into(), v]);
        }
        t
    }

    fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.headers)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::csv))?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    fn to_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|row| {
                    let obj: Map<String, Value> = self
                        .headers
                        .iter()
                        .cloned()
                        .zip(row.iter().map(Cell::json))
                        .collect();
                    Value::Object(obj)
                })
                .collect(),
        )
    }
}

/// Where the tables of one run go.
pub struct Sink {
    pub out: Option<PathBuf>,
    pub format: Format,
}

impl Sink {
    pub fn emit(&self, tables: &[Table]) -> std::io::Result<()> {
        match (&self.out, self.format) {
            (Some(dir), Format::Csv) => {
                fs::create_dir_all(dir)?;
                for t in tables {
                    fs::write(
                        dir.join(format!("{}.csv", t.name)),
                        t.to_csv().map_err(std::io::Error::other)?,
                    )?;
                }
            }
            (Some(dir), Format::Json) => {
                fs::create_dir_all(dir)?;
                for t in tables {
                    let text = serde_json::to_string_pretty(&t.to_json())?;
                    fs::write(dir.join(format!("{}.json", t.name)), text + "\n")?;
                }
            }
            (None, Format::Csv) => {
                let mut stdout = std::io::stdout().lock();
                for (i, t) in tables.iter().enumerate() {
                    if i > 0 {
                        writeln!(stdout)?;
                    }
                    writeln!(stdout, "# {}", t.name)?;
                    write!(stdout, "{}", t.to_csv().map_err(std::io::Error::other)?)?;
                }
            }
            (None, Format::Json) => {
                let obj: Map<String, Value> = tables
                    .iter()
                    .map(|t| (t.name.clone(), t.to_json()))
                    .collect();
                println!("{}", serde_json::to_string_pretty(&Value::Object(obj))?);
            }
        }
        Ok(())
    }

    /// Writes a raw document (a chain file) next to the tables, or to stdout.
    pub fn emit_document(&self, file_name: &str, text: &str) -> std::io::Result<()> {
        match &self.out {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                fs::write(dir.join(file_name), text)
            }
            None => {
                println!("{text}");
                Ok(())
            }
        }
    }
}
