//! Artifact writing: tables in the requested format, plots derived from them,
//! and the guard that keeps outputs away from inputs.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde_json::{Map, Value};

use crate::error::CliError;
use crate::svg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    /// CSV tables plus an SVG plot of each.
    Svg,
}

/// How a table is drawn when SVG output is requested.
#[derive(Debug, Clone)]
pub enum Plot {
    Lines { x: &'static str, ys: Vec<&'static str>, title: String },
    Heatmap { title: String },
}

/// Rows of already formatted cells. An empty cell means "undefined".
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn from_csv(text: &str) -> Result<Self, CliError> {
        let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let header = reader
            .headers()
            .map_err(|e| CliError::operational("internal", e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = reader
            .records()
            .map(|r| r.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::operational("internal", e.to_string()))?;
        Ok(Self { header, rows })
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Array of objects keyed by column. Numeric cells become numbers, empty
    /// cells `null`, anything else a string.
    pub fn to_json(&self) -> String {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let obj: Map<String, Value> = self
                    .header
                    .iter()
                    .zip(row)
                    .map(|(k, v)| (k.clone(), cell_value(v)))
                    .collect();
                Value::Object(obj)
            })
            .collect();
        let mut text = serde_json::to_string_pretty(&rows).expect("table serializes");
        text.push('\n');
        text
    }
}

fn cell_value(cell: &str) -> Value {
    if cell.is_empty() {
        return Value::Null;
    }
    match (cell.parse::<i64>(), cell.parse::<f64>()) {
        (Ok(i), _) => Value::from(i),
        (_, Ok(f)) if f.is_finite() => Value::from(f),
        _ => match cell {
            "true" => Value::Bool(true),
            "false" => Value::Bool(false),
            _ => Value::from(cell),
        },
    }
}

/// Shortest round-trip decimal, `""` for an undefined value.
pub fn num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Output directory with the set of files a command will write, checked
/// before any work starts.
pub struct Outputs {
    dir: PathBuf,
    format: Format,
    planned: Vec<PathBuf>,
}

impl Outputs {
    /// `tables` are stems whose extension follows the format; `files` are
    /// written as named. Fails if any planned path is one of `inputs`.
    pub fn plan(
        dir: &Path,
        format: Format,
        inputs: &[&Path],
        tables: &[&str],
        files: &[&str],
    ) -> Result<Self, CliError> {
        let mut out = Self {
            dir: dir.to_path_buf(),
            format,
            planned: Vec::new(),
        };
        for stem in tables {
            out.planned.extend(out.table_paths(stem));
        }
        for name in files {
            out.planned.push(dir.join(name));
        }
        if dir.exists() && !dir.is_dir() {
            return Err(CliError::invalid("output_dir", format!("{} is not a directory", dir.display())));
        }
        let inputs: Vec<PathBuf> = inputs.iter().filter_map(|p| p.canonicalize().ok()).collect();
        if let Ok(d) = dir.canonicalize() {
            if inputs.contains(&d) {
                return Err(CliError::invalid("output_overwrites_input", format!("{} is an input", dir.display())));
            }
        }
        for p in &out.planned {
            if let Ok(c) = p.canonicalize() {
                if inputs.contains(&c) {
                    return Err(CliError::invalid(
                        "output_overwrites_input",
                        format!("refusing to overwrite input {}", p.display()),
                    ));
                }
            }
        }
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::operational("io", format!("{}: {e}", dir.display())))?;
        Ok(out)
    }

    fn table_paths(&self, stem: &str) -> Vec<PathBuf> {
        match self.format {
            Format::Csv => vec![self.dir.join(format!("{stem}.csv"))],
            Format::Json => vec![self.dir.join(format!("{stem}.json"))],
            Format::Svg => vec![self.dir.join(format!("{stem}.csv")), self.dir.join(format!("{stem}.svg"))],
        }
    }

    fn write_path(&self, path: &Path, contents: &str) -> Result<(), CliError> {
        debug_assert!(self.planned.iter().any(|p| p == path), "unplanned output {}", path.display());
        std::fs::write(path, contents).map_err(|e| CliError::operational("io", format!("{}: {e}", path.display())))
    }

    pub fn table(&self, stem: &str, table: &Table, plot: Option<Plot>) -> Result<(), CliError> {
        match self.format {
            Format::Csv => self.write_path(&self.dir.join(format!("{stem}.csv")), &table.to_csv()),
            Format::Json => self.write_path(&self.dir.join(format!("{stem}.json")), &table.to_json()),
            Format::Svg => {
                let csv_text = table.to_csv();
                self.write_path(&self.dir.join(format!("{stem}.csv")), &csv_text)?;
                let drawing = match plot {
                    Some(Plot::Lines { x, ys, title }) => svg::line_plot(&csv_text, x, &ys, &title)?,
                    Some(Plot::Heatmap { title }) => svg::heatmap(&csv_text, &title)?,
                    None => svg::table_only(&title_of(stem)),
                };
                self.write_path(&self.dir.join(format!("{stem}.svg")), &drawing)
            }
        }
    }

    pub fn file(&self, name: &str, contents: &str) -> Result<(), CliError> {
        self.write_path(&self.dir.join(name), contents)
    }
}

fn title_of(stem: &str) -> String {
    stem.replace('_', " ")
}
