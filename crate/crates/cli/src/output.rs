use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Bumped whenever a convention that changes numbers in the output changes.
pub const CONVENTIONS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

impl Format {
    pub fn name(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Header {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'static str,
    pub conventions_version: u32,
    pub conventions: Conventions,
    /// Resolved parameters; the digest below is taken over their compact JSON.
    pub params: Value,
    pub params_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi_source: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi_sha256: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct Conventions {
    pub norm: &'static str,
    pub slab: &'static str,
    pub rationals: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub main_term: Option<String>,
}

impl Header {
    pub fn new(subcommand: &'static str, params: Value, main_term: Option<String>) -> Self {
        let params_sha256 = hex::encode(Sha256::digest(params.to_string().as_bytes()));
        Self {
            tool: "kg",
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            conventions_version: CONVENTIONS_VERSION,
            conventions: Conventions {
                norm: "sup",
                slab: "per column |<q, x_j>| < delta mod 1; B' adds gcd(q, p) = 1",
                rationals: "reduced a/b",
                main_term,
            },
            params,
            params_sha256,
            psi_source: None,
            psi_sha256: None,
        }
    }
}

/// Where the primary output goes. The header goes beside it as `<out>.header.json`,
/// or to stderr when writing to stdout.
pub struct Sink {
    pub out: Option<PathBuf>,
    pub format: Format,
}

impl Sink {
    pub fn write_rows<T: Serialize>(&self, header: &Header, rows: &[T]) -> Result<(), CliError> {
        let values: Vec<Value> = rows.iter().map(to_value).collect::<Result<_, _>>()?;
        let body = match self.format {
            Format::Json => json_text(&Value::Array(values))?,
            Format::Csv => csv_text(&values)?,
        };
        self.emit(header, &body)
    }

    pub fn write_object<T: Serialize>(&self, header: &Header, obj: &T) -> Result<(), CliError> {
        let value = to_value(obj)?;
        let body = match self.format {
            Format::Json => json_text(&value)?,
            Format::Csv => csv_text(std::slice::from_ref(&value))?,
        };
        self.emit(header, &body)
    }

    fn emit(&self, header: &Header, body: &str) -> Result<(), CliError> {
        let header_text = json_text(&to_value(header)?)?;
        match &self.out {
            Some(path) => {
                write_file(path, body)?;
                write_file(&header_path(path), &header_text)?;
            }
            None => {
                std::io::stdout()
                    .write_all(body.as_bytes())
                    .map_err(|e| CliError::Io(e.to_string()))?;
                let compact =
                    serde_json::to_string(header).map_err(|e| CliError::Io(e.to_string()))?;
                eprintln!("{compact}");
            }
        }
        Ok(())
    }
}

pub fn header_path(out: &Path) -> PathBuf {
    let mut name = out
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".header.json");
    out.with_file_name(name)
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn to_value<T: Serialize>(v: &T) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Io(format!("serialize: {e}")))
}

fn json_text(v: &Value) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Nested objects become dotted columns; arrays are written as compact JSON.
fn flatten(prefix: &str, v: &Value, out: &mut Map<String, Value>) {
    match v {
        Value::Object(map) => {
            for (k, inner) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, inner, out);
            }
        }
        _ => {
            out.insert(prefix.to_string(), v.clone());
        }
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        _ => v.to_string(),
    }
}

fn csv_text(rows: &[Value]) -> Result<String, CliError> {
    let flat: Vec<Map<String, Value>> = rows
        .iter()
        .map(|r| {
            let mut m = Map::new();
            flatten("", r, &mut m);
            m
        })
        .collect();
    let mut columns: Vec<String> = Vec::new();
    for row in &flat {
        for k in row.keys() {
            if !columns.contains(k) {
                columns.push(k.clone());
            }
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(&columns).map_err(err)?;
    for row in &flat {
        w.write_record(
            columns
                .iter()
                .map(|c| row.get(c).map(cell).unwrap_or_default()),
        )
        .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
}
