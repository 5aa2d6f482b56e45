use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use dataplace_core::Error;
use serde::Serialize;
use serde_json::{json, Value};

use crate::Format;

pub const SCHEMA: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Csv(#[from] csv::Error),
    /// Already reported on stdout; only the exit code remains.
    #[error("")]
    Reported(u8),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(Error::Io { .. } | Error::InvalidArgument(_)) => 2,
            CliError::Core(_) => 1,
            CliError::Write { .. } | CliError::Csv(_) => 2,
            CliError::Reported(code) => *code,
        }
    }
}

/// Where a run came from: enough to reproduce it.
#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: Option<u64>,
    pub params: Value,
}

pub struct Context {
    pub format: Format,
    pub quiet: bool,
}

impl Context {
    pub fn new(format: Format, quiet: bool) -> Self {
        Context { format, quiet }
    }

    /// Prints the provenance header and either the human table or the JSON
    /// document for `result`.
    pub fn emit(&self, prov: &Provenance, result: Value, human: impl FnOnce() -> String) {
        match self.format {
            Format::Json => {
                let doc = json!({ "schema": SCHEMA, "provenance": prov, "result": result });
                println!(
                    "{}",
                    serde_json::to_string_pretty(&doc).expect("serializable")
                );
            }
            Format::Human => {
                println!(
                    "# provenance {}",
                    serde_json::to_string(prov).expect("serializable")
                );
                if !self.quiet {
                    let text = human();
                    print!("{text}");
                    if !text.ends_with('\n') {
                        println!();
                    }
                }
            }
        }
    }
}

pub fn provenance(command: &'static str, seed: Option<u64>, params: Value) -> Provenance {
    Provenance {
        tool: "dataplace",
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed,
        params,
    }
}

fn write_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Write {
        path: path.display().to_string(),
        source,
    }
}

/// Writes a schema-versioned JSON document with the run's provenance.
pub fn write_json(path: &Path, prov: &Provenance, body: Value) -> Result<(), CliError> {
    let mut doc = json!({ "schema": SCHEMA, "provenance": prov });
    if let (Value::Object(d), Value::Object(b)) = (&mut doc, body) {
        d.extend(b);
    }
    let text = serde_json::to_string_pretty(&doc).expect("serializable");
    std::fs::write(path, text + "\n").map_err(write_err(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(write_err(path))
}

/// Writes rows of a CSV file with a header row.
pub fn write_csv<R: Serialize>(
    path: &Path,
    rows: impl IntoIterator<Item = R>,
) -> Result<(), CliError> {
    let file = File::create(path).map_err(write_err(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(write_err(path))?;
    Ok(())
}

pub fn stdout_csv<R: Serialize>(rows: impl IntoIterator<Item = R>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(std::io::stdout().lock());
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|source| CliError::Write {
        path: "stdout".into(),
        source,
    })
}

pub fn one_based(x: Option<usize>) -> Value {
    x.map_or(Value::Null, |v| json!(v + 1))
}

/// Writes a human line to a string buffer.
#[macro_export]
macro_rules! line {
    ($buf:expr, $($arg:tt)*) => {{
        use std::fmt::Write as _;
        let _ = writeln!($buf, $($arg)*);
    }};
}
