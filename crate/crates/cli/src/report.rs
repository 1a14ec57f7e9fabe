use log::{Level, LevelFilter, Log, Metadata, Record};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use crate::Failure;

static WARNINGS: Mutex<Vec<String>> = Mutex::new(Vec::new());

/// Forwards to env_logger and keeps every warning for the report.
struct CapturingLogger {
    inner: env_logger::Logger,
}

impl Log for CapturingLogger {
    fn enabled(&self, metadata: &Metadata) -> bool {
        metadata.level() <= Level::Warn || self.inner.enabled(metadata)
    }

    fn log(&self, record: &Record) {
        if record.level() <= Level::Warn {
            WARNINGS.lock().unwrap().push(record.args().to_string());
        }
        if self.inner.enabled(record.metadata()) {
            self.inner.log(record);
        }
    }

    fn flush(&self) {
        self.inner.flush()
    }
}

/// Logging level from CANON_LOG, defaulting to errors only.
pub fn init_logging() {
    let inner = env_logger::Builder::from_env(env_logger::Env::new().filter_or("CANON_LOG", "error")).build();
    let level = inner.filter().max(LevelFilter::Warn);
    if log::set_boxed_logger(Box::new(CapturingLogger { inner })).is_ok() {
        log::set_max_level(level);
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Residual {
    pub value: f64,
    pub tol: f64,
    pub pass: bool,
}

#[derive(Debug, Default, Serialize)]
pub struct RunReport {
    pub command: Vec<String>,
    /// Input path to sha256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub residuals: BTreeMap<String, Residual>,
    pub diagnostics: BTreeMap<String, Value>,
    pub warnings: Vec<String>,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub exit_code: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Output directory, format and the report being assembled.
pub struct Session {
    pub out: PathBuf,
    pub format: Format,
    pub report: RunReport,
}

impl Session {
    pub fn new(command: Vec<String>, out: PathBuf, format: Format) -> Self {
        Self { out, format, report: RunReport { command, ..Default::default() } }
    }

    /// Reads an input file and records its digest.
    pub fn read(&mut self, path: &Path) -> Result<Vec<u8>, Failure> {
        let bytes = fs::read(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
        self.report.inputs.insert(path.display().to_string(), hex::encode(Sha256::digest(&bytes)));
        Ok(bytes)
    }

    pub fn read_json<T: serde::de::DeserializeOwned>(&mut self, path: &Path) -> Result<T, Failure> {
        let bytes = self.read(path)?;
        serde_json::from_slice(&bytes).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
    }

    fn write(&mut self, name: &str, contents: &[u8]) -> Result<(), Failure> {
        fs::create_dir_all(&self.out).map_err(|e| Failure::Io(format!("{}: {e}", self.out.display())))?;
        let path = self.out.join(name);
        fs::write(&path, contents).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        self.report.outputs.push(name.to_string());
        Ok(())
    }

    /// Non-tabular output; always JSON.
    pub fn write_json<T: Serialize>(&mut self, stem: &str, value: &T) -> Result<(), Failure> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Io(e.to_string()))?;
        text.push('\n');
        self.write(&format!("{stem}.json"), text.as_bytes())
    }

    /// Tabular output honouring `--format`; JSON gives one object per row.
    pub fn write_table(&mut self, stem: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<(), Failure> {
        match self.format {
            Format::Csv => {
                let mut text = header.join(",");
                text.push('\n');
                for row in rows {
                    let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
                    text.push_str(&cells.join(","));
                    text.push('\n');
                }
                self.write(&format!("{stem}.csv"), text.as_bytes())
            }
            Format::Json => {
                let objects: Vec<BTreeMap<&str, f64>> =
                    rows.iter().map(|r| header.iter().copied().zip(r.iter().copied()).collect()).collect();
                self.write_json(stem, &objects)
            }
        }
    }

    pub fn residual(&mut self, name: &str, value: f64, tol: f64) {
        let pass = value.is_finite() && value <= tol;
        self.report.residuals.insert(name.to_string(), Residual { value, tol, pass });
    }

    /// Records a check that `value` is at least `floor`.
    pub fn at_least(&mut self, name: &str, value: f64, floor: f64) {
        let pass = value.is_finite() && value >= floor;
        self.report.residuals.insert(name.to_string(), Residual { value, tol: floor, pass });
    }

    pub fn diagnostic<T: Serialize>(&mut self, name: &str, value: T) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.report.diagnostics.insert(name.to_string(), v);
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        self.report.warnings.push(message.into());
    }

    pub fn failed_residuals(&self) -> Vec<String> {
        self.report.residuals.iter().filter(|(_, r)| !r.pass).map(|(k, _)| k.clone()).collect()
    }

    /// Writes report.json with the final status.
    pub fn finish(mut self, outcome: &Result<(), Failure>) -> i32 {
        // Worker threads log in any order; sort for reproducible reports.
        let mut captured: Vec<String> = WARNINGS.lock().unwrap().drain(..).collect();
        captured.sort();
        captured.dedup();
        self.report.warnings.extend(captured);
        let (status, code) = match outcome {
            Ok(()) => ("ok", 0),
            Err(f) => (f.status(), f.code()),
        };
        self.report.status = status.to_string();
        self.report.error = outcome.as_ref().err().map(|f| f.to_string());
        self.report.exit_code = code;
        let text = serde_json::to_string_pretty(&self.report).expect("report serializes");
        let written = fs::create_dir_all(&self.out).and_then(|_| fs::write(self.out.join("report.json"), text + "\n"));
        if let Err(e) = written {
            eprintln!("error: cannot write report: {e}");
            return code.max(1);
        }
        code
    }
}
