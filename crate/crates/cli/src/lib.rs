//! Subcommand implementations behind the `ocd` binary.
//!
//! Each command takes the raw config text, runs, and returns a rendered
//! report plus the outcome of its internal checks. Reports carry the SHA-256
//! of the config bytes, the effective seed and the crate version, so a report
//! alone identifies the run that produced it.

pub mod cost_report;
pub mod merge_bench;
pub mod sample_demo;

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    MergeBench,
    SampleDemo,
    CostReport,
}

/// Everything a command needs besides its config text.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the config's `seed`.
    pub seed: Option<u64>,
    /// Resolves relative paths inside the config.
    pub config_dir: PathBuf,
    /// Where to write latent dumps and frame images, if anywhere.
    pub dump_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// Header fields shared by every report.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: Command,
    pub config_sha256: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report<R: Serialize, X: Serialize> {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub rows: Vec<R>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extra: Option<X>,
}

/// Rendered report and whether every check passed.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub text: String,
    pub passed: bool,
    pub failures: Vec<String>,
}

pub fn config_hash(config: &str) -> String {
    Sha256::digest(config.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// A flat CSV projection of a report row.
pub trait CsvRow {
    type Flat: Serialize + Default;
    fn flat(&self, provenance: &Provenance) -> Self::Flat;
}

fn render<R, X>(report: &Report<R, X>, format: Format) -> Result<String>
where
    R: Serialize + CsvRow,
    X: Serialize,
{
    match format {
        Format::Json => {
            let mut text = serde_json::to_string_pretty(report)?;
            text.push('\n');
            Ok(text)
        }
        Format::Csv => {
            let mut out = csv_header::<R::Flat>()?;
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
            for row in &report.rows {
                w.serialize(row.flat(&report.provenance))?;
            }
            out.push_str(std::str::from_utf8(&w.into_inner()?)?);
            Ok(out)
        }
    }
}

/// The header line of a flat row type, written even when there are no rows.
fn csv_header<T: Serialize + Default>() -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.serialize(T::default())?;
    let text = String::from_utf8(w.into_inner()?)?;
    let header = text.lines().next().context("flat row has no columns")?;
    Ok(format!("{header}\n"))
}

fn finish<R, X>(
    command: Command,
    config: &str,
    seed: u64,
    checks: Vec<Check>,
    rows: Vec<R>,
    extra: Option<X>,
    format: Format,
) -> Result<RunOutcome>
where
    R: Serialize + CsvRow,
    X: Serialize,
{
    let failures: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{}: {}", c.name, c.detail))
        .collect();
    let report = Report {
        provenance: Provenance {
            tool: "ocd",
            version: VERSION,
            command,
            config_sha256: config_hash(config),
            seed,
        },
        passed: failures.is_empty(),
        checks,
        rows,
        extra,
    };
    Ok(RunOutcome {
        text: render(&report, format)?,
        passed: report.passed,
        failures,
    })
}

/// Run one subcommand on the given config text.
pub fn run(command: Command, config: &str, format: Format, opts: &RunOptions) -> Result<RunOutcome> {
    match command {
        Command::MergeBench => merge_bench::run(config, format, opts),
        Command::SampleDemo => sample_demo::run(config, format, opts),
        Command::CostReport => cost_report::run(config, format, opts),
    }
}

/// Read a config file and run the command with paths resolved next to it.
pub fn run_file(command: Command, path: &Path, format: Format, mut opts: RunOptions) -> Result<RunOutcome> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    opts.config_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    run(command, &text, format, &opts)
}

fn parse_config<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> Result<T> {
    serde_json::from_str(text).with_context(|| format!("invalid {what} config"))
}

fn write_dump(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => 0.0,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}
