//! Line-delimited structured result records.
//!
//! Every command emits one JSON record per line: trial records first, then a
//! single summary record. Files are byte-identical across runs with equal
//! seeds, so records never carry wall-clock data; timing goes to stderr.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use qsum_core::protocol::{CheckReport, ProtocolOutcome, Status};

#[derive(Serialize)]
pub struct CheckRecord {
    pub recipient: u32,
    pub tested: u32,
    pub mismatches: u32,
    pub error_rate: f64,
    pub abort: bool,
}

impl From<&CheckReport> for CheckRecord {
    fn from(r: &CheckReport) -> Self {
        CheckRecord {
            recipient: r.recipient.0,
            tested: r.tested,
            mismatches: r.mismatches,
            error_rate: r.error_rate,
            abort: r.abort,
        }
    }
}

pub fn status_str(status: Status) -> &'static str {
    match status {
        Status::Completed => "completed",
        Status::Aborted => "aborted",
    }
}

#[derive(Serialize)]
pub struct RunTrialRecord {
    pub record: &'static str,
    pub trial: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preparer: Option<u32>,
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<u32>>,
    pub checks: Vec<CheckRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub keys: Option<Vec<Vec<u32>>>,
}

impl RunTrialRecord {
    pub fn new(trial: u64, outcome: &ProtocolOutcome, keys: Option<Vec<Vec<u32>>>) -> Self {
        RunTrialRecord {
            record: "trial",
            trial,
            preparer: None,
            status: status_str(outcome.status),
            k: outcome.sum.clone(),
            checks: outcome
                .check_reports
                .iter()
                .map(CheckRecord::from)
                .collect(),
            keys,
        }
    }
}

#[derive(Serialize)]
pub struct RunSummaryRecord {
    pub record: &'static str,
    pub command: &'static str,
    pub d: u32,
    pub n: u32,
    pub len: u32,
    pub decoys: u32,
    pub threshold: f64,
    pub seed: u64,
    pub strategy: String,
    pub trials: u64,
    pub completed: u64,
    pub aborted: u64,
}

#[derive(Serialize)]
pub struct AttackTrialRecord {
    pub record: &'static str,
    pub trial: u64,
    pub status: &'static str,
    pub mismatches: u32,
    pub tested: u32,
    pub error_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_posterior_deviation: Option<f64>,
}

#[derive(Serialize)]
pub struct AttackSummaryRecord {
    pub record: &'static str,
    pub command: &'static str,
    pub strategy: String,
    pub d: u32,
    pub n: u32,
    pub len: u32,
    pub decoys: u32,
    pub threshold: f64,
    pub seed: u64,
    pub trials: u64,
    pub aborted: u64,
    pub abort_rate: f64,
    pub per_decoy_error_rate: f64,
    pub oracle_per_decoy_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_posterior_deviation: Option<f64>,
}

#[derive(Serialize)]
pub struct OracleComboRecord {
    pub record: &'static str,
    pub d: u32,
    pub n: u32,
    pub columns: u64,
    pub max_abs_diff: f64,
    pub max_marginal_dev: f64,
}

#[derive(Serialize)]
pub struct OracleSummaryRecord {
    pub record: &'static str,
    pub command: &'static str,
    pub dmax: u32,
    pub nmax: u32,
    pub seed: u64,
    pub columns: u64,
    pub max_abs_diff: f64,
    pub max_marginal_dev: f64,
    pub tolerance: f64,
    pub ok: bool,
}

/// Sink for record lines: a file when `--out` is given, stdout otherwise.
pub struct RecordWriter {
    sink: Box<dyn Write>,
}

impl RecordWriter {
    pub fn create(out: Option<&Path>) -> Result<RecordWriter> {
        let sink: Box<dyn Write> = match out {
            Some(path) => {
                Box::new(BufWriter::new(File::create(path).with_context(|| {
                    format!("cannot create output file {}", path.display())
                })?))
            }
            None => Box::new(io::stdout().lock()),
        };
        Ok(RecordWriter { sink })
    }

    pub fn write<T: Serialize>(&mut self, record: &T) -> Result<()> {
        let line = serde_json::to_string(record)?;
        writeln!(self.sink, "{line}")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.sink.flush()?;
        Ok(())
    }
}
