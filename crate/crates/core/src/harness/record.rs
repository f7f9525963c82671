use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One row of an experiment's output: a (cell, trial, solver) outcome or,
/// for the verification suites, one checked instance.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub experiment: String,
    pub cell_index: usize,
    pub cell: String,
    pub variant: String,
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub trial: usize,
    pub seed: u64,
    pub solver: String,
    pub success: Option<bool>,
    pub rel_error: Option<f64>,
    pub residual: Option<f64>,
    pub converged: Option<bool>,
    pub mult: Option<u64>,
    pub add: Option<u64>,
    pub cmp: Option<u64>,
    pub total_ops: Option<u64>,
    pub stability_ratio: Option<f64>,
    pub gamma: Option<f64>,
    pub gamma_lower: Option<f64>,
    pub gamma_upper: Option<f64>,
    pub k_eff: Option<usize>,
    pub regime: String,
    pub value: Option<f64>,
    pub bound: Option<f64>,
    pub holds: Option<bool>,
    pub note: String,
}

impl TrialRecord {
    /// Pass/fail flag of the row: recovery success or suite check.
    pub fn outcome(&self) -> Option<bool> {
        self.success.or(self.holds)
    }
}

/// Orders records by (cell, trial); rows within a trial keep their order.
pub fn sort_records(records: &mut [TrialRecord]) {
    records.sort_by_key(|r| (r.cell_index, r.trial));
}

pub fn records_to_csv(records: &[TrialRecord]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(Vec::new());
    for r in records {
        w.serialize(r)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Parse(format!("csv buffer: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

pub fn records_from_csv(text: &str) -> Result<Vec<TrialRecord>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

pub fn read_records(path: &Path) -> Result<Vec<TrialRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    records_from_csv(&text)
}
