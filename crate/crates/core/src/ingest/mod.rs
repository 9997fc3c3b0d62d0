//! Raw test artifacts to [`TestRecord`]s.
//!
//! A dataset is a tree of `<yyyymmdd>/<hhmmss>/` directories, each holding
//! a traffic-generator CSV, one or more gNB logs and a `revision.txt` that
//! names the commit under test. Log parsing is driven by a [`ParseRuleSet`].

mod gnb;
mod iperf;
mod rules;
mod scan;
mod types;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use gnb::{parse_gnb_log, parse_gnb_logs, parse_gnb_text, LogParse};
pub use iperf::{parse_iperf_bytes, parse_iperf_csv, target_rate_from_filename, IPERF_COLUMNS};
pub use rules::{ParseRule, ParseRuleSet, RuleKind, Unit};
pub use scan::{scan_dataset, ScanEntry, ScanOutput, ScanWarning, REVISION_FILE};
pub use types::{
    is_hex_like, EventCounts, RadioKpm, TestId, TestRecord, TrafficKpi, CORE_EVENTS,
    RECORD_SCHEMA_VERSION,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    /// Used when the CSV file name carries no `<N>mbps` tag.
    pub default_target_rate: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct BuiltRecord {
    pub record: TestRecord,
    pub warnings: Vec<String>,
}

/// Reads the revision identifier from the test directory.
pub fn resolve_commit_hash(entry: &ScanEntry) -> Result<String> {
    let path = entry
        .revision_file
        .as_ref()
        .ok_or_else(|| Error::data(format!("test {}: no {REVISION_FILE}", entry.id)))?;
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let hash = text.lines().next().unwrap_or("").trim().to_ascii_lowercase();
    if !is_hex_like(&hash) {
        return Err(Error::data(format!("test {}: revision `{hash}` is not hex", entry.id)));
    }
    Ok(hash)
}

/// Combines the traffic and radio parses of one test directory.
///
/// Either side may fail on its own; the record is rejected only when
/// neither yields anything.
pub fn build_test_record(
    entry: &ScanEntry,
    rules: &ParseRuleSet,
    commit_hash: &str,
    opts: &IngestOptions,
) -> Result<BuiltRecord> {
    let mut warnings = Vec::new();

    let traffic = match entry.csv_files.first() {
        None => Err("no traffic CSV".to_string()),
        Some(csv) => {
            if entry.csv_files.len() > 1 {
                warnings.push(format!("{} CSV files, using {}", entry.csv_files.len(), csv.display()));
            }
            match target_rate_from_filename(csv).or(opts.default_target_rate) {
                None => Err(format!("{}: no target rate in file name", csv.display())),
                Some(rate) => parse_iperf_csv(csv, rate).map_err(|e| e.to_string()),
            }
        }
    };
    let radio = if entry.log_files.is_empty() {
        Err("no gNB log".to_string())
    } else {
        parse_gnb_logs(&entry.log_files, rules).map_err(|e| e.to_string())
    };

    let (traffic, radio) = match (traffic, radio) {
        (Err(t), Err(r)) => {
            return Err(Error::data(format!("test {} rejected: {t}; {r}", entry.id)));
        }
        (t, r) => (t, r),
    };
    let traffic = traffic.unwrap_or_else(|e| {
        warnings.push(e);
        TrafficKpi::default()
    });
    let log = radio.unwrap_or_else(|e| {
        warnings.push(e);
        LogParse::default()
    });
    for f in &log.rejected {
        warnings.push(format!("{f} aggregate out of range, dropped"));
    }

    let mut record = TestRecord {
        schema_version: RECORD_SCHEMA_VERSION,
        id: entry.id,
        commit_hash: commit_hash.to_string(),
        traffic,
        radio: log.radio,
        events: log.events,
        missing_fields: Default::default(),
    };
    record.refresh_missing();
    record.validate()?;
    Ok(BuiltRecord { record, warnings })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestIssue {
    pub test: String,
    pub severity: String,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct IngestOutput {
    pub records: Vec<TestRecord>,
    pub issues: Vec<IngestIssue>,
}

/// Scans and parses a whole dataset. Directories are parsed in parallel;
/// the output order is the chronological scan order.
pub fn ingest_dataset(root: &Path, rules: &ParseRuleSet, opts: &IngestOptions) -> Result<IngestOutput> {
    let scan = scan_dataset(root)?;
    let mut out = IngestOutput::default();
    for w in scan.warnings {
        out.issues.push(IngestIssue {
            test: w.path,
            severity: "skipped".into(),
            message: w.reason,
        });
    }
    let results: Vec<_> = scan
        .entries
        .par_iter()
        .map(|entry| {
            resolve_commit_hash(entry).and_then(|hash| build_test_record(entry, rules, &hash, opts))
        })
        .collect();
    for (entry, res) in scan.entries.iter().zip(results) {
        match res {
            Ok(built) => {
                for w in built.warnings {
                    out.issues.push(IngestIssue {
                        test: entry.id.to_string(),
                        severity: "warning".into(),
                        message: w,
                    });
                }
                out.records.push(built.record);
            }
            Err(e) => out.issues.push(IngestIssue {
                test: entry.id.to_string(),
                severity: "rejected".into(),
                message: e.to_string(),
            }),
        }
    }
    Ok(out)
}
