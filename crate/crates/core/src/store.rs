//! Feature store: line-delimited JSON record files, plus the test/commit join.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::commitcat::{Category, CommitRecord};
use crate::error::{Error, Result};
use crate::ingest::{TestId, TestRecord};

pub const ANALYSIS_SCHEMA_VERSION: u32 = 1;

/// Records stored under a unique key.
pub trait Keyed {
    fn key(&self) -> String;
}

impl Keyed for TestRecord {
    fn key(&self) -> String {
        self.id.to_string()
    }
}

impl Keyed for CommitRecord {
    fn key(&self) -> String {
        self.hash.clone()
    }
}

impl Keyed for AnalysisRow {
    fn key(&self) -> String {
        self.test.id.to_string()
    }
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .map_err(|e| Error::data(format!("{}:{}: {e}", path.display(), n + 1)))?;
        out.push(item);
    }
    Ok(out)
}

/// Writes (or replaces) a whole file.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AppendStats {
    pub appended: usize,
    /// Keys already present with identical content.
    pub unchanged: usize,
    /// Keys already present with different content; the stored record wins.
    pub conflicting: usize,
}

/// Appends records whose key is not yet in the file. Rerunning with the same
/// input leaves the file byte-identical.
pub fn append_jsonl<T: Serialize + DeserializeOwned + Keyed>(path: &Path, items: &[T]) -> Result<AppendStats> {
    let mut existing: BTreeMap<String, serde_json::Value> = BTreeMap::new();
    if path.exists() {
        for v in read_jsonl::<serde_json::Value>(path)? {
            let item: T = serde_json::from_value(v.clone())?;
            existing.insert(item.key(), v);
        }
    }
    let mut stats = AppendStats::default();
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        let key = item.key();
        let value = serde_json::to_value(item)?;
        match existing.get(&key) {
            Some(old) => {
                if *old == value {
                    stats.unchanged += 1;
                } else {
                    log::warn!("{}: keeping stored record for {key}", path.display());
                    stats.conflicting += 1;
                }
            }
            None => {
                let line = serde_json::to_string(item)?;
                w.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
                w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
                existing.insert(key, value);
                stats.appended += 1;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(stats)
}

/// One test joined with the commit it ran against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRow {
    pub schema_version: u32,
    pub test: TestRecord,
    pub commit: CommitRecord,
}

impl AnalysisRow {
    pub fn id(&self) -> TestId {
        self.test.id
    }

    pub fn eta_test(&self) -> Option<f64> {
        self.test.traffic.throughput_efficiency
    }

    pub fn layers(&self) -> Vec<Category> {
        self.commit.affected.iter().copied().filter(|c| c.is_layer()).collect()
    }

    /// Value of a test field or a commit feature slot by name.
    pub fn field(&self, name: &str) -> Option<f64> {
        self.test.field(name).or_else(|| {
            crate::commitcat::FEATURE_NAMES
                .iter()
                .position(|n| *n == name)
                .and_then(|i| self.commit.features.get(i).copied())
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assembled {
    pub rows: Vec<AnalysisRow>,
    /// Tests whose commit hash has no categorized commit.
    pub unmatched: Vec<TestId>,
    /// Commits no test ran against.
    pub unused_commits: Vec<String>,
}

/// Joins tests to commits by revision hash; output ordered by test id.
pub fn assemble(tests: &[TestRecord], commits: &[CommitRecord]) -> Assembled {
    let by_hash: BTreeMap<&str, &CommitRecord> = commits.iter().map(|c| (c.hash.as_str(), c)).collect();
    let mut used = BTreeSet::new();
    let mut out = Assembled::default();
    let mut sorted: Vec<&TestRecord> = tests.iter().collect();
    sorted.sort_by_key(|t| t.id);
    for t in sorted {
        match by_hash.get(t.commit_hash.as_str()) {
            Some(c) => {
                used.insert(c.hash.as_str());
                out.rows.push(AnalysisRow {
                    schema_version: ANALYSIS_SCHEMA_VERSION,
                    test: t.clone(),
                    commit: (*c).clone(),
                });
            }
            None => out.unmatched.push(t.id),
        }
    }
    out.unused_commits = by_hash.keys().filter(|h| !used.contains(*h)).map(|h| h.to_string()).collect();
    out
}
