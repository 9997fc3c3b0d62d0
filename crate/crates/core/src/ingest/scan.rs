use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::types::TestId;

/// File inside a test directory that names the revision under test.
pub const REVISION_FILE: &str = "revision.txt";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanEntry {
    pub id: TestId,
    pub dir: PathBuf,
    pub csv_files: Vec<PathBuf>,
    pub log_files: Vec<PathBuf>,
    pub revision_file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanWarning {
    pub path: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct ScanOutput {
    pub entries: Vec<ScanEntry>,
    pub warnings: Vec<ScanWarning>,
}

fn sorted_children(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        out.push(entry.map_err(|e| Error::io(dir, e))?.path());
    }
    out.sort();
    Ok(out)
}

fn name_of(path: &Path) -> &str {
    path.file_name().and_then(|n| n.to_str()).unwrap_or("")
}

fn has_ext(path: &Path, ext: &str) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

/// Walks `<root>/<yyyymmdd>/<hhmmss>/` and lists the artifacts of each test.
///
/// Directories whose names do not parse are skipped with a warning, as are
/// test directories without any `.csv` or `.log` file. The result is sorted
/// by test id.
pub fn scan_dataset(root: &Path) -> Result<ScanOutput> {
    let mut out = ScanOutput::default();
    let warn = |out: &mut ScanOutput, path: &Path, reason: String| {
        out.warnings.push(ScanWarning {
            path: path.display().to_string(),
            reason,
        })
    };

    for day_dir in sorted_children(root)? {
        if !day_dir.is_dir() {
            continue;
        }
        let day = name_of(&day_dir).to_string();
        if let Err(e) = TestId::from_dir_names(&day, "000000") {
            warn(&mut out, &day_dir, e.to_string());
            continue;
        }
        let tests = match sorted_children(&day_dir) {
            Ok(t) => t,
            Err(e) => {
                warn(&mut out, &day_dir, e.to_string());
                continue;
            }
        };
        for test_dir in tests {
            if !test_dir.is_dir() {
                continue;
            }
            let id = match TestId::from_dir_names(&day, name_of(&test_dir)) {
                Ok(id) => id,
                Err(e) => {
                    warn(&mut out, &test_dir, e.to_string());
                    continue;
                }
            };
            let files = match sorted_children(&test_dir) {
                Ok(f) => f,
                Err(e) => {
                    warn(&mut out, &test_dir, e.to_string());
                    continue;
                }
            };
            let csv_files: Vec<_> = files.iter().filter(|p| p.is_file() && has_ext(p, "csv")).cloned().collect();
            let log_files: Vec<_> = files.iter().filter(|p| p.is_file() && has_ext(p, "log")).cloned().collect();
            let revision_file = files.iter().find(|p| name_of(p) == REVISION_FILE).cloned();
            if csv_files.is_empty() && log_files.is_empty() {
                warn(&mut out, &test_dir, "no recognized artifacts (*.csv, *.log)".into());
                continue;
            }
            out.entries.push(ScanEntry {
                id,
                dir: test_dir,
                csv_files,
                log_files,
                revision_file,
            });
        }
    }
    out.entries.sort_by_key(|e| e.id);
    Ok(out)
}
