use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{RadioKpm, TestId, TestRecord};
use crate::stats::median;
use crate::store::AnalysisRow;

/// Channel, link and load columns. Nothing derived from commits appears
/// here, so the baseline cannot learn code effects.
pub fn default_environment_columns() -> Vec<String> {
    let mut cols: Vec<String> = RadioKpm::FIELDS.iter().map(|s| s.to_string()).collect();
    cols.push("target_rate".into());
    cols.push("msg2_failures".into());
    cols
}

/// Anything with a test id and named numeric fields.
pub trait FieldSource {
    fn row_id(&self) -> TestId;
    fn value(&self, name: &str) -> Option<f64>;
}

impl FieldSource for TestRecord {
    fn row_id(&self) -> TestId {
        self.id
    }

    fn value(&self, name: &str) -> Option<f64> {
        self.field(name)
    }
}

impl FieldSource for AnalysisRow {
    fn row_id(&self) -> TestId {
        self.test.id
    }

    fn value(&self, name: &str) -> Option<f64> {
        self.field(name)
    }
}

/// Row indices sorted by test time, ties broken by original position.
pub fn chronological_order(ids: &[TestId]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by_key(|&i| (ids[i], i));
    order
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub ids: Vec<TestId>,
    pub columns: Vec<String>,
    /// Row-major, every value finite.
    pub values: Vec<Vec<f64>>,
    /// Median substituted for each column's missing entries.
    pub imputation: BTreeMap<String, f64>,
}

impl FeatureMatrix {
    /// Builds the matrix and learns the per-column medians from `records`.
    pub fn from_records<T: FieldSource>(records: &[&T], columns: &[String]) -> Result<Self> {
        let mut imputation = BTreeMap::new();
        for c in columns {
            let present: Vec<f64> = records.iter().filter_map(|r| r.value(c)).filter(|v| v.is_finite()).collect();
            if present.is_empty() {
                return Err(Error::data(format!("column {c} has no observed values")));
            }
            imputation.insert(c.clone(), median(&present));
        }
        Self::with_imputation(records, columns, &imputation)
    }

    /// Builds the matrix using an imputation table learned elsewhere.
    pub fn with_imputation<T: FieldSource>(records: &[&T], columns: &[String], imputation: &BTreeMap<String, f64>) -> Result<Self> {
        let values = records
            .iter()
            .map(|r| {
                columns
                    .iter()
                    .map(|c| match r.value(c) {
                        Some(v) if v.is_finite() => Ok(v),
                        _ => imputation
                            .get(c)
                            .copied()
                            .ok_or_else(|| Error::data(format!("test {}: column {c} missing and not imputable", r.row_id()))),
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FeatureMatrix {
            ids: records.iter().map(|r| r.row_id()).collect(),
            columns: columns.to_vec(),
            values,
            imputation: imputation.clone(),
        })
    }

    /// Direct construction from raw rows; rows must be finite.
    pub fn from_rows(ids: Vec<TestId>, columns: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        if ids.len() != values.len() {
            return Err(Error::data("id count differs from row count"));
        }
        if values.iter().any(|r| r.len() != columns.len() || r.iter().any(|v| !v.is_finite())) {
            return Err(Error::data("rows must be finite and match the column count"));
        }
        Ok(FeatureMatrix {
            ids,
            columns,
            values,
            imputation: BTreeMap::new(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.values.len()
    }

    pub fn subset(&self, rows: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            ids: rows.iter().map(|&i| self.ids[i]).collect(),
            columns: self.columns.clone(),
            values: rows.iter().map(|&i| self.values[i].clone()).collect(),
            imputation: self.imputation.clone(),
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.values.iter().map(|r| r[j]).collect())
    }
}
