//! The ad-level analysis table and its CSV form.
//!
//! Columns are the design factors followed by `published` (0/1), `tester_id`,
//! `prompt_id` and `decided_at` (RFC 3339, empty when unknown).

use std::collections::BTreeMap;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Factor columns of the political-ad design, in report order.
pub const STANDARD_FACTORS: [&str; 5] = ["platform", "ad_poster", "location", "leaning", "ad_type"];

const FIXED_COLUMNS: [&str; 4] = ["published", "tester_id", "prompt_id", "decided_at"];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("dataset is missing column `{0}`")]
    MissingColumn(String),
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("line {line}: {reason}")]
    BadValue { line: u64, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataRow {
    pub levels: BTreeMap<String, String>,
    pub published: bool,
    pub tester_id: String,
    pub prompt_id: String,
    pub decided_at: Option<DateTime<Utc>>,
}

impl DataRow {
    pub fn level(&self, factor: &str) -> Option<&str> {
        self.levels.get(factor).map(String::as_str)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisTable {
    pub factors: Vec<String>,
    pub rows: Vec<DataRow>,
}

/// Standard factors first in report order, then any others alphabetically.
pub fn column_order<'a, I: IntoIterator<Item = &'a String>>(names: I) -> Vec<String> {
    let mut names: Vec<String> = names.into_iter().cloned().collect();
    names.sort();
    names.dedup();
    let mut out: Vec<String> = STANDARD_FACTORS
        .iter()
        .filter(|s| names.iter().any(|n| n == *s))
        .map(|s| s.to_string())
        .collect();
    out.extend(
        names
            .into_iter()
            .filter(|n| !STANDARD_FACTORS.contains(&n.as_str())),
    );
    out
}

impl AnalysisTable {
    pub fn new(factors: Vec<String>) -> Self {
        AnalysisTable {
            factors,
            rows: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn has_factor(&self, name: &str) -> bool {
        self.factors.iter().any(|f| f == name)
    }

    /// Rows whose `factor` equals `level`.
    pub fn filter(&self, factor: &str, level: &str) -> AnalysisTable {
        AnalysisTable {
            factors: self.factors.clone(),
            rows: self
                .rows
                .iter()
                .filter(|r| r.level(factor) == Some(level))
                .cloned()
                .collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        let header: Vec<&str> = self
            .factors
            .iter()
            .map(String::as_str)
            .chain(FIXED_COLUMNS)
            .collect();
        writer.write_record(&header).expect("in-memory write");
        for row in &self.rows {
            let mut record: Vec<String> = self
                .factors
                .iter()
                .map(|f| row.levels.get(f).cloned().unwrap_or_default())
                .collect();
            record.push(if row.published { "1" } else { "0" }.to_string());
            record.push(row.tester_id.clone());
            record.push(row.prompt_id.clone());
            record.push(
                row.decided_at
                    .map(|t| t.to_rfc3339_opts(SecondsFormat::Secs, true))
                    .unwrap_or_default(),
            );
            writer.write_record(&record).expect("in-memory write");
        }
        String::from_utf8(writer.into_inner().expect("flush")).expect("utf-8")
    }

    /// Parses the CSV form. Every column other than the four fixed ones is a
    /// factor.
    pub fn from_csv(bytes: &[u8]) -> Result<Self, DatasetError> {
        let mut reader = csv::ReaderBuilder::new().from_reader(bytes);
        let headers = reader.headers()?.clone();
        let mut seen = std::collections::BTreeSet::new();
        for h in headers.iter() {
            if !seen.insert(h) {
                return Err(DatasetError::DuplicateColumn(h.to_string()));
            }
        }
        let position = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| DatasetError::MissingColumn(name.to_string()))
        };
        let published_col = position("published")?;
        let tester_col = position("tester_id")?;
        let prompt_col = position("prompt_id")?;
        let decided_col = position("decided_at")?;
        let factor_cols: Vec<(usize, String)> = headers
            .iter()
            .enumerate()
            .filter(|(_, h)| !FIXED_COLUMNS.contains(h))
            .map(|(i, h)| (i, h.to_string()))
            .collect();
        let mut table = AnalysisTable::new(factor_cols.iter().map(|(_, h)| h.clone()).collect());
        for record in reader.records() {
            let record = record?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let bad = |reason: String| DatasetError::BadValue { line, reason };
            let published = match &record[published_col] {
                "1" => true,
                "0" => false,
                other => return Err(bad(format!("published must be 0 or 1, got `{other}`"))),
            };
            let decided_at = match &record[decided_col] {
                "" => None,
                s => Some(
                    DateTime::parse_from_rfc3339(s)
                        .map_err(|e| bad(format!("decided_at `{s}`: {e}")))?
                        .with_timezone(&Utc),
                ),
            };
            let mut levels = BTreeMap::new();
            for (i, name) in &factor_cols {
                if record[*i].is_empty() {
                    return Err(bad(format!("empty level for factor `{name}`")));
                }
                levels.insert(name.clone(), record[*i].to_string());
            }
            table.rows.push(DataRow {
                levels,
                published,
                tester_id: record[tester_col].to_string(),
                prompt_id: record[prompt_col].to_string(),
                decided_at,
            });
        }
        Ok(table)
    }
}
