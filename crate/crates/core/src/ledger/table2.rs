//! Rebuilding ad-level rows from a per-cell summary table.
//!
//! Input CSV: one column per factor, then `n` and `published_pct`. Every
//! column other than `n` and `published_pct` is taken as a factor.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{Decision, Ledger, LedgerError, Observation};
use crate::allocation::{assignment_id, Assignment, AssignmentStatus};
use crate::analysis::format_fixed;
use crate::dataset::{column_order, AnalysisTable, DataRow};
use crate::design::Cell;

pub const REFERENCE_TESTER: &str = "reference";
/// Timestamp stamped on reconstructed rows; the summary table carries none.
pub const REFERENCE_DECIDED_AT: &str = "2018-10-10T00:00:00Z";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Row {
    pub levels: BTreeMap<String, String>,
    pub n: u32,
    pub published_pct: f64,
    /// Decimal places the percentage was written with.
    pub pct_decimals: u32,
    pub line: u64,
}

impl Table2Row {
    pub fn cell_id(&self) -> String {
        Cell {
            assignment: self.levels.clone(),
        }
        .id()
    }
}

pub fn parse_table2_csv(bytes: &[u8]) -> Result<Vec<Table2Row>, LedgerError> {
    let bad = |line: u64, reason: String| LedgerError::Table2 { line, reason };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let headers = reader.headers().map_err(|e| bad(1, e.to_string()))?.clone();
    let mut seen = BTreeSet::new();
    for h in headers.iter() {
        if !seen.insert(h) {
            return Err(bad(1, format!("duplicate column `{h}`")));
        }
    }
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| bad(1, format!("missing column `{name}`")))
    };
    let (n_col, pct_col) = (col("n")?, col("published_pct")?);
    let factor_cols: Vec<(usize, &str)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != n_col && *i != pct_col)
        .collect();
    if factor_cols.is_empty() {
        return Err(bad(1, "no factor columns".into()));
    }
    let mut rows = Vec::new();
    let mut cells = BTreeSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            bad(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let levels: BTreeMap<String, String> = factor_cols
            .iter()
            .map(|&(i, name)| (name.to_string(), record[i].to_string()))
            .collect();
        let n: u32 = record[n_col]
            .parse()
            .map_err(|_| bad(line, format!("n `{}` is not a count", &record[n_col])))?;
        let pct_text = &record[pct_col];
        let published_pct: f64 = pct_text
            .parse()
            .ok()
            .filter(|p: &f64| p.is_finite() && (0.0..=100.0).contains(p))
            .ok_or_else(|| {
                bad(
                    line,
                    format!("published_pct `{pct_text}` is not in 0..=100"),
                )
            })?;
        if pct_text.contains(['e', 'E']) {
            return Err(bad(
                line,
                "published_pct must be written in fixed notation".into(),
            ));
        }
        let pct_decimals = pct_text.split_once('.').map_or(0, |(_, f)| f.len() as u32);
        let row = Table2Row {
            levels,
            n,
            published_pct,
            pct_decimals,
            line,
        };
        let id = row.cell_id();
        Cell::parse_id(&id).map_err(|e| bad(line, e.to_string()))?;
        if !cells.insert(id.clone()) {
            return Err(bad(line, format!("cell `{id}` appears twice")));
        }
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub table: AnalysisTable,
    /// Published count chosen for each input row, in input order.
    pub published: Vec<u32>,
    pub warnings: Vec<String>,
}

fn published_count(row: &Table2Row) -> Result<(u32, Option<String>), LedgerError> {
    if row.n == 0 {
        return Ok((0, None));
    }
    let target = format_fixed(row.published_pct, row.pct_decimals);
    let candidates: Vec<u32> = (0..=row.n)
        .filter(|&k| format_fixed(100.0 * k as f64 / row.n as f64, row.pct_decimals) == target)
        .collect();
    let exact = row.n as f64 * row.published_pct / 100.0;
    let chosen = candidates
        .iter()
        .copied()
        .min_by(|a, b| {
            (*a as f64 - exact)
                .abs()
                .total_cmp(&(*b as f64 - exact).abs())
        })
        .ok_or_else(|| LedgerError::Table2 {
            line: row.line,
            reason: format!("no whole count out of {} rounds to {target}%", row.n),
        })?;
    let warning = (candidates.len() > 1).then(|| {
        format!(
            "line {}: {target}% of {} is ambiguous ({:?}); using {chosen}",
            row.line, row.n, candidates
        )
    });
    Ok((chosen, warning))
}

pub fn reference_decided_at() -> DateTime<Utc> {
    REFERENCE_DECIDED_AT.parse().expect("valid constant")
}

/// Emits `n` rows per cell, the first `round(n × pct)` of them published.
pub fn reconstruct_reference_dataset(rows: &[Table2Row]) -> Result<Reconstruction, LedgerError> {
    let decided_at = reference_decided_at();
    let mut factors = Vec::new();
    let mut out = Vec::new();
    let mut published = Vec::new();
    let mut warnings = Vec::new();
    for (r, row) in rows.iter().enumerate() {
        let (k, warning) = published_count(row)?;
        warnings.extend(warning);
        published.push(k);
        factors.extend(row.levels.keys().cloned());
        for i in 0..row.n {
            out.push(DataRow {
                levels: row.levels.clone(),
                published: i < k,
                tester_id: REFERENCE_TESTER.into(),
                prompt_id: format!("ref-{:02}-{:03}", r + 1, i + 1),
                decided_at: Some(decided_at),
            });
        }
    }
    Ok(Reconstruction {
        table: AnalysisTable {
            factors: column_order(&factors),
            rows: out,
        },
        published,
        warnings,
    })
}

/// Writes a reconstruction into a ledger as assignment/outcome pairs.
/// Returns the number of entries appended.
pub fn import_reference(ledger: &mut Ledger, rec: &Reconstruction) -> Result<usize, LedgerError> {
    let before = ledger.len();
    for row in &rec.table.rows {
        let decided_at = row.decided_at.unwrap_or_else(reference_decided_at);
        let id = assignment_id(&row.prompt_id, 0);
        ledger.append_assignment(
            Assignment {
                assignment_id: id.clone(),
                prompt_id: row.prompt_id.clone(),
                tester_id: row.tester_id.clone(),
                cell_id: Cell {
                    assignment: row.levels.clone(),
                }
                .id(),
                status: AssignmentStatus::Pending,
                created_at: decided_at,
                window_hours: crate::prompts::DURATION_HOURS,
                retry_of: None,
            },
            None,
        )?;
        ledger.append_outcome(Observation {
            assignment_id: id,
            decision: if row.published {
                Decision::Published
            } else {
                Decision::ProhibitedPolitical
            },
            decided_at,
            notes: None,
        })?;
    }
    Ok(ledger.len() - before)
}
