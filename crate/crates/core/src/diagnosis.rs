//! Design diagnosis by simulation.
//!
//! A [`DecisionModel`] states what publication probability each cell is
//! assumed to have. [`estimate_power`] simulates many hypothetical studies at
//! each candidate per-cell sample size and reports, per declared contrast, how
//! often a two-sided Fisher exact test on the pooled 2x2 table rejects, how far
//! the estimated difference drifts from the assumed one, and how wide the
//! interval for the difference is.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::wilson_interval;
use crate::design::{enumerate_cells, AuditDesign, Cell, DesignError};
use crate::hash::content_hash;
use crate::rng;
use crate::stats::fisher_exact_two_sided;

pub const DEFAULT_N_GRID: [u32; 5] = [10, 15, 20, 25, 30];
pub const DEFAULT_SIMS: u32 = 2000;
pub const DEFAULT_ALPHA: f64 = 0.05;
pub const MIN_SIMS: u32 = 100;
pub const TEST_NAME: &str = "two-sided Fisher exact test on pooled 2x2 publication counts";

const SIM_DOMAIN: &str = "diagnosis/simulate";

#[derive(Debug, Error)]
pub enum DiagnosisError {
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error("malformed model document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("model gives no publication rate for cell(s): {}", .0.join(", "))]
    ModelCoverage(Vec<String>),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("contrast `{contrast}` compares level `{level}`, which has no legal cells")]
    ExcludedContrast { contrast: String, level: String },
    #[error("{0}")]
    Usage(String),
}

/// A two-arm comparison on one factor. `delta_pp` is added to the rate of
/// every cell at the treatment level, in percentage points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contrast {
    pub name: String,
    pub factor: String,
    pub reference: String,
    pub treatment: String,
    #[serde(default)]
    pub delta_pp: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DecisionModel {
    /// Rate for any legal cell missing from `base_rate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_rate: Option<f64>,
    #[serde(default)]
    pub base_rate: BTreeMap<String, f64>,
    #[serde(default)]
    pub contrasts: Vec<Contrast>,
}

impl DecisionModel {
    pub fn uniform(rate: f64) -> Self {
        DecisionModel {
            default_rate: Some(rate),
            ..Default::default()
        }
    }

    pub fn from_json_slice(bytes: &[u8]) -> Result<Self, DiagnosisError> {
        Ok(serde_json::from_slice(bytes)?)
    }

    pub fn with_contrast(mut self, contrast: Contrast) -> Self {
        self.contrasts.push(contrast);
        self
    }

    /// Publication probability of every legal cell after contrast deltas,
    /// clamped to [0, 1].
    pub fn cell_rates(
        &self,
        design: &AuditDesign,
        cells: &[Cell],
    ) -> Result<Vec<f64>, DiagnosisError> {
        let check = |what: &str, p: f64| {
            if p.is_finite() && (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(DiagnosisError::InvalidModel(format!(
                    "{what} has probability {p}, outside [0, 1]"
                )))
            }
        };
        if let Some(p) = self.default_rate {
            check("default_rate", p)?;
        }
        for (id, &p) in &self.base_rate {
            check(id, p)?;
            let cell = Cell::parse_id(id)?;
            if !cell.is_legal_in(design) {
                return Err(DesignError::UnknownCell(id.clone()).into());
            }
        }
        for c in &self.contrasts {
            self.check_contrast(design, cells, c)?;
        }
        let mut missing = Vec::new();
        let mut rates = Vec::with_capacity(cells.len());
        for cell in cells {
            let id = cell.id();
            let Some(base) = self.base_rate.get(&id).copied().or(self.default_rate) else {
                missing.push(id);
                continue;
            };
            let shift: f64 = self
                .contrasts
                .iter()
                .filter(|c| cell.level(&c.factor) == Some(c.treatment.as_str()))
                .map(|c| c.delta_pp / 100.0)
                .sum();
            rates.push((base + shift).clamp(0.0, 1.0));
        }
        if !missing.is_empty() {
            return Err(DiagnosisError::ModelCoverage(missing));
        }
        Ok(rates)
    }

    fn check_contrast(
        &self,
        design: &AuditDesign,
        cells: &[Cell],
        c: &Contrast,
    ) -> Result<(), DiagnosisError> {
        let factor = design.factor(&c.factor).ok_or_else(|| {
            DiagnosisError::InvalidModel(format!(
                "contrast `{}` names unknown factor `{}`",
                c.name, c.factor
            ))
        })?;
        if !c.delta_pp.is_finite() {
            return Err(DiagnosisError::InvalidModel(format!(
                "contrast `{}` has a non-finite delta",
                c.name
            )));
        }
        if c.reference == c.treatment {
            return Err(DiagnosisError::InvalidModel(format!(
                "contrast `{}` compares a level with itself",
                c.name
            )));
        }
        for level in [&c.reference, &c.treatment] {
            if !factor.levels.contains(level) {
                return Err(DiagnosisError::InvalidModel(format!(
                    "contrast `{}` names unknown level `{level}` of `{}`",
                    c.name, c.factor
                )));
            }
            if !cells
                .iter()
                .any(|cell| cell.level(&c.factor) == Some(level))
            {
                return Err(DiagnosisError::ExcludedContrast {
                    contrast: c.name.clone(),
                    level: level.clone(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulatedRow {
    pub cell_id: String,
    pub replicate: u32,
    pub published: bool,
}

/// `n_per_cell` independent Bernoulli draws per legal cell.
///
/// Row `i` of a cell is the `i`-th draw of the stream keyed by
/// `(seed, cell_id, 0)`; [`estimate_power`] uses the same streams with the
/// simulation index in place of `0`.
pub fn simulate_study(
    design: &AuditDesign,
    model: &DecisionModel,
    n_per_cell: u32,
    seed: u64,
) -> Result<Vec<SimulatedRow>, DiagnosisError> {
    if n_per_cell == 0 {
        return Err(DiagnosisError::Usage(
            "n_per_cell must be at least 1".into(),
        ));
    }
    let cells = enumerate_cells(design)?;
    let rates = model.cell_rates(design, &cells)?;
    let mut rows = Vec::with_capacity(cells.len() * n_per_cell as usize);
    for (cell, &p) in cells.iter().zip(&rates) {
        let id = cell.id();
        let mut stream = rng::stream(SIM_DOMAIN, seed, &id, 0);
        for replicate in 0..n_per_cell {
            rows.push(SimulatedRow {
                cell_id: id.clone(),
                replicate,
                published: stream.random::<f64>() < p,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisRow {
    pub n_per_cell: u32,
    pub contrast: String,
    pub reference_n: u64,
    pub treatment_n: u64,
    /// Assumed treatment-minus-reference publication rate.
    pub true_difference: f64,
    pub power: f64,
    /// |mean estimated difference − assumed difference|.
    pub bias: f64,
    /// Mean width of the Newcombe hybrid-score 95% interval for the difference.
    pub ci_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSizeSummary {
    pub n_per_cell: u32,
    /// Mean over cells of |mean estimated cell rate − assumed cell rate|.
    pub mean_abs_rate_bias: f64,
    /// Mean width of the per-cell Wilson 95% interval.
    pub mean_cell_ci_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisReport {
    pub generator: String,
    pub test: String,
    pub seed: u64,
    pub sims: u32,
    pub alpha: f64,
    pub design_hash: String,
    pub model_hash: String,
    pub rows: Vec<DiagnosisRow>,
    pub by_n: Vec<SampleSizeSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recommendation: Option<Recommendation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub target_power: f64,
    pub n_per_cell: Option<u32>,
}

impl DiagnosisReport {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// CSV with columns `n_per_cell,contrast,power,bias,ci_width`.
    pub fn to_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record(["n_per_cell", "contrast", "power", "bias", "ci_width"])
            .expect("in-memory write");
        for row in &self.rows {
            writer
                .write_record([
                    row.n_per_cell.to_string(),
                    row.contrast.clone(),
                    row.power.to_string(),
                    row.bias.to_string(),
                    row.ci_width.to_string(),
                ])
                .expect("in-memory write");
        }
        String::from_utf8(writer.into_inner().expect("flush")).expect("utf-8")
    }
}

struct ArmIndex {
    name: String,
    reference: Vec<usize>,
    treatment: Vec<usize>,
    true_difference: f64,
}

/// Per-simulation outcome for one (n, contrast) pair.
#[derive(Clone, Copy)]
struct ContrastDraw {
    rejected: bool,
    difference: f64,
    width: f64,
}

/// Newcombe's hybrid score interval for p2 − p1 built from two Wilson intervals.
fn newcombe_width(x1: u64, n1: u64, x2: u64, n2: u64) -> f64 {
    let p1 = x1 as f64 / n1 as f64;
    let p2 = x2 as f64 / n2 as f64;
    let (l1, u1) = wilson_interval(x1, n1, 0.95).expect("n1 > 0");
    let (l2, u2) = wilson_interval(x2, n2, 0.95).expect("n2 > 0");
    let lower = ((p2 - l2).powi(2) + (u1 - p1).powi(2)).sqrt();
    let upper = ((u2 - p2).powi(2) + (p1 - l1).powi(2)).sqrt();
    lower + upper
}

/// Simulates `sims` studies at each grid size and tabulates power, bias and
/// Per-simulation cell counts and contrast draws, indexed by grid point.
type SimDraws = (Vec<Vec<u64>>, Vec<Vec<ContrastDraw>>);

/// interval width for every contrast in the model.
pub fn estimate_power(
    design: &AuditDesign,
    model: &DecisionModel,
    n_grid: &[u32],
    sims: u32,
    alpha: f64,
    seed: u64,
) -> Result<DiagnosisReport, DiagnosisError> {
    if sims < MIN_SIMS {
        return Err(DiagnosisError::Usage(format!(
            "sims must be at least {MIN_SIMS}, got {sims}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(DiagnosisError::Usage(format!(
            "alpha must be in (0, 1), got {alpha}"
        )));
    }
    if n_grid.is_empty() || n_grid.contains(&0) {
        return Err(DiagnosisError::Usage(
            "n grid must be non-empty and every n at least 1".into(),
        ));
    }
    if model.contrasts.is_empty() {
        return Err(DiagnosisError::Usage(
            "model declares no contrasts to diagnose".into(),
        ));
    }
    let mut grid = n_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();

    let cells = enumerate_cells(design)?;
    let rates = model.cell_rates(design, &cells)?;
    let ids: Vec<String> = cells.iter().map(Cell::id).collect();
    let arms: Vec<ArmIndex> = model
        .contrasts
        .iter()
        .map(|c| {
            let pick = |level: &str| -> Vec<usize> {
                (0..cells.len())
                    .filter(|&i| cells[i].level(&c.factor) == Some(level))
                    .collect()
            };
            let reference = pick(&c.reference);
            let treatment = pick(&c.treatment);
            let mean =
                |idx: &[usize]| idx.iter().map(|&i| rates[i]).sum::<f64>() / idx.len() as f64;
            ArmIndex {
                name: c.name.clone(),
                true_difference: mean(&treatment) - mean(&reference),
                reference,
                treatment,
            }
        })
        .collect();
    let max_n = *grid.last().expect("non-empty grid") as usize;

    // counts[g][cell], then contrast draws per grid point.
    let per_sim: Vec<SimDraws> = (0..sims)
        .into_par_iter()
        .map(|sim| {
            let mut counts = vec![vec![0u64; cells.len()]; grid.len()];
            for (c, (id, &p)) in ids.iter().zip(&rates).enumerate() {
                let mut stream = rng::stream(SIM_DOMAIN, seed, id, u64::from(sim));
                let mut running = 0u64;
                let mut g = 0;
                for draw in 1..=max_n {
                    if stream.random::<f64>() < p {
                        running += 1;
                    }
                    while g < grid.len() && grid[g] as usize == draw {
                        counts[g][c] = running;
                        g += 1;
                    }
                }
            }
            let draws = grid
                .iter()
                .enumerate()
                .map(|(g, &n)| {
                    arms.iter()
                        .map(|arm| {
                            let n = u64::from(n);
                            let x1: u64 = arm.reference.iter().map(|&i| counts[g][i]).sum();
                            let x2: u64 = arm.treatment.iter().map(|&i| counts[g][i]).sum();
                            let n1 = n * arm.reference.len() as u64;
                            let n2 = n * arm.treatment.len() as u64;
                            let p = fisher_exact_two_sided(x1, n1 - x1, x2, n2 - x2);
                            ContrastDraw {
                                rejected: p <= alpha,
                                difference: x2 as f64 / n2 as f64 - x1 as f64 / n1 as f64,
                                width: newcombe_width(x1, n1, x2, n2),
                            }
                        })
                        .collect()
                })
                .collect();
            (counts, draws)
        })
        .collect();

    // Sequential reduction in simulation order keeps sums bit-identical.
    let sims_f = f64::from(sims);
    let mut rows = Vec::new();
    let mut by_n = Vec::new();
    for (g, &n) in grid.iter().enumerate() {
        for (a, arm) in arms.iter().enumerate() {
            let mut rejected = 0u32;
            let mut diff_sum = 0.0;
            let mut width_sum = 0.0;
            for (_, draws) in &per_sim {
                let d = draws[g][a];
                rejected += u32::from(d.rejected);
                diff_sum += d.difference;
                width_sum += d.width;
            }
            rows.push(DiagnosisRow {
                n_per_cell: n,
                contrast: arm.name.clone(),
                reference_n: u64::from(n) * arm.reference.len() as u64,
                treatment_n: u64::from(n) * arm.treatment.len() as u64,
                true_difference: arm.true_difference,
                power: f64::from(rejected) / sims_f,
                bias: (diff_sum / sims_f - arm.true_difference).abs(),
                ci_width: width_sum / sims_f,
            });
        }
        let mut bias_total = 0.0;
        let mut width_total = 0.0;
        for (c, &p) in rates.iter().enumerate() {
            let mut rate_sum = 0.0;
            let mut width_sum = 0.0;
            for (counts, _) in &per_sim {
                let x = counts[g][c];
                rate_sum += x as f64 / f64::from(n);
                let (lo, hi) = wilson_interval(x, u64::from(n), 0.95).expect("n > 0");
                width_sum += hi - lo;
            }
            bias_total += (rate_sum / sims_f - p).abs();
            width_total += width_sum / sims_f;
        }
        by_n.push(SampleSizeSummary {
            n_per_cell: n,
            mean_abs_rate_bias: bias_total / cells.len() as f64,
            mean_cell_ci_width: width_total / cells.len() as f64,
        });
    }

    Ok(DiagnosisReport {
        generator: rng::GENERATOR.to_string(),
        test: TEST_NAME.to_string(),
        seed,
        sims,
        alpha,
        design_hash: design.content_hash(),
        model_hash: content_hash(model),
        rows,
        by_n,
        recommendation: None,
    })
}

/// Smallest grid size whose minimum power across contrasts reaches `target_power`.
pub fn recommend_sample_size(
    report: &DiagnosisReport,
    target_power: f64,
) -> Result<Option<u32>, DiagnosisError> {
    if report.rows.is_empty() {
        return Err(DiagnosisError::Usage(
            "diagnosis report has an empty grid".into(),
        ));
    }
    let mut min_power: BTreeMap<u32, f64> = BTreeMap::new();
    for row in &report.rows {
        let entry = min_power.entry(row.n_per_cell).or_insert(f64::INFINITY);
        *entry = entry.min(row.power);
    }
    Ok(min_power
        .into_iter()
        .find(|&(_, power)| power >= target_power)
        .map(|(n, _)| n))
}
