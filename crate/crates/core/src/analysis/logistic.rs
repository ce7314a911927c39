use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::dataset::AnalysisTable;
use crate::stats::two_sided_normal_p;

/// Coefficient magnitude beyond which the fit is treated as separated.
pub const SEPARATION_BOUND: f64 = 15.0;
const MAX_ITERATIONS: u32 = 25;
const SCORE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub term: String,
    pub estimate: f64,
    pub std_error: f64,
    pub z_value: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub outcome: String,
    pub predictor: String,
    pub reference_level: String,
    pub treatment_level: String,
    /// Intercept first, then the treatment-level contrast.
    pub coefficients: Vec<Coefficient>,
    pub log_likelihood: f64,
    pub deviance: f64,
    pub aic: f64,
    pub bic: f64,
    pub n_obs: usize,
    pub k: usize,
    pub converged: bool,
    pub iterations: u32,
}

impl ModelFit {
    pub fn intercept(&self) -> &Coefficient {
        &self.coefficients[0]
    }

    pub fn contrast(&self) -> &Coefficient {
        &self.coefficients[1]
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of a small symmetric positive-definite matrix by Gauss-Jordan with
/// partial pivoting.
fn invert(matrix: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let k = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..k).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..k {
        let pivot = (col..k).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 || !a[pivot][col].is_finite() {
            return None;
        }
        a.swap(col, pivot);
        let p = a[col][col];
        for v in &mut a[col] {
            *v /= p;
        }
        for row in 0..k {
            if row != col {
                let factor = a[row][col];
                if factor != 0.0 {
                    let pivot = a[col].clone();
                    for (x, y) in a[row].iter_mut().zip(&pivot) {
                        *x -= factor * y;
                    }
                }
            }
        }
    }
    Some(a.into_iter().map(|r| r[k..].to_vec()).collect())
}

struct IrlsFit {
    beta: Vec<f64>,
    covariance: Vec<Vec<f64>>,
    log_likelihood: f64,
    converged: bool,
    iterations: u32,
}

enum IrlsFailure {
    Diverged,
    Singular,
}

/// Maximum-likelihood logistic regression by iteratively reweighted least
/// squares (Newton-Raphson on the canonical link).
fn irls(design: &[Vec<f64>], y: &[f64]) -> Result<IrlsFit, IrlsFailure> {
    let k = design.first().map_or(0, Vec::len);
    let mut beta = vec![0.0; k];
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let mut score = vec![0.0; k];
        let mut info = vec![vec![0.0; k]; k];
        for (row, &yi) in design.iter().zip(y) {
            let eta: f64 = row.iter().zip(&beta).map(|(x, b)| x * b).sum();
            let mu = logistic(eta);
            let w = mu * (1.0 - mu);
            for i in 0..k {
                score[i] += row[i] * (yi - mu);
                for j in 0..k {
                    info[i][j] += w * row[i] * row[j];
                }
            }
        }
        if score.iter().all(|s| s.abs() < SCORE_TOLERANCE) {
            converged = true;
        }
        let inverse = invert(&info).ok_or(IrlsFailure::Singular)?;
        if converged || iterations == MAX_ITERATIONS {
            let log_likelihood = design
                .iter()
                .zip(y)
                .map(|(row, &yi)| {
                    let eta: f64 = row.iter().zip(&beta).map(|(x, b)| x * b).sum();
                    -(yi * softplus(-eta) + (1.0 - yi) * softplus(eta))
                })
                .sum();
            return Ok(IrlsFit {
                beta,
                covariance: inverse,
                log_likelihood,
                converged,
                iterations,
            });
        }
        for i in 0..k {
            beta[i] += inverse[i]
                .iter()
                .zip(&score)
                .map(|(a, s)| a * s)
                .sum::<f64>();
        }
        iterations += 1;
        if beta
            .iter()
            .any(|b| !b.is_finite() || b.abs() > SEPARATION_BOUND)
        {
            return Err(IrlsFailure::Diverged);
        }
    }
}

/// Univariate logistic regression of a binary outcome on a two-level factor.
///
/// `reference_level` is coded 0; the other observed level is coded 1. Standard
/// errors come from the inverse observed information at the estimate.
pub fn fit_logistic(
    table: &AnalysisTable,
    outcome: &str,
    predictor: &str,
    reference_level: &str,
) -> Result<ModelFit, AnalysisError> {
    if outcome != "published" {
        return Err(AnalysisError::Usage(format!(
            "outcome `{outcome}` is not a binary column; only `published` is supported"
        )));
    }
    if !table.has_factor(predictor) {
        return Err(AnalysisError::UnknownFactor(predictor.to_string()));
    }
    // level -> (published, total)
    let mut levels: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    for row in &table.rows {
        let level = row.level(predictor).unwrap_or_default();
        let entry = levels.entry(level).or_default();
        entry.0 += u64::from(row.published);
        entry.1 += 1;
    }
    if levels.len() != 2 {
        return Err(AnalysisError::Usage(format!(
            "predictor `{predictor}` must have exactly 2 observed levels, found {}",
            levels.len()
        )));
    }
    if !levels.contains_key(reference_level) {
        return Err(AnalysisError::Usage(format!(
            "reference level `{reference_level}` is not observed for `{predictor}`"
        )));
    }
    let treatment_level = levels
        .keys()
        .find(|l| **l != reference_level)
        .expect("two levels")
        .to_string();

    let design: Vec<Vec<f64>> = table
        .rows
        .iter()
        .map(|r| {
            let x = if r.level(predictor) == Some(reference_level) {
                0.0
            } else {
                1.0
            };
            vec![1.0, x]
        })
        .collect();
    let y: Vec<f64> = table
        .rows
        .iter()
        .map(|r| f64::from(u8::from(r.published)))
        .collect();

    let separated = || {
        levels
            .iter()
            .find(|(_, (x, n))| *x == 0 || x == n)
            .map(|(level, (x, _))| AnalysisError::Separation {
                predictor: predictor.to_string(),
                level: level.to_string(),
                outcome: if *x == 0 { "unpublished" } else { "published" },
            })
    };
    let fit = match irls(&design, &y) {
        Ok(fit) => fit,
        Err(IrlsFailure::Diverged) => {
            return Err(separated().unwrap_or_else(|| {
                AnalysisError::Singular(format!("{predictor} (coefficients diverged)"))
            }))
        }
        Err(IrlsFailure::Singular) => {
            return Err(separated().unwrap_or_else(|| AnalysisError::Singular(predictor.into())))
        }
    };

    let terms = [
        "(Intercept)".to_string(),
        format!("{predictor}[{treatment_level}]"),
    ];
    let coefficients = terms
        .into_iter()
        .enumerate()
        .map(|(i, term)| {
            let estimate = fit.beta[i];
            let std_error = fit.covariance[i][i].sqrt();
            let z_value = estimate / std_error;
            Coefficient {
                term,
                estimate,
                std_error,
                z_value,
                p_value: two_sided_normal_p(z_value),
            }
        })
        .collect();
    let n = table.rows.len();
    let k = 2;
    let ll = fit.log_likelihood;
    Ok(ModelFit {
        outcome: outcome.to_string(),
        predictor: predictor.to_string(),
        reference_level: reference_level.to_string(),
        treatment_level,
        coefficients,
        log_likelihood: ll,
        deviance: -2.0 * ll,
        aic: 2.0 * k as f64 - 2.0 * ll,
        bic: k as f64 * (n as f64).ln() - 2.0 * ll,
        n_obs: n,
        k,
        converged: fit.converged,
        iterations: fit.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DataRow;

    fn toy(groups: &[(&str, u64, u64)]) -> AnalysisTable {
        let mut t = AnalysisTable::new(vec!["arm".into()]);
        for (level, published, total) in groups {
            for i in 0..*total {
                t.rows.push(DataRow {
                    levels: [("arm".to_string(), level.to_string())].into(),
                    published: i < *published,
                    tester_id: "t".into(),
                    prompt_id: format!("{level}{i}"),
                    decided_at: None,
                });
            }
        }
        t
    }

    #[test]
    fn closed_form_group_logits() {
        // A: 2/4 published, B: 3/4 published.
        let fit = fit_logistic(&toy(&[("A", 2, 4), ("B", 3, 4)]), "published", "arm", "A").unwrap();
        assert!(fit.converged);
        assert!(fit.intercept().estimate.abs() < 1e-10);
        assert!((fit.contrast().estimate - 3f64.ln()).abs() < 1e-10);
        // SE of a difference of group logits: sqrt(1/2 + 1/2 + 1/3 + 1/1).
        let se = (0.5 + 0.5 + 1.0 / 3.0 + 1.0f64).sqrt();
        assert!((fit.contrast().std_error - se).abs() < 1e-8);
        assert_eq!(fit.deviance, -2.0 * fit.log_likelihood);
        assert_eq!(fit.n_obs, 8);
    }

    #[test]
    fn reference_level_sets_the_sign() {
        let t = toy(&[("A", 2, 4), ("B", 3, 4)]);
        let a = fit_logistic(&t, "published", "arm", "A").unwrap();
        let b = fit_logistic(&t, "published", "arm", "B").unwrap();
        assert!((a.contrast().estimate + b.contrast().estimate).abs() < 1e-10);
        assert_eq!(b.treatment_level, "A");
    }

    #[test]
    fn separation_names_the_level() {
        let t = toy(&[("A", 4, 4), ("B", 3, 4)]);
        match fit_logistic(&t, "published", "arm", "B") {
            Err(AnalysisError::Separation { level, outcome, .. }) => {
                assert_eq!(level, "A");
                assert_eq!(outcome, "published");
            }
            other => panic!("expected separation, got {other:?}"),
        }
    }

    #[test]
    fn all_published_everywhere_is_separation() {
        let t = toy(&[("A", 4, 4), ("B", 4, 4)]);
        assert!(matches!(
            fit_logistic(&t, "published", "arm", "A"),
            Err(AnalysisError::Separation { .. })
        ));
    }

    #[test]
    fn needs_two_levels() {
        let t = toy(&[("A", 1, 4)]);
        assert!(matches!(
            fit_logistic(&t, "published", "arm", "A"),
            Err(AnalysisError::Usage(_))
        ));
        let t = toy(&[("A", 1, 4), ("B", 2, 4), ("C", 1, 3)]);
        assert!(matches!(
            fit_logistic(&t, "published", "arm", "A"),
            Err(AnalysisError::Usage(_))
        ));
        let t = toy(&[("A", 1, 4), ("B", 2, 4)]);
        assert!(fit_logistic(&t, "published", "arm", "Z").is_err());
        assert!(fit_logistic(&t, "clicked", "arm", "A").is_err());
        assert!(matches!(
            fit_logistic(&t, "published", "colour", "A"),
            Err(AnalysisError::UnknownFactor(_))
        ));
    }

    #[test]
    fn inverse_of_known_matrix() {
        let inv = invert(&[vec![4.0, 2.0], vec![2.0, 3.0]]).unwrap();
        assert!((inv[0][0] - 0.375).abs() < 1e-12);
        assert!((inv[0][1] + 0.25).abs() < 1e-12);
        assert!((inv[1][1] - 0.5).abs() < 1e-12);
        assert!(invert(&[vec![1.0, 1.0], vec![1.0, 1.0]]).is_none());
    }
}
