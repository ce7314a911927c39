use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{format_fixed, wilson_interval, AnalysisError};
use crate::dataset::AnalysisTable;

/// Publication rate of one group with its Wilson interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRate {
    pub factors: Vec<String>,
    pub levels: Vec<String>,
    pub x: u64,
    pub n: u64,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub confidence: f64,
}

impl GroupRate {
    pub fn new(
        factors: Vec<String>,
        levels: Vec<String>,
        x: u64,
        n: u64,
        conf: f64,
    ) -> Result<Self, AnalysisError> {
        let (ci_low, ci_high) = wilson_interval(x, n, conf)?;
        Ok(GroupRate {
            factors,
            levels,
            x,
            n,
            rate: x as f64 / n as f64,
            ci_low,
            ci_high,
            confidence: conf,
        })
    }

    /// `factor=level` pairs joined by `;`, or `all` for the ungrouped rate.
    pub fn label(&self) -> String {
        if self.factors.is_empty() {
            return "all".to_string();
        }
        self.factors
            .iter()
            .zip(&self.levels)
            .map(|(f, l)| format!("{f}={l}"))
            .collect::<Vec<_>>()
            .join(";")
    }

    pub fn level(&self, factor: &str) -> Option<&str> {
        self.factors
            .iter()
            .position(|f| f == factor)
            .map(|i| self.levels[i].as_str())
    }

    /// Percentage published, one decimal, half-up.
    pub fn rate_pct(&self) -> String {
        format_fixed(100.0 * self.rate, 1)
    }
}

/// One [`GroupRate`] per observed combination of `group_by` levels, ordered
/// lexicographically by those levels.
pub fn groupwise_rates(
    table: &AnalysisTable,
    group_by: &[&str],
    conf: f64,
) -> Result<Vec<GroupRate>, AnalysisError> {
    for factor in group_by {
        if !table.has_factor(factor) {
            return Err(AnalysisError::UnknownFactor(factor.to_string()));
        }
    }
    let mut counts: BTreeMap<Vec<String>, (u64, u64)> = BTreeMap::new();
    for row in &table.rows {
        let key: Vec<String> = group_by
            .iter()
            .map(|f| row.level(f).unwrap_or_default().to_string())
            .collect();
        let entry = counts.entry(key).or_default();
        entry.0 += u64::from(row.published);
        entry.1 += 1;
    }
    let factors: Vec<String> = group_by.iter().map(|s| s.to_string()).collect();
    counts
        .into_iter()
        .map(|(levels, (x, n))| GroupRate::new(factors.clone(), levels, x, n, conf))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DataRow;

    fn table(rows: &[(&str, &str, bool)]) -> AnalysisTable {
        let mut t = AnalysisTable::new(vec!["platform".into(), "leaning".into()]);
        for (i, (p, l, published)) in rows.iter().enumerate() {
            t.rows.push(DataRow {
                levels: [
                    ("platform".to_string(), p.to_string()),
                    ("leaning".to_string(), l.to_string()),
                ]
                .into(),
                published: *published,
                tester_id: "t".into(),
                prompt_id: i.to_string(),
                decided_at: None,
            });
        }
        t
    }

    #[test]
    fn groups_are_sorted_and_counted() {
        let t = table(&[
            ("Google", "Democrat", true),
            ("Facebook", "Republican", false),
            ("Facebook", "Republican", true),
            ("Facebook", "Democrat", true),
        ]);
        let rates = groupwise_rates(&t, &["platform", "leaning"], 0.95).unwrap();
        let labels: Vec<String> = rates.iter().map(GroupRate::label).collect();
        assert_eq!(
            labels,
            [
                "platform=Facebook;leaning=Democrat",
                "platform=Facebook;leaning=Republican",
                "platform=Google;leaning=Democrat"
            ]
        );
        assert_eq!((rates[1].x, rates[1].n), (1, 2));
        assert_eq!(rates[1].rate_pct(), "50.0");
        for r in &rates {
            assert!(r.ci_low <= r.rate && r.rate <= r.ci_high);
        }
    }

    #[test]
    fn empty_dataset_gives_no_groups() {
        let t = table(&[]);
        assert!(groupwise_rates(&t, &["platform"], 0.95).unwrap().is_empty());
    }

    #[test]
    fn unknown_factor_is_an_error() {
        let t = table(&[("Google", "Democrat", true)]);
        assert!(matches!(
            groupwise_rates(&t, &["colour"], 0.95),
            Err(AnalysisError::UnknownFactor(_))
        ));
    }

    #[test]
    fn ungrouped_rate() {
        let t = table(&[("Google", "Democrat", true), ("Google", "Democrat", false)]);
        let rates = groupwise_rates(&t, &[], 0.95).unwrap();
        assert_eq!(rates.len(), 1);
        assert_eq!(rates[0].label(), "all");
    }
}
