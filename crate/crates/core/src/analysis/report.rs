use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{fit_logistic, format_fixed, groupwise_rates, AnalysisError, GroupRate, ModelFit};
use crate::dataset::AnalysisTable;
use crate::design::AuditDesign;
use crate::hash::{content_hash, sha256_hex};
use crate::TOOL_VERSION;

pub const ZERO_DATA_BANNER: &str = "NO DATA: the dataset contains no decided observations; \
every table below is empty";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subset {
    pub factor: String,
    pub level: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset: Option<Subset>,
    pub outcome: String,
    pub predictor: String,
    pub reference_level: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Figure4Spec {
    pub subset: Subset,
    pub factor: String,
    pub reference_level: String,
}

/// A headline count of prohibited (unpublished) ads among rows matching
/// `filter`, optionally broken down by one factor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadlineSpec {
    pub name: String,
    pub filter: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breakdown: Option<String>,
}

/// Every analytic choice of the report. The plan hash covers all fields except
/// `locked_hash`, which records the hash at preregistration time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisPlan {
    pub name: String,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design_hash: Option<String>,
    pub rate_table: Vec<String>,
    pub figure3: Vec<Vec<String>>,
    pub figure4: Figure4Spec,
    pub models: Vec<ModelSpec>,
    pub headlines: Vec<HeadlineSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub locked_hash: Option<String>,
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl AnalysisPlan {
    /// The political-ad analysis: Table 2 rates, per-characteristic figure
    /// data, the Facebook ad-type comparison, four univariate Facebook models
    /// and the headline prohibition rates.
    pub fn paper(design: &AuditDesign) -> Self {
        let facebook = Subset {
            factor: "platform".into(),
            level: "Facebook".into(),
        };
        let model = |name: &str, predictor: &str, reference: &str| ModelSpec {
            name: name.into(),
            subset: Some(facebook.clone()),
            outcome: "published".into(),
            predictor: predictor.into(),
            reference_level: reference.into(),
        };
        let headline =
            |name: &str, filter: &[(&str, &str)], breakdown: Option<&str>| HeadlineSpec {
                name: name.into(),
                filter: filter
                    .iter()
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .collect(),
                breakdown: breakdown.map(str::to_string),
            };
        AnalysisPlan {
            name: "political-ad-enforcement".into(),
            confidence: 0.95,
            design_hash: Some(design.content_hash()),
            rate_table: strings(&["platform", "ad_poster", "location", "leaning", "ad_type"]),
            figure3: vec![
                strings(&["platform", "location", "leaning", "ad_type"]),
                strings(&["platform", "ad_type"]),
                strings(&["platform", "leaning"]),
                strings(&["platform", "location"]),
                strings(&["platform", "ad_poster"]),
            ],
            figure4: Figure4Spec {
                subset: facebook.clone(),
                factor: "ad_type".into(),
                reference_level: "candidate.mistake".into(),
            },
            models: vec![
                model("Ad Type", "ad_type", "candidate.mistake"),
                model("Leaning", "leaning", "Democrat"),
                model("Location", "location", "federal"),
                model("Ad Poster", "ad_poster", "Non-US"),
            ],
            headlines: vec![
                headline(
                    "facebook_overall",
                    &[("platform", "Facebook")],
                    Some("leaning"),
                ),
                headline(
                    "park_ads",
                    &[
                        ("platform", "Facebook"),
                        ("ad_type", "issue.mistake"),
                        ("leaning", "Democrat"),
                    ],
                    None,
                ),
                headline(
                    "parade_ads",
                    &[
                        ("platform", "Facebook"),
                        ("ad_type", "issue.mistake"),
                        ("leaning", "Republican"),
                    ],
                    None,
                ),
                headline("google_overall", &[("platform", "Google")], None),
            ],
            locked_hash: None,
        }
    }

    pub fn from_json_slice(bytes: &[u8]) -> Result<Self, AnalysisError> {
        Ok(serde_json::from_slice(bytes)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn plan_hash(&self) -> String {
        let mut unlocked = self.clone();
        unlocked.locked_hash = None;
        content_hash(&unlocked)
    }

    /// Records the current plan hash as the preregistered one.
    pub fn lock(&mut self) -> String {
        let hash = self.plan_hash();
        self.locked_hash = Some(hash.clone());
        hash
    }

    pub fn is_locked(&self) -> bool {
        self.locked_hash.as_deref() == Some(self.plan_hash().as_str())
    }

    fn referenced_factors(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self.rate_table.iter().map(String::as_str).collect();
        out.extend(self.figure3.iter().flatten().map(String::as_str));
        out.push(&self.figure4.subset.factor);
        out.push(&self.figure4.factor);
        for m in &self.models {
            out.push(&m.predictor);
            if let Some(s) = &m.subset {
                out.push(&s.factor);
            }
        }
        for h in &self.headlines {
            out.extend(h.filter.keys().map(String::as_str));
            out.extend(h.breakdown.as_deref());
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Factors the plan references that the design does not declare.
    pub fn unknown_factors(&self, design: &AuditDesign) -> Vec<String> {
        self.referenced_factors()
            .into_iter()
            .filter(|f| design.factor(f).is_none())
            .map(str::to_string)
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReportOptions {
    /// Skip the preregistration lock; the marker is written into every output.
    pub exploratory: bool,
    /// Seeds of upstream steps, recorded verbatim in the manifest.
    pub seeds: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutcome {
    pub name: String,
    pub spec: ModelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<ModelFit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadlineRate {
    pub filter: BTreeMap<String, String>,
    pub prohibited: u64,
    pub n: u64,
    pub prohibited_rate: Option<f64>,
    pub prohibited_pct: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breakdown: Option<BTreeMap<String, u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Figure4Summary {
    pub reference_level: String,
    pub treatment_level: String,
    pub reference_rate: f64,
    pub treatment_rate: f64,
    pub difference_pp: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Headline {
    pub exploratory: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub banner: Option<String>,
    pub total: u64,
    pub rates: BTreeMap<String, HeadlineRate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub figure4: Option<Figure4Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub plan_name: String,
    pub plan_hash: String,
    pub plan_locked: bool,
    pub exploratory: bool,
    pub design_hash: Option<String>,
    pub dataset_hash: String,
    pub rows: usize,
    pub seeds: BTreeMap<String, u64>,
    /// SHA-256 of every other file in the bundle.
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub table2: Vec<GroupRate>,
    pub figure3: Vec<GroupRate>,
    pub figure4: Vec<GroupRate>,
    pub models: Vec<ModelOutcome>,
    pub headline: Headline,
    pub manifest: Manifest,
}

fn as_refs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

fn require_factors(table: &AnalysisTable, plan: &AnalysisPlan) -> Result<(), AnalysisError> {
    for f in plan.referenced_factors() {
        if !table.has_factor(f) {
            return Err(AnalysisError::UnknownFactor(f.to_string()));
        }
    }
    Ok(())
}

fn subset(table: &AnalysisTable, s: Option<&Subset>) -> AnalysisTable {
    match s {
        Some(s) => table.filter(&s.factor, &s.level),
        None => table.clone(),
    }
}

fn headline_rate(table: &AnalysisTable, spec: &HeadlineSpec) -> HeadlineRate {
    let rows: Vec<_> = table
        .rows
        .iter()
        .filter(|r| {
            spec.filter
                .iter()
                .all(|(f, l)| r.level(f) == Some(l.as_str()))
        })
        .collect();
    let n = rows.len() as u64;
    let prohibited = rows.iter().filter(|r| !r.published).count() as u64;
    let rate = (n > 0).then(|| prohibited as f64 / n as f64);
    let breakdown = spec.breakdown.as_ref().map(|factor| {
        let mut counts = BTreeMap::new();
        for r in &rows {
            let entry = counts
                .entry(r.level(factor).unwrap_or_default().to_string())
                .or_insert(0u64);
            *entry += u64::from(!r.published);
        }
        counts
    });
    HeadlineRate {
        filter: spec.filter.clone(),
        prohibited,
        n,
        prohibited_rate: rate,
        prohibited_pct: rate.map(|r| format_fixed(100.0 * r, 1)),
        breakdown,
    }
}

/// Runs every analysis in `plan` over `table`.
///
/// Unless `options.exploratory` is set, the plan must carry a valid lock and,
/// when a design is supplied, the plan's design hash must match it. Model
/// failures such as separation are recorded in the bundle, not raised.
pub fn run_prereg_report(
    table: &AnalysisTable,
    plan: &AnalysisPlan,
    design: Option<&AuditDesign>,
    options: &ReportOptions,
) -> Result<ReportBundle, AnalysisError> {
    let plan_hash = plan.plan_hash();
    let plan_locked = plan.is_locked();
    if !options.exploratory {
        match plan.locked_hash.as_deref() {
            None => {
                return Err(AnalysisError::Preregistration(
                    "plan has no locked hash; lock it before data collection or run as exploratory"
                        .into(),
                ))
            }
            Some(locked) if locked != plan_hash => {
                return Err(AnalysisError::Preregistration(format!(
                    "plan hash {plan_hash} differs from locked hash {locked}"
                )))
            }
            Some(_) => {}
        }
        if let Some(design) = design {
            let actual = design.content_hash();
            if plan.design_hash.as_deref() != Some(actual.as_str()) {
                return Err(AnalysisError::Preregistration(format!(
                    "design hash {actual} does not match the plan's {}",
                    plan.design_hash.as_deref().unwrap_or("(none)")
                )));
            }
        }
    }
    if let Some(design) = design {
        let unknown = plan.unknown_factors(design);
        if !unknown.is_empty() {
            return Err(AnalysisError::UnknownFactor(unknown.join(", ")));
        }
    }
    if !(plan.confidence > 0.0 && plan.confidence < 1.0) {
        return Err(AnalysisError::Domain(format!(
            "plan confidence {} outside (0, 1)",
            plan.confidence
        )));
    }
    require_factors(table, plan)?;
    let conf = plan.confidence;

    let table2 = groupwise_rates(table, &as_refs(&plan.rate_table), conf)?;
    let mut figure3 = Vec::new();
    for grouping in &plan.figure3 {
        figure3.extend(groupwise_rates(table, &as_refs(grouping), conf)?);
    }
    let fig4_table = subset(table, Some(&plan.figure4.subset));
    let figure4 = groupwise_rates(&fig4_table, &[plan.figure4.factor.as_str()], conf)?;
    let figure4_summary = match fit_logistic(
        &fig4_table,
        "published",
        &plan.figure4.factor,
        &plan.figure4.reference_level,
    ) {
        Ok(fit) => {
            let rate_of = |level: &str| {
                figure4
                    .iter()
                    .find(|g| g.levels[0] == level)
                    .map_or(f64::NAN, |g| g.rate)
            };
            let reference_rate = rate_of(&fit.reference_level);
            let treatment_rate = rate_of(&fit.treatment_level);
            Some(Figure4Summary {
                reference_level: fit.reference_level.clone(),
                treatment_level: fit.treatment_level.clone(),
                reference_rate,
                treatment_rate,
                difference_pp: 100.0 * (treatment_rate - reference_rate),
                p_value: fit.contrast().p_value,
            })
        }
        Err(_) => None,
    };

    let models = plan
        .models
        .iter()
        .map(|spec| {
            let data = subset(table, spec.subset.as_ref());
            let result = fit_logistic(&data, &spec.outcome, &spec.predictor, &spec.reference_level);
            let (fit, error) = match result {
                Ok(fit) => (Some(fit), None),
                Err(e) => (None, Some(e.to_string())),
            };
            ModelOutcome {
                name: spec.name.clone(),
                spec: spec.clone(),
                fit,
                error,
            }
        })
        .collect();

    let headline = Headline {
        exploratory: options.exploratory,
        banner: table.is_empty().then(|| ZERO_DATA_BANNER.to_string()),
        total: table.len() as u64,
        rates: plan
            .headlines
            .iter()
            .map(|h| (h.name.clone(), headline_rate(table, h)))
            .collect(),
        figure4: figure4_summary,
    };

    let manifest = Manifest {
        tool_version: TOOL_VERSION.to_string(),
        plan_name: plan.name.clone(),
        plan_hash,
        plan_locked,
        exploratory: options.exploratory,
        design_hash: design
            .map(AuditDesign::content_hash)
            .or_else(|| plan.design_hash.clone()),
        dataset_hash: sha256_hex(table.to_csv().as_bytes()),
        rows: table.len(),
        seeds: options.seeds.clone(),
        files: BTreeMap::new(),
    };
    let mut bundle = ReportBundle {
        table2,
        figure3,
        figure4,
        models,
        headline,
        manifest,
    };
    let files = bundle
        .render_files()
        .into_iter()
        .map(|(name, body)| (name.to_string(), sha256_hex(body.as_bytes())))
        .collect();
    bundle.manifest.files = files;
    Ok(bundle)
}

fn csv_string<I, R>(header: &[&str], records: I) -> String
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(header).expect("in-memory write");
    for record in records {
        let record: Vec<String> = record.into_iter().collect();
        writer.write_record(&record).expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("flush")).expect("utf-8")
}

fn rate_records(rates: &[GroupRate]) -> impl Iterator<Item = Vec<String>> + '_ {
    rates.iter().map(|g| {
        vec![
            g.factors.join("+"),
            g.label(),
            g.x.to_string(),
            g.n.to_string(),
            g.rate.to_string(),
            g.ci_low.to_string(),
            g.ci_high.to_string(),
        ]
    })
}

const RATE_HEADER: [&str; 7] = ["grouping", "group", "x", "n", "rate", "ci_low", "ci_high"];

impl ReportBundle {
    /// File name and contents of every bundle file except `manifest.json`.
    pub fn render_files(&self) -> Vec<(&'static str, String)> {
        let table1 = csv_string(
            &[
                "model",
                "term",
                "estimate",
                "std_error",
                "z_value",
                "p_value",
                "aic",
                "bic",
                "log_likelihood",
                "deviance",
                "num_obs",
                "status",
            ],
            self.models.iter().flat_map(|m| match (&m.fit, &m.error) {
                (Some(fit), _) => fit
                    .coefficients
                    .iter()
                    .map(|c| {
                        vec![
                            m.name.clone(),
                            c.term.clone(),
                            format_fixed(c.estimate, 2),
                            format_fixed(c.std_error, 2),
                            format_fixed(c.z_value, 2),
                            format_fixed(c.p_value, 3),
                            format_fixed(fit.aic, 2),
                            format_fixed(fit.bic, 2),
                            format_fixed(fit.log_likelihood, 2),
                            format_fixed(fit.deviance, 2),
                            fit.n_obs.to_string(),
                            if fit.converged { "ok" } else { "not converged" }.to_string(),
                        ]
                    })
                    .collect::<Vec<_>>(),
                (None, error) => {
                    let mut row = vec![m.name.clone()];
                    row.extend(std::iter::repeat_n(String::new(), 10));
                    row.push(format!("error: {}", error.as_deref().unwrap_or("unknown")));
                    vec![row]
                }
            }),
        );
        let mut table2_header: Vec<&str> = self
            .table2
            .first()
            .map(|g| g.factors.iter().map(String::as_str).collect())
            .unwrap_or_default();
        table2_header.extend(["n", "published", "published_pct"]);
        let table2 = csv_string(
            &table2_header,
            self.table2.iter().map(|g| {
                let mut r = g.levels.clone();
                r.extend([g.n.to_string(), g.x.to_string(), g.rate_pct()]);
                r
            }),
        );
        let figure3 = csv_string(&RATE_HEADER, rate_records(&self.figure3));
        let figure4 = csv_string(&RATE_HEADER, rate_records(&self.figure4));
        let headline = serde_json::to_string_pretty(&self.headline).expect("serializes") + "\n";
        let models = serde_json::to_string_pretty(&self.models).expect("serializes") + "\n";
        vec![
            ("table1.csv", table1),
            ("table2.csv", table2),
            ("figure3.csv", figure3),
            ("figure4.csv", figure4),
            ("headline.json", headline),
            ("models.json", models),
        ]
    }

    pub fn manifest_json(&self) -> String {
        serde_json::to_string_pretty(&self.manifest).expect("serializes") + "\n"
    }

    /// Writes the bundle into `dir`, creating it if needed.
    pub fn write_to_dir(&self, dir: &Path) -> Result<(), AnalysisError> {
        fs::create_dir_all(dir)?;
        for (name, body) in self.render_files() {
            fs::write(dir.join(name), body)?;
        }
        fs::write(dir.join("manifest.json"), self.manifest_json())?;
        Ok(())
    }
}
