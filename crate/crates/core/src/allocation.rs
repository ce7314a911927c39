//! Binding prompts to testers.
//!
//! Prompts are split into strata by (platform, ad poster). Within a stratum the
//! eligible testers are put in a seeded random order and dealt prompts
//! round-robin, so loads differ by at most one.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::{AuditDesign, Cell, DesignError};
use crate::prompts::{Platform, PromptSpec, DURATION_HOURS};
use crate::rng;

pub const AD_POSTER_FACTOR: &str = "ad_poster";
const ALLOCATION_DOMAIN: &str = "allocation/order";
/// Minimum token length in hex characters (128 bits).
pub const MIN_TOKEN_HEX_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum AllocationError {
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error("tester `{0}`: {1}")]
    InvalidTester(String, String),
    #[error("duplicate tester id `{0}`")]
    DuplicateTester(String),
    #[error("prompt {prompt_id} has cell `{cell_id}` without a known platform and ad_poster")]
    UnplacedPrompt { prompt_id: String, cell_id: String },
    #[error("no eligible tester for stratum platform={platform}, ad_poster={ad_poster}")]
    Coverage {
        platform: Platform,
        ad_poster: String,
    },
    #[error("duplicate prompt id {0}")]
    DuplicatePrompt(String),
    #[error("malformed tester file: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tester {
    pub tester_id: String,
    /// Level of the design's `ad_poster` factor this tester represents.
    pub location_kind: String,
    pub platforms: Vec<Platform>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_token: Option<String>,
}

impl Tester {
    pub fn eligible_for(&self, platform: Platform, ad_poster: &str) -> bool {
        self.location_kind == ad_poster && self.platforms.contains(&platform)
    }
}

pub fn parse_testers(bytes: &[u8]) -> Result<Vec<Tester>, AllocationError> {
    Ok(serde_json::from_slice(bytes)?)
}

/// A fresh 256-bit bearer secret, hex encoded.
pub fn generate_token() -> String {
    let mut bytes = [0u8; 32];
    rand::rng().fill_bytes(&mut bytes);
    hex::encode(bytes)
}

/// Fills in a token for every tester that lacks one.
pub fn provision_tokens(testers: &mut [Tester]) {
    for t in testers.iter_mut().filter(|t| t.auth_token.is_none()) {
        t.auth_token = Some(generate_token());
    }
}

pub fn validate_testers(design: &AuditDesign, testers: &[Tester]) -> Result<(), AllocationError> {
    let poster_levels = design
        .factor(AD_POSTER_FACTOR)
        .map(|f| f.levels.clone())
        .unwrap_or_default();
    let mut ids = BTreeSet::new();
    for t in testers {
        if t.tester_id.trim().is_empty() {
            return Err(AllocationError::InvalidTester(
                t.tester_id.clone(),
                "empty id".into(),
            ));
        }
        if !ids.insert(t.tester_id.as_str()) {
            return Err(AllocationError::DuplicateTester(t.tester_id.clone()));
        }
        if t.platforms.is_empty() {
            return Err(AllocationError::InvalidTester(
                t.tester_id.clone(),
                "needs at least one platform".into(),
            ));
        }
        if !poster_levels.contains(&t.location_kind) {
            return Err(AllocationError::InvalidTester(
                t.tester_id.clone(),
                format!(
                    "location kind `{}` is not an ad_poster level",
                    t.location_kind
                ),
            ));
        }
        if let Some(token) = &t.auth_token {
            if token.len() < MIN_TOKEN_HEX_LEN {
                return Err(AllocationError::InvalidTester(
                    t.tester_id.clone(),
                    format!("token shorter than {MIN_TOKEN_HEX_LEN} characters"),
                ));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssignmentStatus {
    Pending,
    Posted,
    Decided,
}

impl AssignmentStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            AssignmentStatus::Pending => "pending",
            AssignmentStatus::Posted => "posted",
            AssignmentStatus::Decided => "decided",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub assignment_id: String,
    pub prompt_id: String,
    pub tester_id: String,
    pub cell_id: String,
    pub status: AssignmentStatus,
    pub created_at: DateTime<Utc>,
    /// Posting window, counted from when the tester posts the ad.
    pub window_hours: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retry_of: Option<String>,
}

/// `a-<prompt digest prefix>-<attempt>`.
pub fn assignment_id(prompt_id: &str, attempt: u32) -> String {
    let digest = prompt_id.strip_prefix("p-").unwrap_or(prompt_id);
    let prefix: String = digest.chars().take(16).collect();
    format!("a-{prefix}-{attempt}")
}

fn stratum_of(cell_id: &str) -> Option<(Platform, String)> {
    let cell = Cell::parse_id(cell_id).ok()?;
    let platform = Platform::parse(cell.level(crate::prompts::PLATFORM_FACTOR)?)?;
    Some((platform, cell.level(AD_POSTER_FACTOR)?.to_string()))
}

fn seeded_order<'a>(
    eligible: &[&'a Tester],
    seed: u64,
    stratum: &(Platform, String),
) -> Vec<&'a Tester> {
    let mut order = eligible.to_vec();
    order.sort_by(|a, b| a.tester_id.cmp(&b.tester_id));
    let key = format!("{}|{}", stratum.0, stratum.1);
    order.shuffle(&mut rng::stream(ALLOCATION_DOMAIN, seed, &key, 0));
    order
}

/// Assigns every prompt to exactly one eligible tester.
pub fn allocate(
    design: &AuditDesign,
    prompts: &[PromptSpec],
    testers: &[Tester],
    seed: u64,
    created_at: DateTime<Utc>,
) -> Result<Vec<Assignment>, AllocationError> {
    validate_testers(design, testers)?;
    let mut strata: BTreeMap<(Platform, String), Vec<usize>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for (i, p) in prompts.iter().enumerate() {
        if !seen.insert(p.prompt_id.as_str()) {
            return Err(AllocationError::DuplicatePrompt(p.prompt_id.clone()));
        }
        let stratum = stratum_of(&p.creative.cell_id)
            .filter(|(platform, _)| *platform == p.creative.platform)
            .ok_or_else(|| AllocationError::UnplacedPrompt {
                prompt_id: p.prompt_id.clone(),
                cell_id: p.creative.cell_id.clone(),
            })?;
        strata.entry(stratum).or_default().push(i);
    }
    let mut owner: Vec<Option<&str>> = vec![None; prompts.len()];
    for (stratum, members) in &strata {
        let eligible: Vec<&Tester> = testers
            .iter()
            .filter(|t| t.eligible_for(stratum.0, &stratum.1))
            .collect();
        if eligible.is_empty() {
            return Err(AllocationError::Coverage {
                platform: stratum.0,
                ad_poster: stratum.1.clone(),
            });
        }
        let order = seeded_order(&eligible, seed, stratum);
        for (k, &i) in members.iter().enumerate() {
            owner[i] = Some(order[k % order.len()].tester_id.as_str());
        }
    }
    Ok(prompts
        .iter()
        .zip(owner)
        .map(|(p, tester)| Assignment {
            assignment_id: assignment_id(&p.prompt_id, 0),
            prompt_id: p.prompt_id.clone(),
            tester_id: tester.expect("every stratum assigned").to_string(),
            cell_id: p.creative.cell_id.clone(),
            status: AssignmentStatus::Pending,
            created_at,
            window_hours: DURATION_HOURS,
            retry_of: None,
        })
        .collect())
}

/// New assignments for the unfinished work of a tester who dropped out.
///
/// Each released assignment goes to the least-loaded remaining eligible tester
/// in its stratum (load counted over `open`), ties broken by the seeded order.
/// The released assignments themselves are left untouched.
pub fn reallocate_dropout(
    open: &[Assignment],
    testers: &[Tester],
    dropped: &str,
    seed: u64,
    created_at: DateTime<Utc>,
) -> Result<Vec<Assignment>, AllocationError> {
    let remaining: Vec<&Tester> = testers.iter().filter(|t| t.tester_id != dropped).collect();
    let mut load: BTreeMap<&str, usize> = BTreeMap::new();
    for a in open.iter().filter(|a| a.tester_id != dropped) {
        *load.entry(a.tester_id.as_str()).or_default() += 1;
    }
    let mut out = Vec::new();
    for released in open.iter().filter(|a| a.tester_id == dropped) {
        if released.status == AssignmentStatus::Decided {
            continue;
        }
        let stratum =
            stratum_of(&released.cell_id).ok_or_else(|| AllocationError::UnplacedPrompt {
                prompt_id: released.prompt_id.clone(),
                cell_id: released.cell_id.clone(),
            })?;
        let eligible: Vec<&Tester> = remaining
            .iter()
            .copied()
            .filter(|t| t.eligible_for(stratum.0, &stratum.1))
            .collect();
        let order = seeded_order(&eligible, seed, &stratum);
        let chosen = order
            .iter()
            .min_by_key(|t| load.get(t.tester_id.as_str()).copied().unwrap_or(0))
            .ok_or_else(|| AllocationError::Coverage {
                platform: stratum.0,
                ad_poster: stratum.1.clone(),
            })?;
        *load.entry(chosen.tester_id.as_str()).or_default() += 1;
        let attempt = released
            .assignment_id
            .rsplit('-')
            .next()
            .and_then(|s| s.parse::<u32>().ok())
            .unwrap_or(0)
            + 1;
        out.push(Assignment {
            assignment_id: assignment_id(&released.prompt_id, attempt),
            prompt_id: released.prompt_id.clone(),
            tester_id: chosen.tester_id.clone(),
            cell_id: released.cell_id.clone(),
            status: AssignmentStatus::Pending,
            created_at,
            window_hours: DURATION_HOURS,
            retry_of: Some(released.assignment_id.clone()),
        });
    }
    Ok(out)
}

/// CSV with columns `assignment_id,prompt_id,tester_id,status`.
pub fn assignments_to_csv(assignments: &[Assignment]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["assignment_id", "prompt_id", "tester_id", "status"])
        .expect("in-memory write");
    for a in assignments {
        writer
            .write_record([
                &a.assignment_id,
                &a.prompt_id,
                &a.tester_id,
                a.status.as_str(),
            ])
            .expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("flush")).expect("utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::enumerate_cells;
    use crate::ingest::SubjectKind;
    use crate::prompts::{AdCreative, Targeting};

    fn fake_prompts(design: &AuditDesign, per_cell: usize) -> Vec<PromptSpec> {
        let mut out = Vec::new();
        for cell in enumerate_cells(design).unwrap() {
            for i in 0..per_cell {
                let platform = Platform::parse(cell.level("platform").unwrap()).unwrap();
                out.push(PromptSpec::new(AdCreative {
                    header: "h".into(),
                    body: "b".into(),
                    image_ref: String::new(),
                    link: String::new(),
                    platform,
                    targeting: Targeting::State { state: "UT".into() },
                    page_group: None,
                    search_terms: None,
                    cell_id: cell.id(),
                    subject_kind: SubjectKind::Park,
                    subject_name: format!("s{i}"),
                    subject_key: format!("s{i}"),
                }));
            }
        }
        out
    }

    fn tester(id: &str, kind: &str) -> Tester {
        Tester {
            tester_id: id.into(),
            location_kind: kind.into(),
            platforms: vec![Platform::Facebook, Platform::Google],
            auth_token: None,
        }
    }

    fn t0() -> DateTime<Utc> {
        "2018-09-17T00:00:00Z".parse().unwrap()
    }

    #[test]
    fn one_tester_per_location_gets_matching_cells() {
        let design = AuditDesign::paper();
        let prompts = fake_prompts(&design, 1);
        let testers = [tester("us", "US"), tester("abroad", "Non-US")];
        let a = allocate(&design, &prompts, &testers, 1, t0()).unwrap();
        assert_eq!(a.len(), 24);
        for who in ["us", "abroad"] {
            let mine: Vec<_> = a.iter().filter(|x| x.tester_id == who).collect();
            assert_eq!(mine.len(), 12);
            let expected = if who == "us" {
                "ad_poster=US;"
            } else {
                "ad_poster=Non-US;"
            };
            assert!(mine.iter().all(|x| x.cell_id.starts_with(expected)));
        }
    }

    #[test]
    fn four_testers_share_a_stratum_evenly() {
        let design = AuditDesign::paper();
        let prompts: Vec<_> = fake_prompts(&design, 20)
            .into_iter()
            .filter(|p| p.creative.cell_id.contains("ad_poster=US;"))
            .collect();
        assert_eq!(prompts.len(), 240);
        let testers: Vec<_> = (0..4).map(|i| tester(&format!("t{i}"), "US")).collect();
        let a = allocate(&design, &prompts, &testers, 9, t0()).unwrap();
        for t in &testers {
            assert_eq!(a.iter().filter(|x| x.tester_id == t.tester_id).count(), 60);
        }
    }

    #[test]
    fn missing_stratum_is_a_coverage_error() {
        let design = AuditDesign::paper();
        let prompts = fake_prompts(&design, 1);
        let mut us = tester("us", "US");
        us.platforms = vec![Platform::Facebook];
        let err = allocate(&design, &prompts, &[us, tester("x", "Non-US")], 1, t0()).unwrap_err();
        match err {
            AllocationError::Coverage {
                platform,
                ad_poster,
            } => {
                assert_eq!(platform, Platform::Google);
                assert_eq!(ad_poster, "US");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn tester_validation() {
        let design = AuditDesign::paper();
        let mut bad = tester("a", "Mars");
        assert!(validate_testers(&design, &[bad.clone()]).is_err());
        bad.location_kind = "US".into();
        bad.platforms.clear();
        assert!(validate_testers(&design, &[bad]).is_err());
        assert!(matches!(
            validate_testers(&design, &[tester("a", "US"), tester("a", "US")]),
            Err(AllocationError::DuplicateTester(_))
        ));
        let mut short = tester("b", "US");
        short.auth_token = Some("abc".into());
        assert!(validate_testers(&design, &[short]).is_err());
    }

    #[test]
    fn tokens_are_long_and_distinct() {
        let mut testers = vec![tester("a", "US"), tester("b", "US")];
        provision_tokens(&mut testers);
        let a = testers[0].auth_token.clone().unwrap();
        let b = testers[1].auth_token.clone().unwrap();
        assert_eq!(a.len(), 64);
        assert_ne!(a, b);
    }

    #[test]
    fn dropout_moves_open_work_within_stratum() {
        let design = AuditDesign::paper();
        let prompts = fake_prompts(&design, 2);
        let testers = vec![
            tester("u1", "US"),
            tester("u2", "US"),
            tester("n1", "Non-US"),
        ];
        let mut open = allocate(&design, &prompts, &testers, 3, t0()).unwrap();
        open[0].status = AssignmentStatus::Decided;
        let dropped = open
            .iter()
            .find(|a| a.tester_id == "u1")
            .unwrap()
            .tester_id
            .clone();
        let moved = reallocate_dropout(&open, &testers, &dropped, 3, t0()).unwrap();
        let released = open
            .iter()
            .filter(|a| a.tester_id == "u1" && a.status != AssignmentStatus::Decided)
            .count();
        assert_eq!(moved.len(), released);
        assert!(moved
            .iter()
            .all(|a| a.tester_id == "u2" && a.retry_of.is_some()));
        assert!(moved.iter().all(|a| a.assignment_id.ends_with("-1")));
        assert!(matches!(
            reallocate_dropout(&open, &testers, "n1", 3, t0()),
            Err(AllocationError::Coverage { .. })
        ));
    }

    #[test]
    fn csv_export() {
        let design = AuditDesign::paper();
        let prompts = fake_prompts(&design, 1);
        let a = allocate(
            &design,
            &prompts,
            &[tester("u", "US"), tester("n", "Non-US")],
            1,
            t0(),
        )
        .unwrap();
        let csv = assignments_to_csv(&a);
        assert!(csv.starts_with("assignment_id,prompt_id,tester_id,status\n"));
        assert_eq!(csv.lines().count(), 25);
    }
}
