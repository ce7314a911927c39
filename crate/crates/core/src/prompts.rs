//! Ad creatives and prompt sets.
//!
//! Creative text comes from fixed templates, one per subject kind:
//!
//! | kind   | header                                        | body |
//! |--------|-----------------------------------------------|------|
//! | album  | `[State]: Calling all music lovers.`          | `Check out this <format> from the one and only <surname>!` |
//! | park   | `Don't forget about nature.`                  | `Visit the <park> before it's destroyed by climate change!` |
//! | parade | `[State]: Respect our military in November.`  | `Don't forget about our troops. Visit the <parade>.` |

use std::collections::BTreeSet;
use std::fmt;

use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::{enumerate_cells, AuditDesign, Cell, DesignError};
use crate::hash::sha256_hex;
use crate::ingest::{
    eligible, state_name, SubjectKind, SubjectPool, SubjectRecord, AD_TYPE_FACTOR, FEDERAL,
    LEANING_FACTOR, LOCATION_FACTOR,
};
use crate::rng;

pub const PLATFORM_FACTOR: &str = "platform";
pub const BUDGET_PER_DAY: u32 = 1;
pub const DURATION_HOURS: u32 = 48;
pub const GOOGLE_HEADER_LIMIT: usize = 40;
pub const FACEBOOK_BODY_LIMIT: usize = 125;

const SAMPLE_DOMAIN: &str = "prompts/sample";

const STOP_WORDS: &[&str] = &[
    "a", "an", "and", "at", "by", "for", "from", "in", "of", "on", "our", "the", "to", "with",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Platform {
    Facebook,
    Google,
}

impl Platform {
    pub fn as_str(self) -> &'static str {
        match self {
            Platform::Facebook => "Facebook",
            Platform::Google => "Google",
        }
    }

    pub fn parse(s: &str) -> Option<Platform> {
        match s {
            "Facebook" => Some(Platform::Facebook),
            "Google" => Some(Platform::Google),
            _ => None,
        }
    }
}

impl fmt::Display for Platform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error("subject `{subject}` is not eligible for cell `{cell}`")]
    Eligibility { subject: String, cell: String },
    #[error("cell `{cell}` needs level `{level}` of `{factor}` to be a known platform")]
    UnknownPlatform {
        cell: String,
        factor: String,
        level: String,
    },
    #[error("subject `{0}` lacks a field needed by its template")]
    Incomplete(String),
    #[error("search terms only apply to Google creatives, got {0}")]
    NotGoogle(Platform),
    #[error("subject pool too small: {}", .0.iter().map(|(c, have, need)| format!("{c} has {have}, needs {need}")).collect::<Vec<_>>().join("; "))]
    PoolShortage(Vec<(String, usize, u32)>),
    #[error("duplicate prompt id {0}")]
    DuplicatePrompt(String),
    #[error("prompt file line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "level", rename_all = "lowercase")]
pub enum Targeting {
    State { state: String },
    District { state: String, district: String },
}

impl Targeting {
    pub fn label(&self) -> String {
        match self {
            Targeting::State { state } => state.clone(),
            Targeting::District { district, .. } => district.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdCreative {
    pub header: String,
    pub body: String,
    pub image_ref: String,
    pub link: String,
    pub platform: Platform,
    pub targeting: Targeting,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page_group: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_terms: Option<Vec<String>>,
    pub cell_id: String,
    pub subject_kind: SubjectKind,
    /// The name the template embeds: surname for albums, otherwise the
    /// park or parade name.
    pub subject_name: String,
    pub subject_key: String,
}

impl AdCreative {
    /// Character-limit warnings for the creative's platform.
    pub fn limit_warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let header_len = self.header.chars().count();
        let body_len = self.body.chars().count();
        match self.platform {
            Platform::Google if header_len > GOOGLE_HEADER_LIMIT => out.push(format!(
                "Google header is {header_len} characters (limit {GOOGLE_HEADER_LIMIT})"
            )),
            Platform::Facebook if body_len > FACEBOOK_BODY_LIMIT => out.push(format!(
                "Facebook body is {body_len} characters (limit {FACEBOOK_BODY_LIMIT})"
            )),
            _ => {}
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub prompt_id: String,
    pub creative: AdCreative,
    /// Currency units per day, in whatever currency the tester pays in.
    pub budget_per_day: u32,
    pub duration_hours: u32,
}

impl PromptSpec {
    pub fn new(creative: AdCreative) -> Self {
        let prompt_id = prompt_id(&creative.cell_id, &creative.subject_key, creative.platform);
        PromptSpec {
            prompt_id,
            creative,
            budget_per_day: BUDGET_PER_DAY,
            duration_hours: DURATION_HOURS,
        }
    }
}

/// First 128 bits of SHA-256 over cell, subject and platform.
pub fn prompt_id(cell_id: &str, subject_key: &str, platform: Platform) -> String {
    let digest = sha256_hex(format!("{cell_id}\n{subject_key}\n{platform}").as_bytes());
    format!("p-{}", &digest[..32])
}

fn cell_platform(cell: &Cell) -> Result<Option<Platform>, PromptError> {
    match cell.level(PLATFORM_FACTOR) {
        None => Ok(None),
        Some(level) => {
            Platform::parse(level)
                .map(Some)
                .ok_or_else(|| PromptError::UnknownPlatform {
                    cell: cell.id(),
                    factor: PLATFORM_FACTOR.into(),
                    level: level.into(),
                })
        }
    }
}

/// Renders one creative from the template for the subject's kind.
pub fn render_ad(
    subject: &SubjectRecord,
    cell: &Cell,
    platform: Platform,
) -> Result<AdCreative, PromptError> {
    let level = |f| cell.level(f).unwrap_or_default();
    let mismatch = || PromptError::Eligibility {
        subject: subject.name.clone(),
        cell: cell.id(),
    };
    if !eligible(
        subject,
        level(AD_TYPE_FACTOR),
        level(LOCATION_FACTOR),
        level(LEANING_FACTOR),
    ) {
        return Err(mismatch());
    }
    if cell_platform(cell)?.is_some_and(|p| p != platform) {
        return Err(mismatch());
    }
    let incomplete = || PromptError::Incomplete(subject.name.clone());
    let state = subject.state.clone().ok_or_else(incomplete)?;
    let state_full = state_name(&state).ok_or_else(incomplete)?;

    let (header, body, subject_name) = match subject.kind {
        SubjectKind::Album => {
            let format = subject.extra("format").ok_or_else(incomplete)?;
            let surname = subject.extra("surname").ok_or_else(incomplete)?;
            (
                format!("{state_full}: Calling all music lovers."),
                format!("Check out this {format} from the one and only {surname}!"),
                surname.to_string(),
            )
        }
        SubjectKind::Park => (
            "Don't forget about nature.".to_string(),
            format!(
                "Visit the {} before it's destroyed by climate change!",
                subject.name
            ),
            subject.name.clone(),
        ),
        SubjectKind::Parade => (
            format!("{state_full}: Respect our military in November."),
            format!("Don't forget about our troops. Visit the {}.", subject.name),
            subject.name.clone(),
        ),
        SubjectKind::Candidate => return Err(mismatch()),
    };

    let targeting = if level(LOCATION_FACTOR) == FEDERAL {
        let district = subject.district.clone().ok_or_else(incomplete)?;
        Targeting::District { state, district }
    } else {
        Targeting::State { state }
    };

    let mut creative = AdCreative {
        header,
        body,
        image_ref: subject.image_ref.clone(),
        link: subject.link.clone(),
        platform,
        targeting,
        page_group: None,
        search_terms: None,
        cell_id: cell.id(),
        subject_kind: subject.kind,
        subject_name,
        subject_key: subject.key(),
    };
    match platform {
        Platform::Facebook => {
            creative.page_group = Some(level(AD_TYPE_FACTOR).to_string());
        }
        Platform::Google => {
            creative.search_terms = Some(build_search_terms(&creative)?);
        }
    }
    Ok(creative)
}

fn kind_keyword(kind: SubjectKind) -> &'static str {
    match kind {
        SubjectKind::Album => "music album",
        SubjectKind::Park => "national park",
        SubjectKind::Parade => "veterans day parade",
        SubjectKind::Candidate => "candidate",
    }
}

/// Keywords for a Google creative.
///
/// The subject name is lowercased, split on non-alphanumeric characters and
/// stripped of stop words. The kind keyword phrase is inserted just before the
/// first token that also appears in the phrase, or appended when none does.
/// Duplicates keep their first position.
pub fn build_search_terms(creative: &AdCreative) -> Result<Vec<String>, PromptError> {
    if creative.platform != Platform::Google {
        return Err(PromptError::NotGoogle(creative.platform));
    }
    let lowered = creative.subject_name.to_lowercase();
    let tokens: Vec<&str> = lowered
        .split(|c: char| !c.is_alphanumeric() && c != '\'')
        .map(|t| t.trim_matches('\''))
        .filter(|t| !t.is_empty() && !STOP_WORDS.contains(t))
        .collect();
    let phrase = kind_keyword(creative.subject_kind);
    let phrase_words: BTreeSet<&str> = phrase.split(' ').collect();
    let insert_at = tokens
        .iter()
        .position(|t| phrase_words.contains(t))
        .unwrap_or(tokens.len());
    let mut terms: Vec<String> = Vec::with_capacity(tokens.len() + 1);
    for (i, token) in tokens.iter().enumerate() {
        if i == insert_at {
            terms.push(phrase.to_string());
        }
        terms.push(token.to_string());
    }
    if insert_at == tokens.len() {
        terms.push(phrase.to_string());
    }
    let mut seen = BTreeSet::new();
    terms.retain(|t| seen.insert(t.clone()));
    Ok(terms)
}

/// Samples `n_per_cell` subjects per cell without replacement and renders one
/// prompt for each. Output order is cell order, then sample order.
pub fn generate_prompts(
    design: &AuditDesign,
    pool: &SubjectPool,
    n_per_cell: u32,
    seed: u64,
) -> Result<Vec<PromptSpec>, PromptError> {
    let cells = enumerate_cells(design)?;
    if n_per_cell == 0 {
        return Ok(Vec::new());
    }
    let shortage: Vec<(String, usize, u32)> = cells
        .iter()
        .map(|c| (c.id(), pool.get(&c.id()).len()))
        .filter(|(_, have)| *have < n_per_cell as usize)
        .map(|(id, have)| (id, have, n_per_cell))
        .collect();
    if !shortage.is_empty() {
        return Err(PromptError::PoolShortage(shortage));
    }
    let mut prompts = Vec::with_capacity(cells.len() * n_per_cell as usize);
    let mut ids = BTreeSet::new();
    for cell in &cells {
        let id = cell.id();
        let platform = cell_platform(cell)?.ok_or_else(|| PromptError::UnknownPlatform {
            cell: id.clone(),
            factor: PLATFORM_FACTOR.into(),
            level: String::new(),
        })?;
        let subjects = pool.get(&id);
        let mut stream = rng::stream(SAMPLE_DOMAIN, seed, &id, 0);
        for i in index::sample(&mut stream, subjects.len(), n_per_cell as usize) {
            let prompt = PromptSpec::new(render_ad(&subjects[i], cell, platform)?);
            if !ids.insert(prompt.prompt_id.clone()) {
                return Err(PromptError::DuplicatePrompt(prompt.prompt_id));
            }
            prompts.push(prompt);
        }
    }
    Ok(prompts)
}

pub fn prompts_to_jsonl(prompts: &[PromptSpec]) -> String {
    prompts
        .iter()
        .map(|p| serde_json::to_string(p).expect("serializes") + "\n")
        .collect()
}

/// Parses `prompts.jsonl`, rejecting records whose protocol constants or
/// prompt id do not match.
pub fn parse_prompts_jsonl(text: &str) -> Result<Vec<PromptSpec>, PromptError> {
    let mut out = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| PromptError::Parse {
            line: i + 1,
            message,
        };
        let prompt: PromptSpec = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        if prompt.budget_per_day != BUDGET_PER_DAY || prompt.duration_hours != DURATION_HOURS {
            return Err(err(
                "budget or duration differs from the protocol constants".into(),
            ));
        }
        let c = &prompt.creative;
        if prompt.prompt_id != prompt_id(&c.cell_id, &c.subject_key, c.platform) {
            return Err(err(format!(
                "prompt id {} does not match its content",
                prompt.prompt_id
            )));
        }
        Cell::parse_id(&c.cell_id).map_err(|e| err(e.to_string()))?;
        if !ids.insert(prompt.prompt_id.clone()) {
            return Err(PromptError::DuplicatePrompt(prompt.prompt_id));
        }
        out.push(prompt);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{parse_fixture, SubjectKind};

    fn cell(pairs: &[(&str, &str)]) -> Cell {
        Cell {
            assignment: pairs
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }

    fn state_issue(leaning: &str, platform: &str) -> Cell {
        cell(&[
            ("platform", platform),
            ("ad_poster", "US"),
            ("location", "state"),
            ("leaning", leaning),
            ("ad_type", "issue.mistake"),
        ])
    }

    fn park() -> SubjectRecord {
        parse_fixture(
            SubjectKind::Park,
            r#"{"full_name":"Acadia National Park","states":"ME","url":"https://www.nps.gov/acad/","image":"img/acad.jpg"}"#,
        )
        .unwrap()
        .remove(0)
    }

    #[test]
    fn album_template() {
        let mut extra = std::collections::BTreeMap::new();
        extra.insert("format".to_string(), "Vinyl".to_string());
        extra.insert("surname".to_string(), "Ortiz".to_string());
        extra.insert("artist".to_string(), "Maria Ortiz".to_string());
        extra.insert("party".to_string(), "D".to_string());
        extra.insert("office".to_string(), "governor".to_string());
        let album = SubjectRecord {
            kind: SubjectKind::Album,
            name: "Blue".into(),
            state: Some("NJ".into()),
            district: None,
            image_ref: "img/blue.jpg".into(),
            link: "https://example.com/blue".into(),
            extra,
        };
        let c = cell(&[
            ("platform", "Facebook"),
            ("ad_poster", "US"),
            ("location", "state"),
            ("leaning", "Democrat"),
            ("ad_type", "candidate.mistake"),
        ]);
        let ad = render_ad(&album, &c, Platform::Facebook).unwrap();
        assert_eq!(ad.body, "Check out this Vinyl from the one and only Ortiz!");
        assert_eq!(ad.header, "New Jersey: Calling all music lovers.");
        assert_eq!(ad.page_group.as_deref(), Some("candidate.mistake"));
        assert!(ad.search_terms.is_none());
        assert_eq!(ad.targeting, Targeting::State { state: "NJ".into() });
    }

    #[test]
    fn park_template_and_search_terms() {
        let ad = render_ad(
            &park(),
            &state_issue("Democrat", "Google"),
            Platform::Google,
        )
        .unwrap();
        assert_eq!(
            ad.body,
            "Visit the Acadia National Park before it's destroyed by climate change!"
        );
        assert_eq!(ad.header, "Don't forget about nature.");
        assert_eq!(
            ad.search_terms.as_deref().unwrap(),
            ["acadia", "national park", "national", "park"]
        );
        assert!(ad.page_group.is_none());
        assert_eq!(
            build_search_terms(&ad).unwrap(),
            build_search_terms(&ad).unwrap()
        );
    }

    #[test]
    fn parade_template() {
        let parade = parse_fixture(
            SubjectKind::Parade,
            r#"{"name":"Boston Veterans Day Parade","city":"Boston","state":"MA","date":"2018-11-11","image":"img/flag.jpg"}"#,
        )
        .unwrap()
        .remove(0);
        let ad = render_ad(
            &parade,
            &state_issue("Republican", "Google"),
            Platform::Google,
        )
        .unwrap();
        assert_eq!(
            ad.body,
            "Don't forget about our troops. Visit the Boston Veterans Day Parade."
        );
        assert_eq!(
            ad.header,
            "Massachusetts: Respect our military in November."
        );
        assert_eq!(
            ad.search_terms.unwrap(),
            ["boston", "veterans day parade", "veterans", "day", "parade"]
        );
    }

    #[test]
    fn stop_word_only_names_give_kind_keyword() {
        let mut ad = render_ad(
            &park(),
            &state_issue("Democrat", "Google"),
            Platform::Google,
        )
        .unwrap();
        ad.subject_name = "The Of And".into();
        assert_eq!(build_search_terms(&ad).unwrap(), ["national park"]);
        ad.platform = Platform::Facebook;
        assert!(matches!(
            build_search_terms(&ad),
            Err(PromptError::NotGoogle(_))
        ));
    }

    #[test]
    fn ineligible_subject_is_rejected() {
        let err = render_ad(
            &park(),
            &state_issue("Republican", "Google"),
            Platform::Google,
        );
        assert!(matches!(err, Err(PromptError::Eligibility { .. })));
        let err = render_ad(
            &park(),
            &state_issue("Democrat", "Google"),
            Platform::Facebook,
        );
        assert!(matches!(err, Err(PromptError::Eligibility { .. })));
    }

    #[test]
    fn long_park_names_warn_without_failing() {
        let mut p = park();
        p.name = "Wrangell-St. Elias National Park and Preserve of the Far North and Everything Beyond It".into();
        let ad = render_ad(&p, &state_issue("Democrat", "Facebook"), Platform::Facebook).unwrap();
        assert_eq!(ad.limit_warnings().len(), 1);
    }

    #[test]
    fn prompt_constants_and_jsonl_round_trip() {
        let ad = render_ad(
            &park(),
            &state_issue("Democrat", "Google"),
            Platform::Google,
        )
        .unwrap();
        let prompt = PromptSpec::new(ad);
        assert_eq!(prompt.budget_per_day, 1);
        assert_eq!(prompt.duration_hours, 48);
        let text = prompts_to_jsonl(std::slice::from_ref(&prompt));
        assert_eq!(parse_prompts_jsonl(&text).unwrap(), vec![prompt.clone()]);
        let tampered = text.replace("\"budget_per_day\":1", "\"budget_per_day\":5");
        assert!(parse_prompts_jsonl(&tampered).is_err());
        let doubled = format!("{text}{text}");
        assert!(matches!(
            parse_prompts_jsonl(&doubled),
            Err(PromptError::DuplicatePrompt(_))
        ));
    }
}
