//! Subject fixtures and per-cell subject pools.
//!
//! Four JSON Lines schemas mirror the sources the political-ad study drew
//! from. Each line is one JSON object; blank lines are ignored.
//!
//! | kind      | required fields                                   | optional                 |
//! |-----------|---------------------------------------------------|--------------------------|
//! | candidate | `surname`, `party`, `office`, `state`             | `name`, `candidate_id`, `district` (required when `office` is `house`) |
//! | album     | `name`, `artist`, `format`, `image`, `url`        | `sku`                    |
//! | park      | `full_name`, `states`, `url`, `image`             | `park_code`, `district`  |
//! | parade    | `name`, `city`, `state`, `date`, `image`          | `district`, `link`       |
//!
//! `office` is `house` or `governor`; `states` is a comma-separated USPS list
//! as served by the park service (the first entry is used); `date` is
//! `YYYY-MM-DD`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::design::{enumerate_cells, AuditDesign, DesignError};

pub const AD_TYPE_FACTOR: &str = "ad_type";
pub const LOCATION_FACTOR: &str = "location";
pub const LEANING_FACTOR: &str = "leaning";
pub const CANDIDATE_MISTAKE: &str = "candidate.mistake";
pub const ISSUE_MISTAKE: &str = "issue.mistake";
pub const FEDERAL: &str = "federal";
pub const STATE: &str = "state";
pub const DEMOCRAT: &str = "Democrat";
pub const REPUBLICAN: &str = "Republican";

/// USPS codes for the states, DC and the inhabited territories.
pub const USPS_STATES: &[(&str, &str)] = &[
    ("AK", "Alaska"),
    ("AL", "Alabama"),
    ("AR", "Arkansas"),
    ("AS", "American Samoa"),
    ("AZ", "Arizona"),
    ("CA", "California"),
    ("CO", "Colorado"),
    ("CT", "Connecticut"),
    ("DC", "District of Columbia"),
    ("DE", "Delaware"),
    ("FL", "Florida"),
    ("GA", "Georgia"),
    ("GU", "Guam"),
    ("HI", "Hawaii"),
    ("IA", "Iowa"),
    ("ID", "Idaho"),
    ("IL", "Illinois"),
    ("IN", "Indiana"),
    ("KS", "Kansas"),
    ("KY", "Kentucky"),
    ("LA", "Louisiana"),
    ("MA", "Massachusetts"),
    ("MD", "Maryland"),
    ("ME", "Maine"),
    ("MI", "Michigan"),
    ("MN", "Minnesota"),
    ("MO", "Missouri"),
    ("MP", "Northern Mariana Islands"),
    ("MS", "Mississippi"),
    ("MT", "Montana"),
    ("NC", "North Carolina"),
    ("ND", "North Dakota"),
    ("NE", "Nebraska"),
    ("NH", "New Hampshire"),
    ("NJ", "New Jersey"),
    ("NM", "New Mexico"),
    ("NV", "Nevada"),
    ("NY", "New York"),
    ("OH", "Ohio"),
    ("OK", "Oklahoma"),
    ("OR", "Oregon"),
    ("PA", "Pennsylvania"),
    ("PR", "Puerto Rico"),
    ("RI", "Rhode Island"),
    ("SC", "South Carolina"),
    ("SD", "South Dakota"),
    ("TN", "Tennessee"),
    ("TX", "Texas"),
    ("UT", "Utah"),
    ("VA", "Virginia"),
    ("VI", "U.S. Virgin Islands"),
    ("VT", "Vermont"),
    ("WA", "Washington"),
    ("WI", "Wisconsin"),
    ("WV", "West Virginia"),
    ("WY", "Wyoming"),
];

pub fn state_name(code: &str) -> Option<&'static str> {
    USPS_STATES
        .binary_search_by(|(c, _)| c.cmp(&code))
        .ok()
        .map(|i| USPS_STATES[i].1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubjectKind {
    Candidate,
    Album,
    Park,
    Parade,
}

impl SubjectKind {
    pub const ALL: [SubjectKind; 4] = [
        SubjectKind::Candidate,
        SubjectKind::Album,
        SubjectKind::Park,
        SubjectKind::Parade,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SubjectKind::Candidate => "candidate",
            SubjectKind::Album => "album",
            SubjectKind::Park => "park",
            SubjectKind::Parade => "parade",
        }
    }

    /// Conventional fixture file name inside a fixtures directory.
    pub fn file_name(self) -> &'static str {
        match self {
            SubjectKind::Candidate => "candidates.jsonl",
            SubjectKind::Album => "albums.jsonl",
            SubjectKind::Park => "parks.jsonl",
            SubjectKind::Parade => "parades.jsonl",
        }
    }
}

impl fmt::Display for SubjectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SubjectKind {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SubjectKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| IngestError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("unknown subject kind `{0}`")]
    UnknownKind(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("record {record} (line {line}): malformed JSON: {message}")]
    Parse {
        record: usize,
        line: usize,
        message: String,
    },
    #[error("record {record} (line {line}): field `{field}`: {reason}")]
    Schema {
        record: usize,
        line: usize,
        field: String,
        reason: String,
    },
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error("design lacks factor `{0}` needed to place subjects")]
    MissingFactor(&'static str),
    #[error("no eligible subjects for cell(s): {}", .0.join(", "))]
    PoolShortage(Vec<String>),
}

/// One real-world subject. Album records from the fixture carry no state; a
/// matched album takes the state, district and party of its candidate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub kind: SubjectKind,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub district: Option<String>,
    pub image_ref: String,
    pub link: String,
    #[serde(default)]
    pub extra: BTreeMap<String, String>,
}

impl SubjectRecord {
    pub fn extra(&self, key: &str) -> Option<&str> {
        self.extra.get(key).map(String::as_str)
    }

    /// Identity used for de-duplication and prompt ids.
    pub fn key(&self) -> String {
        let mut parts = vec![
            self.kind.as_str().to_string(),
            self.name.clone(),
            self.state.clone().unwrap_or_default(),
            self.district.clone().unwrap_or_default(),
        ];
        for field in ["candidate_id", "surname", "artist", "format", "date"] {
            parts.push(self.extra(field).unwrap_or_default().to_string());
        }
        parts.join("|")
    }

    /// Candidate leaning from party, for candidates and matched albums.
    pub fn leaning(&self) -> Option<&'static str> {
        match self.extra("party")?.to_ascii_uppercase().as_str() {
            "D" | "DEM" | "DEMOCRAT" | "DEMOCRATIC" => Some(DEMOCRAT),
            "R" | "REP" | "REPUBLICAN" => Some(REPUBLICAN),
            _ => None,
        }
    }

    /// Kind-specific invariants.
    pub fn check(&self) -> Result<(), (String, String)> {
        let need = |field: &str| -> Result<(), (String, String)> {
            match self.extra(field) {
                Some(v) if !v.trim().is_empty() => Ok(()),
                _ => Err((field.to_string(), "required".to_string())),
            }
        };
        if self.name.trim().is_empty() {
            return Err(("name".into(), "must be non-empty".into()));
        }
        if let Some(state) = &self.state {
            if state_name(state).is_none() {
                return Err((
                    "state".into(),
                    format!("`{state}` is not a USPS state code"),
                ));
            }
        }
        let need_state = || {
            self.state
                .as_ref()
                .map(|_| ())
                .ok_or_else(|| ("state".to_string(), "required".to_string()))
        };
        match self.kind {
            SubjectKind::Candidate => {
                need_state()?;
                need("surname")?;
                need("party")?;
                match self.extra("office") {
                    Some("house") if self.district.is_none() => {
                        return Err(("district".into(), "required for house candidates".into()))
                    }
                    Some("house") | Some("governor") => {}
                    Some(other) => {
                        return Err((
                            "office".into(),
                            format!("`{other}` is not house or governor"),
                        ))
                    }
                    None => return Err(("office".into(), "required".into())),
                }
            }
            SubjectKind::Album => {
                need("format")?;
                need("artist")?;
                if self.extra("surname").is_some() {
                    need_state()?;
                }
            }
            SubjectKind::Park => {
                need_state()?;
                need("website")?;
            }
            SubjectKind::Parade => {
                need_state()?;
                need("city")?;
                need("date")?;
                let date = self.extra("date").unwrap_or_default();
                if NaiveDate::parse_from_str(date, "%Y-%m-%d").is_err() {
                    return Err(("date".into(), format!("`{date}` is not YYYY-MM-DD")));
                }
            }
        }
        Ok(())
    }
}

struct RowReader<'a> {
    object: &'a Map<String, Value>,
    record: usize,
    line: usize,
}

impl RowReader<'_> {
    fn schema(&self, field: &str, reason: impl Into<String>) -> IngestError {
        IngestError::Schema {
            record: self.record,
            line: self.line,
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    fn optional(&self, field: &str) -> Result<Option<String>, IngestError> {
        match self.object.get(field) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) if s.trim().is_empty() => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.trim().to_string())),
            Some(Value::Number(n)) => Ok(Some(n.to_string())),
            Some(_) => Err(self.schema(field, "must be a string")),
        }
    }

    fn required(&self, field: &str) -> Result<String, IngestError> {
        self.optional(field)?
            .ok_or_else(|| self.schema(field, "required"))
    }
}

fn record_from_row(kind: SubjectKind, row: &RowReader<'_>) -> Result<SubjectRecord, IngestError> {
    let mut extra = BTreeMap::new();
    let mut put = |key: &str, value: Option<String>| {
        if let Some(v) = value {
            extra.insert(key.to_string(), v);
        }
    };
    let record = match kind {
        SubjectKind::Candidate => {
            let surname = row.required("surname")?;
            let party = row.required("party")?;
            let office = row.required("office")?.to_ascii_lowercase();
            let state = row.required("state")?;
            let name = row.optional("name")?.unwrap_or_else(|| surname.clone());
            put("surname", Some(surname));
            put("party", Some(party));
            put("office", Some(office));
            put("candidate_id", row.optional("candidate_id")?);
            SubjectRecord {
                kind,
                name,
                state: Some(state),
                district: row.optional("district")?,
                image_ref: row.optional("image")?.unwrap_or_default(),
                link: row.optional("link")?.unwrap_or_default(),
                extra,
            }
        }
        SubjectKind::Album => {
            let name = row.required("name")?;
            put("artist", Some(row.required("artist")?));
            put("format", Some(row.required("format")?));
            put("sku", row.optional("sku")?);
            SubjectRecord {
                kind,
                name,
                state: None,
                district: None,
                image_ref: row.required("image")?,
                link: row.required("url")?,
                extra,
            }
        }
        SubjectKind::Park => {
            let name = row.required("full_name")?;
            let states = row.required("states")?;
            let first = states
                .split(',')
                .map(str::trim)
                .find(|s| !s.is_empty())
                .ok_or_else(|| row.schema("states", "no state listed"))?
                .to_string();
            let website = row.required("url")?;
            put("states", Some(states));
            put("website", Some(website.clone()));
            put("park_code", row.optional("park_code")?);
            SubjectRecord {
                kind,
                name,
                state: Some(first),
                district: row.optional("district")?,
                image_ref: row.required("image")?,
                link: website,
                extra,
            }
        }
        SubjectKind::Parade => {
            let name = row.required("name")?;
            put("city", Some(row.required("city")?));
            put("date", Some(row.required("date")?));
            SubjectRecord {
                kind,
                name,
                state: Some(row.required("state")?),
                district: row.optional("district")?,
                image_ref: row.required("image")?,
                link: row.optional("link")?.unwrap_or_default(),
                extra,
            }
        }
    };
    record
        .check()
        .map_err(|(field, reason)| row.schema(&field, reason))?;
    Ok(record)
}

/// Parses fixture text of the given kind. Record indices in errors are
/// zero-based over non-blank lines.
pub fn parse_fixture(kind: SubjectKind, text: &str) -> Result<Vec<SubjectRecord>, IngestError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let record = out.len();
        let line = i + 1;
        let value: Value = serde_json::from_str(raw).map_err(|e| IngestError::Parse {
            record,
            line,
            message: e.to_string(),
        })?;
        let Value::Object(object) = &value else {
            return Err(IngestError::Parse {
                record,
                line,
                message: "expected a JSON object".into(),
            });
        };
        out.push(record_from_row(
            kind,
            &RowReader {
                object,
                record,
                line,
            },
        )?);
    }
    Ok(out)
}

pub fn load_fixture(kind: SubjectKind, path: &Path) -> Result<Vec<SubjectRecord>, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_fixture(kind, &text)
}

/// The fixture form of a record, such that `parse_fixture` reproduces it.
pub fn to_fixture_row(record: &SubjectRecord) -> Value {
    let mut row = Map::new();
    let mut set = |k: &str, v: Option<&str>| {
        if let Some(v) = v {
            row.insert(k.to_string(), Value::String(v.to_string()));
        }
    };
    match record.kind {
        SubjectKind::Candidate => {
            set("name", Some(&record.name));
            set("surname", record.extra("surname"));
            set("party", record.extra("party"));
            set("office", record.extra("office"));
            set("candidate_id", record.extra("candidate_id"));
            set("state", record.state.as_deref());
            set("district", record.district.as_deref());
            set("image", Some(&record.image_ref));
            set("link", Some(&record.link));
        }
        SubjectKind::Album => {
            set("name", Some(&record.name));
            set("artist", record.extra("artist"));
            set("format", record.extra("format"));
            set("sku", record.extra("sku"));
            set("image", Some(&record.image_ref));
            set("url", Some(&record.link));
        }
        SubjectKind::Park => {
            set("full_name", Some(&record.name));
            set("states", record.extra("states"));
            set("park_code", record.extra("park_code"));
            set("district", record.district.as_deref());
            set("url", record.extra("website"));
            set("image", Some(&record.image_ref));
        }
        SubjectKind::Parade => {
            set("name", Some(&record.name));
            set("city", record.extra("city"));
            set("state", record.state.as_deref());
            set("district", record.district.as_deref());
            set("date", record.extra("date"));
            set("image", Some(&record.image_ref));
            set("link", Some(&record.link));
        }
    }
    Value::Object(row)
}

pub fn serialize_fixture(records: &[SubjectRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(&to_fixture_row(r)).expect("serializes") + "\n")
        .collect()
}

/// Last alphabetic word of an artist name, lowercased.
fn artist_surname(artist: &str) -> Option<String> {
    artist
        .split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric() && c != '\'' && c != '-'))
        .rfind(|w| !w.is_empty())
        .map(str::to_lowercase)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlbumMatch {
    pub candidate: SubjectRecord,
    pub album: SubjectRecord,
}

impl AlbumMatch {
    /// The album as an ad subject: album fields plus the candidate's surname,
    /// party, office, state and district.
    pub fn subject(&self) -> SubjectRecord {
        let mut extra = self.album.extra.clone();
        for key in ["surname", "party", "office", "candidate_id"] {
            if let Some(v) = self.candidate.extra(key) {
                extra.insert(key.to_string(), v.to_string());
            }
        }
        extra.insert("candidate_name".into(), self.candidate.name.clone());
        SubjectRecord {
            kind: SubjectKind::Album,
            name: self.album.name.clone(),
            state: self.candidate.state.clone(),
            district: self.candidate.district.clone(),
            image_ref: self.album.image_ref.clone(),
            link: self.album.link.clone(),
            extra,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlbumMatches {
    pub pairs: Vec<AlbumMatch>,
    pub unmatched: Vec<SubjectRecord>,
}

/// Pairs each candidate with the first album, in fixture order, whose artist
/// surname equals the candidate's surname (case-insensitive).
pub fn match_albums_to_candidates(
    candidates: &[SubjectRecord],
    albums: &[SubjectRecord],
) -> AlbumMatches {
    let mut first_by_surname: BTreeMap<String, &SubjectRecord> = BTreeMap::new();
    for album in albums {
        if let Some(surname) = album.extra("artist").and_then(artist_surname) {
            first_by_surname.entry(surname).or_insert(album);
        }
    }
    let mut out = AlbumMatches::default();
    for candidate in candidates {
        let surname = candidate
            .extra("surname")
            .unwrap_or_default()
            .trim()
            .to_lowercase();
        match first_by_surname.get(&surname) {
            Some(album) => out.pairs.push(AlbumMatch {
                candidate: candidate.clone(),
                album: (*album).clone(),
            }),
            None => out.unmatched.push(candidate.clone()),
        }
    }
    out
}

/// Eligible subjects per cell id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubjectPool {
    pub cells: BTreeMap<String, Vec<SubjectRecord>>,
}

impl SubjectPool {
    pub fn get(&self, cell_id: &str) -> &[SubjectRecord] {
        self.cells.get(cell_id).map_or(&[], Vec::as_slice)
    }
}

/// Whether `subject` may fill a cell with the given ad-type, location and
/// leaning levels.
///
/// Candidate-mistake cells take matched albums whose candidate runs in that
/// election (`state` → governor, `federal` → house) for that party. Issue
/// cells exist only at state level: parks are left-leaning, parades
/// right-leaning.
pub fn eligible(subject: &SubjectRecord, ad_type: &str, location: &str, leaning: &str) -> bool {
    match (subject.kind, ad_type) {
        (SubjectKind::Album, CANDIDATE_MISTAKE) => {
            let office_matches = matches!(
                (subject.extra("office"), location),
                (Some("governor"), STATE) | (Some("house"), FEDERAL)
            );
            office_matches && subject.leaning() == Some(leaning) && subject.state.is_some()
        }
        (SubjectKind::Park, ISSUE_MISTAKE) => location == STATE && leaning == DEMOCRAT,
        (SubjectKind::Parade, ISSUE_MISTAKE) => location == STATE && leaning == REPUBLICAN,
        _ => false,
    }
}

/// Builds the pool for every legal cell. Duplicate subjects are dropped; pool
/// order follows fixture order (matched albums, parks, parades).
pub fn build_subject_pool(
    design: &AuditDesign,
    candidates: &[SubjectRecord],
    albums: &[SubjectRecord],
    parks: &[SubjectRecord],
    parades: &[SubjectRecord],
) -> Result<SubjectPool, IngestError> {
    for factor in [AD_TYPE_FACTOR, LOCATION_FACTOR, LEANING_FACTOR] {
        if design.factor(factor).is_none() {
            return Err(IngestError::MissingFactor(factor));
        }
    }
    let cells = enumerate_cells(design)?;
    let matched = match_albums_to_candidates(candidates, albums);
    let subjects: Vec<SubjectRecord> = matched
        .pairs
        .iter()
        .map(AlbumMatch::subject)
        .chain(parks.iter().cloned())
        .chain(parades.iter().cloned())
        .collect();

    let mut pool = SubjectPool::default();
    let mut short = Vec::new();
    for cell in &cells {
        let level = |f| cell.level(f).unwrap_or_default();
        let (ad_type, location, leaning) = (
            level(AD_TYPE_FACTOR),
            level(LOCATION_FACTOR),
            level(LEANING_FACTOR),
        );
        let mut seen = BTreeSet::new();
        let eligible: Vec<SubjectRecord> = subjects
            .iter()
            .filter(|s| eligible(s, ad_type, location, leaning))
            .filter(|s| seen.insert(s.key()))
            .cloned()
            .collect();
        if eligible.is_empty() {
            short.push(cell.id());
        }
        pool.cells.insert(cell.id(), eligible);
    }
    if !short.is_empty() {
        return Err(IngestError::PoolShortage(short));
    }
    Ok(pool)
}

/// Loads the four conventional fixture files from `dir`.
pub fn load_fixture_dir(dir: &Path) -> Result<FixtureSet, IngestError> {
    let load = |kind: SubjectKind| load_fixture(kind, &dir.join(kind.file_name()));
    Ok(FixtureSet {
        candidates: load(SubjectKind::Candidate)?,
        albums: load(SubjectKind::Album)?,
        parks: load(SubjectKind::Park)?,
        parades: load(SubjectKind::Parade)?,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FixtureSet {
    pub candidates: Vec<SubjectRecord>,
    pub albums: Vec<SubjectRecord>,
    pub parks: Vec<SubjectRecord>,
    pub parades: Vec<SubjectRecord>,
}

impl FixtureSet {
    pub fn pool(&self, design: &AuditDesign) -> Result<SubjectPool, IngestError> {
        build_subject_pool(
            design,
            &self.candidates,
            &self.albums,
            &self.parks,
            &self.parades,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CANDIDATES: &str = r#"{"surname":"Bush","office":"governor","state":"FL","party":"R"}
{"surname":"Ortiz","name":"Maria Ortiz","office":"house","state":"NJ","district":"NJ-01","party":"DEM"}

{"surname":"Zzyzx","office":"house","state":"CA","district":"CA-08","party":"D"}
"#;
    const ALBUMS: &str = r#"{"name":"Sixteen Stone","artist":"Bush","format":"CD","image":"img/a1.jpg","url":"https://example.com/a1"}
{"name":"Blue","artist":"Maria Ortiz","format":"Vinyl","image":"img/a2.jpg","url":"https://example.com/a2"}
{"name":"Red","artist":"Bea Ortiz","format":"CD","image":"img/a3.jpg","url":"https://example.com/a3"}
"#;

    #[test]
    fn candidate_row_loads() {
        let c = parse_fixture(SubjectKind::Candidate, CANDIDATES).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c[0].name, "Bush");
        assert_eq!(c[0].state.as_deref(), Some("FL"));
        assert_eq!(c[0].leaning(), Some(REPUBLICAN));
        assert_eq!(c[1].leaning(), Some(DEMOCRAT));
    }

    #[test]
    fn empty_fixture_is_empty() {
        assert!(parse_fixture(SubjectKind::Park, "").unwrap().is_empty());
        assert!(parse_fixture(SubjectKind::Park, "\n\n").unwrap().is_empty());
    }

    #[test]
    fn missing_state_reports_index_and_field() {
        let text = "{\"surname\":\"A\",\"office\":\"governor\",\"state\":\"FL\",\"party\":\"R\"}\n\
                    {\"surname\":\"B\",\"office\":\"governor\",\"party\":\"R\"}\n";
        match parse_fixture(SubjectKind::Candidate, text) {
            Err(IngestError::Schema { record, field, .. }) => {
                assert_eq!(record, 1);
                assert_eq!(field, "state");
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn schema_checks() {
        let bad_state = r#"{"surname":"A","office":"governor","state":"XX","party":"R"}"#;
        let bad_office = r#"{"surname":"A","office":"mayor","state":"FL","party":"R"}"#;
        let no_district = r#"{"surname":"A","office":"house","state":"FL","party":"R"}"#;
        let bad_date =
            r#"{"name":"P","city":"Boston","state":"MA","date":"11/11/2018","image":"f.jpg"}"#;
        for (kind, text, field) in [
            (SubjectKind::Candidate, bad_state, "state"),
            (SubjectKind::Candidate, bad_office, "office"),
            (SubjectKind::Candidate, no_district, "district"),
            (SubjectKind::Parade, bad_date, "date"),
        ] {
            match parse_fixture(kind, text) {
                Err(IngestError::Schema { field: f, .. }) => assert_eq!(f, field),
                other => panic!("{text}: {other:?}"),
            }
        }
        assert!(matches!(
            parse_fixture(SubjectKind::Park, "[1,2]"),
            Err(IngestError::Parse { .. })
        ));
        assert!(matches!(
            "venue".parse::<SubjectKind>(),
            Err(IngestError::UnknownKind(_))
        ));
    }

    #[test]
    fn album_matching_takes_first_and_reports_unmatched() {
        let c = parse_fixture(SubjectKind::Candidate, CANDIDATES).unwrap();
        let a = parse_fixture(SubjectKind::Album, ALBUMS).unwrap();
        let m = match_albums_to_candidates(&c, &a);
        assert_eq!(m.pairs.len(), 2);
        assert_eq!(m.pairs[1].album.name, "Blue");
        assert_eq!(m.unmatched.len(), 1);
        assert_eq!(m.unmatched[0].extra("surname"), Some("Zzyzx"));
        let subject = m.pairs[1].subject();
        assert_eq!(subject.state.as_deref(), Some("NJ"));
        assert_eq!(subject.extra("surname"), Some("Ortiz"));
        assert!(subject.check().is_ok());
    }

    #[test]
    fn park_goes_only_to_democrat_state_issue_cells() {
        let park = parse_fixture(
            SubjectKind::Park,
            r#"{"full_name":"Arches National Park","states":"UT","url":"https://www.nps.gov/arch/","image":"img/arch.jpg"}"#,
        )
        .unwrap()
        .remove(0);
        let cells = enumerate_cells(&AuditDesign::paper()).unwrap();
        for cell in cells {
            let l = |f| cell.level(f).unwrap();
            let expect = l(AD_TYPE_FACTOR) == ISSUE_MISTAKE
                && l(LOCATION_FACTOR) == STATE
                && l(LEANING_FACTOR) == DEMOCRAT;
            assert_eq!(
                eligible(
                    &park,
                    l(AD_TYPE_FACTOR),
                    l(LOCATION_FACTOR),
                    l(LEANING_FACTOR)
                ),
                expect
            );
        }
        assert_eq!(park.state.as_deref(), Some("UT"));
    }

    #[test]
    fn parks_alone_cannot_fill_federal_cells() {
        let mut design = AuditDesign::paper();
        design
            .exclusions
            .push([("location".to_string(), "state".to_string())].into());
        let parks = parse_fixture(
            SubjectKind::Park,
            r#"{"full_name":"Acadia National Park","states":"ME","url":"https://www.nps.gov/acad/","image":"img/acad.jpg"}"#,
        )
        .unwrap();
        match build_subject_pool(&design, &[], &[], &parks, &[]) {
            Err(IngestError::PoolShortage(cells)) => assert_eq!(cells.len(), 8),
            other => panic!("expected shortage, got {other:?}"),
        }
    }

    #[test]
    fn design_without_placement_factors() {
        let design = AuditDesign {
            factors: vec![crate::design::Factor::new("platform", &["Google"])],
            exclusions: vec![],
            target_n_per_cell: 1,
        };
        assert!(matches!(
            build_subject_pool(&design, &[], &[], &[], &[]),
            Err(IngestError::MissingFactor(_))
        ));
    }

    #[test]
    fn fixture_rows_round_trip() {
        let c = parse_fixture(SubjectKind::Candidate, CANDIDATES).unwrap();
        let again = parse_fixture(SubjectKind::Candidate, &serialize_fixture(&c)).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn usps_table_is_sorted() {
        assert!(USPS_STATES.windows(2).all(|w| w[0].0 < w[1].0));
        assert_eq!(state_name("NJ"), Some("New Jersey"));
    }
}
