//! Factorial audit designs with exclusions, and cell enumeration.
//!
//! Nesting is written as exclusions over the full cross-product: an exclusion
//! is a partial level assignment, and any cell that agrees with every entry of
//! some exclusion is illegal.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::content_hash;

/// Upper bound on the size of the cross-product we are willing to enumerate.
pub const MAX_CROSS_PRODUCT: u128 = 1_000_000;

pub const DEFAULT_TARGET_N_PER_CELL: u32 = 20;

fn default_target_n() -> u32 {
    DEFAULT_TARGET_N_PER_CELL
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Factor {
    pub name: String,
    pub levels: Vec<String>,
}

impl Factor {
    pub fn new<S: Into<String>>(name: S, levels: &[&str]) -> Self {
        Factor {
            name: name.into(),
            levels: levels.iter().map(|l| l.to_string()).collect(),
        }
    }
}

/// A partial level assignment declared illegal.
pub type Exclusion = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditDesign {
    pub factors: Vec<Factor>,
    #[serde(default)]
    pub exclusions: Vec<Exclusion>,
    #[serde(default = "default_target_n")]
    pub target_n_per_cell: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NoFactors,
    DuplicateFactor {
        factor: String,
    },
    NoLevels {
        factor: String,
    },
    DuplicateLevel {
        factor: String,
        level: String,
    },
    InvalidIdentifier {
        name: String,
    },
    EmptyExclusion {
        exclusion: usize,
    },
    UnknownExclusionFactor {
        exclusion: usize,
        factor: String,
    },
    UnknownExclusionLevel {
        exclusion: usize,
        factor: String,
        level: String,
    },
    ZeroTarget,
    TooManyCells {
        cross_product: u128,
    },
    NoLegalCells,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoFactors => write!(f, "design declares no factors"),
            Violation::DuplicateFactor { factor } => write!(f, "duplicate factor `{factor}`"),
            Violation::NoLevels { factor } => write!(f, "factor `{factor}` has no levels"),
            Violation::DuplicateLevel { factor, level } => {
                write!(f, "factor `{factor}` repeats level `{level}`")
            }
            Violation::InvalidIdentifier { name } => write!(
                f,
                "identifier `{name}` must be non-empty and free of `=`, `;`, and control characters"
            ),
            Violation::EmptyExclusion { exclusion } => {
                write!(
                    f,
                    "exclusion #{exclusion} is empty and would exclude every cell"
                )
            }
            Violation::UnknownExclusionFactor { exclusion, factor } => {
                write!(
                    f,
                    "exclusion #{exclusion} references unknown factor `{factor}`"
                )
            }
            Violation::UnknownExclusionLevel {
                exclusion,
                factor,
                level,
            } => write!(
                f,
                "exclusion #{exclusion} references unknown level `{level}` of factor `{factor}`"
            ),
            Violation::ZeroTarget => write!(f, "target_n_per_cell must be positive"),
            Violation::TooManyCells { cross_product } => write!(
                f,
                "cross-product of {cross_product} cells exceeds the limit of {MAX_CROSS_PRODUCT}"
            ),
            Violation::NoLegalCells => write!(f, "no legal cells remain after exclusions"),
        }
    }
}

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("invalid design: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("malformed design document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("malformed cell id `{id}`: {reason}")]
    CellId { id: String, reason: String },
    #[error("cell `{0}` is not a legal cell of the design")]
    UnknownCell(String),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

fn valid_identifier(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(|c| c == '=' || c == ';' || c.is_control())
}

impl AuditDesign {
    /// The 2018 political-ad audit: five binary factors, with issue ads only
    /// in state elections. Enumerates to 24 cells.
    pub fn paper() -> Self {
        AuditDesign {
            factors: vec![
                Factor::new("platform", &["Facebook", "Google"]),
                Factor::new("ad_poster", &["US", "Non-US"]),
                Factor::new("location", &["federal", "state"]),
                Factor::new("leaning", &["Democrat", "Republican"]),
                Factor::new("ad_type", &["candidate.mistake", "issue.mistake"]),
            ],
            exclusions: vec![[
                ("location".to_string(), "federal".to_string()),
                ("ad_type".to_string(), "issue.mistake".to_string()),
            ]
            .into_iter()
            .collect()],
            target_n_per_cell: DEFAULT_TARGET_N_PER_CELL,
        }
    }

    pub fn from_json_slice(bytes: &[u8]) -> Result<Self, DesignError> {
        Ok(serde_json::from_slice(bytes)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("design serializes")
    }

    /// SHA-256 of the canonical serialization; used by the preregistration lock.
    pub fn content_hash(&self) -> String {
        content_hash(self)
    }

    pub fn factor(&self, name: &str) -> Option<&Factor> {
        self.factors.iter().find(|f| f.name == name)
    }

    fn cross_product_size(&self) -> u128 {
        self.factors
            .iter()
            .map(|f| f.levels.len() as u128)
            .try_fold(1u128, |acc, n| acc.checked_mul(n))
            .unwrap_or(u128::MAX)
    }

    /// True if `assignment` agrees with every entry of at least one exclusion.
    pub fn is_excluded(&self, assignment: &BTreeMap<String, String>) -> bool {
        self.exclusions.iter().any(|ex| {
            ex.iter()
                .all(|(factor, level)| assignment.get(factor) == Some(level))
        })
    }
}

/// Checks every structural invariant. Violations are returned as data.
pub fn validate_design(design: &AuditDesign) -> Vec<Violation> {
    let mut out = Vec::new();
    if design.factors.is_empty() {
        out.push(Violation::NoFactors);
    }
    let mut seen = BTreeSet::new();
    for factor in &design.factors {
        if !valid_identifier(&factor.name) {
            out.push(Violation::InvalidIdentifier {
                name: factor.name.clone(),
            });
        }
        if !seen.insert(factor.name.as_str()) {
            out.push(Violation::DuplicateFactor {
                factor: factor.name.clone(),
            });
        }
        if factor.levels.is_empty() {
            out.push(Violation::NoLevels {
                factor: factor.name.clone(),
            });
        }
        let mut levels = BTreeSet::new();
        for level in &factor.levels {
            if !valid_identifier(level) {
                out.push(Violation::InvalidIdentifier {
                    name: level.clone(),
                });
            }
            if !levels.insert(level.as_str()) {
                out.push(Violation::DuplicateLevel {
                    factor: factor.name.clone(),
                    level: level.clone(),
                });
            }
        }
    }
    for (i, ex) in design.exclusions.iter().enumerate() {
        if ex.is_empty() {
            out.push(Violation::EmptyExclusion { exclusion: i });
        }
        for (name, level) in ex {
            match design.factor(name) {
                None => out.push(Violation::UnknownExclusionFactor {
                    exclusion: i,
                    factor: name.clone(),
                }),
                Some(f) if !f.levels.contains(level) => {
                    out.push(Violation::UnknownExclusionLevel {
                        exclusion: i,
                        factor: name.clone(),
                        level: level.clone(),
                    })
                }
                Some(_) => {}
            }
        }
    }
    if design.target_n_per_cell == 0 {
        out.push(Violation::ZeroTarget);
    }
    let size = design.cross_product_size();
    if size > MAX_CROSS_PRODUCT {
        out.push(Violation::TooManyCells {
            cross_product: size,
        });
        return out;
    }
    if out.is_empty() && cross_product(design).next().is_none() {
        out.push(Violation::NoLegalCells);
    }
    out
}

/// Legal cells of the cross-product, in odometer order.
fn cross_product(design: &AuditDesign) -> impl Iterator<Item = Cell> + '_ {
    let sizes: Vec<usize> = design.factors.iter().map(|f| f.levels.len()).collect();
    let total: usize = if sizes.contains(&0) || sizes.is_empty() {
        0
    } else {
        sizes.iter().product()
    };
    (0..total).filter_map(move |mut index| {
        let mut assignment = BTreeMap::new();
        for (factor, &size) in design.factors.iter().zip(&sizes).rev() {
            assignment.insert(factor.name.clone(), factor.levels[index % size].clone());
            index /= size;
        }
        (!design.is_excluded(&assignment)).then_some(Cell { assignment })
    })
}

/// Every legal cell, sorted by `cell_id`.
pub fn enumerate_cells(design: &AuditDesign) -> Result<Vec<Cell>, DesignError> {
    let violations = validate_design(design);
    if !violations.is_empty() {
        return Err(DesignError::Invalid(violations));
    }
    let mut cells: Vec<Cell> = cross_product(design).collect();
    cells.sort_by_cached_key(|c| c.id());
    Ok(cells)
}

/// One level per factor.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Cell {
    pub assignment: BTreeMap<String, String>,
}

impl Cell {
    /// `name=level` pairs, factor names sorted, joined by `;`.
    pub fn id(&self) -> String {
        self.assignment
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";")
    }

    pub fn parse_id(id: &str) -> Result<Cell, DesignError> {
        let err = |reason: &str| DesignError::CellId {
            id: id.to_string(),
            reason: reason.to_string(),
        };
        if id.is_empty() {
            return Err(err("empty"));
        }
        let mut assignment = BTreeMap::new();
        let mut previous: Option<&str> = None;
        for part in id.split(';') {
            let (name, level) = part.split_once('=').ok_or_else(|| err("missing `=`"))?;
            if !valid_identifier(name) || !valid_identifier(level) {
                return Err(err("empty or invalid name or level"));
            }
            if previous.is_some_and(|p| p >= name) {
                return Err(err("factor names must be strictly sorted"));
            }
            previous = Some(name);
            assignment.insert(name.to_string(), level.to_string());
        }
        Ok(Cell { assignment })
    }

    pub fn level(&self, factor: &str) -> Option<&str> {
        self.assignment.get(factor).map(String::as_str)
    }

    /// True when this cell has exactly the design's factors with known levels
    /// and is not excluded.
    pub fn is_legal_in(&self, design: &AuditDesign) -> bool {
        self.assignment.len() == design.factors.len()
            && design.factors.iter().all(|f| {
                self.assignment
                    .get(&f.name)
                    .is_some_and(|l| f.levels.contains(l))
            })
            && !design.is_excluded(&self.assignment)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}
