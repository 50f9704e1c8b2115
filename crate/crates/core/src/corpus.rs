//! Dataset loading and label schemas.
//!
//! Two on-disk formats are supported:
//!
//! * LIAR TSV: tab-separated, no header, canonical 14 columns. Only column 1
//!   (id), column 2 (label) and column 3 (statement) are read.
//! * LIAR-New JSONL: one claim per line with paired English/French text,
//!   a six-way label, a possibility label and the three raw annotator votes.
//!
//! Possibility annotations are resolved by majority vote between adjacent
//! classes; triples that contain both `Possible` and `Impossible` are
//! escalated and must be settled by a sidecar CSV of manual resolutions.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_lengths, Error, Result};

/// PolitiFact six-way veracity scale, ordered from least to most true.
///
/// LIAR's "barely-true" and LIAR-New's "mostly-false" share a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "&'static str")]
pub enum SixWayLabel {
    PantsFire,
    False,
    BarelyOrMostlyFalse,
    HalfTrue,
    MostlyTrue,
    True,
}

impl SixWayLabel {
    pub const ALL: [SixWayLabel; 6] = [
        SixWayLabel::PantsFire,
        SixWayLabel::False,
        SixWayLabel::BarelyOrMostlyFalse,
        SixWayLabel::HalfTrue,
        SixWayLabel::MostlyTrue,
        SixWayLabel::True,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SixWayLabel::PantsFire => "pants-fire",
            SixWayLabel::False => "false",
            SixWayLabel::BarelyOrMostlyFalse => "barely-true",
            SixWayLabel::HalfTrue => "half-true",
            SixWayLabel::MostlyTrue => "mostly-true",
            SixWayLabel::True => "true",
        }
    }
}

/// Lowercase, treat `-`/`_` as spaces, collapse runs of whitespace.
fn normalize_label(raw: &str) -> String {
    raw.trim()
        .to_lowercase()
        .replace(['-', '_'], " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

impl FromStr for SixWayLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match normalize_label(s).as_str() {
            "pants fire" | "pants on fire" => SixWayLabel::PantsFire,
            "false" => SixWayLabel::False,
            "barely true" | "mostly false" => SixWayLabel::BarelyOrMostlyFalse,
            "half true" => SixWayLabel::HalfTrue,
            "mostly true" => SixWayLabel::MostlyTrue,
            "true" => SixWayLabel::True,
            _ => {
                return Err(Error::Schema {
                    location: "label".into(),
                    message: format!("unknown veracity label {s:?}"),
                })
            }
        })
    }
}

impl TryFrom<String> for SixWayLabel {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SixWayLabel> for &'static str {
    fn from(l: SixWayLabel) -> Self {
        l.as_str()
    }
}

impl fmt::Display for SixWayLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryLabel {
    False,
    True,
}

impl BinaryLabel {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_bool(b: bool) -> Self {
        if b {
            BinaryLabel::True
        } else {
            BinaryLabel::False
        }
    }

    pub fn is_true(self) -> bool {
        self == BinaryLabel::True
    }
}

/// Three-way veracity scale used when six labels are divided evenly in three.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TernaryLabel {
    False,
    PartiallyFalse,
    True,
}

impl TernaryLabel {
    pub fn index(self) -> usize {
        self as usize
    }
}

/// CT-FAN-22 gold labels. `Other` is never produced by a score-based model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CtFanLabel {
    False,
    PartiallyFalse,
    True,
    Other,
}

impl CtFanLabel {
    pub fn index(self) -> usize {
        self as usize
    }
}

impl FromStr for CtFanLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match normalize_label(s).as_str() {
            "false" => CtFanLabel::False,
            "partially false" => CtFanLabel::PartiallyFalse,
            "true" => CtFanLabel::True,
            "other" => CtFanLabel::Other,
            _ => {
                return Err(Error::Schema {
                    location: "label".into(),
                    message: format!("unknown CT-FAN label {s:?}"),
                })
            }
        })
    }
}

/// Whether a claim carries enough context to evaluate its veracity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "&'static str")]
pub enum PossibilityLabel {
    Possible,
    Hard,
    Impossible,
}

impl PossibilityLabel {
    pub const ALL: [PossibilityLabel; 3] = [
        PossibilityLabel::Possible,
        PossibilityLabel::Hard,
        PossibilityLabel::Impossible,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PossibilityLabel::Possible => "possible",
            PossibilityLabel::Hard => "hard",
            PossibilityLabel::Impossible => "impossible",
        }
    }
}

impl FromStr for PossibilityLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match normalize_label(s).as_str() {
            "possible" | "p" => PossibilityLabel::Possible,
            "hard" | "h" => PossibilityLabel::Hard,
            "impossible" | "i" => PossibilityLabel::Impossible,
            _ => {
                return Err(Error::Schema {
                    location: "possibility".into(),
                    message: format!("unknown possibility label {s:?}"),
                })
            }
        })
    }
}

impl TryFrom<String> for PossibilityLabel {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PossibilityLabel> for &'static str {
    fn from(l: PossibilityLabel) -> Self {
        l.as_str()
    }
}

impl fmt::Display for PossibilityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    En,
    Fr,
    De,
}

impl Language {
    pub fn suffix(self) -> &'static str {
        match self {
            Language::En => "en",
            Language::Fr => "fr",
            Language::De => "de",
        }
    }
}

impl FromStr for Language {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "en" | "english" => Ok(Language::En),
            "fr" | "french" => Ok(Language::Fr),
            "de" | "german" => Ok(Language::De),
            other => Err(Error::argument(format!("unknown language {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "valid" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::argument(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statement {
    pub id: String,
    pub text: String,
    pub language: Language,
    pub six_way: Option<SixWayLabel>,
    pub possibility: Option<PossibilityLabel>,
    pub split: Split,
}

impl Statement {
    /// The id with any `-en`/`-fr`/`-de` language suffix removed.
    pub fn base_id(&self) -> &str {
        let suffix = format!("-{}", self.language.suffix());
        self.id.strip_suffix(suffix.as_str()).unwrap_or(&self.id)
    }

    pub fn binary(&self) -> Option<BinaryLabel> {
        self.six_way.map(binarize)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationTriple {
    pub statement_id: String,
    pub votes: [PossibilityLabel; 3],
}

/// Outcome of resolving three annotator votes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolution {
    Resolved(PossibilityLabel),
    /// Both `Possible` and `Impossible` were voted; needs a manual decision.
    Escalate,
}

/// How the LIAR TSV reader treats double quotes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LiarQuoting {
    /// Quotes are ordinary characters; one row per line (1283 test rows).
    #[default]
    Literal,
    /// CSV-style quoting: a field opening with `"` runs to the matching quote,
    /// swallowing line breaks. Reproduces the merged-row artifact that yields
    /// 1267 test rows.
    CsvQuoted,
}

pub fn load_liar_tsv(path: impl AsRef<Path>, split: Split) -> Result<Vec<Statement>> {
    load_liar_tsv_with(path, split, LiarQuoting::Literal)
}

pub fn load_liar_tsv_with(
    path: impl AsRef<Path>,
    split: Split,
    quoting: LiarQuoting,
) -> Result<Vec<Statement>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(false)
        .flexible(true)
        .quoting(quoting == LiarQuoting::CsvQuoted)
        .from_path(path)?;

    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map(|p| p.line()).unwrap_or(row as u64 + 1),
            message: e.to_string(),
        })?;
        let line = record
            .position()
            .map(|p| p.line())
            .unwrap_or(row as u64 + 1);
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        if record.len() < 3 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!(
                    "expected at least 3 tab-separated columns, found {}",
                    record.len()
                ),
            });
        }
        let label: SixWayLabel = record[1].parse().map_err(|_| Error::Schema {
            location: format!("{}:{line}", path.display()),
            message: format!("unknown veracity label {:?}", &record[1]),
        })?;
        let text = record[2].trim().to_string();
        if text.is_empty() {
            return Err(Error::Schema {
                location: format!("{}:{line}", path.display()),
                message: "empty statement text".into(),
            });
        }
        let id = match record[0].trim() {
            "" => format!("row{line}"),
            id => id.to_string(),
        };
        if !seen.insert(id.clone()) {
            return Err(Error::Schema {
                location: format!("{}:{line}", path.display()),
                message: format!("duplicate statement id {id:?}"),
            });
        }
        out.push(Statement {
            id,
            text,
            language: Language::En,
            six_way: Some(label),
            possibility: None,
            split,
        });
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct LiarNewRecord {
    id: String,
    text_en: String,
    #[serde(default)]
    text_fr: Option<String>,
    label: String,
    #[serde(default)]
    possibility: Option<String>,
    #[serde(default)]
    raw_votes: Option<Vec<String>>,
    /// ISO date of the fact-check; September 2021 items are dropped.
    #[serde(default)]
    date: Option<String>,
}

fn read_liar_new_records(path: &Path) -> Result<Vec<(u64, LiarNewRecord)>> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx as u64 + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: LiarNewRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        if record
            .date
            .as_deref()
            .is_some_and(|d| d.trim().starts_with("2021-09"))
        {
            continue;
        }
        records.push((line_no, record));
    }
    Ok(records)
}

/// Load LIAR-New as paired English and French statements (`<id>-en`, `<id>-fr`).
pub fn load_liar_new(path: impl AsRef<Path>) -> Result<Vec<Statement>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (line, rec) in read_liar_new_records(path)? {
        let location = format!("{}:{line}", path.display());
        let schema = |message: String| Error::Schema {
            location: location.clone(),
            message,
        };
        let text_fr = rec
            .text_fr
            .filter(|t| !t.trim().is_empty())
            .ok_or_else(|| schema(format!("record {} has no French text", rec.id)))?;
        if rec.text_en.trim().is_empty() {
            return Err(schema(format!("record {} has no English text", rec.id)));
        }
        let label: SixWayLabel = rec
            .label
            .parse()
            .map_err(|e: Error| schema(e.to_string()))?;
        let possibility = rec
            .possibility
            .as_deref()
            .map(str::parse::<PossibilityLabel>)
            .transpose()
            .map_err(|e| schema(e.to_string()))?;
        if !seen.insert(rec.id.clone()) {
            return Err(schema(format!("duplicate record id {:?}", rec.id)));
        }
        for (language, text) in [
            (Language::En, rec.text_en.trim()),
            (Language::Fr, text_fr.trim()),
        ] {
            out.push(Statement {
                id: format!("{}-{}", rec.id, language.suffix()),
                text: text.to_string(),
                language,
                six_way: Some(label),
                possibility,
                split: Split::Test,
            });
        }
    }
    Ok(out)
}

/// Raw annotator votes from a LIAR-New file, keyed by the base record id.
pub fn load_liar_new_annotations(path: impl AsRef<Path>) -> Result<Vec<AnnotationTriple>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for (line, rec) in read_liar_new_records(path)? {
        let Some(votes) = rec.raw_votes else { continue };
        let location = format!("{}:{line}", path.display());
        if votes.len() != 3 {
            return Err(Error::Schema {
                location,
                message: format!("expected 3 raw votes, found {}", votes.len()),
            });
        }
        let parsed = votes
            .iter()
            .map(|v| v.parse::<PossibilityLabel>())
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Schema {
                location,
                message: e.to_string(),
            })?;
        out.push(AnnotationTriple {
            statement_id: rec.id,
            votes: [parsed[0], parsed[1], parsed[2]],
        });
    }
    Ok(out)
}

/// Split the six labels in the middle: the lower three are false.
pub fn binarize(label: SixWayLabel) -> BinaryLabel {
    BinaryLabel::from_bool(label >= SixWayLabel::HalfTrue)
}

/// Divide the six labels evenly into three.
pub fn coarsen_6_to_3(label: SixWayLabel) -> TernaryLabel {
    match label {
        SixWayLabel::PantsFire | SixWayLabel::False => TernaryLabel::False,
        SixWayLabel::BarelyOrMostlyFalse | SixWayLabel::HalfTrue => TernaryLabel::PartiallyFalse,
        SixWayLabel::MostlyTrue | SixWayLabel::True => TernaryLabel::True,
    }
}

pub fn resolve_possibility(triple: &AnnotationTriple) -> Resolution {
    let votes = &triple.votes;
    if votes.contains(&PossibilityLabel::Possible) && votes.contains(&PossibilityLabel::Impossible)
    {
        return Resolution::Escalate;
    }
    // Only two adjacent classes remain, so one of them has at least two votes.
    let majority = PossibilityLabel::ALL
        .into_iter()
        .find(|l| votes.iter().filter(|v| *v == l).count() >= 2)
        .expect("three votes over at most two classes always have a majority");
    Resolution::Resolved(majority)
}

#[derive(Debug, Deserialize)]
struct SidecarRow {
    statement_id: String,
    resolved_label: PossibilityLabel,
}

/// Manual resolutions for escalated triples: CSV with header
/// `statement_id,resolved_label`.
pub fn load_resolution_sidecar(
    path: impl AsRef<Path>,
) -> Result<HashMap<String, PossibilityLabel>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = HashMap::new();
    for row in reader.deserialize() {
        let row: SidecarRow = row?;
        out.insert(row.statement_id, row.resolved_label);
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResolvedPossibility {
    pub labels: BTreeMap<String, PossibilityLabel>,
    /// Escalated ids with no entry in the sidecar.
    pub unresolved: Vec<String>,
}

pub fn resolve_all(
    triples: &[AnnotationTriple],
    sidecar: &HashMap<String, PossibilityLabel>,
) -> ResolvedPossibility {
    let mut out = ResolvedPossibility::default();
    for t in triples {
        match resolve_possibility(t) {
            Resolution::Resolved(label) => {
                out.labels.insert(t.statement_id.clone(), label);
            }
            Resolution::Escalate => match sidecar.get(&t.statement_id) {
                Some(label) => {
                    out.labels.insert(t.statement_id.clone(), *label);
                }
                None => out.unresolved.push(t.statement_id.clone()),
            },
        }
    }
    out
}

/// Cohen's kappa between two labelings of the same items.
pub fn agreement_kappa<T: Ord>(a: &[T], b: &[T]) -> Result<f64> {
    check_lengths(a.len(), b.len())?;
    if a.is_empty() {
        return Err(Error::argument("kappa needs at least one item"));
    }
    let n = a.len() as f64;
    let mut marg_a: BTreeMap<&T, usize> = BTreeMap::new();
    let mut marg_b: BTreeMap<&T, usize> = BTreeMap::new();
    let mut agree = 0usize;
    for (x, y) in a.iter().zip(b) {
        *marg_a.entry(x).or_default() += 1;
        *marg_b.entry(y).or_default() += 1;
        if x == y {
            agree += 1;
        }
    }
    let p_o = agree as f64 / n;
    let p_e: f64 = marg_a
        .iter()
        .map(|(label, ca)| {
            let cb = marg_b.get(label).copied().unwrap_or(0);
            (*ca as f64 / n) * (cb as f64 / n)
        })
        .sum();
    if (1.0 - p_e).abs() < f64::EPSILON {
        // Both raters constant on the same label.
        return Ok(if agree == a.len() { 1.0 } else { 0.0 });
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}
