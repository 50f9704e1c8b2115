//! Turning raw model replies into typed verdicts.
//!
//! Tolerated formatting drift: surrounding whitespace, a `Score:` prefix and
//! terminal `.`/`!`. A reply holding anything other than one integer is a
//! refusal; the literal `0.5` is the abstain signal.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::prompts::PromptKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum VerdictKind {
    Score(u8),
    Binary(u8),
    Uncertain,
    Refusal,
}

impl VerdictKind {
    /// Numeric prediction on the 0..=100 scale, if any.
    pub fn score(self) -> Option<u8> {
        match self {
            VerdictKind::Score(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub kind: VerdictKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
}

impl Verdict {
    fn bare(kind: VerdictKind) -> Self {
        Verdict {
            kind,
            explanation: None,
        }
    }

    fn refusal(raw: &str) -> Self {
        Verdict {
            kind: VerdictKind::Refusal,
            explanation: Some(raw.to_string()),
        }
    }
}

fn strip_prefix_ci<'a>(s: &'a str, prefix: &str) -> Option<&'a str> {
    let head = s.get(..prefix.len())?;
    head.eq_ignore_ascii_case(prefix)
        .then(|| &s[prefix.len()..])
}

fn normalize(raw: &str) -> &str {
    let mut s = raw.trim();
    if let Some(rest) = strip_prefix_ci(s, "score") {
        if let Some(rest) = rest.trim_start().strip_prefix(':') {
            s = rest.trim_start();
        }
    }
    s.trim_end_matches(|c: char| c == '.' || c == '!' || c.is_whitespace())
}

fn lone_integer(s: &str) -> Option<i64> {
    let digits = s.strip_prefix(['-', '+']).unwrap_or(s);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    // Saturate absurdly long digit strings; they are out of range either way.
    Some(s.parse::<i64>().unwrap_or(if s.starts_with('-') {
        i64::MIN
    } else {
        i64::MAX
    }))
}

pub fn parse_score(raw: &str) -> Result<Verdict> {
    let s = normalize(raw);
    if s == "0.5" {
        return Ok(Verdict::bare(VerdictKind::Uncertain));
    }
    match lone_integer(s) {
        Some(n @ 0..=100) => Ok(Verdict::bare(VerdictKind::Score(n as u8))),
        Some(n) => Err(Error::OutOfRange(n)),
        None => Ok(Verdict::refusal(raw)),
    }
}

pub fn parse_binary(raw: &str, uncertainty_enabled: bool) -> Verdict {
    match normalize(raw) {
        "0" => Verdict::bare(VerdictKind::Binary(0)),
        "1" => Verdict::bare(VerdictKind::Binary(1)),
        "0.5" if uncertainty_enabled => Verdict::bare(VerdictKind::Uncertain),
        _ => Verdict::refusal(raw),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplainOrder {
    ScoreFirst,
    ExplainFirst,
}

/// Split a `score | explanation` (or `explanation | score`) reply.
///
/// Fails only when the numeric side is an integer outside 0..=100.
pub fn split_explained(raw: &str, order: ExplainOrder) -> Result<Verdict> {
    let split = match order {
        ExplainOrder::ScoreFirst => raw.split_once('|'),
        ExplainOrder::ExplainFirst => raw.rsplit_once('|').map(|(text, num)| (num, text)),
    };
    let Some((numeric, text)) = split else {
        return match parse_score(raw)? {
            v @ Verdict {
                kind: VerdictKind::Score(_),
                ..
            } => Ok(v),
            _ => Ok(Verdict::refusal(raw)),
        };
    };
    let parsed = parse_score(numeric)?;
    match parsed.kind {
        VerdictKind::Refusal => Ok(Verdict::refusal(raw)),
        kind => {
            let text = text.trim();
            Ok(Verdict {
                kind,
                explanation: (!text.is_empty()).then(|| text.to_string()),
            })
        }
    }
}

/// Parse a reply according to the prompt that produced it.
///
/// Out-of-range integers become a refusal with `out_of_range` set so reports
/// can count them apart from genuine refusals.
pub fn parse_reply(kind: PromptKind, raw: &str) -> (Verdict, bool) {
    let parsed = match kind {
        PromptKind::Binary => Ok(parse_binary(raw, false)),
        PromptKind::BinaryUncertaintyEnabled => Ok(parse_binary(raw, true)),
        PromptKind::ScoreThenExplain => split_explained(raw, ExplainOrder::ScoreFirst),
        PromptKind::ExplainThenScore => split_explained(raw, ExplainOrder::ExplainFirst),
        _ => parse_score(raw),
    };
    match parsed {
        Ok(v) => (v, false),
        Err(_) => (Verdict::refusal(raw), true),
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// One model reply for one statement, the atomic unit of every experiment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub statement_id: String,
    pub prompt_kind: PromptKind,
    pub model_id: String,
    pub run_index: u32,
    pub raw_text: String,
    pub verdict: VerdictKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
    #[serde(default)]
    pub filled_random: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub out_of_range: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_hash: Option<String>,
}

impl PredictionRecord {
    pub fn from_reply(
        statement_id: impl Into<String>,
        prompt_kind: PromptKind,
        model_id: impl Into<String>,
        run_index: u32,
        raw_text: impl Into<String>,
    ) -> Self {
        let raw_text = raw_text.into();
        let (verdict, out_of_range) = parse_reply(prompt_kind, &raw_text);
        PredictionRecord {
            statement_id: statement_id.into(),
            prompt_kind,
            model_id: model_id.into(),
            run_index,
            raw_text,
            verdict: verdict.kind,
            explanation: verdict.explanation,
            filled_random: false,
            out_of_range,
            prompt_hash: None,
        }
    }

    pub fn is_refusal(&self) -> bool {
        self.verdict == VerdictKind::Refusal
    }
}

fn fill_rng(seed: u64, statement_id: &str, run_index: u32) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(statement_id.as_bytes());
    h.update([0]);
    h.update(run_index.to_le_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// The 0..=100 score [`fill_refusals`] would draw for this statement and run.
pub fn random_fill_score(seed: u64, statement_id: &str, run_index: u32) -> u8 {
    fill_rng(seed, statement_id, run_index).random_range(0..=100)
}

/// Replace each refusal with a uniformly random prediction for its task.
///
/// Each record draws from its own stream keyed by (seed, statement id, run),
/// so fills do not depend on record order.
pub fn fill_refusals(records: &[PredictionRecord], seed: u64) -> Vec<PredictionRecord> {
    fill_nonnumeric(records, seed, false)
}

/// [`fill_refusals`], optionally also filling `0.5` abstentions (for runs
/// where they are not gated out).
pub fn fill_nonnumeric(
    records: &[PredictionRecord],
    seed: u64,
    include_uncertain: bool,
) -> Vec<PredictionRecord> {
    records
        .iter()
        .map(|r| {
            let fill = r.is_refusal() || (include_uncertain && r.verdict == VerdictKind::Uncertain);
            if !fill {
                return r.clone();
            }
            let mut rng = fill_rng(seed, &r.statement_id, r.run_index);
            let verdict = if r.prompt_kind.is_score() {
                VerdictKind::Score(rng.random_range(0..=100))
            } else {
                VerdictKind::Binary(rng.random_range(0..=1))
            };
            PredictionRecord {
                verdict,
                filled_random: true,
                ..r.clone()
            }
        })
        .collect()
}

pub fn write_records(path: impl AsRef<Path>, records: &[PredictionRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<PredictionRecord>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i as u64 + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
