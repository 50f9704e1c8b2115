//! Prompt catalog.
//!
//! Templates live in `templates/*.txt` and are compiled in. Placeholders are
//! `STATEMENT`, `ARTICLE`, `CLOSEST_TRAIN_TEXT` and `CLOSEST_TRAIN_LABEL`.
//! Substitution is a single left-to-right pass over the template, so text
//! inserted for one placeholder is never rescanned for another.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{SixWayLabel, Statement};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Score,
    Binary,
    BinaryUncertaintyEnabled,
    ScoreThenExplain,
    ExplainThenScore,
    WebEvidence,
    IclV1,
    IclV2,
    /// Meta-prompt: the V2 template when a demonstration is supplied (the
    /// nearest training item is in the most-similar decile), otherwise Score.
    IclV3,
}

impl PromptKind {
    pub const ALL: [PromptKind; 9] = [
        PromptKind::Score,
        PromptKind::Binary,
        PromptKind::BinaryUncertaintyEnabled,
        PromptKind::ScoreThenExplain,
        PromptKind::ExplainThenScore,
        PromptKind::WebEvidence,
        PromptKind::IclV1,
        PromptKind::IclV2,
        PromptKind::IclV3,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptKind::Score => "score",
            PromptKind::Binary => "binary",
            PromptKind::BinaryUncertaintyEnabled => "binary_uncertainty_enabled",
            PromptKind::ScoreThenExplain => "score_then_explain",
            PromptKind::ExplainThenScore => "explain_then_score",
            PromptKind::WebEvidence => "web_evidence",
            PromptKind::IclV1 => "icl_v1",
            PromptKind::IclV2 => "icl_v2",
            PromptKind::IclV3 => "icl_v3",
        }
    }

    /// The template text. `IclV3` has none of its own.
    pub fn template(self) -> Option<&'static str> {
        Some(match self {
            PromptKind::Score => include_str!("../templates/score.txt"),
            PromptKind::Binary => include_str!("../templates/binary.txt"),
            PromptKind::BinaryUncertaintyEnabled => {
                include_str!("../templates/binary_uncertainty_enabled.txt")
            }
            PromptKind::ScoreThenExplain => include_str!("../templates/score_then_explain.txt"),
            PromptKind::ExplainThenScore => include_str!("../templates/explain_then_score.txt"),
            PromptKind::WebEvidence => include_str!("../templates/web_evidence.txt"),
            PromptKind::IclV1 => include_str!("../templates/icl_v1.txt"),
            PromptKind::IclV2 => include_str!("../templates/icl_v2.txt"),
            PromptKind::IclV3 => return None,
        })
    }

    /// Whether replies are a 0..=100 score (as opposed to 0/1).
    pub fn is_score(self) -> bool {
        !matches!(
            self,
            PromptKind::Binary | PromptKind::BinaryUncertaintyEnabled
        )
    }

    pub fn is_explained(self) -> bool {
        matches!(
            self,
            PromptKind::ScoreThenExplain | PromptKind::ExplainThenScore
        )
    }
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_lowercase().replace('-', "_");
        PromptKind::ALL
            .into_iter()
            .find(|k| k.as_str() == key)
            .ok_or_else(|| Error::argument(format!("unknown prompt kind {s:?}")))
    }
}

/// Hex SHA-256 of a string; used for prompt and template pinning.
pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Hash of the template behind `kind`, for pinning experiments to a prompt version.
pub fn template_hash(kind: PromptKind) -> Option<String> {
    kind.template().map(sha256_hex)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub kind: PromptKind,
    pub text: String,
    pub statement_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evidence_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub demo_id: Option<String>,
}

impl RenderedPrompt {
    pub fn hash(&self) -> String {
        sha256_hex(&self.text)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Evidence<'a> {
    pub id: &'a str,
    pub text: &'a str,
}

/// A training example shown as an in-context demonstration.
#[derive(Debug, Clone, Copy)]
pub struct Demonstration<'a> {
    pub id: &'a str,
    pub text: &'a str,
    pub score: u8,
}

const PLACEHOLDERS: [&str; 4] = [
    "CLOSEST_TRAIN_TEXT",
    "CLOSEST_TRAIN_LABEL",
    "STATEMENT",
    "ARTICLE",
];

fn substitute(template: &str, value: impl Fn(&str) -> Option<String>) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    'scan: while !rest.is_empty() {
        for ph in PLACEHOLDERS {
            if let Some(tail) = rest.strip_prefix(ph) {
                if let Some(v) = value(ph) {
                    out.push_str(&v);
                    rest = tail;
                    continue 'scan;
                }
            }
        }
        let ch = rest.chars().next().expect("non-empty");
        out.push(ch);
        rest = &rest[ch.len_utf8()..];
    }
    out
}

/// Render a prompt for `statement`. The prompt text stays English whatever
/// the statement language.
pub fn render(
    kind: PromptKind,
    statement: &Statement,
    evidence: Option<Evidence<'_>>,
    demo: Option<Demonstration<'_>>,
) -> Result<RenderedPrompt> {
    let (template_kind, evidence, demo) = match kind {
        PromptKind::WebEvidence => {
            let ev =
                evidence.ok_or_else(|| Error::argument("web_evidence prompt needs evidence"))?;
            (kind, Some(ev), None)
        }
        PromptKind::IclV1 | PromptKind::IclV2 => {
            let d = demo
                .ok_or_else(|| Error::argument(format!("{kind} prompt needs a demonstration")))?;
            (kind, None, Some(d))
        }
        PromptKind::IclV3 => match demo {
            Some(d) => (PromptKind::IclV2, None, Some(d)),
            None => (PromptKind::Score, None, None),
        },
        _ => (kind, None, None),
    };
    if demo.is_some_and(|d| d.score > 100) {
        return Err(Error::argument("demonstration score must be in 0..=100"));
    }
    let template = template_kind
        .template()
        .expect("concrete kinds have templates");
    let text = substitute(template, |ph| match ph {
        "STATEMENT" => Some(statement.text.clone()),
        "ARTICLE" => evidence.map(|e| e.text.to_string()),
        "CLOSEST_TRAIN_TEXT" => demo.map(|d| d.text.to_string()),
        "CLOSEST_TRAIN_LABEL" => demo.map(|d| d.score.to_string()),
        _ => None,
    });
    Ok(RenderedPrompt {
        kind,
        text,
        statement_id: statement.id.clone(),
        evidence_id: evidence.map(|e| e.id.to_string()),
        demo_id: demo.map(|d| d.id.to_string()),
    })
}

/// Six labels mapped uniformly onto 0..=100.
pub fn demo_label_to_score(label: SixWayLabel) -> u8 {
    (label.index() * 20) as u8
}

/// Distance at the 10th percentile (nearest-rank) of all test items'
/// nearest-train distances. Items at or below it are in the most-similar decile.
pub fn decile_cut(distances: &[f64]) -> Result<f64> {
    if distances.is_empty() {
        return Err(Error::argument("no distances to take a decile from"));
    }
    if distances.iter().any(|d| !d.is_finite()) {
        return Err(Error::argument("distances must be finite"));
    }
    let mut sorted = distances.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (sorted.len() as f64 * 0.1).ceil().max(1.0) as usize;
    Ok(sorted[rank - 1])
}

/// Choose the concrete prompt for the ICL meta-prompt: V2 when the item's
/// nearest-train distance is within the most-similar decile, Score otherwise.
pub fn select_icl_variant(test_distance: f64, all_distances: &[f64]) -> Result<PromptKind> {
    let cut = decile_cut(all_distances)?;
    Ok(if test_distance <= cut {
        PromptKind::IclV2
    } else {
        PromptKind::Score
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Language, Split};

    fn stmt(text: &str) -> Statement {
        Statement {
            id: "s1".into(),
            text: text.into(),
            language: Language::En,
            six_way: None,
            possibility: None,
            split: Split::Test,
        }
    }

    #[test]
    fn score_prompt_prefix() {
        let p = render(PromptKind::Score, &stmt("the earth is flat"), None, None).unwrap();
        assert!(p.text.starts_with(
            "Rate the truthfulness of the following statement: \"the earth is flat\""
        ));
        assert!(p.text.ends_with("only respond with the numerical score."));
    }

    #[test]
    fn uncertainty_prompt_allows_abstaining() {
        let p = render(PromptKind::BinaryUncertaintyEnabled, &stmt("x"), None, None).unwrap();
        assert!(p.text.contains("instead answer 0.5"));
    }

    #[test]
    fn web_evidence_appends_article() {
        let ev = Evidence {
            id: "a1",
            text: "A.",
        };
        let p = render(PromptKind::WebEvidence, &stmt("x"), Some(ev), None).unwrap();
        assert!(p.text.ends_with("context for your rating:\n\nA."));
        assert_eq!(p.evidence_id.as_deref(), Some("a1"));
        assert!(render(PromptKind::WebEvidence, &stmt("x"), None, None).is_err());
    }

    #[test]
    fn icl_prompts_need_demos() {
        assert!(render(PromptKind::IclV1, &stmt("x"), None, None).is_err());
        assert!(render(PromptKind::IclV2, &stmt("x"), None, None).is_err());
        let d = Demonstration {
            id: "t9",
            text: "older claim",
            score: 60,
        };
        let p = render(PromptKind::IclV2, &stmt("x"), None, Some(d)).unwrap();
        assert!(p
            .text
            .starts_with("Here is a similar statement that is 60: \"older claim\""));
        let v1 = render(PromptKind::IclV1, &stmt("x"), None, Some(d)).unwrap();
        assert!(v1.text.contains("Rating: 60\n"));
    }

    #[test]
    fn icl_v3_falls_back_to_score() {
        let s = stmt("x");
        let v3 = render(PromptKind::IclV3, &s, None, None).unwrap();
        let score = render(PromptKind::Score, &s, None, None).unwrap();
        assert_eq!(v3.text, score.text);
        assert_eq!(v3.kind, PromptKind::IclV3);
        let d = Demonstration {
            id: "t",
            text: "y",
            score: 0,
        };
        let v3d = render(PromptKind::IclV3, &s, None, Some(d)).unwrap();
        assert_eq!(
            v3d.text,
            render(PromptKind::IclV2, &s, None, Some(d)).unwrap().text
        );
    }

    #[test]
    fn placeholders_inside_statement_are_not_expanded() {
        let s = stmt("ARTICLE says STATEMENT");
        let ev = Evidence {
            id: "a",
            text: "body",
        };
        let p = render(PromptKind::WebEvidence, &s, Some(ev), None).unwrap();
        assert_eq!(p.text.matches("\"ARTICLE says STATEMENT\"").count(), 1);
        assert!(p.text.ends_with("\n\nbody"));
    }

    #[test]
    fn statement_appears_once_quoted() {
        let s = stmt("Unemployment fell by 3 percent");
        let d = Demonstration {
            id: "t",
            text: "other",
            score: 40,
        };
        let ev = Evidence {
            id: "a",
            text: "evidence",
        };
        for kind in PromptKind::ALL {
            let p = render(kind, &s, Some(ev), Some(d)).unwrap();
            assert_eq!(p.text.matches(&s.text).count(), 1, "{kind}");
            assert_eq!(
                p.text.matches("\"Unemployment fell by 3 percent\"").count(),
                1,
                "{kind}"
            );
        }
    }

    #[test]
    fn demo_scores() {
        assert_eq!(demo_label_to_score(SixWayLabel::PantsFire), 0);
        assert_eq!(demo_label_to_score(SixWayLabel::HalfTrue), 60);
        assert_eq!(demo_label_to_score(SixWayLabel::True), 100);
    }

    #[test]
    fn icl_selection() {
        let all: Vec<f64> = (1..=20).map(|i| i as f64 / 100.0).collect();
        // nearest-rank 10th percentile of 20 items is the 2nd smallest
        assert_eq!(decile_cut(&all).unwrap(), 0.02);
        assert_eq!(select_icl_variant(0.01, &all).unwrap(), PromptKind::IclV2);
        assert_eq!(select_icl_variant(0.02, &all).unwrap(), PromptKind::IclV2);
        assert_eq!(select_icl_variant(0.03, &all).unwrap(), PromptKind::Score);
        assert!(select_icl_variant(0.5, &[]).is_err());
    }

    #[test]
    fn kind_names_round_trip() {
        for k in PromptKind::ALL {
            assert_eq!(k.as_str().parse::<PromptKind>().unwrap(), k);
        }
    }
}
