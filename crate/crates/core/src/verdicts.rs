//! Decision rules over parsed verdicts: score thresholds, k-way binning and
//! uncertainty gating.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::corpus::BinaryLabel;
use crate::error::{check_lengths, Error, Result};
use crate::parser::{PredictionRecord, VerdictKind};
use crate::scoring::{confusion, metrics, Averaging};

/// Predict True iff `score >= threshold`.
///
/// Thresholds run 0..=101 so that "predict everything False" is expressible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdRule {
    pub threshold: u8,
}

impl ThresholdRule {
    pub const MAX: u8 = 101;
    /// Even split of the 0..=100 range.
    pub const ZERO_SHOT: ThresholdRule = ThresholdRule { threshold: 50 };

    pub fn new(threshold: u8) -> Result<Self> {
        if threshold > Self::MAX {
            return Err(Error::argument(format!(
                "threshold {threshold} outside 0..={}",
                Self::MAX
            )));
        }
        Ok(ThresholdRule { threshold })
    }
}

pub fn apply_threshold(score: u8, rule: ThresholdRule) -> BinaryLabel {
    BinaryLabel::from_bool(score >= rule.threshold)
}

fn weighted_f1_at(scores: &[u8], gold: &[usize], rule: ThresholdRule) -> Result<f64> {
    let preds: Vec<usize> = scores
        .iter()
        .map(|&s| apply_threshold(s, rule).index())
        .collect();
    Ok(metrics(&confusion(&preds, gold, 2)?, Averaging::Weighted)?.f1)
}

/// Exhaustive scan over thresholds 0..=101 for the best weighted F1; the
/// smallest optimal threshold wins.
pub fn optimize_threshold(scores: &[u8], labels: &[BinaryLabel]) -> Result<ThresholdRule> {
    check_lengths(scores.len(), labels.len())?;
    if scores.is_empty() {
        return Err(Error::argument("cannot optimize a threshold on no data"));
    }
    let gold: Vec<usize> = labels.iter().map(|l| l.index()).collect();
    let mut best = (ThresholdRule { threshold: 0 }, f64::NEG_INFINITY);
    for t in 0..=ThresholdRule::MAX {
        let rule = ThresholdRule { threshold: t };
        let f1 = weighted_f1_at(scores, &gold, rule)?;
        // Equal up to rounding counts as a tie.
        if f1 > best.1 + 1e-12 {
            best = (rule, f1);
        }
    }
    Ok(best.0)
}

/// Lower edge of bin `i` when 0..=100 is cut into `k` bins.
fn bin_edge(i: usize, k: usize) -> usize {
    (100 * i).div_ceil(k)
}

/// Map a 0..=100 score onto `k` equal bins.
///
/// `k = 4` is the CT-FAN scheme: three veracity bins, with the fourth class
/// (`Other`) unreachable.
pub fn score_to_kway(score: u8, k: usize) -> Result<usize> {
    if score > 100 {
        return Err(Error::OutOfRange(score as i64));
    }
    let bins = match k {
        3 | 4 => 3,
        6 => 6,
        _ => return Err(Error::argument(format!("unsupported class count {k}"))),
    };
    let s = score as usize;
    Ok((1..bins).take_while(|&i| bin_edge(i, bins) <= s).count())
}

pub const SCORE_BAND: RangeInclusive<u8> = 49..=51;
pub const PROBABILITY_BAND: RangeInclusive<f64> = 0.49..=0.51;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    /// Drop integer scores in 49..=51.
    ScoreBand,
    /// Drop probabilities in [0.49, 0.51].
    SoftmaxBand,
    /// Drop abstentions (`0.5` replies).
    UncertainVerdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    NearMidpoint,
    UncertainVerdict,
}

/// Anything that can be gated.
pub trait Gateable {
    fn gate_id(&self) -> &str;
    fn gate_score(&self) -> Option<u8> {
        None
    }
    fn gate_probability(&self) -> Option<f64> {
        None
    }
    fn is_uncertain(&self) -> bool {
        false
    }
}

impl Gateable for PredictionRecord {
    fn gate_id(&self) -> &str {
        &self.statement_id
    }

    fn gate_score(&self) -> Option<u8> {
        self.verdict.score()
    }

    fn is_uncertain(&self) -> bool {
        self.verdict == VerdictKind::Uncertain
    }
}

/// A classifier probability for the True class, e.g. a softmax output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityRecord {
    pub statement_id: String,
    pub probability: f64,
}

impl Gateable for ProbabilityRecord {
    fn gate_id(&self) -> &str {
        &self.statement_id
    }

    fn gate_probability(&self) -> Option<f64> {
        Some(self.probability)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatedSet<T> {
    pub kept: Vec<T>,
    pub excluded: Vec<T>,
    pub reason: ExclusionReason,
}

pub fn gate_uncertain<T: Gateable + Clone>(records: &[T], mode: GateMode) -> Result<GatedSet<T>> {
    let reason = match mode {
        GateMode::ScoreBand | GateMode::SoftmaxBand => ExclusionReason::NearMidpoint,
        GateMode::UncertainVerdict => ExclusionReason::UncertainVerdict,
    };
    let mut out = GatedSet {
        kept: Vec::new(),
        excluded: Vec::new(),
        reason,
    };
    for r in records {
        let exclude = match mode {
            GateMode::ScoreBand => {
                let s = r.gate_score().ok_or_else(|| {
                    Error::argument(format!(
                        "{}: score-band gating needs a numeric score",
                        r.gate_id()
                    ))
                })?;
                SCORE_BAND.contains(&s)
            }
            GateMode::SoftmaxBand => {
                let p = r.gate_probability().ok_or_else(|| {
                    Error::argument(format!(
                        "{}: softmax-band gating needs a probability",
                        r.gate_id()
                    ))
                })?;
                PROBABILITY_BAND.contains(&p)
            }
            GateMode::UncertainVerdict => r.is_uncertain(),
        };
        if exclude {
            out.excluded.push(r.clone());
        } else {
            out.kept.push(r.clone());
        }
    }
    Ok(out)
}
