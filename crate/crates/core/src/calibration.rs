//! Platt scaling and expected calibration error.
//!
//! The fit is a plain maximum-likelihood logistic regression of the binary
//! label on the raw score, solved with damped Newton steps. Calibration error
//! uses equal-count (quantile) bins over the predicted probability of the
//! True class; items are ranked with a stable sort, so tied probabilities keep
//! input order and bin sizes never differ by more than one.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::BinaryLabel;
use crate::error::{check_lengths, Error, Result};

/// `p(s) = logistic(slope * s + intercept)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    pub slope: f64,
    pub intercept: f64,
}

impl CalibrationModel {
    pub fn apply(&self, score: f64) -> f64 {
        apply_calibration(self, score)
    }
}

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn apply_calibration(model: &CalibrationModel, score: f64) -> f64 {
    logistic(model.slope * score + model.intercept)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlattOptions {
    pub max_iterations: usize,
    /// Stop once the largest parameter step falls below this.
    pub tolerance: f64,
    /// Bound on |slope|; reached only when the classes are separable.
    pub slope_cap: f64,
    /// Platt's (n+ + 1)/(n+ + 2) and 1/(n- + 2) targets instead of 0/1.
    pub target_smoothing: bool,
}

impl Default for PlattOptions {
    fn default() -> Self {
        PlattOptions {
            max_iterations: 100,
            tolerance: 1e-8,
            slope_cap: 1e3,
            target_smoothing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlattFit {
    pub model: CalibrationModel,
    pub iterations: usize,
    pub converged: bool,
    pub slope_capped: bool,
    /// Log-likelihood at the start and after each accepted step.
    pub log_likelihood: Vec<f64>,
}

fn log_likelihood(scores: &[f64], targets: &[f64], slope: f64, intercept: f64) -> f64 {
    scores
        .iter()
        .zip(targets)
        .map(|(&s, &y)| {
            let z = slope * s + intercept;
            // log p = -softplus(-z), log(1-p) = -softplus(z)
            -(y * softplus(-z) + (1.0 - y) * softplus(z))
        })
        .sum()
}

/// Under perfect separation the MLE slope is unbounded. Return the capped
/// slope with the decision point halfway across the gap.
fn separated_fit(scores: &[f64], labels: &[BinaryLabel], cap: f64) -> Option<CalibrationModel> {
    let range = |want: bool| {
        scores
            .iter()
            .zip(labels)
            .filter(|(_, l)| l.is_true() == want)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (&s, _)| {
                (lo.min(s), hi.max(s))
            })
    };
    let (pos_lo, pos_hi) = range(true);
    let (neg_lo, neg_hi) = range(false);
    let (slope, mid) = if neg_hi < pos_lo {
        (cap, (neg_hi + pos_lo) / 2.0)
    } else if pos_hi < neg_lo {
        (-cap, (pos_hi + neg_lo) / 2.0)
    } else {
        return None;
    };
    Some(CalibrationModel {
        slope,
        intercept: -slope * mid,
    })
}

pub fn platt_fit(scores: &[f64], labels: &[BinaryLabel]) -> Result<CalibrationModel> {
    Ok(platt_fit_with(scores, labels, PlattOptions::default())?.model)
}

pub fn platt_fit_with(
    scores: &[f64],
    labels: &[BinaryLabel],
    opts: PlattOptions,
) -> Result<PlattFit> {
    check_lengths(scores.len(), labels.len())?;
    if scores.len() < 2 {
        return Err(Error::argument("Platt scaling needs at least two points"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::argument("scores must be finite"));
    }
    let n_pos = labels.iter().filter(|l| l.is_true()).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    let (hi, lo) = if opts.target_smoothing {
        ((n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))
    } else {
        (1.0, 0.0)
    };
    let targets: Vec<f64> = labels
        .iter()
        .map(|l| if l.is_true() { hi } else { lo })
        .collect();

    if n_pos == 0.0 || n_neg == 0.0 {
        // One class: the likelihood is maximized by the constant prior.
        let prior = targets.iter().sum::<f64>() / targets.len() as f64;
        let intercept = if prior >= 1.0 {
            opts.slope_cap
        } else if prior <= 0.0 {
            -opts.slope_cap
        } else {
            (prior / (1.0 - prior)).ln()
        };
        let model = CalibrationModel {
            slope: 0.0,
            intercept,
        };
        return Ok(PlattFit {
            model,
            iterations: 0,
            converged: true,
            slope_capped: false,
            log_likelihood: vec![log_likelihood(scores, &targets, 0.0, intercept)],
        });
    }

    if !opts.target_smoothing {
        if let Some(model) = separated_fit(scores, labels, opts.slope_cap) {
            return Ok(PlattFit {
                model,
                iterations: 0,
                converged: false,
                slope_capped: true,
                log_likelihood: vec![log_likelihood(
                    scores,
                    &targets,
                    model.slope,
                    model.intercept,
                )],
            });
        }
    }

    let mut slope = 0.0;
    let mut intercept = ((n_pos + 1.0) / (n_neg + 1.0)).ln();
    let mut ll = log_likelihood(scores, &targets, slope, intercept);
    let mut history = vec![ll];
    let mut converged = false;
    let mut capped = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        // Gradient and (negated) Hessian of the log-likelihood.
        let (mut ga, mut gb) = (0.0, 0.0);
        let (mut haa, mut hab, mut hbb) = (0.0, 0.0, 0.0);
        for (&s, &y) in scores.iter().zip(&targets) {
            let p = logistic(slope * s + intercept);
            let r = y - p;
            let w = p * (1.0 - p);
            ga += r * s;
            gb += r;
            haa += w * s * s;
            hab += w * s;
            hbb += w;
        }
        let ridge = 1e-12 * (1.0 + haa + hbb);
        haa += ridge;
        hbb += ridge;
        let det = haa * hbb - hab * hab;
        if !(det.is_finite() && det > 0.0) {
            break;
        }
        let da = (hbb * ga - hab * gb) / det;
        let db = (haa * gb - hab * ga) / det;

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut a = slope + step * da;
            let mut b = intercept + step * db;
            let mut hit_cap = false;
            if a.abs() > opts.slope_cap {
                // Shrink along the ray so the implied decision point a/b holds.
                let k = opts.slope_cap / a.abs();
                a *= k;
                b *= k;
                hit_cap = true;
            }
            let cand = log_likelihood(scores, &targets, a, b);
            if cand >= ll {
                accepted = Some((a, b, cand, hit_cap));
                break;
            }
            step *= 0.5;
        }
        let Some((a, b, cand, hit_cap)) = accepted else {
            converged = true;
            break;
        };
        let moved = (a - slope).abs().max((b - intercept).abs());
        slope = a;
        intercept = b;
        ll = cand;
        history.push(ll);
        if hit_cap {
            capped = true;
            break;
        }
        if moved < opts.tolerance {
            converged = true;
            break;
        }
    }

    Ok(PlattFit {
        model: CalibrationModel { slope, intercept },
        iterations,
        converged,
        slope_capped: capped,
        log_likelihood: history,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// Mean predicted probability of True.
    pub mean_confidence: f64,
    /// Observed fraction of True labels.
    pub empirical_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityTable {
    pub bins: Vec<ReliabilityBin>,
    /// Some run of identical probabilities was split across two bins.
    pub ties_cross_edges: bool,
}

impl ReliabilityTable {
    pub fn n(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    pub fn ece(&self) -> f64 {
        let n = self.n() as f64;
        self.bins
            .iter()
            .map(|b| b.count as f64 / n * (b.mean_confidence - b.empirical_accuracy).abs())
            .sum()
    }

    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "bin_lower,bin_upper,count,mean_conf,accuracy")?;
        for b in &self.bins {
            writeln!(
                out,
                "{},{},{},{},{}",
                b.lower, b.upper, b.count, b.mean_confidence, b.empirical_accuracy
            )?;
        }
        Ok(())
    }
}

/// Equal-count bins over the predicted probabilities. Empty bins (when
/// `n < bins`) are omitted.
pub fn reliability_table(
    probabilities: &[f64],
    labels: &[BinaryLabel],
    bins: usize,
) -> Result<ReliabilityTable> {
    check_lengths(probabilities.len(), labels.len())?;
    if probabilities.is_empty() {
        return Err(Error::argument(
            "calibration error needs at least one prediction",
        ));
    }
    if bins == 0 {
        return Err(Error::argument("bin count must be positive"));
    }
    if probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::argument("probabilities must lie in [0, 1]"));
    }
    let n = probabilities.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| probabilities[i].total_cmp(&probabilities[j]));

    let mut table = ReliabilityTable {
        bins: Vec::with_capacity(bins),
        ties_cross_edges: false,
    };
    let mut prev_upper: Option<f64> = None;
    for b in 0..bins {
        let (start, end) = (b * n / bins, (b + 1) * n / bins);
        if start == end {
            continue;
        }
        let members = &order[start..end];
        let count = members.len();
        let conf = members.iter().map(|&i| probabilities[i]).sum::<f64>() / count as f64;
        let acc = members.iter().filter(|&&i| labels[i].is_true()).count() as f64 / count as f64;
        let lower = probabilities[members[0]];
        let upper = probabilities[members[count - 1]];
        if prev_upper == Some(lower) {
            table.ties_cross_edges = true;
        }
        prev_upper = Some(upper);
        table.bins.push(ReliabilityBin {
            lower,
            upper,
            count,
            mean_confidence: conf,
            empirical_accuracy: acc,
        });
    }
    Ok(table)
}

pub fn ece(probabilities: &[f64], labels: &[BinaryLabel], bins: usize) -> Result<f64> {
    Ok(reliability_table(probabilities, labels, bins)?.ece())
}
