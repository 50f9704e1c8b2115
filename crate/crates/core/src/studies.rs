//! Run-to-run variation and embedding-space error analysis.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::corpus::BinaryLabel;
use crate::error::{Error, Result};
use crate::gateway::{cosine_distance, EmbeddingVector};
use crate::parser::{random_fill_score, PredictionRecord, VerdictKind};
use crate::verdicts::{apply_threshold, ThresholdRule};

pub const LARGE_PTP: u8 = 50;
pub const DEFAULT_PERMUTATIONS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleVariation {
    pub statement_id: String,
    pub n_numeric: usize,
    /// Sample SD; `None` with fewer than two numeric replies.
    pub sd: Option<f64>,
    /// `None` with no numeric replies.
    pub ptp: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationReport {
    pub n_runs: usize,
    pub n_examples: usize,
    pub run_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    pub accuracy_sd: f64,
    /// Refusals and "0.5" replies summed over all runs.
    pub n_nonnumeric: usize,
    pub mean_example_sd: f64,
    pub max_example_sd: f64,
    pub max_ptp: u8,
    pub n_large_ptp: usize,
    pub examples: Vec<ExampleVariation>,
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_sd(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    if values.iter().all(|v| *v == values[0]) {
        return Some(0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    Some((ss / (n - 1.0)).sqrt())
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Per-example spread over repeated runs of a score prompt, plus per-run
/// accuracy with non-numeric replies replaced by a seeded random score.
///
/// Runs are aligned by statement id; every run must cover the same ids once.
pub fn variation_study(
    runs: &[Vec<PredictionRecord>],
    gold: &HashMap<String, BinaryLabel>,
    rule: ThresholdRule,
    seed: u64,
) -> Result<VariationReport> {
    if runs.len() < 2 {
        return Err(Error::argument(format!(
            "variation study needs at least 2 runs, got {}",
            runs.len()
        )));
    }
    let mut tables: Vec<BTreeMap<&str, &PredictionRecord>> = Vec::with_capacity(runs.len());
    for (k, run) in runs.iter().enumerate() {
        let mut table = BTreeMap::new();
        for r in run {
            if !r.prompt_kind.is_score() {
                return Err(Error::argument(format!(
                    "variation study needs score prompts, run {k} has {}",
                    r.prompt_kind.as_str()
                )));
            }
            if table.insert(r.statement_id.as_str(), r).is_some() {
                return Err(Error::data(format!(
                    "run {k} repeats statement {}",
                    r.statement_id
                )));
            }
        }
        tables.push(table);
    }
    let ids: Vec<&str> = tables[0].keys().copied().collect();
    for (k, t) in tables.iter().enumerate().skip(1) {
        if !t.keys().copied().eq(ids.iter().copied()) {
            let mismatched: Vec<String> = t
                .keys()
                .copied()
                .collect::<BTreeSet<_>>()
                .symmetric_difference(&ids.iter().copied().collect())
                .map(|s| s.to_string())
                .collect();
            log::error!("run {k} is not aligned with run 0");
            return Err(Error::MissingKeys(mismatched));
        }
    }
    let missing_gold: Vec<String> = ids
        .iter()
        .filter(|id| !gold.contains_key(**id))
        .map(|s| s.to_string())
        .collect();
    if !missing_gold.is_empty() {
        return Err(Error::MissingKeys(missing_gold));
    }

    let mut n_nonnumeric = 0;
    let mut run_accuracies = Vec::with_capacity(runs.len());
    for t in &tables {
        let mut correct = 0usize;
        for (id, r) in t {
            let score = match r.verdict {
                VerdictKind::Score(s) => s,
                _ => {
                    n_nonnumeric += 1;
                    random_fill_score(seed, id, r.run_index)
                }
            };
            if apply_threshold(score, rule) == gold[*id] {
                correct += 1;
            }
        }
        run_accuracies.push(if t.is_empty() {
            0.0
        } else {
            correct as f64 / t.len() as f64
        });
    }

    let examples: Vec<ExampleVariation> = ids
        .iter()
        .map(|id| {
            let scores: Vec<u8> = tables
                .iter()
                .filter_map(|t| t[id].verdict.score())
                .collect();
            let as_f64: Vec<f64> = scores.iter().map(|&s| s as f64).collect();
            ExampleVariation {
                statement_id: id.to_string(),
                n_numeric: scores.len(),
                sd: sample_sd(&as_f64),
                ptp: scores
                    .iter()
                    .max()
                    .zip(scores.iter().min())
                    .map(|(hi, lo)| hi - lo),
            }
        })
        .collect();
    let sds: Vec<f64> = examples.iter().filter_map(|e| e.sd).collect();
    let ptps: Vec<u8> = examples.iter().filter_map(|e| e.ptp).collect();

    Ok(VariationReport {
        n_runs: runs.len(),
        n_examples: ids.len(),
        mean_accuracy: mean(&run_accuracies),
        accuracy_sd: sample_sd(&run_accuracies).unwrap_or(0.0),
        run_accuracies,
        n_nonnumeric,
        mean_example_sd: if sds.is_empty() { 0.0 } else { mean(&sds) },
        max_example_sd: sds.iter().copied().fold(0.0, f64::max),
        max_ptp: ptps.iter().copied().max().unwrap_or(0),
        n_large_ptp: ptps.iter().filter(|&&p| p > LARGE_PTP).count(),
        examples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearestTrain {
    pub distance: f64,
    pub train_id: String,
}

/// Closest training item by cosine distance; ties go to the smallest id.
pub fn nearest_train_distance(
    test: &EmbeddingVector,
    train: &[(String, EmbeddingVector)],
) -> Result<NearestTrain> {
    if test.norm() == 0.0 {
        return Err(Error::data("test embedding has zero norm"));
    }
    let mut best: Option<NearestTrain> = None;
    for (id, v) in train {
        let d = cosine_distance(&test.values, &v.values)
            .map_err(|e| e.for_statement(id.clone()))?
            .clamp(0.0, 2.0);
        let better = match &best {
            None => true,
            Some(b) => d < b.distance || (d == b.distance && id < &b.train_id),
        };
        if better {
            best = Some(NearestTrain {
                distance: d,
                train_id: id.clone(),
            });
        }
    }
    best.ok_or_else(|| Error::argument("no training embeddings to search"))
}

/// [`nearest_train_distance`] for every test item, in input order.
pub fn nearest_train_distances(
    tests: &[(String, EmbeddingVector)],
    train: &[(String, EmbeddingVector)],
) -> Result<Vec<(String, NearestTrain)>> {
    tests
        .par_iter()
        .map(|(id, v)| {
            nearest_train_distance(v, train)
                .map(|n| (id.clone(), n))
                .map_err(|e| e.for_statement(id.clone()))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    Welch,
    Permutation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupTestOptions {
    pub permutations: usize,
    pub seed: u64,
}

impl Default for GroupTestOptions {
    fn default() -> Self {
        GroupTestOptions {
            permutations: DEFAULT_PERMUTATIONS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTest {
    pub mean_a: f64,
    pub mean_b: f64,
    pub p_value: f64,
    /// May differ from the requested method after a fallback.
    pub method: TestMethod,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Two-sided test for a difference in group means.
pub fn group_distance_test(
    a: &[f64],
    b: &[f64],
    method: TestMethod,
    opts: GroupTestOptions,
) -> Result<GroupTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::argument(format!(
            "each group needs at least 2 values, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::data("group values must be finite"));
    }
    let (mean_a, mean_b) = (mean(a), mean(b));
    if method == TestMethod::Welch {
        if let Some(p) = welch_p(a, b) {
            return Ok(GroupTest {
                mean_a,
                mean_b,
                p_value: p,
                method,
                warning: None,
            });
        }
        let warning =
            "zero variance in both groups; Welch test undefined, used permutation test".to_string();
        log::warn!("{warning}");
        return Ok(GroupTest {
            mean_a,
            mean_b,
            p_value: permutation_p(a, b, opts)?,
            method: TestMethod::Permutation,
            warning: Some(warning),
        });
    }
    Ok(GroupTest {
        mean_a,
        mean_b,
        p_value: permutation_p(a, b, opts)?,
        method,
        warning: None,
    })
}

fn welch_p(a: &[f64], b: &[f64]) -> Option<f64> {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let va = sample_sd(a)?.powi(2) / na;
    let vb = sample_sd(b)?.powi(2) / nb;
    let se2 = va + vb;
    if se2 <= 0.0 {
        return None;
    }
    let t = (mean(a) - mean(b)) / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).ok()?;
    Some((2.0 * dist.sf(t.abs())).min(1.0))
}

/// p = (c + 1) / (R + 1), where c counts relabelings whose absolute mean
/// difference reaches the observed one.
fn permutation_p(a: &[f64], b: &[f64], opts: GroupTestOptions) -> Result<f64> {
    if opts.permutations == 0 {
        return Err(Error::argument("permutation count must be positive"));
    }
    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let total: f64 = pooled.iter().sum();
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let diff = |sum_a: f64| (sum_a / na - (total - sum_a) / nb).abs();
    let observed = diff(a.iter().sum());
    let tol = 1e-12 * (1.0 + observed);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut hits = 0usize;
    for _ in 0..opts.permutations {
        let (chosen, _) = pooled.partial_shuffle(&mut rng, a.len());
        if diff(chosen.iter().sum()) >= observed - tol {
            hits += 1;
        }
    }
    Ok((hits + 1) as f64 / (opts.permutations + 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionCell {
    OnlyA,
    OnlyB,
    Both,
    Neither,
}

impl PartitionCell {
    pub fn as_str(self) -> &'static str {
        match self {
            PartitionCell::OnlyA => "only_a",
            PartitionCell::OnlyB => "only_b",
            PartitionCell::Both => "both",
            PartitionCell::Neither => "neither",
        }
    }
}

/// Which of two systems got each statement right.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorPartition {
    pub only_a_correct: BTreeSet<String>,
    pub only_b_correct: BTreeSet<String>,
    pub both_correct: BTreeSet<String>,
    pub neither_correct: BTreeSet<String>,
}

impl ErrorPartition {
    pub fn cell(&self, id: &str) -> Option<PartitionCell> {
        [
            (&self.only_a_correct, PartitionCell::OnlyA),
            (&self.only_b_correct, PartitionCell::OnlyB),
            (&self.both_correct, PartitionCell::Both),
            (&self.neither_correct, PartitionCell::Neither),
        ]
        .into_iter()
        .find(|(set, _)| set.contains(id))
        .map(|(_, c)| c)
    }

    pub fn len(&self) -> usize {
        self.only_a_correct.len()
            + self.only_b_correct.len()
            + self.both_correct.len()
            + self.neither_correct.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn error_partition<L: PartialEq>(
    preds_a: &HashMap<String, L>,
    preds_b: &HashMap<String, L>,
    gold: &HashMap<String, L>,
) -> Result<ErrorPartition> {
    let keys = |m: &HashMap<String, L>| m.keys().cloned().collect::<BTreeSet<_>>();
    let (ka, kb, kg) = (keys(preds_a), keys(preds_b), keys(gold));
    if ka != kb || ka != kg {
        let all: BTreeSet<String> = ka.union(&kb).chain(kg.iter()).cloned().collect();
        let missing = all
            .into_iter()
            .filter(|k| !(ka.contains(k) && kb.contains(k) && kg.contains(k)))
            .collect();
        return Err(Error::MissingKeys(missing));
    }
    let mut out = ErrorPartition::default();
    for id in ka {
        let a = preds_a[&id] == gold[&id];
        let b = preds_b[&id] == gold[&id];
        match (a, b) {
            (true, false) => out.only_a_correct.insert(id),
            (false, true) => out.only_b_correct.insert(id),
            (true, true) => out.both_correct.insert(id),
            (false, false) => out.neither_correct.insert(id),
        };
    }
    Ok(out)
}

/// Test whether items only system A gets right sit at a different distance
/// from the training set than items only system B gets right.
pub fn partition_distance_test(
    partition: &ErrorPartition,
    distances: &HashMap<String, NearestTrain>,
    method: TestMethod,
    opts: GroupTestOptions,
) -> Result<GroupTest> {
    let gather = |ids: &BTreeSet<String>| -> Result<Vec<f64>> {
        let missing: Vec<String> = ids
            .iter()
            .filter(|id| !distances.contains_key(*id))
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingKeys(missing));
        }
        Ok(ids.iter().map(|id| distances[id].distance).collect())
    };
    group_distance_test(
        &gather(&partition.only_a_correct)?,
        &gather(&partition.only_b_correct)?,
        method,
        opts,
    )
}

/// One row per partitioned id with a known distance, sorted by distance
/// then id.
pub fn write_partition_csv(
    partition: &ErrorPartition,
    distances: &HashMap<String, NearestTrain>,
    out: impl Write,
) -> Result<()> {
    let mut rows: Vec<(&String, &NearestTrain, PartitionCell)> = distances
        .iter()
        .filter_map(|(id, n)| partition.cell(id).map(|c| (id, n, c)))
        .collect();
    rows.sort_by(|x, y| {
        x.1.distance
            .total_cmp(&y.1.distance)
            .then_with(|| x.0.cmp(y.0))
    });
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "id",
        "distance_to_nearest_train",
        "nearest_train_id",
        "partition_cell",
    ])?;
    for (id, n, cell) in rows {
        w.write_record([
            id.as_str(),
            &n.distance.to_string(),
            &n.train_id,
            cell.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
