//! Hard-classification metrics.
//!
//! Classes are dense indices `0..n_classes`. Per-class F1 is 0 when precision
//! and recall are both 0. Both averages range over classes present in gold.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::{CtFanLabel, PossibilityLabel};
use crate::error::{check_lengths, Error, Result};

/// Rows are gold classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        ConfusionMatrix {
            counts: vec![vec![0; n_classes]; n_classes],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, gold: usize, predicted: usize) -> u64 {
        self.counts[gold][predicted]
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.n_classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    fn predicted(&self, class: usize) -> u64 {
        self.counts.iter().map(|row| row[class]).sum()
    }

    pub fn f1(&self, class: usize) -> f64 {
        let tp = self.counts[class][class] as f64;
        let pred = self.predicted(class) as f64;
        let gold = self.support(class) as f64;
        let precision = if pred > 0.0 { tp / pred } else { 0.0 };
        let recall = if gold > 0.0 { tp / gold } else { 0.0 };
        if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        }
    }

    /// Per-class F1 for classes with gold support.
    pub fn per_class_f1(&self) -> BTreeMap<usize, f64> {
        (0..self.n_classes())
            .filter(|&c| self.support(c) > 0)
            .map(|c| (c, self.f1(c)))
            .collect()
    }

    pub fn add(&mut self, gold: usize, predicted: usize) {
        self.counts[gold][predicted] += 1;
    }
}

pub fn confusion(
    predictions: &[usize],
    gold: &[usize],
    n_classes: usize,
) -> Result<ConfusionMatrix> {
    check_lengths(predictions.len(), gold.len())?;
    if n_classes == 0 {
        return Err(Error::argument("empty class alphabet"));
    }
    if predictions.is_empty() {
        return Err(Error::argument("no predictions to tally"));
    }
    let mut cm = ConfusionMatrix::new(n_classes);
    for (&p, &g) in predictions.iter().zip(gold) {
        if p >= n_classes || g >= n_classes {
            return Err(Error::argument(format!(
                "class index {} outside alphabet of {n_classes}",
                p.max(g)
            )));
        }
        cm.add(g, p);
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    Weighted,
    Macro,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub f1: f64,
}

pub fn metrics(cm: &ConfusionMatrix, averaging: Averaging) -> Result<Metrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::argument("metrics over an empty confusion matrix"));
    }
    let per_class = cm.per_class_f1();
    let f1 = match averaging {
        Averaging::Weighted => {
            per_class
                .iter()
                .map(|(&c, f)| cm.support(c) as f64 * f)
                .sum::<f64>()
                / total as f64
        }
        Averaging::Macro => per_class.values().sum::<f64>() / per_class.len() as f64,
    };
    Ok(Metrics {
        accuracy: cm.correct() as f64 / total as f64,
        f1,
    })
}

/// One scored item: `predicted` is `None` when the item was excluded
/// (gated or abstained).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoredItem {
    pub statement_id: String,
    pub predicted: Option<usize>,
    pub gold: usize,
    pub filled_random: bool,
}

/// Metrics over a set of items. Metric fields are 0 when nothing was scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_total: usize,
    pub n_scored: usize,
    pub n_excluded: usize,
    pub n_filled_random: usize,
    pub accuracy: f64,
    pub weighted_f1: f64,
    pub macro_f1: f64,
    pub per_class_f1: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub strata: BTreeMap<PossibilityLabel, MetricsReport>,
}

fn report_for(items: &[&ScoredItem], class_names: &[&str]) -> Result<MetricsReport> {
    let scored: Vec<_> = items
        .iter()
        .filter_map(|i| i.predicted.map(|p| (p, i.gold)))
        .collect();
    let mut report = MetricsReport {
        n_total: items.len(),
        n_scored: scored.len(),
        n_excluded: items.len() - scored.len(),
        n_filled_random: items
            .iter()
            .filter(|i| i.filled_random && i.predicted.is_some())
            .count(),
        accuracy: 0.0,
        weighted_f1: 0.0,
        macro_f1: 0.0,
        per_class_f1: BTreeMap::new(),
        strata: BTreeMap::new(),
    };
    if scored.is_empty() {
        return Ok(report);
    }
    let (preds, gold): (Vec<_>, Vec<_>) = scored.into_iter().unzip();
    let cm = confusion(&preds, &gold, class_names.len())?;
    let weighted = metrics(&cm, Averaging::Weighted)?;
    let macro_ = metrics(&cm, Averaging::Macro)?;
    report.accuracy = weighted.accuracy;
    report.weighted_f1 = weighted.f1;
    report.macro_f1 = macro_.f1;
    report.per_class_f1 = cm
        .per_class_f1()
        .into_iter()
        .map(|(c, f)| (class_names[c].to_string(), f))
        .collect();
    Ok(report)
}

/// Overall metrics plus one sub-report per possibility stratum.
///
/// With `possibility = None` the strata map stays empty. Otherwise every item
/// must join; missing ids are reported together.
pub fn stratified_report(
    items: &[ScoredItem],
    class_names: &[&str],
    possibility: Option<&HashMap<String, PossibilityLabel>>,
) -> Result<MetricsReport> {
    let all: Vec<&ScoredItem> = items.iter().collect();
    let mut report = report_for(&all, class_names)?;
    let Some(possibility) = possibility else {
        return Ok(report);
    };
    let missing: Vec<String> = items
        .iter()
        .filter(|i| !possibility.contains_key(&i.statement_id))
        .map(|i| i.statement_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingKeys(missing));
    }
    for stratum in PossibilityLabel::ALL {
        let members: Vec<&ScoredItem> = items
            .iter()
            .filter(|i| possibility[&i.statement_id] == stratum)
            .collect();
        if !members.is_empty() {
            report
                .strata
                .insert(stratum, report_for(&members, class_names)?);
        }
    }
    Ok(report)
}

/// Summary table, one row per stratum plus `all`, metrics in percent.
pub fn write_summary_csv(report: &MetricsReport, mut out: impl Write) -> Result<()> {
    writeln!(
        out,
        "stratum,n_total,n_scored,n_excluded,accuracy,weighted_f1,macro_f1"
    )?;
    let mut row = |name: &str, r: &MetricsReport| -> std::io::Result<()> {
        writeln!(
            out,
            "{name},{},{},{},{:.1},{:.1},{:.1}",
            r.n_total,
            r.n_scored,
            r.n_excluded,
            100.0 * r.accuracy,
            100.0 * r.weighted_f1,
            100.0 * r.macro_f1
        )
    };
    for (stratum, sub) in &report.strata {
        row(stratum.as_str(), sub)?;
    }
    row("all", report)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CtFanProtocol {
    /// Keep gold `Other`; it can never be predicted, so each one is a miss.
    FourWay,
    /// Drop gold `Other` items.
    ThreeWay,
}

/// Tally CT-FAN predictions (veracity class indices 0..3) against gold under
/// one of the two protocols.
pub fn ctfan_confusion(
    predictions: &[usize],
    gold: &[CtFanLabel],
    protocol: CtFanProtocol,
) -> Result<ConfusionMatrix> {
    check_lengths(predictions.len(), gold.len())?;
    if predictions.iter().any(|&p| p >= 3) {
        return Err(Error::argument(
            "CT-FAN predictions must be one of the three veracity classes",
        ));
    }
    let (preds, golds): (Vec<usize>, Vec<usize>) = predictions
        .iter()
        .zip(gold)
        .filter(|(_, g)| protocol == CtFanProtocol::FourWay || **g != CtFanLabel::Other)
        .map(|(&p, g)| (p, g.index()))
        .unzip();
    let n_classes = match protocol {
        CtFanProtocol::FourWay => 4,
        CtFanProtocol::ThreeWay => 3,
    };
    confusion(&preds, &golds, n_classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_tally() {
        // classes: 0 = False, 1 = True; gold [T,T,F] vs predicted [T,F,F]
        let cm = confusion(&[1, 0, 0], &[1, 1, 0], 2).unwrap();
        assert_eq!(cm.rows(), &[vec![1, 0], vec![1, 1]]);
        let ident = confusion(&[0, 1, 2, 1], &[0, 1, 2, 1], 3).unwrap();
        assert_eq!(ident.rows(), &[vec![1, 0, 0], vec![0, 2, 0], vec![0, 0, 1]]);
    }

    #[test]
    fn confusion_errors() {
        assert!(confusion(&[0], &[0, 1], 2).is_err());
        assert!(confusion(&[0], &[0], 0).is_err());
        assert!(confusion(&[3], &[0], 2).is_err());
        assert!(confusion(&[], &[], 2).is_err());
    }

    #[test]
    fn weighted_f1_hand_value() {
        // Supports (5,3,2) with per-class F1 (1.0, 0.5, 0.0). Class 3 is in the
        // alphabet but absent from gold, so it soaks up misses without
        // entering either average.
        let gold = [0, 0, 0, 0, 0, 1, 1, 1, 2, 2];
        let pred = [0, 0, 0, 0, 0, 1, 2, 2, 3, 3];
        let cm = confusion(&pred, &gold, 4).unwrap();
        assert_eq!(cm.f1(0), 1.0);
        assert!((cm.f1(1) - 0.5).abs() < 1e-12);
        assert_eq!(cm.f1(2), 0.0);
        let w = metrics(&cm, Averaging::Weighted).unwrap().f1;
        assert!((w - 0.65).abs() < 1e-12);
        let m = metrics(&cm, Averaging::Macro).unwrap().f1;
        assert!((m - 0.5).abs() < 1e-12);
    }

    #[test]
    fn all_correct() {
        let cm = confusion(&[0, 1, 1, 2], &[0, 1, 1, 2], 3).unwrap();
        for avg in [Averaging::Weighted, Averaging::Macro] {
            let m = metrics(&cm, avg).unwrap();
            assert_eq!((m.accuracy, m.f1), (1.0, 1.0));
        }
    }

    #[test]
    fn macro_ignores_classes_absent_from_gold() {
        // class 2 is predicted but never gold.
        let cm = confusion(&[0, 1, 2], &[0, 1, 1], 3).unwrap();
        let m = metrics(&cm, Averaging::Macro).unwrap();
        let expected = (cm.f1(0) + cm.f1(1)) / 2.0;
        assert!((m.f1 - expected).abs() < 1e-15);
    }

    fn item(id: &str, predicted: Option<usize>, gold: usize) -> ScoredItem {
        ScoredItem {
            statement_id: id.into(),
            predicted,
            gold,
            filled_random: false,
        }
    }

    #[test]
    fn strata_and_exclusions() {
        let items = vec![
            item("a", Some(1), 1),
            item("b", Some(0), 1),
            item("c", None, 0),
            item("d", Some(0), 0),
        ];
        let poss = HashMap::from([
            ("a".to_string(), PossibilityLabel::Possible),
            ("b".to_string(), PossibilityLabel::Possible),
            ("c".to_string(), PossibilityLabel::Impossible),
            ("d".to_string(), PossibilityLabel::Hard),
        ]);
        let r = stratified_report(&items, &["false", "true"], Some(&poss)).unwrap();
        assert_eq!((r.n_total, r.n_scored, r.n_excluded), (4, 3, 1));
        assert!((r.accuracy - 2.0 / 3.0).abs() < 1e-12);
        let imp = &r.strata[&PossibilityLabel::Impossible];
        assert_eq!((imp.n_scored, imp.n_excluded), (0, 1));
        assert_eq!(r.strata[&PossibilityLabel::Possible].accuracy, 0.5);

        let mut partial = poss.clone();
        partial.remove("d");
        match stratified_report(&items, &["false", "true"], Some(&partial)) {
            Err(Error::MissingKeys(ids)) => assert_eq!(ids, vec!["d".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn single_stratum_equals_overall() {
        let items = vec![
            item("a", Some(1), 1),
            item("b", Some(0), 1),
            item("c", Some(0), 0),
        ];
        let poss: HashMap<_, _> = items
            .iter()
            .map(|i| (i.statement_id.clone(), PossibilityLabel::Possible))
            .collect();
        let r = stratified_report(&items, &["false", "true"], Some(&poss)).unwrap();
        assert_eq!(r.strata.len(), 1);
        let sub = &r.strata[&PossibilityLabel::Possible];
        assert_eq!(sub.accuracy, r.accuracy);
        assert_eq!(sub.macro_f1, r.macro_f1);
    }

    #[test]
    fn ctfan_protocols() {
        use CtFanLabel::*;
        let gold = [False, True, Other, PartiallyFalse];
        let preds = [0, 2, 2, 1];
        let four = ctfan_confusion(&preds, &gold, CtFanProtocol::FourWay).unwrap();
        assert_eq!(four.total(), 4);
        assert_eq!(four.correct(), 3);
        assert_eq!(four.f1(3), 0.0);
        let three = ctfan_confusion(&preds, &gold, CtFanProtocol::ThreeWay).unwrap();
        assert_eq!(three.total(), 3);
        assert_eq!(metrics(&three, Averaging::Macro).unwrap().accuracy, 1.0);
        assert!(ctfan_confusion(&[3], &[Other], CtFanProtocol::FourWay).is_err());
    }
}
