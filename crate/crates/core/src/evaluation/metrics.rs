use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    /// `true` is the positive class (male).
    pub fn from_predictions(predictions: &[bool], labels: &[bool]) -> Result<Self> {
        check_lengths(predictions.len(), labels.len())?;
        let mut c = ConfusionCounts::default();
        for (&p, &l) in predictions.iter().zip(labels) {
            match (p, l) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// `TP / (TP + FP)`, or 0 when nothing was predicted positive.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// `TP / (TP + FN)`, or 0 when there are no positives.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch(format!("{a} predictions for {b} labels")));
    }
    if a == 0 {
        return Err(Error::validation("cannot score an empty trial set"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Score {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: ConfusionCounts,
}

/// Precision, recall and F1 with male (`true`) as the positive class.
pub fn f1_score(predictions: &[bool], labels: &[bool]) -> Result<F1Score> {
    let counts = ConfusionCounts::from_predictions(predictions, labels)?;
    Ok(F1Score {
        precision: counts.precision(),
        recall: counts.recall(),
        f1: counts.f1(),
        counts,
    })
}

/// Mean absolute error. Predictions are used as-is, never rounded.
pub fn mae(predictions: &[f64], labels: &[f64]) -> Result<f64> {
    check_lengths(predictions.len(), labels.len())?;
    let total: f64 = predictions.iter().zip(labels).map(|(p, l)| (p - l).abs()).sum();
    Ok(total / labels.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgePoint {
    pub age: u32,
    pub count: usize,
    pub mae: f64,
}

/// MAE grouped by true age, ascending.
pub fn mae_by_age(predictions: &[f64], labels: &[u32]) -> Result<Vec<AgePoint>> {
    check_lengths(predictions.len(), labels.len())?;
    let mut groups: BTreeMap<u32, (usize, f64)> = BTreeMap::new();
    for (&p, &l) in predictions.iter().zip(labels) {
        let e = groups.entry(l).or_default();
        e.0 += 1;
        e.1 += (p - l as f64).abs();
    }
    Ok(groups
        .into_iter()
        .map(|(age, (count, sum))| AgePoint {
            age,
            count,
            mae: sum / count as f64,
        })
        .collect())
}

/// Count-weighted mean of a per-age curve; equals the overall MAE.
pub fn curve_weighted_mean(curve: &[AgePoint]) -> f64 {
    let n: usize = curve.iter().map(|p| p.count).sum();
    curve.iter().map(|p| p.mae * p.count as f64).sum::<f64>() / n as f64
}

/// Plot-ready CSV: `age,count,mae`.
pub fn write_curve_csv<W: Write>(out: W, curve: &[AgePoint]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["age", "count", "mae"])?;
    for p in curve {
        w.write_record([p.age.to_string(), p.count.to_string(), p.mae.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_built_confusion() {
        // TP=2, FP=1, FN=1, TN=1
        let pred = [true, true, true, false, false];
        let label = [true, true, false, true, false];
        let s = f1_score(&pred, &label).unwrap();
        assert_eq!(
            s.counts,
            ConfusionCounts {
                tp: 2,
                fp: 1,
                fn_: 1,
                tn: 1
            }
        );
        assert_eq!(s.precision, 2.0 / 3.0);
        assert_eq!(s.recall, 2.0 / 3.0);
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_f1_cases() {
        assert_eq!(f1_score(&[true, false], &[true, false]).unwrap().f1, 1.0);
        let none = f1_score(&[false, false, false], &[true, false, true]).unwrap();
        assert_eq!(none.counts.tp, 0);
        assert_eq!(none.f1, 0.0);
        assert!(f1_score(&[], &[]).is_err());
        assert!(f1_score(&[true], &[true, false]).is_err());
    }

    #[test]
    fn mae_examples() {
        assert_eq!(mae(&[25.0, 35.0], &[20.0, 40.0]).unwrap(), 5.0);
        assert_eq!(mae(&[1.5, 2.5], &[1.5, 2.5]).unwrap(), 0.0);
        assert!(mae(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn curve_examples() {
        let labels = [20u32, 30, 40];
        let perfect = mae_by_age(&[20.0, 30.0, 40.0], &labels).unwrap();
        assert!(perfect.iter().all(|p| p.mae == 0.0));
        let curve = mae_by_age(&[22.0, 25.0, 41.0], &labels).unwrap();
        assert_eq!(curve.iter().map(|p| p.mae).collect::<Vec<_>>(), vec![2.0, 5.0, 1.0]);
        let mut buf = Vec::new();
        write_curve_csv(&mut buf, &curve).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "age,count,mae\n20,1,2\n30,1,5\n40,1,1\n"
        );
    }

    proptest! {
        #[test]
        fn f1_invariant_under_duplication(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..60)) {
            let (p, l): (Vec<bool>, Vec<bool>) = pairs.into_iter().unzip();
            let a = f1_score(&p, &l).unwrap();
            let p2: Vec<bool> = p.iter().chain(&p).copied().collect();
            let l2: Vec<bool> = l.iter().chain(&l).copied().collect();
            let b = f1_score(&p2, &l2).unwrap();
            prop_assert!((a.f1 - b.f1).abs() < 1e-12);
        }

        #[test]
        fn mae_translation_equivariant(
            pairs in prop::collection::vec((0.0f64..100.0, 0.0f64..100.0), 1..60),
            c in -1000.0f64..1000.0,
        ) {
            let (p, l): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let shifted_p: Vec<f64> = p.iter().map(|v| v + c).collect();
            let shifted_l: Vec<f64> = l.iter().map(|v| v + c).collect();
            prop_assert!((mae(&p, &l).unwrap() - mae(&shifted_p, &shifted_l).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn curve_mean_is_overall_mae(pairs in prop::collection::vec((0.0f64..100.0, 1u32..92), 1..200)) {
            let (p, l): (Vec<f64>, Vec<u32>) = pairs.into_iter().unzip();
            let lf: Vec<f64> = l.iter().map(|&v| v as f64).collect();
            let curve = mae_by_age(&p, &l).unwrap();
            prop_assert!((curve_weighted_mean(&curve) - mae(&p, &lf).unwrap()).abs() < 1e-9);
        }
    }
}
