//! Binary classification counts and rates, pneumonia (class 1) positive.

use crate::error::{bail, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// A rate whose denominator may be zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Rate {
    Value(f64),
    Absent(&'static str),
}

impl Rate {
    fn ratio(num: u64, den: u64, reason: &'static str) -> Self {
        if den == 0 {
            Rate::Absent(reason)
        } else {
            Rate::Value(num as f64 / den as f64)
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Rate::Value(v) => Some(v),
            Rate::Absent(_) => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: Rate,
    pub recall: Rate,
}

pub const NO_POSITIVE_PREDICTIONS: &str = "no positive predictions (tp + fp = 0)";
pub const NO_POSITIVE_LABELS: &str = "no positive labels (tp + fn = 0)";

pub fn confusion(preds: &[usize], labels: &[usize]) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() {
        bail!(Data, "{} predictions for {} labels", preds.len(), labels.len());
    }
    if preds.is_empty() {
        bail!(Data, "confusion matrix of zero samples");
    }
    let mut cm = ConfusionMatrix::default();
    for (i, (&p, &l)) in preds.iter().zip(labels).enumerate() {
        match (p, l) {
            (1, 1) => cm.tp += 1,
            (1, 0) => cm.fp += 1,
            (0, 1) => cm.fn_ += 1,
            (0, 0) => cm.tn += 1,
            _ => bail!(Label, "non-binary prediction {} or label {} at index {}", p, l, i),
        }
    }
    Ok(cm)
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    let total = cm.total();
    if total == 0 {
        bail!(Contract, "metrics of an empty confusion matrix");
    }
    Ok(Metrics {
        accuracy: (cm.tp + cm.tn) as f64 / total as f64,
        precision: Rate::ratio(cm.tp, cm.tp + cm.fp, NO_POSITIVE_PREDICTIONS),
        recall: Rate::ratio(cm.tp, cm.tp + cm.fn_, NO_POSITIVE_LABELS),
    })
}

#[cfg(test)]
mod tests {
    use alloc::vec::Vec;

    use super::*;

    #[test]
    fn arithmetic_example() {
        let m = metrics(&ConfusionMatrix { tp: 3, fp: 1, fn_: 1, tn: 5 }).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall), (0.8, Rate::Value(0.75), Rate::Value(0.75)));
    }

    #[test]
    fn definitions() {
        let labels = [1, 0, 1, 1, 0];
        let perfect = confusion(&labels, &labels).unwrap();
        assert_eq!((perfect.fp, perfect.fn_), (0, 0));
        let all_pos = confusion(&[1; 5], &labels).unwrap();
        assert_eq!((all_pos.fn_, all_pos.tn), (0, 0));
        assert_eq!(metrics(&all_pos).unwrap().recall, Rate::Value(1.0));
        let none = metrics(&ConfusionMatrix { tp: 0, fp: 0, fn_: 2, tn: 1 }).unwrap();
        assert_eq!(none.precision, Rate::Absent(NO_POSITIVE_PREDICTIONS));
        assert!(confusion(&[1], &[1, 0]).is_err());
        assert!(matches!(metrics(&ConfusionMatrix::default()), Err(crate::Error::Contract(_))));
    }

    #[test]
    fn accuracy_between_class_recalls() {
        for tp in 0..5u64 {
            for fp in 0..5u64 {
                for fn_ in 0..5u64 {
                    for tn in 0..5u64 {
                        let cm = ConfusionMatrix { tp, fp, fn_, tn };
                        if tp + fn_ == 0 || tn + fp == 0 {
                            continue;
                        }
                        let acc = metrics(&cm).unwrap().accuracy;
                        let r1 = tp as f64 / (tp + fn_) as f64;
                        let r0 = tn as f64 / (tn + fp) as f64;
                        assert!(acc >= r0.min(r1) - 1e-15 && acc <= r0.max(r1) + 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn permutation_invariant() {
        let p: Vec<usize> = (0..50).map(|i| (i * 7 % 5 == 0) as usize).collect();
        let l: Vec<usize> = (0..50).map(|i| (i % 3 == 0) as usize).collect();
        let idx: Vec<usize> = (0..50).map(|i| (i * 17) % 50).collect();
        let pp: Vec<usize> = idx.iter().map(|&i| p[i]).collect();
        let lp: Vec<usize> = idx.iter().map(|&i| l[i]).collect();
        assert_eq!(confusion(&p, &l).unwrap(), confusion(&pp, &lp).unwrap());
    }
}
