//! Confusion-matrix statistics, ROC curves and rank-based AUC.
//!
//! Fraud (label 1) is the positive class. Precision and recall use the
//! `0/0 → 0` convention, and F1 is 0 whenever precision + recall is 0.

use std::cmp::Ordering;
use std::fmt::Write as _;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn from_predictions(predicted: &[u8], truth: &[u8]) -> Result<Self> {
        if predicted.len() != truth.len() {
            return Err(Error::shape("confusion matrix", truth.len(), predicted.len()));
        }
        let mut cm = ConfusionMatrix::default();
        for (&p, &t) in predicted.iter().zip(truth) {
            match (p, t) {
                (1, 1) => cm.tp += 1,
                (1, 0) => cm.fp += 1,
                (0, 0) => cm.tn += 1,
                (0, 1) => cm.fn_ += 1,
                _ => return Err(Error::invalid("labels must be 0 or 1")),
            }
        }
        Ok(cm)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// The same counts with the legit class treated as positive.
    pub fn swapped(&self) -> ConfusionMatrix {
        ConfusionMatrix {
            tp: self.tn,
            fp: self.fn_,
            tn: self.tp,
            fn_: self.fp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Positive-class precision, recall and F1.
pub fn precision_recall_f1(cm: &ConfusionMatrix) -> Prf {
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall = ratio(cm.tp, cm.tp + cm.fn_);
    Prf {
        precision,
        recall,
        f1: f1_score(precision, recall),
    }
}

/// Unweighted mean over the two classes.
pub fn macro_average(class0: &Prf, class1: &Prf) -> Prf {
    Prf {
        precision: (class0.precision + class1.precision) / 2.0,
        recall: (class0.recall + class1.recall) / 2.0,
        f1: (class0.f1 + class1.f1) / 2.0,
    }
}

/// Support-weighted mean over the two classes.
pub fn weighted_average(class0: &Prf, n0: usize, class1: &Prf, n1: usize) -> Prf {
    let n = (n0 + n1) as f64;
    let w0 = n0 as f64 / n;
    let w1 = n1 as f64 / n;
    Prf {
        precision: w0 * class0.precision + w1 * class1.precision,
        recall: w0 * class0.recall + w1 * class1.recall,
        f1: w0 * class0.f1 + w1 * class1.f1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Scores `>= threshold` are predicted positive; the first point uses `+inf`.
    pub threshold: f64,
}

fn class_totals(scores: &[f64], truth: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != truth.len() {
        return Err(Error::shape("scores vs truth", truth.len(), scores.len()));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("score at index {i}")));
    }
    let n_pos = truth.iter().filter(|&&t| t == 1).count();
    let n_neg = truth.iter().filter(|&&t| t == 0).count();
    if n_pos + n_neg != truth.len() {
        return Err(Error::invalid("labels must be 0 or 1"));
    }
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::invalid("ROC analysis needs both classes in the ground truth"));
    }
    Ok((n_pos, n_neg))
}

/// One point per distinct score, thresholds descending, starting at `(0,0)`.
pub fn roc_curve(scores: &[f64], truth: &[u8]) -> Result<Vec<RocPoint>> {
    let (n_pos, n_neg) = class_totals(scores, truth)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        while k < order.len() && scores[order[k]] == s {
            if truth[order[k]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
            threshold: s,
        });
    }
    Ok(points)
}

/// Trapezoidal area under a curve produced by [`roc_curve`].
pub fn trapezoid_area(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

/// Mann-Whitney AUC: correctly ordered positive/negative pairs over all
/// pairs, with half credit for ties. Computed from mid-ranks in `O(n log n)`.
pub fn roc_auc(scores: &[f64], truth: &[u8]) -> Result<f64> {
    let (n_pos, n_neg) = class_totals(scores, truth)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // twice the rank sum keeps mid-ranks integral
    let mut rank_sum_x2: u128 = 0;
    let mut k = 0;
    while k < order.len() {
        let mut end = k;
        while end + 1 < order.len() && scores[order[end + 1]].total_cmp(&scores[order[k]]) == Ordering::Equal {
            end += 1;
        }
        // ranks k+1..=end+1 share the mid-rank (k + end + 2) / 2
        let mid_x2 = (k + end + 2) as u128;
        let pos_in_block = order[k..=end].iter().filter(|&&i| truth[i] == 1).count() as u128;
        rank_sum_x2 += mid_x2 * pos_in_block;
        k = end + 1;
    }
    let np = n_pos as u128;
    // U·2 = 2·R − n_pos(n_pos+1); exact integer arithmetic
    let u_x2 = rank_sum_x2 - np * (np + 1);
    Ok(u_x2 as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub threshold: f64,
    pub confusion: ConfusionMatrix,
    pub legit: Prf,
    pub fraud: Prf,
    pub macro_avg: Prf,
    pub weighted_avg: Prf,
    pub roc_auc: f64,
    pub roc_points: Vec<RocPoint>,
}

impl EvalReport {
    pub fn n_pos(&self) -> usize {
        self.confusion.tp + self.confusion.fn_
    }

    pub fn n_neg(&self) -> usize {
        self.confusion.tn + self.confusion.fp
    }

    pub fn roc_csv(&self) -> String {
        roc_points_csv(&self.roc_points)
    }
}

pub fn roc_points_csv(points: &[RocPoint]) -> String {
    let mut out = String::from("fpr,tpr,threshold\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.fpr, p.tpr, p.threshold);
    }
    out
}

pub fn parse_roc_csv(text: &str) -> Result<Vec<RocPoint>> {
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        let parse = |s: &str| {
            s.parse::<f64>().map_err(|_| Error::Parse {
                line: i + 1,
                message: format!("bad number '{s}'"),
            })
        };
        if cells.len() != 3 {
            return Err(Error::Parse {
                line: i + 1,
                message: "expected fpr,tpr,threshold".into(),
            });
        }
        points.push(RocPoint {
            fpr: parse(cells[0])?,
            tpr: parse(cells[1])?,
            threshold: parse(cells[2])?,
        });
    }
    Ok(points)
}

/// Scores `>= threshold` are predicted fraud.
pub fn predictions_at(scores: &[f64], threshold: f64) -> Vec<u8> {
    scores.iter().map(|&s| (s >= threshold) as u8).collect()
}

/// Full per-model row: confusion at `threshold`, per-class/macro/weighted PRF, ROC and AUC.
pub fn evaluate(scores: &[f64], truth: &[u8], threshold: f64) -> Result<EvalReport> {
    let roc_points = roc_curve(scores, truth)?;
    let roc_auc = roc_auc(scores, truth)?;
    let confusion = ConfusionMatrix::from_predictions(&predictions_at(scores, threshold), truth)?;
    let fraud = precision_recall_f1(&confusion);
    let legit = precision_recall_f1(&confusion.swapped());
    let n_pos = confusion.tp + confusion.fn_;
    let n_neg = confusion.tn + confusion.fp;
    Ok(EvalReport {
        threshold,
        confusion,
        legit,
        fraud,
        macro_avg: macro_average(&legit, &fraud),
        weighted_avg: weighted_average(&legit, n_neg, &fraud, n_pos),
        roc_auc,
        roc_points,
    })
}

/// Confusion counts at `threshold` recovered from a ROC curve and class totals.
pub fn confusion_from_curve(points: &[RocPoint], threshold: f64, n_pos: usize, n_neg: usize) -> ConfusionMatrix {
    // the last point whose threshold is still >= the decision threshold
    let p = points
        .iter()
        .rev()
        .find(|p| p.threshold >= threshold)
        .copied()
        .unwrap_or(RocPoint {
            fpr: 0.0,
            tpr: 0.0,
            threshold: f64::INFINITY,
        });
    let tp = (p.tpr * n_pos as f64).round() as usize;
    let fp = (p.fpr * n_neg as f64).round() as usize;
    ConfusionMatrix {
        tp,
        fp,
        tn: n_neg - fp,
        fn_: n_pos - tp,
    }
}
