#![allow(dead_code)]

use fraud_core::dataset::LabeledDataset;
use fraud_core::numerics::{Matrix, Rng};

/// Per-class counts tallied pair by pair, independent of the library.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tally {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

pub fn tally(scores: &[f64], truth: &[u8], threshold: f64) -> Tally {
    let mut t = Tally { tp: 0, fp: 0, tn: 0, fn_: 0 };
    for (&s, &y) in scores.iter().zip(truth) {
        match (s >= threshold, y == 1) {
            (true, true) => t.tp += 1,
            (true, false) => t.fp += 1,
            (false, false) => t.tn += 1,
            (false, true) => t.fn_ += 1,
        }
    }
    t
}

pub fn safe_div(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Fraction of (positive, negative) pairs ranked correctly, ties counting half.
pub fn pair_auc(scores: &[f64], truth: &[u8]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &yi) in truth.iter().enumerate() {
        if yi != 1 {
            continue;
        }
        for (j, &yj) in truth.iter().enumerate() {
            if yj != 0 {
                continue;
            }
            den += 1.0;
            if scores[i] > scores[j] {
                num += 1.0;
            } else if scores[i] == scores[j] {
                num += 0.5;
            }
        }
    }
    num / den
}

pub fn dataset(rows: &[Vec<f64>], labels: Vec<u8>) -> LabeledDataset {
    let names: Vec<String> = (0..rows[0].len()).map(|j| format!("x{j}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    LabeledDataset::from_parts(Matrix::from_rows(rows).unwrap(), &refs, labels).unwrap()
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.normal(0.0, 1.0)).collect()).unwrap()
}
