use std::cmp::Ordering;

use super::{check_row, header, not_fitted, Classifier};
use crate::codec::{Reader, Writer};
use crate::dataset::LabeledDataset;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Leaf {
        /// `[p(legit), p(fraud)]` among the training rows that reached the leaf.
        probs: [f64; 2],
        n_samples: usize,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    fn fraud_probability(&self, row: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { probs, .. } => return probs[1],
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if row[*feature] <= *threshold { left } else { right },
            }
        }
    }

    fn encode(&self, w: &mut Writer) {
        match self {
            TreeNode::Leaf { probs, n_samples } => {
                w.u32(0);
                w.f64(probs[1]);
                w.usize(*n_samples);
            }
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                w.u32(1);
                w.usize(*feature);
                w.f64(*threshold);
                left.encode(w);
                right.encode(w);
            }
        }
    }

    fn decode(r: &mut Reader, depth: usize) -> Result<TreeNode> {
        if depth > 10_000 {
            return Err(Error::Format("tree is nested too deeply".into()));
        }
        match r.u32()? {
            0 => {
                let p = r.f64()?;
                Ok(TreeNode::Leaf {
                    probs: [1.0 - p, p],
                    n_samples: r.usize()?,
                })
            }
            1 => Ok(TreeNode::Split {
                feature: r.usize()?,
                threshold: r.f64()?,
                left: Box::new(TreeNode::decode(r, depth + 1)?),
                right: Box::new(TreeNode::decode(r, depth + 1)?),
            }),
            tag => Err(Error::Format(format!("unknown tree node tag {tag}"))),
        }
    }
}

/// A candidate split scored by `Σ_side (n0² + n1²) / n_side`, which is
/// maximal where the weighted Gini impurity is minimal. Kept as an exact
/// fraction so that ties are real ties.
#[derive(Debug, Clone, Copy)]
struct SplitScore {
    num: u128,
    den: u128,
}

impl SplitScore {
    fn new(left: [usize; 2], right: [usize; 2]) -> Self {
        let sq = |c: [usize; 2]| (c[0] as u128).pow(2) + (c[1] as u128).pow(2);
        let nl = (left[0] + left[1]) as u128;
        let nr = (right[0] + right[1]) as u128;
        SplitScore {
            num: sq(left) * nr + sq(right) * nl,
            den: nl * nr,
        }
    }

    fn cmp(&self, other: &SplitScore) -> Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }
}

/// CART with Gini impurity.
///
/// Every impure node is split while depth and size allow, including splits
/// that do not reduce impurity (XOR-like data needs them). Candidate
/// thresholds are midpoints between consecutive distinct values; ties go
/// to the lower feature index, then the lower threshold.
#[derive(Debug, Clone)]
pub struct DecisionTree {
    /// `None` grows until leaves are pure or unsplittable.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    root: Option<(TreeNode, usize)>,
}

impl Default for DecisionTree {
    fn default() -> Self {
        DecisionTree::new(Some(8), 2)
    }
}

impl DecisionTree {
    pub fn new(max_depth: Option<usize>, min_samples_split: usize) -> Self {
        DecisionTree {
            max_depth,
            min_samples_split,
            root: None,
        }
    }

    pub fn root(&self) -> Option<&TreeNode> {
        self.root.as_ref().map(|(n, _)| n)
    }

    pub(super) fn decode(r: &mut Reader) -> Result<Self> {
        let max_depth = match r.u32()? {
            0 => None,
            _ => Some(r.usize()?),
        };
        let min_samples_split = r.usize()?;
        let root = match r.u32()? {
            0 => None,
            _ => {
                let n_features = r.usize()?;
                Some((TreeNode::decode(r, 0)?, n_features))
            }
        };
        Ok(DecisionTree {
            max_depth,
            min_samples_split,
            root,
        })
    }

    fn grow(&self, ds: &LabeledDataset, idx: &[usize], depth: usize) -> TreeNode {
        let counts = class_counts(ds, idx);
        let leaf = || TreeNode::Leaf {
            probs: [
                counts[0] as f64 / idx.len() as f64,
                counts[1] as f64 / idx.len() as f64,
            ],
            n_samples: idx.len(),
        };
        let pure = counts[0] == 0 || counts[1] == 0;
        let depth_capped = self.max_depth.is_some_and(|m| depth >= m);
        if pure || depth_capped || idx.len() < self.min_samples_split.max(2) {
            return leaf();
        }
        let Some((feature, threshold)) = best_split(ds, idx) else {
            return leaf();
        };
        let mut left: Vec<usize> = Vec::new();
        let mut right: Vec<usize> = Vec::new();
        for &i in idx.iter() {
            if ds.row(i)[feature] <= threshold {
                left.push(i);
            } else {
                right.push(i);
            }
        }
        TreeNode::Split {
            feature,
            threshold,
            left: Box::new(self.grow(ds, &left, depth + 1)),
            right: Box::new(self.grow(ds, &right, depth + 1)),
        }
    }
}

fn class_counts(ds: &LabeledDataset, idx: &[usize]) -> [usize; 2] {
    let mut c = [0, 0];
    for &i in idx {
        c[ds.labels()[i] as usize] += 1;
    }
    c
}

/// Exhaustive scan over features × midpoints; `None` when every feature is constant.
fn best_split(ds: &LabeledDataset, idx: &[usize]) -> Option<(usize, f64)> {
    let total = class_counts(ds, idx);
    let mut best: Option<(SplitScore, usize, f64)> = None;
    let mut order = idx.to_vec();
    for f in 0..ds.n_cols() {
        order.sort_by(|&a, &b| ds.row(a)[f].total_cmp(&ds.row(b)[f]));
        let mut left = [0usize, 0];
        for w in 0..order.len() - 1 {
            left[ds.labels()[order[w]] as usize] += 1;
            let (lo, hi) = (ds.row(order[w])[f], ds.row(order[w + 1])[f]);
            if lo == hi {
                continue;
            }
            let right = [total[0] - left[0], total[1] - left[1]];
            let score = SplitScore::new(left, right);
            let mut threshold = lo + (hi - lo) / 2.0;
            if threshold >= hi {
                // adjacent floats: the midpoint rounded up onto hi
                threshold = lo;
            }
            // strictly better only: earlier features and thresholds win ties
            if best.as_ref().is_none_or(|(b, _, _)| score.cmp(b) == Ordering::Greater) {
                best = Some((score, f, threshold));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

impl Classifier for DecisionTree {
    fn name(&self) -> &'static str {
        "tree"
    }

    fn fit(&mut self, train: &LabeledDataset, _seed: u64) -> Result<()> {
        if train.n_rows() == 0 {
            return Err(Error::invalid("tree needs a non-empty training set"));
        }
        let idx: Vec<usize> = (0..train.n_rows()).collect();
        self.root = Some((self.grow(train, &idx, 0), train.n_cols()));
        Ok(())
    }

    fn score(&self, row: &[f64]) -> Result<f64> {
        let (root, n) = self.root.as_ref().ok_or_else(|| not_fitted("tree"))?;
        check_row("tree", *n, row)?;
        Ok(root.fraud_probability(row))
    }

    fn n_features(&self) -> Option<usize> {
        self.root.as_ref().map(|(_, n)| *n)
    }

    fn threshold(&self) -> f64 {
        0.5
    }

    fn describe(&self) -> String {
        let depth = self.max_depth.map_or("none".to_string(), |d| d.to_string());
        format!("max_depth={depth} min_samples_split={}", self.min_samples_split)
    }

    fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = header("tree");
        match self.max_depth {
            None => w.u32(0),
            Some(d) => {
                w.u32(1);
                w.usize(d);
            }
        }
        w.usize(self.min_samples_split);
        match &self.root {
            None => w.u32(0),
            Some((root, n)) => {
                w.u32(1);
                w.usize(*n);
                root.encode(&mut w);
            }
        }
        Ok(w.finish())
    }
}
