use std::cmp::Ordering;

use super::{check_row, header, not_fitted, Classifier};
use crate::codec::Reader;
use crate::dataset::LabeledDataset;
use crate::numerics::Matrix;
use crate::{Error, Result};

/// Brute-force k-nearest neighbours under Euclidean distance.
///
/// The score is the fraud fraction among the `k` nearest training rows;
/// distance ties go to the lower training-row index.
#[derive(Debug, Clone)]
pub struct Knn {
    pub k: usize,
    train: Option<(Matrix, Vec<u8>)>,
}

impl Default for Knn {
    fn default() -> Self {
        Knn::new(5)
    }
}

impl Knn {
    pub fn new(k: usize) -> Self {
        Knn { k, train: None }
    }

    pub(super) fn decode(r: &mut Reader) -> Result<Self> {
        let k = r.usize()?;
        let x = r.matrix_named("knn.train", None)?;
        let labels = r.take(x.rows())?.to_vec();
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::Format("knn labels must be 0 or 1".into()));
        }
        Ok(Knn {
            k,
            train: Some((x, labels)),
        })
    }
}

impl Classifier for Knn {
    fn name(&self) -> &'static str {
        "knn"
    }

    fn fit(&mut self, train: &LabeledDataset, _seed: u64) -> Result<()> {
        if train.n_rows() == 0 {
            return Err(Error::invalid("knn needs a non-empty training set"));
        }
        if self.k == 0 || self.k > train.n_rows() {
            return Err(Error::invalid(format!(
                "knn k={} must lie in 1..={}",
                self.k,
                train.n_rows()
            )));
        }
        self.train = Some((train.features().clone(), train.labels().to_vec()));
        Ok(())
    }

    fn score(&self, row: &[f64]) -> Result<f64> {
        let (x, labels) = self.train.as_ref().ok_or_else(|| not_fitted("knn"))?;
        check_row("knn", x.cols(), row)?;
        let mut dist: Vec<(f64, usize)> = x
            .iter_rows()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(row).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        if self.k < dist.len() {
            dist.select_nth_unstable_by(self.k - 1, by_distance_then_index);
        }
        let fraud = dist[..self.k].iter().filter(|(_, i)| labels[*i] == 1).count();
        Ok(fraud as f64 / self.k as f64)
    }

    fn n_features(&self) -> Option<usize> {
        self.train.as_ref().map(|(x, _)| x.cols())
    }

    fn threshold(&self) -> f64 {
        0.5
    }

    fn describe(&self) -> String {
        format!("k={}", self.k)
    }

    fn to_bytes(&self) -> Result<Vec<u8>> {
        let (x, labels) = self.train.as_ref().ok_or_else(|| not_fitted("knn"))?;
        let mut w = header("knn");
        w.usize(self.k);
        w.matrix(x);
        w.bytes(labels);
        Ok(w.finish())
    }
}

fn by_distance_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}
