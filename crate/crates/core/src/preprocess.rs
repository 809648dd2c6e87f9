//! Class balancing, shuffling, stratified splits, Pearson correlation and
//! IQR outlier removal.

use std::fmt::Write as _;

use crate::dataset::{FeatureName, LabeledDataset, LABEL_COLUMN};
use crate::numerics::{Matrix, Rng};
use crate::{Error, Result};

/// Outlier fence multiplier applied to the interquartile range.
pub const IQR_FENCE: f64 = 1.5;

pub const DEFAULT_OUTLIER_FEATURES: [&str; 3] = ["V14", "V12", "V10"];

/// Keeps every minority row plus an equal-size sample of the majority, then shuffles.
pub fn balance_undersample(ds: &LabeledDataset, seed: u64) -> Result<LabeledDataset> {
    let fraud = ds.indices_of_class(1);
    let legit = ds.indices_of_class(0);
    if fraud.is_empty() || legit.is_empty() {
        return Err(Error::invalid(
            "balancing needs at least one row of each class",
        ));
    }
    let (minority, majority) = if fraud.len() <= legit.len() {
        (fraud, legit)
    } else {
        (legit, fraud)
    };
    let mut rng = Rng::new(seed);
    let mut picked = rng.sample_indices(majority.len(), minority.len());
    picked.sort_unstable();
    let mut rows: Vec<usize> = minority;
    rows.extend(picked.into_iter().map(|k| majority[k]));
    rows.sort_unstable();
    rng.shuffle(&mut rows);
    Ok(ds.select_rows(&rows))
}

/// Uniform random row permutation.
pub fn shuffle(ds: &LabeledDataset, seed: u64) -> LabeledDataset {
    let mut order: Vec<usize> = (0..ds.n_rows()).collect();
    Rng::new(seed).shuffle(&mut order);
    ds.select_rows(&order)
}

/// Row indices of a stratified split: `(train, test)`, each in ascending order.
pub fn stratified_split_indices(
    labels: &[u8],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut rng = Rng::new(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < 2 {
            return Err(Error::invalid(format!(
                "class {class} has {} rows; stratifying needs at least 2",
                idx.len()
            )));
        }
        let n_test = ((idx.len() as f64 * test_fraction).round() as usize).clamp(1, idx.len() - 1);
        rng.shuffle(&mut idx);
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Per-class test counts are `round(count · test_fraction)`, at least 1.
pub fn stratified_split(
    ds: &LabeledDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let (train, test) = stratified_split_indices(ds.labels(), test_fraction, seed)?;
    Ok((ds.select_rows(&train), ds.select_rows(&test)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    /// Feature names followed by `Class`.
    pub labels: Vec<String>,
    pub values: Matrix,
    /// Columns with zero variance; their off-diagonal entries are 0.
    pub constant: Vec<bool>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.labels.iter().position(|l| l == a)?;
        let j = self.labels.iter().position(|l| l == b)?;
        Some(self.values[(i, j)])
    }

    /// Square CSV with a header row and a leading name column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature");
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (i, l) in self.labels.iter().enumerate() {
            out.push_str(l);
            for j in 0..self.labels.len() {
                let _ = write!(out, ",{}", self.values[(i, j)]);
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<CorrelationMatrix> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::invalid("empty correlation CSV"))?;
        let labels: Vec<String> = header.split(',').skip(1).map(String::from).collect();
        let n = labels.len();
        let mut values = Matrix::zeros(n, n);
        for (i, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            if i >= n || cells.len() != n + 1 || cells[0] != labels[i] {
                return Err(Error::Parse {
                    line: i + 2,
                    message: "malformed correlation row".into(),
                });
            }
            for j in 0..n {
                values[(i, j)] = cells[j + 1].parse().map_err(|_| Error::Parse {
                    line: i + 2,
                    message: format!("bad value '{}'", cells[j + 1]),
                })?;
            }
        }
        let constant = (0..n)
            .map(|i| (0..n).all(|j| i == j || values[(i, j)] == 0.0))
            .collect();
        Ok(CorrelationMatrix {
            labels,
            values,
            constant,
        })
    }
}

/// Sample Pearson correlation over every feature plus the label column.
pub fn pearson_correlation(ds: &LabeledDataset) -> Result<CorrelationMatrix> {
    let n = ds.n_rows();
    if n < 2 {
        return Err(Error::invalid("correlation needs at least 2 rows"));
    }
    let mut cols: Vec<Vec<f64>> = (0..ds.n_cols()).map(|j| ds.features().column(j)).collect();
    cols.push(ds.labels().iter().map(|&l| l as f64).collect());
    let mut labels: Vec<String> = ds.columns().iter().map(|c| c.to_string()).collect();
    labels.push(LABEL_COLUMN.to_string());

    let centred: Vec<Vec<f64>> = cols
        .iter()
        .map(|c| {
            let mean = c.iter().sum::<f64>() / n as f64;
            c.iter().map(|v| v - mean).collect()
        })
        .collect();
    let norms: Vec<f64> = centred
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let constant: Vec<bool> = norms.iter().map(|&s| s == 0.0).collect();

    let k = cols.len();
    let mut values = Matrix::identity(k);
    for i in 0..k {
        for j in (i + 1)..k {
            let r = if constant[i] || constant[j] {
                0.0
            } else {
                let cov: f64 = centred[i].iter().zip(&centred[j]).map(|(a, b)| a * b).sum();
                (cov / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            };
            values[(i, j)] = r;
            values[(j, i)] = r;
        }
    }
    Ok(CorrelationMatrix {
        labels,
        values,
        constant,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IqrBounds {
    pub feature: FeatureName,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub lower: f64,
    pub upper: f64,
}

impl IqrBounds {
    /// Closed interval; boundary values are kept.
    pub fn contains(&self, v: f64) -> bool {
        v >= self.lower && v <= self.upper
    }
}

/// Linear-interpolation quantile at position `p·(n−1)` of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn iqr_bounds(values: &[f64]) -> Result<IqrBounds> {
    iqr_bounds_named(values, FeatureName::new("value")?)
}

fn iqr_bounds_named(values: &[f64], feature: FeatureName) -> Result<IqrBounds> {
    if values.is_empty() {
        return Err(Error::invalid("IQR of an empty vector"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    Ok(IqrBounds {
        feature,
        q1,
        q3,
        iqr,
        lower: q1 - IQR_FENCE * iqr,
        upper: q3 + IQR_FENCE * iqr,
    })
}

/// Which rows the quartiles are estimated from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FitOn {
    #[default]
    FraudClassOnly,
    AllRows,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutlierRemovalReport {
    pub bounds: Vec<IqrBounds>,
    pub rows_removed: usize,
    pub row_indices_removed: Vec<usize>,
    /// Rows flagged by each feature (a row may be flagged by several).
    pub flagged_per_feature: Vec<usize>,
}

impl OutlierRemovalReport {
    /// One line per feature.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature,q1,q3,iqr,lower,upper,rows_flagged\n");
        for (b, n) in self.bounds.iter().zip(&self.flagged_per_feature) {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                b.feature, b.q1, b.q3, b.iqr, b.lower, b.upper, n
            );
        }
        out
    }
}

/// Fits bounds for each listed feature on the `fit_on` subset of `ds`.
pub fn fit_iqr_bounds(ds: &LabeledDataset, features: &[&str], fit_on: FitOn) -> Result<Vec<IqrBounds>> {
    let rows: Vec<usize> = match fit_on {
        FitOn::AllRows => (0..ds.n_rows()).collect(),
        FitOn::FraudClassOnly => ds.indices_of_class(1),
    };
    if rows.is_empty() {
        return Err(Error::invalid(match fit_on {
            FitOn::FraudClassOnly => "fitting on fraud rows needs at least one fraud row",
            FitOn::AllRows => "cannot fit IQR bounds on an empty dataset",
        }));
    }
    features
        .iter()
        .map(|&name| {
            let j = ds
                .column_index(name)
                .ok_or_else(|| Error::invalid(format!("unknown feature '{name}'")))?;
            let values: Vec<f64> = rows.iter().map(|&i| ds.features()[(i, j)]).collect();
            iqr_bounds_named(&values, FeatureName::new(name)?)
        })
        .collect()
}

/// Drops every row that falls outside any of the given bounds.
pub fn apply_iqr_bounds(ds: &LabeledDataset, bounds: &[IqrBounds]) -> Result<(LabeledDataset, OutlierRemovalReport)> {
    let cols = bounds
        .iter()
        .map(|b| {
            ds.column_index(b.feature.as_str())
                .ok_or_else(|| Error::invalid(format!("unknown feature '{}'", b.feature)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut keep = Vec::with_capacity(ds.n_rows());
    let mut removed = Vec::new();
    let mut flagged = vec![0usize; bounds.len()];
    for i in 0..ds.n_rows() {
        let row = ds.row(i);
        let mut outlier = false;
        for (k, (b, &j)) in bounds.iter().zip(&cols).enumerate() {
            if !b.contains(row[j]) {
                flagged[k] += 1;
                outlier = true;
            }
        }
        if outlier {
            removed.push(i);
        } else {
            keep.push(i);
        }
    }
    let report = OutlierRemovalReport {
        bounds: bounds.to_vec(),
        rows_removed: removed.len(),
        row_indices_removed: removed,
        flagged_per_feature: flagged,
    };
    Ok((ds.select_rows(&keep), report))
}

/// All bounds are fitted on the original input before any row is removed.
pub fn remove_outliers_iqr(
    ds: &LabeledDataset,
    features: &[&str],
    fit_on: FitOn,
) -> Result<(LabeledDataset, OutlierRemovalReport)> {
    let bounds = fit_iqr_bounds(ds, features, fit_on)?;
    apply_iqr_bounds(ds, &bounds)
}

/// Equal-width histogram counts over `[lo, hi]`; the last bin is closed.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<usize> {
    let mut counts = vec![0usize; bins];
    if bins == 0 {
        return counts;
    }
    let width = (hi - lo) / bins as f64;
    for &v in values {
        if v < lo || v > hi {
            continue;
        }
        let k = if width > 0.0 {
            (((v - lo) / width) as usize).min(bins - 1)
        } else {
            0
        };
        counts[k] += 1;
    }
    counts
}

/// Per-feature z-score statistics fitted on one dataset and applied to others.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub columns: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Constant columns get a unit scale so they map to zero.
    pub fn fit(ds: &LabeledDataset) -> Result<Standardizer> {
        let n = ds.n_rows();
        if n == 0 {
            return Err(Error::invalid("cannot standardize an empty dataset"));
        }
        let sums = ds.features().column_sums();
        let mean: Vec<f64> = sums.iter().map(|s| s / n as f64).collect();
        let mut var = vec![0.0; ds.n_cols()];
        for row in ds.features().iter_rows() {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var
            .iter()
            .map(|v| {
                let s = (v / n as f64).sqrt();
                if s > 0.0 { s } else { 1.0 }
            })
            .collect();
        Ok(Standardizer {
            columns: ds.columns().iter().map(|c| c.to_string()).collect(),
            mean,
            std,
        })
    }

    pub fn transform(&self, ds: &LabeledDataset) -> Result<LabeledDataset> {
        let names: Vec<String> = ds.columns().iter().map(|c| c.to_string()).collect();
        if names != self.columns {
            return Err(Error::shape(
                "standardizer columns",
                self.columns.join(","),
                names.join(","),
            ));
        }
        let mut m = ds.features().clone();
        for i in 0..m.rows() {
            for (j, v) in m.row_mut(i).iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.std[j];
            }
        }
        ds.with_features(m)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature,mean,std\n");
        for ((c, m), s) in self.columns.iter().zip(&self.mean).zip(&self.std) {
            let _ = writeln!(out, "{c},{m},{s}");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Standardizer> {
        let mut st = Standardizer {
            columns: vec![],
            mean: vec![],
            std: vec![],
        };
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
                    message: "expected feature,mean,std".into(),
                });
            }
            st.columns.push(cells[0].to_string());
            st.mean.push(parse(cells[1])?);
            st.std.push(parse(cells[2])?);
        }
        Ok(st)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(values: &[f64], labels: &[u8]) -> LabeledDataset {
        let m = Matrix::from_vec(values.len(), 1, values.to_vec()).unwrap();
        LabeledDataset::from_parts(m, &["V14"], labels.to_vec()).unwrap()
    }

    #[test]
    fn iqr_examples() {
        let b = iqr_bounds(&[1.0, 2.0, 3.0, 4.0, 5.0, 100.0]).unwrap();
        assert_eq!((b.q1, b.q3, b.iqr, b.lower, b.upper), (2.25, 4.75, 2.5, -1.5, 8.5));
        let b = iqr_bounds(&[5.0]).unwrap();
        assert_eq!((b.q1, b.q3, b.iqr, b.lower, b.upper), (5.0, 5.0, 0.0, 5.0, 5.0));
        let b = iqr_bounds(&[2.5; 4]).unwrap();
        assert_eq!((b.lower, b.upper), (2.5, 2.5));
        assert!(iqr_bounds(&[]).is_err());
    }

    #[test]
    fn outlier_removal_fixture() {
        let ds = toy(&[1.0, 2.0, 3.0, 4.0, 5.0, 100.0], &[0, 1, 0, 1, 0, 1]);
        let (out, rep) = remove_outliers_iqr(&ds, &["V14"], FitOn::AllRows).unwrap();
        assert_eq!(rep.rows_removed, 1);
        assert_eq!(rep.row_indices_removed, vec![5]);
        assert_eq!(out.n_rows(), 5);

        let (again, rep2) = apply_iqr_bounds(&out, &rep.bounds).unwrap();
        assert_eq!(rep2.rows_removed, 0);
        assert_eq!(again, out);
    }

    #[test]
    fn outlier_noop_and_errors() {
        let ds = toy(&[1.0, 2.0, 3.0, 4.0], &[1, 1, 0, 0]);
        let (out, rep) = remove_outliers_iqr(&ds, &["V14"], FitOn::FraudClassOnly).unwrap();
        // fraud rows {1,2}: q1 = 1.25, q3 = 1.75, fence [0.5, 2.5]
        assert_eq!(rep.row_indices_removed, vec![2, 3]);
        assert_eq!(out.n_rows(), 2);

        let (out, rep) = remove_outliers_iqr(&ds, &["V14"], FitOn::AllRows).unwrap();
        assert_eq!(rep.rows_removed, 0);
        assert_eq!(out, ds);

        assert!(remove_outliers_iqr(&ds, &["V99"], FitOn::AllRows).is_err());
        let legit = toy(&[1.0, 2.0], &[0, 0]);
        assert!(remove_outliers_iqr(&legit, &["V14"], FitOn::FraudClassOnly).is_err());
    }

    #[test]
    fn boundary_values_survive() {
        let ds = toy(&[1.0, 2.0, 3.0, 4.0, 5.0, 8.5, -1.5], &[0; 7]);
        let bounds = vec![IqrBounds {
            feature: FeatureName::new("V14").unwrap(),
            q1: 2.25,
            q3: 4.75,
            iqr: 2.5,
            lower: -1.5,
            upper: 8.5,
        }];
        let (_, rep) = apply_iqr_bounds(&ds, &bounds).unwrap();
        assert_eq!(rep.rows_removed, 0);
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [1.0, 3.0, 2.0, 4.0];
        let mut rows = Vec::new();
        for i in 0..4 {
            rows.push(vec![x[i], y[i], 2.0 * x[i] + 3.0, -x[i], 7.0]);
        }
        let ds = LabeledDataset::from_parts(
            Matrix::from_rows(&rows).unwrap(),
            &["x", "y", "affine", "neg", "const"],
            vec![0, 1, 0, 1],
        )
        .unwrap();
        let c = pearson_correlation(&ds).unwrap();
        // cov = 2.0, var_x = var_y = 5.0 (sums of squared deviations), r = 4/5
        assert!((c.get("x", "y").unwrap() - 0.8).abs() < 1e-12);
        assert!((c.get("x", "affine").unwrap() - 1.0).abs() < 1e-12);
        assert!((c.get("x", "neg").unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(c.get("x", "const"), Some(0.0));
        assert!(c.constant[4] && !c.constant[0]);
        assert_eq!(c.labels.last().unwrap(), "Class");
        for i in 0..c.labels.len() {
            assert_eq!(c.values[(i, i)], 1.0);
        }
        assert!(pearson_correlation(&ds.select_rows(&[0])).is_err());
    }

    #[test]
    fn correlation_csv_round_trip() {
        let ds = toy(&[1.0, 2.0, 4.0, 3.0], &[0, 0, 1, 1]);
        let c = pearson_correlation(&ds).unwrap();
        let csv = c.to_csv();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().all(|l| l.split(',').count() == 3));
        let back = CorrelationMatrix::from_csv(&csv).unwrap();
        assert!(back.values.max_abs_diff(&c.values) < 1e-12);
        assert_eq!(back.labels, c.labels);
    }

    #[test]
    fn balance_examples() {
        let ds = toy(&[0.0, 1.0, 2.0, 3.0], &[0, 1, 0, 1]);
        let b = balance_undersample(&ds, 3).unwrap();
        let mut vals = b.features().column(0);
        vals.sort_by(f64::total_cmp);
        assert_eq!(vals, vec![0.0, 1.0, 2.0, 3.0]);

        let ds = toy(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0], &[1, 0, 0, 0, 0, 0]);
        for seed in [1, 2] {
            let b = balance_undersample(&ds, seed).unwrap();
            assert_eq!(b.indices_of_class(1).len(), 1);
            assert_eq!(b.indices_of_class(0).len(), 1);
            assert!(b.features().column(0).contains(&0.0));
        }
        assert!(balance_undersample(&toy(&[1.0, 2.0], &[0, 0]), 1).is_err());
    }

    #[test]
    fn split_counts() {
        let labels: Vec<u8> = (0..984).map(|i| (i % 2) as u8).collect();
        let (train, test) = stratified_split_indices(&labels, 0.2, 5).unwrap();
        let count = |idx: &[usize], c: u8| idx.iter().filter(|&&i| labels[i] == c).count();
        assert_eq!((count(&test, 0), count(&test, 1)), (98, 98));
        assert_eq!((count(&train, 0), count(&train, 1)), (394, 394));

        let (train, test) = stratified_split_indices(&[0, 0, 1, 1], 0.5, 1).unwrap();
        assert_eq!((train.len(), test.len()), (2, 2));

        assert!(stratified_split_indices(&[0, 0, 1], 0.5, 1).is_err());
        assert!(stratified_split_indices(&[0, 0, 1, 1], 1.0, 1).is_err());
    }

    #[test]
    fn shuffle_single_row() {
        let ds = toy(&[4.0], &[1]);
        assert_eq!(shuffle(&ds, 9), ds);
    }

    #[test]
    fn standardizer() {
        let ds = toy(&[1.0, 3.0, 5.0, 7.0], &[0, 1, 0, 1]);
        let st = Standardizer::fit(&ds).unwrap();
        let z = st.transform(&ds).unwrap();
        let col = z.features().column(0);
        assert!(col.iter().sum::<f64>().abs() < 1e-12);
        let back = Standardizer::from_csv(&st.to_csv()).unwrap();
        assert_eq!(back, st);
    }

    #[test]
    fn histogram_bins() {
        assert_eq!(histogram(&[0.0, 0.5, 1.0, 2.0], 0.0, 1.0, 2), vec![1, 2]);
    }
}
