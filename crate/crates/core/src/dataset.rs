//! Labeled tabular data, CSV ingest for the two credit-card layouts, and
//! synthetic fixtures.
//!
//! The 2013 layout is `Time,V1..V28,Amount,Class`; the 2023 layout is
//! `id,V1..V28,Amount,Class` and its `id` column is dropped on load. Any
//! other header that carries a `Class` column is accepted as a generic
//! layout under [`Schema::AutoDetect`], which is what synthetic fixtures use.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::numerics::{Matrix, Rng};
use crate::{Error, Result};

pub const LABEL_COLUMN: &str = "Class";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FeatureName(String);

impl FeatureName {
    pub fn new(name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        if name.trim().is_empty() {
            return Err(Error::invalid("feature names must be non-empty"));
        }
        Ok(FeatureName(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for FeatureName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for FeatureName {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// Feature matrix plus binary labels (1 = fraud). Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Matrix,
    columns: Vec<FeatureName>,
    labels: Vec<u8>,
}

impl LabeledDataset {
    pub fn new(features: Matrix, columns: Vec<FeatureName>, labels: Vec<u8>) -> Result<Self> {
        if features.cols() != columns.len() {
            return Err(Error::shape("dataset columns", features.cols(), columns.len()));
        }
        if features.rows() != labels.len() {
            return Err(Error::shape("dataset labels", features.rows(), labels.len()));
        }
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.as_str()) {
                return Err(Error::invalid(format!("duplicate feature name '{c}'")));
            }
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::invalid(format!("label {bad} is not 0 or 1")));
        }
        if let Some(pos) = features.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "feature value at row {}, column '{}'",
                pos / columns.len().max(1),
                columns[pos % columns.len().max(1)]
            )));
        }
        Ok(LabeledDataset {
            features,
            columns,
            labels,
        })
    }

    /// Convenience constructor from plain string column names.
    pub fn from_parts(features: Matrix, columns: &[&str], labels: Vec<u8>) -> Result<Self> {
        let columns = columns
            .iter()
            .map(|c| FeatureName::new(*c))
            .collect::<Result<Vec<_>>>()?;
        LabeledDataset::new(features, columns, labels)
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn columns(&self) -> &[FeatureName] {
        &self.columns
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.as_str() == name)
    }

    pub fn column_values(&self, name: &str) -> Result<Vec<f64>> {
        let j = self
            .column_index(name)
            .ok_or_else(|| Error::invalid(format!("unknown feature '{name}'")))?;
        Ok(self.features.column(j))
    }

    /// Rows at `indices`, in that order (repeats allowed).
    pub fn select_rows(&self, indices: &[usize]) -> LabeledDataset {
        let mut data = Vec::with_capacity(indices.len() * self.n_cols());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        LabeledDataset {
            features: Matrix::from_vec(indices.len(), self.n_cols(), data).expect("sized"),
            columns: self.columns.clone(),
            labels,
        }
    }

    pub fn drop_columns(&self, names: &[&str]) -> Result<LabeledDataset> {
        for n in names {
            if self.column_index(n).is_none() {
                return Err(Error::invalid(format!("cannot drop unknown column '{n}'")));
            }
        }
        let keep: Vec<usize> = (0..self.n_cols())
            .filter(|&j| !names.contains(&self.columns[j].as_str()))
            .collect();
        let mut features = Matrix::zeros(self.n_rows(), keep.len());
        for i in 0..self.n_rows() {
            for (k, &j) in keep.iter().enumerate() {
                features[(i, k)] = self.features[(i, j)];
            }
        }
        Ok(LabeledDataset {
            features,
            columns: keep.iter().map(|&j| self.columns[j].clone()).collect(),
            labels: self.labels.clone(),
        })
    }

    /// Same columns and labels, new feature values.
    pub fn with_features(&self, features: Matrix) -> Result<LabeledDataset> {
        LabeledDataset::new(features, self.columns.clone(), self.labels.clone())
    }

    pub fn indices_of_class(&self, class: u8) -> Vec<usize> {
        (0..self.n_rows()).filter(|&i| self.labels[i] == class).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassCounts {
    pub n_fraud: usize,
    pub n_legit: usize,
    pub fraud_ratio: f64,
}

impl ClassCounts {
    pub fn total(&self) -> usize {
        self.n_fraud + self.n_legit
    }
}

/// Label tallies; an empty dataset has ratio 0.
pub fn class_counts(ds: &LabeledDataset) -> ClassCounts {
    let n_fraud = ds.labels().iter().filter(|&&l| l == 1).count();
    let n_legit = ds.n_rows() - n_fraud;
    let fraud_ratio = if ds.n_rows() == 0 {
        0.0
    } else {
        n_fraud as f64 / ds.n_rows() as f64
    };
    ClassCounts {
        n_fraud,
        n_legit,
        fraud_ratio,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Schema {
    /// `Time,V1..V28,Amount,Class`
    Legacy2013,
    /// `id,V1..V28,Amount,Class`; `id` is discarded.
    Modern2023,
    /// 2013, then 2023, then any header with a `Class` column.
    #[default]
    AutoDetect,
}

/// Layout actually used for a load.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectedSchema {
    Legacy2013,
    Modern2023,
    Generic,
}

fn v_columns() -> impl Iterator<Item = String> {
    (1..=28).map(|i| format!("V{i}"))
}

pub fn legacy_2013_header() -> Vec<String> {
    std::iter::once("Time".to_string())
        .chain(v_columns())
        .chain(["Amount".to_string(), LABEL_COLUMN.to_string()])
        .collect()
}

pub fn modern_2023_header() -> Vec<String> {
    std::iter::once("id".to_string())
        .chain(v_columns())
        .chain(["Amount".to_string(), LABEL_COLUMN.to_string()])
        .collect()
}

fn unquote(cell: &str) -> &str {
    let c = cell.trim();
    c.strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .unwrap_or(c)
}

fn detect(header: &[String], schema: Schema) -> Result<DetectedSchema> {
    let legacy = header == legacy_2013_header().as_slice();
    let modern = header == modern_2023_header().as_slice();
    match schema {
        Schema::Legacy2013 if legacy => Ok(DetectedSchema::Legacy2013),
        Schema::Modern2023 if modern => Ok(DetectedSchema::Modern2023),
        Schema::Legacy2013 | Schema::Modern2023 => {
            if !header.iter().any(|h| h == LABEL_COLUMN) {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("missing '{LABEL_COLUMN}' column"),
                });
            }
            Err(Error::Parse {
                line: 1,
                message: format!("header does not match the {schema:?} layout"),
            })
        }
        Schema::AutoDetect if legacy => Ok(DetectedSchema::Legacy2013),
        Schema::AutoDetect if modern => Ok(DetectedSchema::Modern2023),
        Schema::AutoDetect => {
            if header.iter().any(|h| h == LABEL_COLUMN) {
                Ok(DetectedSchema::Generic)
            } else {
                Err(Error::Parse {
                    line: 1,
                    message: format!(
                        "header matches no known layout and has no '{LABEL_COLUMN}' column"
                    ),
                })
            }
        }
    }
}

/// Parses CSV text already in memory.
pub fn parse_csv(text: &str, schema: Schema) -> Result<(LabeledDataset, DetectedSchema)> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    let (_, header_line) = lines
        .by_ref()
        .find(|(_, l)| !l.trim().is_empty())
        .ok_or(Error::Parse {
            line: 1,
            message: "missing header row".into(),
        })?;
    let header: Vec<String> = header_line.split(',').map(|c| unquote(c).to_string()).collect();
    let detected = detect(&header, schema)?;

    let label_idx = header
        .iter()
        .position(|h| h == LABEL_COLUMN)
        .expect("detect guarantees a Class column");
    if header.iter().filter(|h| *h == LABEL_COLUMN).count() > 1 {
        return Err(Error::Parse {
            line: 1,
            message: format!("duplicate '{LABEL_COLUMN}' column"),
        });
    }
    let skip_idx = match detected {
        DetectedSchema::Modern2023 => Some(0),
        _ => None,
    };
    let feature_idx: Vec<usize> = (0..header.len())
        .filter(|&j| j != label_idx && Some(j) != skip_idx)
        .collect();
    let columns = feature_idx
        .iter()
        .map(|&j| {
            FeatureName::new(header[j].clone()).map_err(|_| Error::Parse {
                line: 1,
                message: format!("empty column name at position {}", j + 1),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (line_no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {} fields, found {}", header.len(), cells.len()),
            });
        }
        for &j in &feature_idx {
            let raw = unquote(cells[j]);
            let v: f64 = raw.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("non-numeric value '{raw}' in column '{}'", header[j]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("non-finite value '{raw}' in column '{}'", header[j]),
                });
            }
            data.push(v);
        }
        let raw = unquote(cells[label_idx]);
        let label = match raw.parse::<f64>() {
            Ok(0.0) => 0,
            Ok(1.0) => 1,
            _ => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("class label '{raw}' is not 0 or 1"),
                })
            }
        };
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no data rows".into(),
        });
    }
    let features = Matrix::from_vec(labels.len(), columns.len(), data)?;
    Ok((LabeledDataset::new(features, columns, labels)?, detected))
}

pub fn load_csv(path: impl AsRef<Path>, schema: Schema) -> Result<LabeledDataset> {
    load_csv_detected(path, schema).map(|(ds, _)| ds)
}

/// Like [`load_csv`], also reporting which layout matched.
pub fn load_csv_detected(path: impl AsRef<Path>, schema: Schema) -> Result<(LabeledDataset, DetectedSchema)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, schema).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

/// Column order for writing: canonical 2013 order when the dataset carries
/// exactly the 2013 features, canonical 2023 order (without `id`) for the
/// 2023 features, dataset order otherwise.
fn output_order(ds: &LabeledDataset) -> Vec<usize> {
    let names: HashSet<&str> = ds.columns().iter().map(|c| c.as_str()).collect();
    let legacy = legacy_2013_header();
    let modern = modern_2023_header();
    let canonical: Option<&[String]> = if names.contains("Time") {
        Some(&legacy[..legacy.len() - 1])
    } else {
        Some(&modern[1..modern.len() - 1])
    };
    if let Some(order) = canonical {
        if order.len() == names.len() && order.iter().all(|c| names.contains(c.as_str())) {
            return order.iter().map(|c| ds.column_index(c).expect("present")).collect();
        }
    }
    (0..ds.n_cols()).collect()
}

pub fn to_csv_string(ds: &LabeledDataset) -> String {
    let order = output_order(ds);
    let mut out = String::new();
    for &j in &order {
        out.push_str(ds.columns()[j].as_str());
        out.push(',');
    }
    out.push_str(LABEL_COLUMN);
    out.push('\n');
    for i in 0..ds.n_rows() {
        let row = ds.row(i);
        for &j in &order {
            // shortest representation that round-trips exactly
            out.push_str(&format!("{}", row[j]));
            out.push(',');
        }
        out.push_str(if ds.labels()[i] == 1 { "1" } else { "0" });
        out.push('\n');
    }
    out
}

pub fn write_csv(ds: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(to_csv_string(ds).as_bytes())
        .map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SyntheticKind {
    /// Class 1 centred at `+mu` in every coordinate, class 0 at `-mu`; unit variance.
    GaussianBlobs { mu: f64 },
    /// Class 1 in the quadrants where `sign(x0)·sign(x1) < 0`; other features are noise.
    XorQuadrants,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub n_per_class: usize,
    pub kind: SyntheticKind,
    pub n_features: usize,
    pub seed: u64,
}

const XOR_CENTER: f64 = 1.0;
const XOR_JITTER: f64 = 0.5;

/// Deterministic fixture generator. Rows alternate class 0, class 1.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<LabeledDataset> {
    if spec.n_per_class < 1 {
        return Err(Error::invalid("n_per_class must be >= 1"));
    }
    if spec.n_features < 2 {
        return Err(Error::invalid("n_features must be >= 2"));
    }
    if let SyntheticKind::GaussianBlobs { mu } = spec.kind {
        if !mu.is_finite() {
            return Err(Error::invalid("blob offset must be finite"));
        }
    }
    let mut rng = Rng::new(spec.seed);
    let n = 2 * spec.n_per_class;
    let d = spec.n_features;
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = (i % 2) as u8;
        match spec.kind {
            SyntheticKind::GaussianBlobs { mu } => {
                let centre = if class == 1 { mu } else { -mu };
                for _ in 0..d {
                    data.push(rng.normal(centre, 1.0));
                }
            }
            SyntheticKind::XorQuadrants => {
                let sx = if rng.bernoulli(0.5) { 1.0 } else { -1.0 };
                // opposite signs for fraud, equal signs otherwise
                let sy = if class == 1 { -sx } else { sx };
                data.push(sx * rng.normal(XOR_CENTER, XOR_JITTER).abs());
                data.push(sy * rng.normal(XOR_CENTER, XOR_JITTER).abs());
                for _ in 2..d {
                    data.push(rng.normal(0.0, 1.0));
                }
            }
        }
        labels.push(class);
    }
    let columns = (0..d)
        .map(|j| FeatureName::new(format!("x{j}")))
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::new(Matrix::from_vec(n, d, data)?, columns, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn legacy_text(rows: &[&str]) -> String {
        let mut s = legacy_2013_header().join(",");
        s.push('\n');
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }

    fn legacy_row(time: f64, amount: f64, class: u8) -> String {
        let mut cells = vec![time.to_string()];
        cells.extend((1..=28).map(|i| format!("{}", i as f64 * 0.1)));
        cells.push(amount.to_string());
        cells.push(class.to_string());
        cells.join(",")
    }

    #[test]
    fn legacy_two_rows() {
        let text = legacy_text(&[&legacy_row(0.0, 12.5, 0), &legacy_row(1.0, 3.0, 1)]);
        let (ds, det) = parse_csv(&text, Schema::Legacy2013).unwrap();
        assert_eq!(det, DetectedSchema::Legacy2013);
        assert_eq!(ds.n_rows(), 2);
        assert_eq!(ds.n_cols(), 30);
        assert_eq!(ds.columns()[0].as_str(), "Time");
        assert_eq!(ds.columns()[29].as_str(), "Amount");
        assert_eq!(ds.labels(), &[0, 1]);
    }

    #[test]
    fn modern_drops_id_and_accepts_crlf() {
        let mut cells = vec!["7".to_string()];
        cells.extend((1..=28).map(|_| "0.5".to_string()));
        cells.push("9.99".into());
        cells.push("1".into());
        let text = format!("{}\r\n{}\r\n", modern_2023_header().join(","), cells.join(","));
        let (ds, det) = parse_csv(&text, Schema::AutoDetect).unwrap();
        assert_eq!(det, DetectedSchema::Modern2023);
        assert_eq!(ds.n_cols(), 29);
        assert!(ds.column_index("id").is_none());
        assert_eq!(ds.row(0)[28], 9.99);
    }

    #[test]
    fn quoted_cells_accepted() {
        let header: Vec<String> = legacy_2013_header().iter().map(|h| format!("\"{h}\"")).collect();
        let mut row: Vec<String> = legacy_row(0.0, 1.0, 0).split(',').map(String::from).collect();
        let last = row.len() - 1;
        row[last] = "\"0\"".into();
        let text = format!("{}\n{}\n", header.join(","), row.join(","));
        assert!(parse_csv(&text, Schema::Legacy2013).is_ok());
    }

    #[test]
    fn header_only_is_error() {
        let err = parse_csv(&legacy_text(&[]), Schema::AutoDetect).unwrap_err();
        assert!(err.to_string().contains("no data rows"), "{err}");
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = legacy_row(0.0, 1.0, 0).replacen("0.1", "abc", 1);
        let err = parse_csv(&legacy_text(&[&legacy_row(0.0, 1.0, 0), &bad]), Schema::AutoDetect).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");

        let short = "1,2,3";
        let err = parse_csv(&legacy_text(&[short]), Schema::AutoDetect).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));

        let nan = legacy_row(0.0, 1.0, 0).replacen("0.1", "NaN", 1);
        assert!(parse_csv(&legacy_text(&[&nan]), Schema::AutoDetect).is_err());

        let bad_label = legacy_row(0.0, 1.0, 0);
        let bad_label = format!("{}2", &bad_label[..bad_label.len() - 1]);
        assert!(parse_csv(&legacy_text(&[&bad_label]), Schema::AutoDetect).is_err());
    }

    #[test]
    fn schema_mismatch_and_missing_class() {
        let text = "a,b,c\n1,2,3\n";
        let err = parse_csv(text, Schema::AutoDetect).unwrap_err();
        assert!(err.to_string().contains("Class"));
        let err = parse_csv("a,Class\n1,0\n", Schema::Legacy2013).unwrap_err();
        assert!(err.to_string().contains("Legacy2013"));
        let (ds, det) = parse_csv("a,Class\n1,0\n", Schema::AutoDetect).unwrap();
        assert_eq!(det, DetectedSchema::Generic);
        assert_eq!(ds.n_cols(), 1);
    }

    #[test]
    fn missing_file() {
        let err = load_csv("/definitely/not/here.csv", Schema::AutoDetect).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn counts() {
        let mk = |labels: Vec<u8>| {
            let n = labels.len();
            LabeledDataset::from_parts(Matrix::zeros(n, 1), &["a"], labels).unwrap()
        };
        let c = class_counts(&mk(vec![1, 0, 0, 0]));
        assert_eq!((c.n_fraud, c.n_legit, c.fraud_ratio), (1, 3, 0.25));
        let c = class_counts(&mk(vec![]));
        assert_eq!((c.n_fraud, c.n_legit, c.fraud_ratio), (0, 0, 0.0));
        let c = class_counts(&mk(vec![1, 1]));
        assert_eq!((c.n_fraud, c.n_legit, c.fraud_ratio), (2, 0, 1.0));
    }

    #[test]
    fn invariants_enforced() {
        assert!(LabeledDataset::from_parts(Matrix::zeros(2, 2), &["a", "a"], vec![0, 1]).is_err());
        assert!(LabeledDataset::from_parts(Matrix::zeros(2, 2), &["a", "b"], vec![0]).is_err());
        let m = Matrix::from_vec(1, 1, vec![f64::INFINITY]).unwrap();
        assert!(LabeledDataset::from_parts(m, &["a"], vec![0]).is_err());
    }

    #[test]
    fn synthetic_is_deterministic() {
        let spec = SyntheticSpec {
            n_per_class: 2,
            kind: SyntheticKind::GaussianBlobs { mu: 3.0 },
            n_features: 2,
            seed: 7,
        };
        let a = to_csv_string(&generate_synthetic(&spec).unwrap());
        let b = to_csv_string(&generate_synthetic(&spec).unwrap());
        assert_eq!(a.as_bytes(), b.as_bytes());
        assert!(generate_synthetic(&SyntheticSpec { n_per_class: 0, ..spec }).is_err());
        assert!(generate_synthetic(&SyntheticSpec { n_features: 1, ..spec }).is_err());
    }

    #[test]
    fn xor_fixture_geometry() {
        let ds = generate_synthetic(&SyntheticSpec {
            n_per_class: 500,
            kind: SyntheticKind::XorQuadrants,
            n_features: 2,
            seed: 1,
        })
        .unwrap();
        for class in [0u8, 1] {
            let idx = ds.indices_of_class(class);
            let mean = idx.iter().map(|&i| ds.row(i)[0]).sum::<f64>() / idx.len() as f64;
            assert!(mean.abs() < 0.2, "class {class} mean {mean}");
            for &i in &idx {
                let r = ds.row(i);
                assert_eq!((r[0] * r[1] < 0.0) as u8, class);
            }
        }
    }

    #[test]
    fn write_order_follows_layout() {
        let text = legacy_text(&[&legacy_row(5.0, 2.0, 1)]);
        let (ds, _) = parse_csv(&text, Schema::AutoDetect).unwrap();
        let reordered = ds.select_rows(&[0]);
        let written = to_csv_string(&reordered);
        assert!(written.starts_with("Time,V1,"));
        let no_time = ds.drop_columns(&["Time"]).unwrap();
        assert!(to_csv_string(&no_time).starts_with("V1,V2,"));
    }
}
