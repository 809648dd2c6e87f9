//! Classical comparison models behind one [`Classifier`] interface.
//!
//! Gradient-trained baselines (logistic regression, linear SVM, MLP) share
//! the numerics module's Adam and [`TrainConfig`] with the transformer so
//! that the only difference between table rows is the model.

mod knn;
mod logistic;
mod mlp;
mod svm;
mod tree;

pub use knn::Knn;
pub use logistic::LogisticRegression;
pub use mlp::{Mlp, MlpParams};
pub use svm::LinearSvm;
pub use tree::{DecisionTree, TreeNode};

use crate::codec::{Reader, Writer};
use crate::dataset::{class_counts, LabeledDataset};
use crate::numerics::TrainConfig;
use crate::transformer::{TransformerClassifier, MODEL_MAGIC};
use crate::{Error, Result};

pub const BASELINE_MAGIC: &[u8; 4] = b"FBBL";
pub const BASELINE_VERSION: u32 = 1;

/// Names accepted by [`classifier_by_name`], in canonical table order.
pub const MODEL_NAMES: [&str; 6] = ["logistic", "knn", "svm", "tree", "mlp", "transformer"];

pub trait Classifier: Send + Sync {
    fn name(&self) -> &'static str;

    fn fit(&mut self, train: &LabeledDataset, seed: u64) -> Result<()>;

    /// Monotone fraud score; higher means more likely fraud.
    fn score(&self, row: &[f64]) -> Result<f64>;

    /// Feature count the fitted model expects.
    fn n_features(&self) -> Option<usize>;

    fn threshold(&self) -> f64;

    fn predict(&self, row: &[f64]) -> Result<u8> {
        Ok(u8::from(self.score(row)? >= self.threshold()))
    }

    fn score_dataset(&self, ds: &LabeledDataset) -> Result<Vec<f64>> {
        match self.n_features() {
            None => return Err(Error::invalid(format!("{} is not fitted", self.name()))),
            Some(n) if n != ds.n_cols() => {
                return Err(Error::shape(format!("{} input features", self.name()), n, ds.n_cols()))
            }
            _ => {}
        }
        (0..ds.n_rows()).map(|i| self.score(ds.row(i))).collect()
    }

    /// Hyperparameters as `key=value` pairs, recorded in reports.
    fn describe(&self) -> String;

    fn to_bytes(&self) -> Result<Vec<u8>>;
}

/// Unfitted classifier with default hyperparameters.
pub fn classifier_by_name(name: &str) -> Result<Box<dyn Classifier>> {
    Ok(match name {
        "logistic" => Box::new(LogisticRegression::default()),
        "knn" => Box::new(Knn::default()),
        "svm" => Box::new(LinearSvm::default()),
        "tree" => Box::new(DecisionTree::default()),
        "mlp" => Box::new(Mlp::default()),
        "transformer" => Box::new(TransformerClassifier::default()),
        other => {
            return Err(Error::Config(format!(
                "unknown model '{other}' (expected one of {})",
                MODEL_NAMES.join(", ")
            )))
        }
    })
}

/// Restores any saved classifier, transformer or baseline, from its bytes.
pub fn load_classifier(bytes: &[u8]) -> Result<Box<dyn Classifier>> {
    if bytes.starts_with(MODEL_MAGIC) {
        return Ok(Box::new(TransformerClassifier::from_bytes(bytes)?));
    }
    let mut r = Reader::new(bytes);
    if r.take(4).ok() != Some(BASELINE_MAGIC.as_slice()) {
        return Err(Error::Format("bad magic: not a saved classifier".into()));
    }
    let version = r.u32()?;
    if version != BASELINE_VERSION {
        return Err(Error::Format(format!(
            "baseline format version {version} is not supported (expected {BASELINE_VERSION})"
        )));
    }
    let kind = r.str()?;
    let model: Box<dyn Classifier> = match kind.as_str() {
        "logistic" => Box::new(LogisticRegression::decode(&mut r)?),
        "knn" => Box::new(Knn::decode(&mut r)?),
        "svm" => Box::new(LinearSvm::decode(&mut r)?),
        "tree" => Box::new(DecisionTree::decode(&mut r)?),
        "mlp" => Box::new(Mlp::decode(&mut r)?),
        other => return Err(Error::Format(format!("unknown classifier kind '{other}'"))),
    };
    r.expect_end()?;
    Ok(model)
}

pub fn load_classifier_file(path: impl AsRef<std::path::Path>) -> Result<Box<dyn Classifier>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    load_classifier(&bytes)
}

pub fn require_two_classes(ds: &LabeledDataset) -> Result<()> {
    let c = class_counts(ds);
    if c.n_legit == 0 || c.n_fraud == 0 {
        return Err(Error::invalid(format!(
            "training data needs both classes (legit {}, fraud {})",
            c.n_legit, c.n_fraud
        )));
    }
    Ok(())
}

fn header(kind: &str) -> Writer {
    let mut w = Writer::new();
    w.bytes(BASELINE_MAGIC);
    w.u32(BASELINE_VERSION);
    w.str(kind);
    w
}

fn write_train_config(w: &mut Writer, c: &TrainConfig) {
    w.usize(c.epochs);
    w.usize(c.batch_size);
    w.f64(c.lr);
    w.u64(c.seed);
    w.u32(u32::from(c.shuffle_each_epoch));
    w.f64(c.l2);
}

fn read_train_config(r: &mut Reader) -> Result<TrainConfig> {
    Ok(TrainConfig {
        epochs: r.usize()?,
        batch_size: r.usize()?,
        lr: r.f64()?,
        seed: r.u64()?,
        shuffle_each_epoch: r.u32()? != 0,
        l2: r.f64()?,
    })
}

fn not_fitted(name: &str) -> Error {
    Error::invalid(format!("{name} is not fitted"))
}

fn check_row(name: &str, expected: usize, row: &[f64]) -> Result<()> {
    if row.len() != expected {
        return Err(Error::shape(format!("{name} input row"), expected, row.len()));
    }
    Ok(())
}

fn describe_train(c: &TrainConfig) -> String {
    format!("epochs={} batch={} lr={} l2={}", c.epochs, c.batch_size, c.lr, c.l2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SyntheticKind, SyntheticSpec};

    #[test]
    fn every_model_round_trips_through_bytes() {
        let ds = generate_synthetic(&SyntheticSpec {
            kind: SyntheticKind::GaussianBlobs { mu: 2.0 },
            n_per_class: 20,
            n_features: 3,
            seed: 5,
        })
        .unwrap();
        for name in MODEL_NAMES {
            let mut m = classifier_by_name(name).unwrap();
            if name == "transformer" {
                m = Box::new(TransformerClassifier::new(
                    crate::transformer::TransformerHyper {
                        d_model: 4,
                        n_heads: 2,
                        n_layers: 1,
                        d_ff: 4,
                        dropout_rate: 0.0,
                        max_tokens: 3,
                    },
                    TrainConfig {
                        epochs: 2,
                        ..Default::default()
                    },
                ));
            }
            m.fit(&ds, 3).unwrap();
            let back = load_classifier(&m.to_bytes().unwrap()).unwrap();
            assert_eq!(back.name(), name);
            assert_eq!(back.score_dataset(&ds).unwrap(), m.score_dataset(&ds).unwrap(), "{name}");
        }
    }

    #[test]
    fn unknown_name_and_bad_bytes() {
        assert!(classifier_by_name("xgboost").is_err());
        assert!(matches!(load_classifier(b"nope"), Err(Error::Format(_))));
        assert!(classifier_by_name("knn").unwrap().score_dataset(&generate_synthetic(&SyntheticSpec {
            kind: SyntheticKind::GaussianBlobs { mu: 1.0 },
            n_per_class: 2,
            n_features: 2,
            seed: 0,
        })
        .unwrap())
        .is_err());
    }
}
